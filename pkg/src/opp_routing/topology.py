"""Node placement, square cell grid, S-D pairs, XY routes and hop steps.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
import logging
import warnings

import numpy as np

from .errors import ConfigError, OccupancyWarning

logger = logging.getLogger(__name__)

DEFAULT_GRID_FACTOR = 15. / 4.


class Placement(Enum):
    RANDOM_UNIFORM = "random"
    REGULAR_GRID = "regular"


class HopMode(Enum):
    MODE1 = "mode1"
    MODE2_STEP1 = "mode2_step1"
    MODE2_STEP2 = "mode2_step2"
    DIRECT = "direct"


@dataclass(frozen=True, eq=False)
class NetworkLayout:
    """Node positions in the unit square and their cell membership.

    cells_per_side is 0 until build_cell_grid has been called.
    """
    n: int
    placement: Placement
    positions: np.ndarray
    cells_per_side: int = 0
    cell_of: np.ndarray = None
    cell_index: dict = field(default_factory=dict)
    occupancy_warning: bool = False

    @property
    def cell_side(self):
        return 1. / self.cells_per_side

    @property
    def cell_area(self):
        return self.cell_side ** 2

    @property
    def expected_occupancy(self):
        return self.n * self.cell_area

    def nodes_in(self, cell):
        """Node ids inside a cell.

        Args:
            cell (int, int): (row, col) coordinates

        Returns:
            (tuple of int)
        """
        return self.cell_index.get(tuple(cell), ())

    def cell_center(self, cell):
        row, col = cell
        return np.array([(col + 0.5) * self.cell_side,
                         (row + 0.5) * self.cell_side])


@dataclass(frozen=True)
class SdPair:
    source: int
    destination: int
    src_cell: tuple
    dst_cell: tuple


@dataclass(frozen=True)
class CellHop:
    from_cell: tuple
    to_cell: tuple
    step_size: int
    mode: HopMode


@dataclass(frozen=True)
class SdRoute:
    """Cell path and hop sequence of one S-D pair.

    relays is only set for the baseline engine: the pre-selected node of
    every intermediate cell, the destination last.
    """
    pair: SdPair
    cell_path: tuple
    hops: tuple
    relays: tuple = None

    @property
    def hop_count(self):
        return len(self.hops)


def place_nodes(n, placement, rng_seed):
    """Place n nodes in the unit square.

    Regular nodes sit at ((col + 0.5) / sqrt(n), (row + 0.5) / sqrt(n)) and
    node id = row * sqrt(n) + col.

    Args:
        n (int): number of nodes
        placement (Placement|str): random uniform or regular grid
        rng_seed (int|np.random.Generator): seed of the placement

    Returns:
        (NetworkLayout): layout without cell grid
    """
    placement = Placement(placement)
    if n < 4:
        raise ConfigError("n must be at least 4, got %d" % n)

    if placement is Placement.REGULAR_GRID:
        side = int(round(np.sqrt(n)))
        if side * side != n:
            raise ConfigError("regular placement needs a perfect square n, "
                              "got %d" % n)
        rows, cols = np.divmod(np.arange(n), side)
        positions = np.column_stack([(cols + 0.5) / side, (rows + 0.5) / side])
    else:
        rng = np.random.default_rng(rng_seed)
        positions = rng.uniform(0., 1., size=(n, 2))

    return NetworkLayout(n=n, placement=placement, positions=positions)


def cells_per_side_for(target_delay, grid_factor=DEFAULT_GRID_FACTOR,
                       min_cells=5):
    """Grid size giving about target_delay hops per route.

    Args:
        target_delay (float): D, target mean number of hops
        grid_factor (float): proportionality constant between g and D
        min_cells (int): smallest allowed grid, k for k^2-TDMA

    Returns:
        (int)
    """
    if target_delay < 1:
        raise ConfigError("target delay must be >= 1, got %s" % target_delay)

    return max(min_cells, int(round(grid_factor * target_delay)))


def build_cell_grid(layout, target_delay, grid_factor=DEFAULT_GRID_FACTOR,
                    min_cells=5):
    """Partition the unit square into g x g cells and index the nodes.

    Args:
        layout (NetworkLayout): placed nodes
        target_delay (float): D, target mean number of hops
        grid_factor (float): g = max(min_cells, round(grid_factor * D))
        min_cells (int): smallest allowed grid

    Returns:
        (NetworkLayout): new layout with cell_of, cell_index filled
    """
    g = cells_per_side_for(target_delay, grid_factor, min_cells)
    return assign_cells(layout, g)


def cell_coordinates(positions, cells_per_side):
    """(row, col) = (floor(y g), floor(x g)) of every position, clipped to
    the grid.
    """
    g = cells_per_side
    return np.minimum((positions[:, ::-1] * g).astype(int), g - 1)


def assign_cells(layout, cells_per_side, check_occupancy=True):
    """Index nodes on an explicit g x g grid.

    Args:
        layout (NetworkLayout): placed nodes
        cells_per_side (int): g
        check_occupancy (bool): warn when cells hold fewer than 2 nodes on
                                average

    Returns:
        (NetworkLayout)
    """
    g = cells_per_side
    cell_of = cell_coordinates(layout.positions, g)

    cell_index = {(row, col): [] for row in range(g) for col in range(g)}
    for nid, (row, col) in enumerate(cell_of):
        cell_index[(int(row), int(col))].append(nid)
    cell_index = {cell: tuple(nids) for cell, nids in cell_index.items()}

    expected = layout.n / float(g * g)
    crowded = expected >= 2
    if check_occupancy and not crowded:
        msg = ("%d x %d cells leave %.2f expected nodes per cell"
               % (g, g, expected))
        logger.warning(msg)
        warnings.warn(msg, OccupancyWarning)

    return replace(layout,
                   cells_per_side=g,
                   cell_of=cell_of,
                   cell_index=cell_index,
                   occupancy_warning=not crowded)


def _cell(layout, nid):
    row, col = layout.cell_of[nid]
    return int(row), int(col)


def draw_sd_pairs(layout, M, rng_seed, horizontal=False):
    """Draw M S-D pairs, every node being endpoint of at most one pair.

    Args:
        layout (NetworkLayout): layout with cell grid
        M (int): number of pairs
        rng_seed (int|np.random.Generator): seed of the draw
        horizontal (bool): source and destination share a row of the
                           regular lattice

    Returns:
        (list of SdPair)
    """
    if 2 * M > layout.n:
        raise ConfigError("precondition 2M <= n violated (M=%d, n=%d)"
                          % (M, layout.n))

    rng = np.random.default_rng(rng_seed)
    if not horizontal:
        nids = rng.permutation(layout.n)[:2 * M]
        ends = zip(nids[:M], nids[M:])
    else:
        if layout.placement is not Placement.REGULAR_GRID:
            raise ConfigError("horizontal pairs need a regular placement")
        side = int(round(np.sqrt(layout.n)))
        pools = [list(rng.permutation(np.arange(row * side, (row + 1) * side)))
                 for row in range(side)]
        ends = []
        for _ in range(M):
            rows = [row for row, pool in enumerate(pools) if len(pool) >= 2]
            pool = pools[rows[rng.integers(len(rows))]]
            ends.append((pool.pop(), pool.pop()))

    return [SdPair(source=int(src),
                   destination=int(dst),
                   src_cell=_cell(layout, src),
                   dst_cell=_cell(layout, dst)) for src, dst in ends]


def xy_route(pair):
    """Horizontal then vertical sequence of cells from source to destination.

    Args:
        pair (SdPair): S-D pair

    Returns:
        (tuple of (int, int)): |drow| + |dcol| + 1 cells
    """
    (row0, col0), (row1, col1) = pair.src_cell, pair.dst_cell
    dcol = 1 if col1 >= col0 else -1
    drow = 1 if row1 >= row0 else -1
    path = [(row0, col) for col in range(col0, col1 + dcol, dcol)]
    path.extend((row, col1) for row in range(row0 + drow, row1 + drow, drow))
    return tuple(path)


def step_sizes(advances):
    """Cell advance of every hop for a path of a given length.

    Steps alternate 3, 2 and the remainder r = advances mod 5 is absorbed
    at the tail: 1 turns the last 3 into 2, 2; 2 appends a 2; 3 appends
    a 3; 4 appends 2, 2. Fewer than two hops are completed with zero-steps
    at the head.

    Args:
        advances (int): number of cell advances of the path

    Returns:
        (list of int)
    """
    blocks, rem = divmod(advances, 5)
    steps = [3, 2] * blocks
    if rem == 1:
        if blocks > 0:
            steps = steps[:-2] + [2, 2, 2]
        else:
            steps = [1]
    elif rem == 2:
        steps.append(2)
    elif rem == 3:
        steps.append(3)
    elif rem == 4:
        steps.extend([2, 2])

    return [0] * (2 - len(steps)) + steps


def hop_sequence(cell_path):
    """Hops of the opportunistic route along a cell path.

    Args:
        cell_path (tuple of cells): output of xy_route

    Returns:
        (list of CellHop): at least two hops, last two in Mode 2
    """
    steps = step_sizes(len(cell_path) - 1)
    hops = []
    ind = 0
    for i, step in enumerate(steps):
        if i == len(steps) - 2:
            mode = HopMode.MODE2_STEP1
        elif i == len(steps) - 1:
            mode = HopMode.MODE2_STEP2
        else:
            mode = HopMode.MODE1
        hops.append(CellHop(from_cell=cell_path[ind],
                            to_cell=cell_path[ind + step],
                            step_size=step,
                            mode=mode))
        ind += step

    return hops


def build_route(pair):
    """Opportunistic route of a pair.

    Args:
        pair (SdPair): S-D pair

    Returns:
        (SdRoute)
    """
    path = xy_route(pair)
    return SdRoute(pair=pair, cell_path=path, hops=tuple(hop_sequence(path)))


def endpoint_mask(n, pairs):
    """Nodes allowed to relay: everything but S-D endpoints.

    Args:
        n (int): number of nodes
        pairs (list of SdPair): active pairs

    Returns:
        (np.ndarray of bool)
    """
    mask = np.ones(n, dtype=bool)
    for pair in pairs:
        mask[pair.source] = False
        mask[pair.destination] = False

    return mask


def central_node(layout, cell, relay_mask=None):
    """Eligible node closest to the center of a cell, None if empty.
    """
    nids = [nid for nid in layout.nodes_in(cell)
            if relay_mask is None or relay_mask[nid]]
    if len(nids) == 0:
        return None

    dist = np.linalg.norm(layout.positions[nids] - layout.cell_center(cell),
                          axis=1)
    return nids[int(np.argmin(dist))]


def baseline_route(pair, layout, relay_mask=None):
    """Shortest XY path with one-cell hops through fixed relays.

    Args:
        pair (SdPair): S-D pair
        layout (NetworkLayout): layout with cell grid
        relay_mask (np.ndarray of bool): eligible relays, default all nodes

    Returns:
        (SdRoute): relays[i] receives hop i, None for an empty cell
    """
    path = xy_route(pair)
    if len(path) == 1:
        hops = (CellHop(path[0], path[0], 0, HopMode.DIRECT),)
        return SdRoute(pair=pair, cell_path=path, hops=hops,
                       relays=(pair.destination,))

    hops = tuple(CellHop(path[i], path[i + 1], 1, HopMode.DIRECT)
                 for i in range(len(path) - 1))
    relays = tuple(central_node(layout, cell, relay_mask)
                   for cell in path[1:-1])
    return SdRoute(pair=pair, cell_path=path, hops=hops,
                   relays=relays + (pair.destination,))


def paths_per_cell(routes):
    """Number of distinct routes crossing each cell.

    Args:
        routes (list of SdRoute): built routes

    Returns:
        (Counter): cell -> count, absent cells have count 0
    """
    counts = Counter()
    for route in routes:
        counts.update(set(route.cell_path))

    return counts


def dump_layout(layout):
    """Line oriented text form of a layout.

    One node per line: 'id x y row col'. A header line records n,
    placement and g.

    Args:
        layout (NetworkLayout): layout with cell grid

    Returns:
        (str)
    """
    lines = ["# n=%d placement=%s g=%d" % (layout.n, layout.placement.value,
                                           layout.cells_per_side)]
    for nid, (x, y) in enumerate(layout.positions):
        row, col = _cell(layout, nid)
        lines.append("%d %r %r %d %d" % (nid, float(x), float(y), row, col))

    return "\n".join(lines) + "\n"


def load_layout(txt):
    """Rebuild a layout from dump_layout output.

    Args:
        txt (str): dumped text

    Returns:
        (NetworkLayout)
    """
    lines = txt.splitlines()
    header = dict(item.split("=") for item in lines[0][1:].split())
    positions = np.array([[float(val) for val in line.split()[1:3]]
                          for line in lines[1:] if line.strip() != ""])
    layout = NetworkLayout(n=int(header["n"]),
                           placement=Placement(header["placement"]),
                           positions=positions)
    return assign_cells(layout, int(header["g"]))


def dump_routes(routes):
    """Line oriented text form of routes.

    One route per line: 'index source destination step:mode ...'.

    Args:
        routes (list of SdRoute): built routes

    Returns:
        (str)
    """
    lines = []
    for ind, route in enumerate(routes):
        hops = " ".join("%d:%s" % (hop.step_size, hop.mode.value)
                        for hop in route.hops)
        lines.append("%d %d %d %s" % (ind, route.pair.source,
                                      route.pair.destination, hops))

    return "\n".join(lines) + "\n"
