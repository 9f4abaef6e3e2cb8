"""k^2-TDMA cell schedules and interference layers around a cell.
"""
from __future__ import annotations

from dataclasses import dataclass
import logging

import numpy as np

from .errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TdmaSchedule:
    """Cells whose (row mod k, col mod k) matches the slot offset transmit.

    Args:
        k (int): 3, 4 or 5
        cells_per_side (int): g, grid size
    """
    k: int
    cells_per_side: int

    def __post_init__(self):
        if self.k not in (3, 4, 5):
            raise ConfigError("k must be 3, 4 or 5, got %s" % self.k)
        if self.cells_per_side < self.k:
            raise ConfigError("a %d^2-TDMA needs at least %d cells per side, "
                              "got %d" % (self.k, self.k, self.cells_per_side))

    @property
    def slot_count(self):
        return self.k * self.k

    def offset(self, slot):
        return divmod(slot % self.slot_count, self.k)

    def slot_of(self, cell):
        row, col = cell
        return (row % self.k) * self.k + col % self.k

    def is_active(self, cell, slot):
        return self.slot_of(cell) == slot % self.slot_count

    def next_slot(self, cell, after):
        """First slot >= after in which cell transmits.
        """
        wait = (self.slot_of(cell) - after) % self.slot_count
        return after + wait

    def active_cells(self, slot):
        return active_cells(self.cells_per_side, self.k, slot)

    def covers(self, cell):
        row, col = cell
        return 0 <= row < self.cells_per_side and 0 <= col < self.cells_per_side


def active_cells(cells_per_side, k, slot):
    """Cells transmitting in a slot of a k^2-TDMA frame.

    Args:
        cells_per_side (int): g
        k (int): TDMA period per axis
        slot (int): 0 <= slot < k^2

    Returns:
        (list of (int, int))
    """
    if not 0 <= slot < k * k:
        raise ConfigError("slot must lie in [0, %d)" % (k * k))

    row0, col0 = divmod(slot, k)
    return [(row, col)
            for row in range(row0, cells_per_side, k)
            for col in range(col0, cells_per_side, k)]


@dataclass(frozen=True)
class InterferenceLayer:
    l: int
    cells: tuple
    min_dist: float
    max_dist: float


def layer_distance_bounds(l, k, cell_side):
    """Receiver to interferer distance bounds in layer l.

    For k = 5: ((5l - 4) s, 8 (5l - 4) s). For other k:
    ((kl - (k - 1)) s, sqrt(2) (kl + (k - 1)) s).
    """
    if k == 5:
        return (5 * l - 4) * cell_side, 8 * (5 * l - 4) * cell_side

    return ((k * l - (k - 1)) * cell_side,
            np.sqrt(2) * (k * l + (k - 1)) * cell_side)


def interference_layers(ref_cell, cells_per_side, k):
    """Co-active cells around a reference cell grouped by layer.

    Layer l gathers the co-active cells at Chebyshev cell-distance l * k.
    Layers are truncated at the border of the square, never wrapped.

    Args:
        ref_cell (int, int): receiving cell
        cells_per_side (int): g
        k (int): TDMA period per axis

    Returns:
        (list of InterferenceLayer): l = 1 .. (g - 1) // k
    """
    g = cells_per_side
    row0, col0 = ref_cell
    layers = []
    for l in range(1, (g - 1) // k + 1):
        reach = l * k
        cells = []
        for drow in range(-reach, reach + 1, k):
            for dcol in range(-reach, reach + 1, k):
                if max(abs(drow), abs(dcol)) != reach:
                    continue
                row, col = row0 + drow, col0 + dcol
                if 0 <= row < g and 0 <= col < g:
                    cells.append((row, col))
        dmin, dmax = layer_distance_bounds(l, k, 1. / g)
        layers.append(InterferenceLayer(l=l, cells=tuple(cells),
                                        min_dist=dmin, max_dist=dmax))

    return layers


def _center_distances(ref_cell, cells, cell_side):
    if len(cells) == 0:
        return np.zeros(0)
    delta = np.array(cells, dtype=float) - np.array(ref_cell, dtype=float)
    return np.sqrt((delta ** 2).sum(axis=1)) * cell_side


def expected_interference_exact(ref_cell, cells_per_side, k, tx_density,
                                per_hop_power, alpha):
    """Mean interference at the center of a cell from co-active cells.

    Interferers sit at the centers of their cells, fading has unit mean.

    Args:
        ref_cell (int, int): receiving cell
        cells_per_side (int): g
        k (int): TDMA period per axis
        tx_density (float): simultaneous transmitters per active cell
        per_hop_power (float): transmit power of every node
        alpha (float): path-loss exponent

    Returns:
        (float)
    """
    cells = [cell for layer in interference_layers(ref_cell, cells_per_side, k)
             for cell in layer.cells]
    dist = _center_distances(ref_cell, cells, 1. / cells_per_side)
    return float(per_hop_power * tx_density * np.sum(dist ** -alpha))


def layered_bounds(cells_per_side, k, tx_density, per_hop_power, alpha):
    """Lower and upper layered sums bracketing the exact interference.

    Every layer counts 8l interferers, placed at the layer's max_dist for
    the lower sum and at its min_dist for the upper sum.

    Returns:
        (float, float)
    """
    low = high = 0.
    for l in range(1, (cells_per_side - 1) // k + 1):
        dmin, dmax = layer_distance_bounds(l, k, 1. / cells_per_side)
        low += 8 * l * per_hop_power * tx_density * dmax ** -alpha
        high += 8 * l * per_hop_power * tx_density * dmin ** -alpha

    return low, high


def is_interior(ref_cell, cells_per_side, k):
    """Whether the first interference layer of a cell is complete.
    """
    row, col = ref_cell
    return (k <= row < cells_per_side - k) and (k <= col < cells_per_side - k)


def layer_table(ref_cell, cells_per_side, k, tx_density, per_hop_power,
                alpha):
    """Per layer summary rows for inspection.

    Returns:
        (list of dict): layer, cell_count, min_dist, max_dist, contribution
    """
    rows = []
    for layer in interference_layers(ref_cell, cells_per_side, k):
        dist = _center_distances(ref_cell, layer.cells, 1. / cells_per_side)
        contrib = per_hop_power * tx_density * np.sum(dist ** -alpha)
        rows.append(dict(layer=layer.l,
                         cell_count=len(layer.cells),
                         min_dist=layer.min_dist,
                         max_dist=layer.max_dist,
                         contribution=float(contrib)))

    return rows


def layer_decay_sum(alpha, nb_layers, k=5):
    """Partial sum of 1 / (kl - (k - 1))^(alpha - 1) over l = 1..nb_layers.

    Converges for alpha > 2.
    """
    l = np.arange(1, nb_layers + 1, dtype=float)
    return float(np.sum((k * l - (k - 1)) ** (1 - alpha)))
