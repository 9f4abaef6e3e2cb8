"""Packet delivery over a route: opportunistic Modes 1 and 2, baseline hops.

Traffic is saturated: every S-D pair carries a continuous packet stream,
so in any slot each hop of each route whose transmitting cell is active
has a transmitter. The traced packet of a route replaces the holder of its
current hop, the other holders are drawn uniformly in their cells.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
import logging

import numpy as np

from .channel import (distances, draw_block_fading, path_gain,
                      received_powers, sinr_matrix)
from .errors import ConfigError
from .topology import HopMode

logger = logging.getLogger(__name__)


class Engine(Enum):
    OPPORTUNISTIC = "opportunistic"
    BASELINE = "baseline"


@dataclass(frozen=True, eq=False)
class HopContext:
    """What every hop needs besides the fading block.

    Args:
        layout (NetworkLayout): layout with cell grid
        params (ChannelParams): channel constants
        per_hop_power (float): transmit power of every node
        relay_mask (np.ndarray of bool): nodes allowed to relay
        tie_break (str): 'random' or 'closest' (to the destination)
    """
    layout: object
    params: object
    per_hop_power: float
    relay_mask: np.ndarray = None
    tie_break: str = "random"


@dataclass(frozen=True)
class HopOutcome:
    hop_index: int
    decoders: tuple
    chosen_relay: int
    outage: bool
    candidate_count: int
    measured_sinr: float
    measured_interference: float
    receivers: int = 0
    mean_signal: float = float("nan")
    mean_interference: float = float("nan")
    candidates: tuple = ()
    slot: int = 0


@dataclass(frozen=True)
class PacketResult:
    pair_index: int
    delivered: bool
    hops_taken: int
    outage_hop: int
    per_hop: tuple = field(default_factory=tuple)
    slots: int = 0


def _unique(nids):
    return [int(nid) for nid in dict.fromkeys(int(nid) for nid in nids)]


def _receivers(ctx, cell, transmitters):
    """Nodes of a cell able to receive: eligible relays not transmitting.
    """
    busy = set(transmitters)
    return [nid for nid in ctx.layout.nodes_in(cell)
            if nid not in busy
            and (ctx.relay_mask is None or ctx.relay_mask[nid])]


def _link_budget(ctx, sample, tx, receivers, transmitters):
    """SINR of tx at every receiver under the max-SINR receiver rule.

    Returns:
        (np.ndarray, np.ndarray, np.ndarray, np.ndarray): SINR from tx,
        interference, decodable mask and fading-free received power
    """
    layout = ctx.layout
    powers = received_powers(layout.positions, receivers, transmitters,
                             ctx.per_hop_power, sample, ctx.params)
    sinr, interference = sinr_matrix(powers, ctx.params.noise_power)
    col = transmitters.index(tx)

    tx_cell = tuple(layout.cell_of[tx])
    coloc = [ind for ind, nid in enumerate(transmitters)
             if tuple(layout.cell_of[nid]) == tx_cell]
    best = sinr[:, coloc].max(axis=1)
    ok = (sinr[:, col] >= ctx.params.eta) & (sinr[:, col] >= best)

    dist = distances(layout.positions, receivers, [tx])[:, 0]
    mean_rx = ctx.per_hop_power * path_gain(dist, ctx.params.alpha)
    return sinr[:, col], interference[:, col], ok, np.atleast_1d(mean_rx)


def _pick(ctx, nids, rng, destination):
    if ctx.tie_break == "closest" and destination is not None:
        dist = distances(ctx.layout.positions, nids, [destination])[:, 0]
        return nids[int(np.argmin(dist))]

    return nids[int(rng.integers(len(nids)))]


def _outcome(receivers, decoders, chosen, sinr, interference, mean_rx,
             **kwds):
    if len(receivers) == 0:
        return HopOutcome(hop_index=kwds.pop('hop_index', 0),
                          decoders=(), chosen_relay=None, outage=True,
                          candidate_count=0,
                          measured_sinr=float("nan"),
                          measured_interference=float("nan"),
                          **kwds)

    if chosen is not None:
        ind = receivers.index(chosen)
    else:
        ind = int(np.argmax(sinr))

    return HopOutcome(hop_index=kwds.pop('hop_index', 0),
                      decoders=tuple(decoders),
                      chosen_relay=chosen,
                      outage=len(decoders) == 0,
                      candidate_count=len(decoders),
                      measured_sinr=float(sinr[ind]),
                      measured_interference=float(interference[ind]),
                      receivers=len(receivers),
                      mean_signal=float(np.mean(mean_rx)),
                      mean_interference=float(np.mean(interference)),
                      **kwds)


def mode1_hop(tx, target_cell, transmitters, sample, ctx, rng,
              destination=None, hop_index=0):
    """Opportunistic hop towards the nodes of a cell 2 or 3 cells ahead.

    A node of the target cell decodes when the SINR of tx reaches eta and tx
    is its best transmitter among the transmitters of tx's cell. One decoder
    becomes the next relay, chosen uniformly (or closest to destination).

    Args:
        tx (int): current packet holder
        target_cell (int, int): cell of the candidate relays
        transmitters (list of int): every co-active transmitter
        sample (ChannelSample): fading block of the slot
        ctx (HopContext): geometry, channel and power
        rng (np.random.Generator): selection stream
        destination (int): final destination, for the 'closest' rule
        hop_index (int): position of the hop in the route

    Returns:
        (HopOutcome)
    """
    transmitters = _unique(list(transmitters) + [tx])
    receivers = _receivers(ctx, target_cell, transmitters)
    if len(receivers) == 0:
        return _outcome([], [], None, None, None, None, hop_index=hop_index)

    sinr, interference, ok, mean_rx = _link_budget(ctx, sample, tx, receivers,
                                                   transmitters)
    decoders = [nid for nid, flag in zip(receivers, ok) if flag]
    if destination in decoders:
        chosen = destination
    else:
        chosen = _pick(ctx, decoders, rng, destination) if decoders else None
    kept = () if chosen is None else (chosen,)
    return _outcome(receivers, decoders, chosen, sinr, interference, mean_rx,
                    hop_index=hop_index, candidates=kept)


def sub_cell_count(m):
    """Sub-cells per side so that about sqrt(m) sub-cells split m nodes.
    """
    if m <= 1:
        return 1

    return int(np.ceil(m ** 0.25 - 1e-9))


def mode2_step1(tx, cell_f, transmitters, sample, ctx, rng, destination=None,
                hop_index=0):
    """First Mode 2 step: one decoder per sub-cell of Cell F.

    Cell F is split in s x s square sub-cells with s = ceil(m^(1/4)), m the
    number of candidate nodes in Cell F.

    Args:
        tx (int): current packet holder
        cell_f (int, int): Cell F
        transmitters (list of int): every co-active transmitter
        sample (ChannelSample): fading block of the slot
        ctx (HopContext): geometry, channel and power
        rng (np.random.Generator): selection stream
        destination (int): final destination, for the 'closest' rule
        hop_index (int): position of the hop in the route

    Returns:
        (HopOutcome): candidates holds the relays kept for step 2
    """
    transmitters = _unique(list(transmitters) + [tx])
    receivers = _receivers(ctx, cell_f, transmitters)
    if len(receivers) == 0:
        return _outcome([], [], None, None, None, None, hop_index=hop_index)

    sinr, interference, ok, mean_rx = _link_budget(ctx, sample, tx, receivers,
                                                   transmitters)

    layout = ctx.layout
    nb = sub_cell_count(len(receivers))
    corner = layout.cell_center(cell_f) - layout.cell_side / 2.
    local = (layout.positions[receivers] - corner) / (layout.cell_side / nb)
    sub = np.clip(local.astype(int), 0, nb - 1)
    sub_ids = sub[:, 1] * nb + sub[:, 0]

    decoders = [nid for nid, flag in zip(receivers, ok) if flag]
    if destination in decoders:
        # the destination heard the packet itself, step 2 is skipped
        return _outcome(receivers, decoders, destination, sinr, interference,
                        mean_rx, hop_index=hop_index,
                        candidates=(destination,))

    candidates = []
    for sid in range(nb * nb):
        local_dec = [nid for nid, flag, cur in zip(receivers, ok, sub_ids)
                     if flag and cur == sid and nid != destination]
        if local_dec:
            candidates.append(_pick(ctx, local_dec, rng, destination))

    out = _outcome(receivers, decoders, None, sinr, interference, mean_rx,
                   hop_index=hop_index, candidates=tuple(candidates))
    return out


def mode2_step2(candidates, destination, transmitters, sample, ctx, rng,
                hop_index=0):
    """Last hop: the destination polls the step 1 relays.

    Polling is free and error free; a relay is eligible when its own data
    link reaches eta at the destination, one eligible relay is picked
    uniformly.

    Args:
        candidates (tuple of int): relays kept by mode2_step1
        destination (int): final destination
        transmitters (list of int): co-active transmitters of other hops
        sample (ChannelSample): fresh fading block
        ctx (HopContext): geometry, channel and power
        rng (np.random.Generator): selection stream
        hop_index (int): position of the hop in the route

    Returns:
        (HopOutcome)
    """
    candidates = tuple(cand for cand in candidates if cand != destination)
    if len(candidates) == 0:
        return _outcome([], [], None, None, None, None, hop_index=hop_index)

    background = [nid for nid in _unique(transmitters)
                  if nid not in candidates and nid != destination]
    sinrs, interfs, means, eligible = [], [], [], []
    for cand in candidates:
        sinr, interference, ok, mean_rx = _link_budget(ctx, sample, cand,
                                                       [destination],
                                                       background + [cand])
        sinrs.append(sinr[0])
        interfs.append(interference[0])
        means.append(mean_rx[0])
        if ok[0]:
            eligible.append(cand)

    chosen = eligible[int(rng.integers(len(eligible)))] if eligible else None
    sinrs = np.array(sinrs)
    ind = candidates.index(chosen) if chosen is not None else int(np.argmax(sinrs))
    return HopOutcome(hop_index=hop_index,
                      decoders=tuple(eligible),
                      chosen_relay=chosen,
                      outage=chosen is None,
                      candidate_count=len(eligible),
                      measured_sinr=float(sinrs[ind]),
                      measured_interference=float(interfs[ind]),
                      receivers=1,
                      mean_signal=float(np.mean(means)),
                      mean_interference=float(np.mean(interfs)),
                      candidates=tuple(candidates))


def baseline_hop(tx, relay, transmitters, sample, ctx, hop_index=0):
    """Plain hop to a pre-selected relay, success iff SINR >= eta.

    Args:
        tx (int): current packet holder
        relay (int): next node of the pre-determined path, None if missing
        transmitters (list of int): every co-active transmitter
        sample (ChannelSample): fading block, normally without fading
        ctx (HopContext): geometry, channel and power
        hop_index (int): position of the hop in the route

    Returns:
        (HopOutcome)
    """
    transmitters = _unique(list(transmitters) + [tx])
    if relay is None or relay in transmitters:
        return _outcome([], [], None, None, None, None, hop_index=hop_index)

    powers = received_powers(ctx.layout.positions, [relay], transmitters,
                             ctx.per_hop_power, sample, ctx.params)
    sinr, interference = sinr_matrix(powers, ctx.params.noise_power)
    col = transmitters.index(tx)
    dist = distances(ctx.layout.positions, [relay], [tx])[:, 0]
    mean_rx = ctx.per_hop_power * path_gain(dist, ctx.params.alpha)
    decoders = [relay] if sinr[0, col] >= ctx.params.eta else []
    return _outcome([relay], decoders, relay if decoders else None,
                    sinr[:, col], interference[:, col], mean_rx,
                    hop_index=hop_index,
                    candidates=tuple(decoders))


@dataclass(frozen=True, eq=False)
class NetworkState:
    """Everything fixed during one trial.

    Args:
        engine (Engine): routing engine of the routes
        routes (tuple of SdRoute): one route per S-D pair
        schedule (TdmaSchedule): cell activation
        ctx (HopContext): geometry, channel and power
    """
    engine: Engine
    routes: tuple
    schedule: object
    ctx: HopContext
    active_hops: dict = field(default_factory=dict)

    def __post_init__(self):
        table = {}
        for rind, route in enumerate(self.routes):
            for hind, hop in enumerate(route.hops):
                offset = self.schedule.slot_of(hop.from_cell)
                table.setdefault(offset, []).append((rind, hind))
        object.__setattr__(self, 'active_hops', table)

    def with_power(self, per_hop_power):
        return replace(self, ctx=replace(self.ctx, per_hop_power=per_hop_power))

    def background(self, offset, exclude, rng):
        """Holders of every other hop transmitting in a slot offset.

        A route holds at most one transmitter per cell in a slot, so hops
        of the same route leaving the same cell (padded short routes)
        share it, and the traced packet's cell is its own.

        Args:
            offset (int): slot index within the frame
            exclude (int, int): (route, hop) of the traced packet
            rng (np.random.Generator): selection stream

        Returns:
            (list of int)
        """
        layout = self.ctx.layout
        rind_t, hind_t = exclude
        seen = {(rind_t, self.routes[rind_t].hops[hind_t].from_cell)}
        holders = []
        for rind, hind in self.active_hops.get(offset, ()):
            route = self.routes[rind]
            key = (rind, route.hops[hind].from_cell)
            if key in seen:
                continue
            seen.add(key)
            if hind == 0:
                holders.append(route.pair.source)
            elif self.engine is Engine.BASELINE:
                if route.relays[hind - 1] is not None:
                    holders.append(route.relays[hind - 1])
            else:
                pool = [nid for nid in layout.nodes_in(route.hops[hind].from_cell)
                        if self.ctx.relay_mask is None or self.ctx.relay_mask[nid]]
                if pool:
                    holders.append(pool[int(rng.integers(len(pool)))])

        return _unique(holders)


def _check_route(route, engine, schedule):
    for cell in route.cell_path:
        if not schedule.covers(cell):
            raise ConfigError("route cell %s is outside the %dx%d schedule"
                              % (cell, schedule.cells_per_side,
                                 schedule.cells_per_side))
    modes = set(hop.mode for hop in route.hops)
    if engine is Engine.BASELINE:
        if route.relays is None or modes != {HopMode.DIRECT}:
            raise ConfigError("baseline engine needs a baseline route")
    elif HopMode.DIRECT in modes:
        raise ConfigError("opportunistic engine needs an opportunistic route")


def deliver_packet(route, engine, schedule, state, rng, selection_rng=None,
                   route_index=None, start_slot=0):
    """Forward one packet hop by hop until delivery or first outage.

    A hop waits for the next slot of its transmitting cell and sees a fresh
    fading block. No retransmission.

    Args:
        route (SdRoute): route of the packet
        engine (Engine|str): opportunistic or baseline
        schedule (TdmaSchedule): cell activation
        state (NetworkState): network of the trial
        rng (np.random.Generator): fading stream
        selection_rng (np.random.Generator): relay / holder selection
                                             stream, default rng
        route_index (int): index of route in state.routes
        start_slot (int): slot at which the source starts

    Returns:
        (PacketResult)
    """
    engine = Engine(engine)
    if selection_rng is None:
        selection_rng = rng
    if route_index is None:
        route_index = next(ind for ind, cur in enumerate(state.routes)
                           if cur is route)
    _check_route(route, engine, schedule)

    ctx = state.ctx
    fading = ctx.params.fading
    holder = route.pair.source
    destination = route.pair.destination
    candidates = ()
    slot = start_slot
    per_hop = []
    for hind, hop in enumerate(route.hops):
        slot = schedule.next_slot(hop.from_cell, slot)
        background = state.background(schedule.slot_of(hop.from_cell),
                                      (route_index, hind), selection_rng)
        sample = draw_block_fading(None, fading, rng, block_id=slot)
        if engine is Engine.BASELINE:
            out = baseline_hop(holder, route.relays[hind], background + [holder],
                               sample, ctx, hop_index=hind)
        elif hop.mode is HopMode.MODE1:
            out = mode1_hop(holder, hop.to_cell, background + [holder], sample,
                            ctx, selection_rng, destination, hop_index=hind)
        elif hop.mode is HopMode.MODE2_STEP1:
            out = mode2_step1(holder, hop.to_cell, background + [holder],
                              sample, ctx, selection_rng, destination,
                              hop_index=hind)
        else:
            out = mode2_step2(candidates, destination, background, sample, ctx,
                              selection_rng, hop_index=hind)
        per_hop.append(replace(out, slot=slot))
        slot += 1

        if out.outage:
            logger.debug("pair %d: outage at hop %d", route_index, hind)
            return PacketResult(pair_index=route_index, delivered=False,
                                hops_taken=len(per_hop), outage_hop=hind,
                                per_hop=tuple(per_hop),
                                slots=slot - start_slot)
        holder = out.chosen_relay
        candidates = out.candidates
        if holder == destination:
            break

    return PacketResult(pair_index=route_index, delivered=True,
                        hops_taken=len(per_hop), outage_hop=None,
                        per_hop=tuple(per_hop), slots=slot - start_slot)


def deliver_all(state, rng, selection_rng=None):
    """One packet per route of the network, routes in order.

    Args:
        state (NetworkState): network of the trial
        rng (np.random.Generator): fading stream
        selection_rng (np.random.Generator): selection stream

    Returns:
        (list of PacketResult)
    """
    return [deliver_packet(route, state.engine, state.schedule, state, rng,
                           selection_rng, route_index=ind)
            for ind, route in enumerate(state.routes)]
