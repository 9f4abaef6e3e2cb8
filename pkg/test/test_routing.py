import numpy as np
import pytest

from opp_routing.channel import ChannelParams, distances, draw_block_fading
from opp_routing.errors import ConfigError
from opp_routing.routing import (Engine, HopContext, NetworkState,
                                 baseline_hop, deliver_all, deliver_packet,
                                 mode1_hop, mode2_step1, mode2_step2,
                                 sub_cell_count)
from opp_routing.tdma import TdmaSchedule, expected_interference_exact
from opp_routing.topology import (CellHop, HopMode, SdPair, SdRoute,
                                  assign_cells, baseline_route, build_route,
                                  draw_sd_pairs, endpoint_mask, place_nodes)

# 8 x 8 lattice on 4 x 4 cells: cell (0, 0) holds nodes 0, 1, 8, 9 and
# cell (0, 2) holds nodes 4, 5, 12, 13
LAYOUT64 = assign_cells(place_nodes(64, "regular", 0), 4)
# 16 x 16 lattice on 8 x 8 cells of 4 nodes and on 4 x 4 cells of 16 nodes
LAYOUT256 = assign_cells(place_nodes(256, "regular", 0), 8)
LAYOUT256_COARSE = assign_cells(LAYOUT256, 4)


def context(layout=LAYOUT64, power=1e3, fading="none", **kwds):
    params = ChannelParams(alpha=4., noise_power=1., fading=fading,
                           eta=kwds.pop('eta', 1.))
    return HopContext(layout=layout, params=params, per_hop_power=power,
                      **kwds)


def block(fading="none", seed=0):
    return draw_block_fading(None, fading, np.random.default_rng(seed))


def test_mode1_everyone_decodes_at_high_power():
    out = mode1_hop(0, (0, 2), [], block(), context(),
                    np.random.default_rng(0))
    assert not out.outage
    assert out.decoders == (4, 5, 12, 13)
    assert out.chosen_relay in out.decoders
    assert out.candidates == (out.chosen_relay,)
    assert out.candidate_count == 4
    assert out.receivers == 4


def test_mode1_without_power_is_an_outage():
    out = mode1_hop(0, (0, 2), [], block(), context(power=0.),
                    np.random.default_rng(0))
    assert out.outage
    assert out.chosen_relay is None
    assert out.decoders == ()


def test_mode1_closest_tie_break():
    ctx = context(tie_break="closest")
    out = mode1_hop(0, (0, 2), [], block(), ctx, np.random.default_rng(0),
                    destination=7)
    assert out.chosen_relay == 5


def test_mode1_respects_relay_mask():
    mask = np.ones(64, dtype=bool)
    mask[[4, 5]] = False
    out = mode1_hop(0, (0, 2), [], block(), context(relay_mask=mask),
                    np.random.default_rng(0))
    assert out.decoders == (12, 13)


def test_mode1_transmitters_do_not_receive():
    out = mode1_hop(0, (0, 0), [9], block(), context(),
                    np.random.default_rng(0))
    assert 0 not in out.decoders
    assert 9 not in out.decoders


def test_mode1_receivers_follow_their_best_co_located_transmitter():
    # node 9 is closer than node 0 to every node of cell (0, 2)
    ctx = context(eta=0.01)
    sample = block()
    far = mode1_hop(0, (0, 2), [9], sample, ctx, np.random.default_rng(0))
    near = mode1_hop(9, (0, 2), [0], sample, ctx, np.random.default_rng(0))
    assert far.outage
    assert near.decoders == (4, 5, 12, 13)


def test_mode1_empty_target_cell():
    mask = np.zeros(64, dtype=bool)
    out = mode1_hop(0, (0, 2), [], block(), context(relay_mask=mask),
                    np.random.default_rng(0))
    assert out.outage
    assert out.receivers == 0


def test_mode1_matches_closed_form_success():
    ctx = context(power=0.1, fading="rayleigh")
    dist = distances(LAYOUT64.positions, [4, 5, 12, 13], [0])[:, 0]
    expected = 1. - np.prod(1. - np.exp(-dist ** 4 / 0.1))

    rng = np.random.default_rng(11)
    trials = 20000
    success = 0
    for block_id in range(trials):
        sample = draw_block_fading(None, "rayleigh", rng, block_id)
        success += not mode1_hop(0, (0, 2), [], sample, ctx, rng).outage

    assert success / trials == pytest.approx(expected, abs=0.02)


@pytest.mark.parametrize("m, nb", [(0, 1), (1, 1), (2, 2), (16, 2),
                                   (17, 3), (81, 3), (82, 4)])
def test_sub_cell_count(m, nb):
    assert sub_cell_count(m) == nb


def test_mode2_step1_keeps_one_relay_per_sub_cell():
    layout = LAYOUT256_COARSE
    ctx = context(layout=layout, power=1e6)
    cell = (0, 2)
    out = mode2_step1(0, cell, [], block(), ctx, np.random.default_rng(0))
    assert not out.outage
    assert len(out.decoders) == 16
    assert len(out.candidates) == 4
    assert set(out.candidates) <= set(out.decoders)

    side = layout.cell_side / 2
    corner = layout.cell_center(cell) - layout.cell_side / 2
    subs = {tuple(((layout.positions[nid] - corner) // side).astype(int))
            for nid in out.candidates}
    assert len(subs) == 4


def test_mode2_step2_without_candidates_is_an_outage():
    rng = np.random.default_rng(0)
    state = rng.bit_generator.state
    out = mode2_step2((), 7, [], block(), context(), rng, hop_index=3)
    assert out.outage
    assert out.hop_index == 3
    assert rng.bit_generator.state == state


def test_mode2_step2_delivers_at_high_power():
    out = mode2_step2((4, 12), 7, [], block(), context(),
                      np.random.default_rng(0))
    assert not out.outage
    assert out.chosen_relay in (4, 12)
    assert out.decoders == (4, 12)


def test_mode2_step2_matches_closed_form_success():
    ctx = context(power=0.02, fading="rayleigh")
    # candidate 4 sits 0.375 away from destination 7
    expected = np.exp(-0.375 ** 4 / 0.02)

    rng = np.random.default_rng(5)
    trials = 20000
    success = 0
    for block_id in range(trials):
        sample = draw_block_fading(None, "rayleigh", rng, block_id)
        success += not mode2_step2((4,), 7, [], sample, ctx, rng).outage

    assert success / trials == pytest.approx(expected, abs=0.02)


def test_baseline_hop_threshold():
    # relay 4 is 0.5 away from node 0: received power 16 p
    sample = block()
    fail = baseline_hop(0, 4, [], sample, context(power=0.99 / 16))
    ok = baseline_hop(0, 4, [], sample, context(power=2. / 16))
    assert fail.outage
    assert fail.measured_sinr == pytest.approx(0.99)
    assert not ok.outage
    assert ok.chosen_relay == 4
    assert ok.measured_sinr == pytest.approx(2.)


def test_baseline_hop_without_relay():
    assert baseline_hop(0, None, [], block(), context()).outage
    assert baseline_hop(0, 4, [4], block(), context()).outage


def opportunistic_network(power, fading="none"):
    cur = SdPair(source=0, destination=15, src_cell=(0, 0), dst_cell=(0, 7))
    ctx = context(layout=LAYOUT256, power=power, fading=fading,
                  relay_mask=endpoint_mask(256, [cur]))
    route = build_route(cur)
    return route, NetworkState(engine=Engine.OPPORTUNISTIC, routes=(route,),
                               schedule=TdmaSchedule(4, 8), ctx=ctx)


def test_packet_delivered_at_high_power():
    route, state = opportunistic_network(1e6)
    res = deliver_packet(route, "opportunistic", state.schedule, state,
                         np.random.default_rng(0))
    assert res.delivered
    assert res.hops_taken == route.hop_count == 3
    assert res.outage_hop is None
    assert [hop.slot for hop in res.per_hop] == [0, 3, 17]
    assert res.slots == 18


def test_packet_without_power_stops_at_first_hop():
    route, state = opportunistic_network(0.)
    res = deliver_packet(route, "opportunistic", state.schedule, state,
                         np.random.default_rng(0))
    assert not res.delivered
    assert res.outage_hop == 0
    assert res.hops_taken == 1


def trace(packets):
    return [(pkt.delivered, pkt.hops_taken, pkt.outage_hop,
             [(hop.slot, hop.decoders, hop.chosen_relay) for hop in pkt.per_hop])
            for pkt in packets]


def test_packet_runs_are_reproducible():
    route, state = opportunistic_network(1., fading="rayleigh")
    first = deliver_packet(route, "opportunistic", state.schedule, state,
                           np.random.default_rng(3))
    again = deliver_packet(route, "opportunistic", state.schedule, state,
                           np.random.default_rng(3))
    assert trace([first]) == trace([again])


def test_route_and_engine_must_agree():
    route, state = opportunistic_network(1.)
    base = baseline_route(route.pair, LAYOUT256, state.ctx.relay_mask)
    with pytest.raises(ConfigError):
        deliver_packet(base, "opportunistic", state.schedule, state,
                       np.random.default_rng(0), route_index=0)
    with pytest.raises(ConfigError):
        deliver_packet(route, "baseline", state.schedule, state,
                       np.random.default_rng(0))


def test_route_must_fit_the_schedule():
    route, state = opportunistic_network(1.)
    with pytest.raises(ConfigError):
        deliver_packet(route, "opportunistic", TdmaSchedule(4, 4), state,
                       np.random.default_rng(0))


def baseline_network(power, M=8):
    pairs = draw_sd_pairs(LAYOUT256, M, 2)
    mask = endpoint_mask(256, pairs)
    routes = tuple(baseline_route(pair, LAYOUT256, mask) for pair in pairs)
    ctx = context(layout=LAYOUT256, power=power, relay_mask=mask)
    return NetworkState(engine=Engine.BASELINE, routes=routes,
                        schedule=TdmaSchedule(3, 8), ctx=ctx)


def test_baseline_delivery_is_deterministic():
    state = baseline_network(10.)
    first = deliver_all(state, np.random.default_rng(0))
    again = deliver_all(state, np.random.default_rng(1))
    assert trace(first) == trace(again)
    assert len(first) == 8


def test_baseline_delivery_grows_with_power():
    state = baseline_network(1e-3)
    for low, high in [(1e-3, 1e-2), (1e-2, 1.), (1., 1e3)]:
        weak = deliver_all(state.with_power(low), np.random.default_rng(0))
        strong = deliver_all(state.with_power(high), np.random.default_rng(0))
        for pkt_w, pkt_s in zip(weak, strong):
            assert pkt_s.delivered or not pkt_w.delivered
            assert pkt_s.hops_taken >= pkt_w.hops_taken


def test_mode2_step1_destination_decoding_takes_the_packet():
    out = mode2_step1(0, (0, 0), [], block(), context(),
                      np.random.default_rng(0), destination=1)
    assert not out.outage
    assert out.chosen_relay == 1
    assert out.candidates == (1,)


def test_mode2_step2_skips_the_destination_among_candidates():
    out = mode2_step2((1, 8), 1, [], block(), context(),
                      np.random.default_rng(0))
    assert not out.outage
    assert out.candidates == (8,)
    assert out.chosen_relay == 8


def test_mode1_prefers_a_decoding_destination():
    out = mode1_hop(0, (0, 2), [], block(), context(),
                    np.random.default_rng(0), destination=13)
    assert out.chosen_relay == 13


def same_cell_network(power, fading="none"):
    pair = SdPair(source=0, destination=1, src_cell=(0, 0), dst_cell=(0, 0))
    route = build_route(pair)
    ctx = context(power=power, fading=fading)
    return route, NetworkState(engine=Engine.OPPORTUNISTIC, routes=(route,),
                               schedule=TdmaSchedule(4, 4), ctx=ctx)


def test_packet_stops_when_the_destination_decodes():
    route, state = same_cell_network(1e3)
    res = deliver_packet(route, "opportunistic", state.schedule, state,
                         np.random.default_rng(0))
    assert res.delivered
    assert res.hops_taken == 1
    assert res.per_hop[0].chosen_relay == 1


def test_endpoints_as_relays_never_crash():
    route, state = same_cell_network(3e-4, fading="rayleigh")
    results = [deliver_packet(route, "opportunistic", state.schedule, state,
                              np.random.default_rng(seed))
               for seed in range(20)]
    assert any(res.delivered for res in results)
    assert all(res.hops_taken <= 2 for res in results)


# 27 x 27 lattice on 9 x 9 cells of 9 nodes, the central node of each cell
# sits at the cell center
LAYOUT729 = assign_cells(place_nodes(729, "regular", 0), 9)


def center_node(cell):
    row, col = cell
    return (3 * row + 1) * 27 + 3 * col + 1


def interference_network(fading):
    ref = (4, 4)
    corner = 3 * 4 * 27 + 3 * 4

    def single_hop(src, dst, cell):
        pair = SdPair(source=src, destination=dst, src_cell=cell,
                      dst_cell=cell)
        return SdRoute(pair=pair, cell_path=(cell,),
                       hops=(CellHop(cell, cell, 0, HopMode.DIRECT),),
                       relays=(dst,))

    routes = [single_hop(corner, center_node(ref), ref)]
    for row in (1, 4, 7):
        for col in (1, 4, 7):
            if (row, col) != ref:
                routes.append(single_hop(center_node((row, col)),
                                         center_node((row, col)) + 1,
                                         (row, col)))
    ctx = context(layout=LAYOUT729, power=1., fading=fading)
    return NetworkState(engine=Engine.BASELINE, routes=tuple(routes),
                        schedule=TdmaSchedule(3, 9), ctx=ctx)


def test_measured_interference_matches_cell_center_sum():
    expected = expected_interference_exact((4, 4), 9, 3, 1., 1., 4.)
    state = interference_network("none")
    res = deliver_packet(state.routes[0], "baseline", state.schedule, state,
                         np.random.default_rng(0), route_index=0)
    assert res.per_hop[0].measured_interference == pytest.approx(expected,
                                                                 rel=1e-9)

    state = interference_network("rayleigh")
    rng = np.random.default_rng(4)
    vals = [deliver_packet(state.routes[0], "baseline", state.schedule, state,
                           rng, route_index=0).per_hop[0].measured_interference
            for _ in range(2000)]
    assert np.mean(vals) == pytest.approx(expected, rel=0.1)


def test_opportunistic_delivery_grows_with_power():
    powers = [1e-3, 1e-2, 3e-2, 1e-1]
    rates = []
    for power in powers:
        route, state = opportunistic_network(power, fading="rayleigh")
        delivered = [deliver_packet(route, "opportunistic", state.schedule,
                                    state, np.random.default_rng(seed)).delivered
                     for seed in range(300)]
        rates.append(np.mean(delivered))

    for low, high in zip(rates[:-1], rates[1:]):
        assert high >= low - 0.02
    assert rates[0] < rates[-1]
