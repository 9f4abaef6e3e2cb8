from dataclasses import replace

import mock
import numpy as np
import pytest

from opp_routing import experiment
from opp_routing.config import load_config
from opp_routing.channel import ChannelSample
from opp_routing.errors import (CalibrationError, ConfigError, FitError,
                                GeometryError)
from opp_routing.experiment import (OperatingPoint, TrialSummary,
                                    TradeoffRecord, bootstrap_ci,
                                    build_network, calibrate_power,
                                    calibrate_received_power,
                                    choose_pairs_by_interference,
                                    find_max_pairs, grid_size,
                                    layer_bracket_check, layer_summary,
                                    max_pairs,
                                    mud_gain_study, outage_cdf_check,
                                    power_dominance, run_trials,
                                    run_tradeoff_sweep, summarize,
                                    trend_verdicts, verify_concentration)


def small_cfg(**kwds):
    values = dict(n=256, M=2, D_list=(2,), trials=4, calibration_trials=2,
                  per_hop_power=1e3, engine="opportunistic", max_iters=3,
                  bootstrap_resamples=50)
    values.update(kwds)
    return load_config(overrides=values)


def summary(M, delivery_rate=1., mean_PI=1., mean_Pr=1., power=1.):
    return TrialSummary(M=M, per_hop_power=power, delivery_rate=delivery_rate,
                        D_measured=2., mean_Pr=mean_Pr, mean_PI=mean_PI,
                        throughputs=())


def packets_trace(results):
    return [[(pkt.delivered, pkt.hops_taken,
              [hop.chosen_relay for hop in pkt.per_hop])
             for pkt in res.packets] for res in results]


def test_grid_sizes_per_engine():
    cfg = small_cfg()
    assert grid_size(cfg, "opportunistic", 2) == 8
    assert grid_size(cfg, "baseline", 2) == 3
    assert grid_size(cfg, "baseline", 8) == 12


def test_max_pairs():
    assert max_pairs(small_cfg()) == 128
    assert max_pairs(small_cfg(placement="random", horizontal=False)) == 128
    assert max_pairs(small_cfg(n=64)) == 32


def test_both_engines_route_the_same_pairs():
    cfg = small_cfg(M=6)
    opp = build_network(cfg, "opportunistic", 2, 6, 1., 3)
    base = build_network(cfg, "baseline", 2, 6, 1., 3)
    assert ([route.pair.source for route in opp.routes]
            == [route.pair.source for route in base.routes])
    assert opp.ctx.params.fading.value == "rayleigh"
    assert base.ctx.params.fading.value == "none"
    assert opp.schedule.k == 4
    assert base.schedule.k == 3


def test_trials_are_reproducible():
    cfg = small_cfg()
    first = run_trials(cfg, "opportunistic", 2, 2, 1e3, 4)
    again = run_trials(cfg, "opportunistic", 2, 2, 1e3, 4)
    assert [res.trial for res in first] == [0, 1, 2, 3]
    assert all(len(res.packets) == 2 for res in first)
    assert packets_trace(first) == packets_trace(again)


def test_worker_processes_do_not_change_results():
    cfg = small_cfg()
    serial = run_trials(cfg, "opportunistic", 2, 2, 1e3, 4, jobs=1)
    parallel = run_trials(cfg, "opportunistic", 2, 2, 1e3, 4, jobs=2)
    assert packets_trace(serial) == packets_trace(parallel)


def test_summarize():
    cfg = small_cfg()
    res = run_trials(cfg, "baseline", 2, 3, 1e3, 5)
    summ = summarize(res)
    assert summ.M == 3
    assert 0. <= summ.delivery_rate <= 1.
    assert summ.outage_rate == pytest.approx(1. - summ.delivery_rate)
    assert summ.throughputs == tuple(r.delivered for r in res)
    with pytest.raises(ValueError):
        summarize([])


def test_calibration_matches_closed_form():
    dist, alpha, noise = 0.3, 4., 1.
    power = calibrate_power(lambda p: p * dist ** -alpha / noise,
                            tolerance=1e-6, max_iters=80)
    assert power == pytest.approx(noise * dist ** alpha, rel=1e-5)


def test_doubling_distance_needs_sixteen_times_the_power():
    near = calibrate_power(lambda p: p * 0.1 ** -4, tolerance=1e-7,
                           max_iters=80)
    far = calibrate_power(lambda p: p * 0.2 ** -4, tolerance=1e-7,
                          max_iters=80)
    assert far / near == pytest.approx(16., rel=1e-5)


def test_calibration_failure_carries_history():
    with pytest.raises(CalibrationError) as info:
        calibrate_power(lambda p: 0.5, max_iters=7)
    assert len(info.value.history) == 7
    assert all(val == 0.5 for _, val in info.value.history)


def test_calibration_rejects_nan():
    with pytest.raises(CalibrationError):
        calibrate_power(lambda p: float("nan"))


def test_calibration_arguments():
    with pytest.raises(ConfigError):
        calibrate_power(lambda p: p, tolerance=0.)
    with pytest.raises(ConfigError):
        calibrate_power(lambda p: p, start=-1.)


def test_fixed_power_skips_calibration():
    sampler = mock.Mock()
    assert calibrate_received_power(small_cfg(per_hop_power=2.5), sampler,
                                    4) == 2.5
    sampler.assert_not_called()


def test_received_power_calibration():
    sampler = mock.Mock(side_effect=lambda M, p: summary(M, mean_Pr=4. * p))
    power = calibrate_received_power(small_cfg(per_hop_power=None,
                                               max_iters=40), sampler, 4)
    assert power * 4. == pytest.approx(1., rel=0.05)


def rate_sampler(M, power):
    return summary(M, delivery_rate=1. - 0.01 * M - 0.005, power=power)


@pytest.mark.parametrize("epsilon0, expected", [(0.05, 4), (0.02, 1),
                                                (0.001, 0)])
def test_find_max_pairs(epsilon0, expected):
    cfg = small_cfg(per_hop_power=1.)
    sampler = mock.Mock(side_effect=rate_sampler)
    M, power, feasible = find_max_pairs(cfg, sampler, epsilon0, M_max=20)
    assert M == expected
    assert power == 1.
    assert all(flag == (cur <= expected) for cur, flag in feasible.items())


def test_max_pairs_shrinks_with_the_outage_budget():
    cfg = small_cfg(per_hop_power=1.)
    found = [find_max_pairs(cfg, mock.Mock(side_effect=rate_sampler), eps,
                            M_max=50)[0]
             for eps in (0.3, 0.1, 0.05, 0.02)]
    assert found == sorted(found, reverse=True)


def test_pairs_chosen_by_interference():
    cfg = small_cfg(per_hop_power=1., M=8, max_iters=40)
    sampler = mock.Mock(side_effect=lambda M, p: summary(M, mean_PI=0.1 * M))
    M, power, visited = choose_pairs_by_interference(cfg, sampler)
    assert M == 10
    assert power == 1.
    assert set(visited) == {8, 10}


def test_bootstrap_interval():
    assert bootstrap_ci([3., 3., 3.]) == (3., 3.)
    assert bootstrap_ci([2.]) == (2., 2.)
    vals = np.random.default_rng(0).normal(5., 1., size=200)
    low, high = bootstrap_ci(vals, 200, 0.95, np.random.default_rng(1))
    assert low < vals.mean() < high
    assert high - low < 1.


def test_tradeoff_sweep_point():
    cfg = small_cfg()
    records = run_tradeoff_sweep(cfg)
    assert len(records) == 1
    rec = records[0]
    assert rec.engine == "opportunistic"
    assert rec.error == ""
    assert 1 <= rec.M_star <= max_pairs(cfg)
    assert 0. <= rec.point.outage_rate <= 1.
    assert rec.ci_low <= rec.ci_high


def test_tradeoff_sweep_keeps_failures():
    cfg = small_cfg(pair_rule="outage", per_hop_power=0.)
    records = run_tradeoff_sweep(cfg)
    assert len(records) == 1
    assert records[0].point is None
    assert records[0].M_star is None
    assert "outage budget" in records[0].error


def test_tradeoff_sweep_without_delays():
    assert run_tradeoff_sweep(small_cfg(), D_list=()) == []


def record(engine, D, M, power, delay):
    point = OperatingPoint(n=256, M=M, D_target=D, per_hop_power=power,
                           D_measured=delay, mean_PI=1., mean_Pr=1.,
                           outage_rate=0., throughput=M)
    return TradeoffRecord(engine=engine, D_target=D, n=256, alpha=4.,
                          point=point)


def test_trend_verdicts():
    records = [record("opportunistic", 2, 4, 1., 2.),
               record("opportunistic", 4, 8, 0.1, 4.),
               record("baseline", 2, 2, 1., 2.1)]
    verdicts = trend_verdicts(records, 4.)
    assert verdicts["opportunistic"]["M_increasing_in_D"]
    assert verdicts["opportunistic"]["P_decreasing_in_M"]
    assert set(verdicts) == {"opportunistic", "baseline"}


def test_power_dominance():
    records = [record("opportunistic", 2, 4, 1., 2.),
               record("baseline", 2, 2, 5., 2.1),
               record("baseline", 8, 8, 1., 8.)]
    assert power_dominance(records) == [pytest.approx((2., 2., 10.5))]


def test_nodes_per_cell_concentrate():
    cfg = small_cfg()
    rep = verify_concentration(1, cfg, seeds=20, delta=0.5, n=1024)
    assert rep.empirical_mean == 64.
    assert rep.details["cells_per_side"] == 4
    assert rep.passed


def test_tiny_deviation_band_fails():
    rep = verify_concentration(1, small_cfg(), seeds=5, delta=0.01, n=1024)
    assert rep.pass_fraction == 0.
    assert not rep.passed


def test_paths_per_cell_report():
    rep = verify_concentration(2, small_cfg(), seeds=10, n=1024, M=16,
                               target_delay=2)
    assert 0. <= rep.pass_fraction <= 1.
    assert rep.empirical_mean >= 1.
    assert rep.samples == 10


def test_interference_without_fading_never_exceeds_its_mean():
    cfg = small_cfg(fading="none")
    rep = verify_concentration(3, cfg, seeds=20, delta=1e-9, M=32,
                               target_delay=2)
    assert rep.pass_fraction == 1.
    assert rep.passed


def test_interference_report_under_fading():
    rep = verify_concentration(3, small_cfg(), seeds=50, M=32, target_delay=2)
    assert 0. <= rep.pass_fraction <= 1.
    assert rep.samples % 50 == 0


def test_concentration_arguments():
    with pytest.raises(ConfigError):
        verify_concentration(4, small_cfg())
    with pytest.raises(ConfigError):
        verify_concentration(1, small_cfg(), delta=1.5)


def test_mud_gain_lowers_required_power():
    rep = mud_gain_study(small_cfg(), trials=1000)
    assert rep.slope < 0
    assert rep.r_squared > 0.9
    assert list(rep.required_power) == sorted(rep.required_power, reverse=True)

    # best of m unit exponentials reaches t with probability 0.95
    noise_limited = (2.5 / 8) ** 4
    for m, power in zip(rep.occupancies[2:], rep.required_power[2:]):
        t = -np.log(1. - 0.05 ** (1. / m))
        assert power == pytest.approx(noise_limited / t, rel=0.15)


def test_mud_gain_runs_mode1_hops():
    with mock.patch("opp_routing.experiment.mode1_hop",
                    side_effect=RuntimeError("hop")):
        with pytest.raises(RuntimeError):
            mud_gain_study(small_cfg(), trials=10)


def test_mud_gain_arguments():
    with pytest.raises(FitError):
        mud_gain_study(small_cfg(), occupancies=(2, 4))
    with pytest.raises(ConfigError):
        mud_gain_study(replace(small_cfg(), N0=0.))


def test_outage_cdf_is_exponential():
    cfg = small_cfg()
    rep = outage_cdf_check(cfg, blocks=20000)
    assert rep.passed()
    distance = 2.5 / 8
    assert rep.c4 == pytest.approx(distance ** 4 * 2 ** 4, rel=0.05)
    assert len(rep.curve) == 9
    for _, empirical, analytic in rep.curve:
        assert empirical == pytest.approx(analytic, abs=0.03)


def test_outage_cdf_check_reads_the_channel():
    with mock.patch.object(ChannelSample, "_draw",
                           lambda self, count: np.full(count, 5.)):
        rep = outage_cdf_check(small_cfg(), blocks=200)
    assert not rep.passed()
    assert rep.c4 == pytest.approx((2.5 / 8) ** 4 * 2 ** 4 / 5.)


def test_layer_bracket_check():
    rows = layer_bracket_check()
    assert len(rows) == 2 * 25 * 25
    assert all(row.ok for row in rows)


def test_trial_layout_is_cached():
    cfg = small_cfg()
    first = experiment.trial_layout(cfg, "opportunistic", 2, 0)
    again = experiment.trial_layout(cfg, "opportunistic", 2, 5)
    assert first is again


def test_tradeoff_sweep_keeps_geometry_failures():
    with mock.patch("opp_routing.experiment.operating_point",
                    side_effect=GeometryError("zero distance")):
        records = run_tradeoff_sweep(small_cfg())
    assert len(records) == 1
    assert records[0].point is None
    assert "zero distance" in records[0].error


def test_endpoints_may_relay():
    cfg = small_cfg(exclude_endpoints=False)
    res = run_trials(cfg, "opportunistic", 2, 8, 1e3, 10)
    assert len(res) == 10
    assert all(0 <= trial.delivered <= 8 for trial in res)

    records = run_tradeoff_sweep(cfg)
    assert all("zero distance" not in rec.error for rec in records)


def test_opportunistic_delivery_dominates_baseline():
    # 16 nodes per opportunistic cell
    cfg = small_cfg(n=1024, M=1)
    opp = run_trials(cfg, "opportunistic", 2, 1, 1., 40)
    base = run_trials(cfg, "baseline", 2, 1, 1., 40)
    wins = [o.delivered >= b.delivered for o, b in zip(opp, base)]
    assert np.mean(wins) >= 0.95


def test_layer_summary_adds_up():
    rows = layer_summary(alpha=4.)
    assert rows[0][:2] == (1, 8)
    assert [row[0] for row in rows] == list(range(1, len(rows) + 1))
    total = sum(row[4] for row in rows)
    assert total == pytest.approx(
        experiment.expected_interference_exact((17, 17), 35, 5, 1., 1., 4.))


def test_layout_cells_follow_the_grid():
    layout = experiment.trial_layout(small_cfg(), "opportunistic", 2, 0)
    flat = experiment.layout_cells(layout, layout.cells_per_side)
    g = layout.cells_per_side
    assert flat.tolist() == [int(row) * g + int(col)
                             for row, col in layout.cell_of]
