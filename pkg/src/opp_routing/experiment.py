"""Monte Carlo drivers: trials, power calibration, pair search, sweeps
and the concentration checks.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
import logging
from multiprocessing import Pool

import numpy as np
from scipy import stats

from .channel import (ChannelParams, Fading, analytic_outage_cdf, distances,
                      draw_block_fading, path_gain, sinr_at)
from .config import ENGINES, substream
from .errors import CalibrationError, ConfigError, FitError
from .routing import (Engine, HopContext, NetworkState, deliver_all,
                      mode1_hop)
from .tdma import (TdmaSchedule, expected_interference_exact, is_interior,
                   layer_table, layered_bounds)
from .topology import (NetworkLayout, Placement, assign_cells, baseline_route,
                       build_route, cell_coordinates, cells_per_side_for,
                       draw_sd_pairs, endpoint_mask, paths_per_cell,
                       place_nodes)

logger = logging.getLogger(__name__)


def grid_size(cfg, engine, target_delay):
    """Cells per side used by an engine for a delay target.

    Args:
        cfg (RunConfig): run configuration
        engine (Engine|str): routing engine
        target_delay (int): D

    Returns:
        (int)
    """
    if Engine(engine) is Engine.BASELINE:
        return cells_per_side_for(target_delay, cfg.baseline_grid_factor,
                                  cfg.baseline_tdma_k)

    return cells_per_side_for(target_delay, cfg.grid_factor, cfg.tdma_k)


def tdma_period(cfg, engine):
    if Engine(engine) is Engine.BASELINE:
        return cfg.baseline_tdma_k

    return cfg.tdma_k


def channel_params(cfg, engine):
    """Channel of an engine, the baseline never sees fading.
    """
    fading = Fading.NONE if Engine(engine) is Engine.BASELINE else cfg.fading
    return ChannelParams(alpha=cfg.alpha, noise_power=cfg.N0, fading=fading,
                         eta=cfg.eta)


def max_pairs(cfg, n=None):
    """Largest M the pair drawing can honor.
    """
    n = cfg.n if n is None else n
    if cfg.horizontal and cfg.placement == "regular":
        side = int(round(np.sqrt(n)))
        return side * (side // 2)

    return n // 2


@lru_cache(maxsize=8)
def _cached_layout(n, placement, cells_per_side, seed, trial):
    layout = place_nodes(n, placement, substream(seed, "topology", trial))
    return assign_cells(layout, cells_per_side)


def trial_layout(cfg, engine, target_delay, trial):
    """Placed and gridded nodes of one trial.

    The regular lattice does not depend on the trial and is shared.
    """
    if Placement(cfg.placement) is Placement.REGULAR_GRID:
        trial = 0
    return _cached_layout(cfg.n, cfg.placement,
                          grid_size(cfg, engine, target_delay), cfg.seed,
                          trial)


def build_network(cfg, engine, target_delay, M, per_hop_power, trial):
    """Network state of one trial: layout, pairs, routes and schedule.

    Pairs depend on the trial only, so both engines route the same S-D
    pairs on the same nodes.

    Args:
        cfg (RunConfig): run configuration
        engine (Engine|str): routing engine
        target_delay (int): D
        M (int): number of S-D pairs
        per_hop_power (float): transmit power of every node
        trial (int): trial index

    Returns:
        (NetworkState)
    """
    engine = Engine(engine)
    layout = trial_layout(cfg, engine, target_delay, trial)
    pairs = draw_sd_pairs(layout, M, substream(cfg.seed, "pairs", trial),
                          horizontal=cfg.horizontal)
    relay_mask = endpoint_mask(layout.n, pairs) if cfg.exclude_endpoints else None
    if engine is Engine.BASELINE:
        routes = [baseline_route(pair, layout, relay_mask) for pair in pairs]
    else:
        routes = [build_route(pair) for pair in pairs]

    schedule = TdmaSchedule(tdma_period(cfg, engine), layout.cells_per_side)
    ctx = HopContext(layout=layout,
                     params=channel_params(cfg, engine),
                     per_hop_power=per_hop_power,
                     relay_mask=relay_mask,
                     tie_break=cfg.tie_break)
    return NetworkState(engine=engine, routes=tuple(routes), schedule=schedule,
                        ctx=ctx)


@dataclass(frozen=True)
class TrialResult:
    """One packet per pair through one network realization.
    """
    trial: int
    engine: str
    M: int
    D_target: int
    per_hop_power: float
    packets: tuple

    @property
    def delivered(self):
        return sum(1 for pkt in self.packets if pkt.delivered)

    @property
    def delivered_hops(self):
        return [pkt.hops_taken for pkt in self.packets if pkt.delivered]

    def hop_outcomes(self):
        return [hop for pkt in self.packets for hop in pkt.per_hop]


def run_trial(cfg, engine, target_delay, M, per_hop_power, trial):
    """Deliver one packet for every pair of a fresh network.

    Returns:
        (TrialResult)
    """
    state = build_network(cfg, engine, target_delay, M, per_hop_power, trial)
    packets = deliver_all(state,
                          substream(cfg.seed, "fading", trial),
                          substream(cfg.seed, "selection", trial))
    return TrialResult(trial=trial, engine=Engine(engine).value, M=M,
                       D_target=target_delay, per_hop_power=per_hop_power,
                       packets=tuple(packets))


def _trial_job(args):
    return run_trial(*args)


def run_trials(cfg, engine, target_delay, M, per_hop_power, trials,
               jobs=None):
    """Independent trials, fanned out to worker processes when jobs > 1.

    Args:
        cfg (RunConfig): run configuration
        engine (Engine|str): routing engine
        target_delay (int): D
        M (int): number of S-D pairs
        per_hop_power (float): transmit power of every node
        trials (int|iterable of int): number of trials or trial indices
        jobs (int): worker count, default cfg.jobs

    Returns:
        (list of TrialResult): in trial order
    """
    if isinstance(trials, int):
        trials = range(trials)
    jobs = cfg.jobs if jobs is None else jobs
    args = [(cfg, Engine(engine), target_delay, M, per_hop_power, trial)
            for trial in trials]
    if jobs > 1 and len(args) > 1:
        with Pool(min(jobs, len(args))) as pool:
            return pool.map(_trial_job, args)

    return [_trial_job(arg) for arg in args]


def _nanmean(vals):
    vals = np.asarray(vals, dtype=float)
    vals = vals[~np.isnan(vals)]
    if len(vals) == 0:
        return float("nan")
    return float(vals.mean())


@dataclass(frozen=True)
class TrialSummary:
    """Aggregated statistics of a batch of trials at fixed (M, power).
    """
    M: int
    per_hop_power: float
    delivery_rate: float
    D_measured: float
    mean_Pr: float
    mean_PI: float
    throughputs: tuple

    @property
    def outage_rate(self):
        return 1. - self.delivery_rate


def summarize(results):
    """Aggregate trial results, order independent.

    Delay averages over delivered packets only.

    Args:
        results (list of TrialResult): trials at one (M, power)

    Returns:
        (TrialSummary)
    """
    if len(results) == 0:
        raise ValueError("no trial to summarize")

    packets = sum(len(res.packets) for res in results)
    delivered = sum(res.delivered for res in results)
    hops = [nb for res in results for nb in res.delivered_hops]
    outcomes = [hop for res in results for hop in res.hop_outcomes()]
    return TrialSummary(
        M=results[0].M,
        per_hop_power=results[0].per_hop_power,
        delivery_rate=delivered / float(packets) if packets > 0 else 0.,
        D_measured=float(np.mean(hops)) if hops else float("nan"),
        mean_Pr=_nanmean([hop.mean_signal for hop in outcomes]),
        mean_PI=_nanmean([hop.mean_interference for hop in outcomes]),
        throughputs=tuple(res.delivered for res in results))


class Sampler(object):
    """Cached trial batches for one (engine, D) operating line.

    Trials share their indices across batches so that every batch sees
    the same topologies, pairs and fading streams.
    """

    def __init__(self, cfg, engine, target_delay, trials, jobs=None):
        self.cfg = cfg
        self.engine = Engine(engine)
        self.target_delay = target_delay
        self.trials = trials
        self.jobs = jobs
        self._cache = {}

    def __call__(self, M, per_hop_power):
        key = (M, float(per_hop_power))
        if key not in self._cache:
            res = run_trials(self.cfg, self.engine, self.target_delay, M,
                             per_hop_power, self.trials, self.jobs)
            self._cache[key] = summarize(res)
            logger.debug("batch %s D=%s M=%d p=%.4g -> %s", self.engine.value,
                         self.target_delay, M, per_hop_power, self._cache[key])

        return self._cache[key]


def calibrate_power(measure, target=1., tolerance=0.05, max_iters=40,
                    start=1.):
    """Per-hop power whose measured response lies within target (1 +- tol).

    Bisection in the log domain. The bracket is first widened by factors
    of 4 around start until it contains the target; the response must
    increase with power.

    Raises: CalibrationError with the history after max_iters evaluations

    Args:
        measure (callable): per_hop_power -> measured value (mean P_r)
        target (float): value to reach
        tolerance (float): relative tolerance
        max_iters (int): evaluation budget
        start (float): first power tried

    Returns:
        (float): per_hop_power
    """
    if not tolerance > 0:
        raise ConfigError("calibration tolerance must be > 0")
    if not start > 0:
        raise ConfigError("calibration start power must be > 0")

    history = []

    def evaluate(power):
        val = measure(power)
        history.append((power, val))
        logger.debug("calibration p=%.6g -> %.6g", power, val)
        if not np.isfinite(val):
            raise CalibrationError("measure returned %s at power %g"
                                   % (val, power), history)
        return val

    def close(val):
        return abs(val / target - 1.) <= tolerance

    low = high = None
    log_p = np.log(start)
    while len(history) < max_iters:
        val = evaluate(np.exp(log_p))
        if close(val):
            return float(np.exp(log_p))
        if val < target:
            low = log_p
            if high is not None:
                break
            log_p += np.log(4.)
        else:
            high = log_p
            if low is not None:
                break
            log_p -= np.log(4.)

    while len(history) < max_iters and low is not None and high is not None:
        mid = 0.5 * (low + high)
        val = evaluate(np.exp(mid))
        if close(val):
            logger.info("calibrated power %.6g after %d evaluations", np.exp(mid),
                        len(history))
            return float(np.exp(mid))
        if val < target:
            low = mid
        else:
            high = mid

    raise CalibrationError("no power within %.3g of target %.3g after %d evaluations"
                           % (tolerance, target, len(history)), history)


def calibrate_received_power(cfg, sampler, M):
    """Power giving mean P_r = cfg.target_Pr at a pair count.
    """
    if cfg.per_hop_power is not None:
        return cfg.per_hop_power

    return calibrate_power(lambda power: sampler(M, power).mean_Pr,
                           target=cfg.target_Pr,
                           tolerance=cfg.calibration_tolerance,
                           max_iters=cfg.max_iters)


def choose_pairs_by_interference(cfg, sampler, M_max=None):
    """Pair count keeping mean P_I at target_PI, power recalibrated each step.

    Fixed point M <- round(M target_PI / P_I(M)), starting at cfg.M. The
    largest visited M with P_I <= target_PI (1 + 2 tol) wins.

    Returns:
        (int, float, dict): M, per_hop_power and the visited M -> P_I
    """
    M_max = max_pairs(cfg) if M_max is None else M_max
    visited = {}
    powers = {}
    cur = min(max(1, cfg.M), M_max)
    for _ in range(cfg.max_iters):
        if cur in visited:
            break
        powers[cur] = calibrate_received_power(cfg, sampler, cur)
        mean_pi = sampler(cur, powers[cur]).mean_PI
        visited[cur] = mean_pi
        logger.info("M=%d P_I=%.4g", cur, mean_pi)
        if not mean_pi > 0:
            nxt = 2 * cur
        else:
            nxt = int(round(cur * cfg.target_PI / mean_pi))
        cur = min(max(1, nxt), M_max)

    ok = [M for M, val in visited.items()
          if val <= cfg.target_PI * (1 + 2 * cfg.calibration_tolerance)]
    if ok:
        best = max(ok)
    else:
        best = min(visited, key=lambda M: visited[M])
    return best, powers[best], visited


def find_max_pairs(cfg, sampler, epsilon0=None, M_max=None):
    """Largest M whose delivery rate stays above 1 - epsilon0.

    Binary search, power recalibrated at every step. Returns 0 when even
    a single pair fails.

    Args:
        cfg (RunConfig): run configuration
        sampler (callable): (M, power) -> TrialSummary
        epsilon0 (float): outage budget, default cfg.epsilon0
        M_max (int): search ceiling, default max_pairs(cfg)

    Returns:
        (int, float, dict): M*, its per_hop_power and M -> feasibility
    """
    epsilon0 = cfg.epsilon0 if epsilon0 is None else epsilon0
    M_max = max_pairs(cfg) if M_max is None else M_max
    feasible = {}
    powers = {}

    def check(M):
        powers[M] = calibrate_received_power(cfg, sampler, M)
        feasible[M] = sampler(M, powers[M]).delivery_rate >= 1. - epsilon0
        logger.info("M=%d feasible=%s", M, feasible[M])
        return feasible[M]

    if not check(1):
        logger.warning("even one pair exceeds the outage budget %g", epsilon0)
        return 0, powers[1], feasible

    low, high = 1, M_max + 1
    while high - low > 1:
        mid = (low + high) // 2
        if check(mid):
            low = mid
        else:
            high = mid

    for M, flag in feasible.items():
        if flag != (M <= low):
            logger.warning("delivery not monotone in M around M=%d", M)

    return low, powers[low], feasible


@dataclass(frozen=True)
class OperatingPoint:
    n: int
    M: int
    D_target: int
    per_hop_power: float
    D_measured: float
    mean_PI: float
    mean_Pr: float
    outage_rate: float
    throughput: float

    @property
    def P_total(self):
        return self.per_hop_power * self.D_measured


@dataclass(frozen=True)
class TradeoffRecord:
    """One (engine, D) row of a sweep, error set when the point failed.
    """
    engine: str
    D_target: int
    n: int
    alpha: float
    point: OperatingPoint = None
    ci_low: float = float("nan")
    ci_high: float = float("nan")
    accepted: bool = False
    error: str = ""

    @property
    def M_star(self):
        return None if self.point is None else self.point.M


def bootstrap_ci(values, resamples=1000, confidence=0.95, rng=None):
    """Percentile bootstrap interval of a mean.

    Args:
        values (list of float): per-trial statistic
        resamples (int): bootstrap resamples
        confidence (float): confidence level
        rng (np.random.Generator): resampling stream

    Returns:
        (float, float)
    """
    values = np.asarray(values, dtype=float)
    if len(values) < 2 or np.all(values == values[0]):
        mean = float(values.mean()) if len(values) > 0 else float("nan")
        return mean, mean

    res = stats.bootstrap((values,), np.mean, n_resamples=resamples,
                          confidence_level=confidence, method='percentile',
                          random_state=rng)
    return float(res.confidence_interval.low), float(res.confidence_interval.high)


def measure_point(cfg, engine, target_delay, M, per_hop_power, jobs=None):
    """Operating point and bootstrap interval on throughput.

    Returns:
        (OperatingPoint, float, float)
    """
    res = run_trials(cfg, engine, target_delay, M, per_hop_power, cfg.trials,
                     jobs)
    summ = summarize(res)
    point = OperatingPoint(n=cfg.n, M=M, D_target=target_delay,
                           per_hop_power=per_hop_power,
                           D_measured=summ.D_measured,
                           mean_PI=summ.mean_PI, mean_Pr=summ.mean_Pr,
                           outage_rate=summ.outage_rate,
                           throughput=float(np.mean(summ.throughputs)))
    low, high = bootstrap_ci(summ.throughputs, cfg.bootstrap_resamples,
                             cfg.confidence,
                             substream(cfg.seed, "verify", target_delay))
    return point, low, high


def operating_point(cfg, engine, target_delay, jobs=None):
    """Calibrate power, choose M and measure one sweep point.

    Returns:
        (TradeoffRecord)
    """
    engine = Engine(engine)
    sampler = Sampler(cfg, engine, target_delay, cfg.calibration_trials, jobs)
    if cfg.pair_rule == "outage":
        M, power, _ = find_max_pairs(cfg, sampler)
        if M == 0:
            raise CalibrationError("no pair count meets the outage budget %g"
                                   % cfg.epsilon0)
    else:
        M, power, _ = choose_pairs_by_interference(cfg, sampler)

    point, low, high = measure_point(cfg, engine, target_delay, M, power, jobs)
    return TradeoffRecord(engine=engine.value, D_target=target_delay, n=cfg.n,
                          alpha=cfg.alpha, point=point, ci_low=low,
                          ci_high=high,
                          accepted=point.outage_rate <= cfg.epsilon0)


def run_tradeoff_sweep(cfg, engines=None, D_list=None, jobs=None):
    """Operating point of every (engine, D), failures kept as error rows.

    Args:
        cfg (RunConfig): run configuration
        engines (iterable of str): default cfg.engines
        D_list (iterable of int): default cfg.D_list
        jobs (int): worker count, default cfg.jobs

    Returns:
        (list of TradeoffRecord): engine major, sorted by M* within engine
    """
    engines = cfg.engines if engines is None else tuple(engines)
    D_list = cfg.D_list if D_list is None else tuple(D_list)
    records = []
    for engine in engines:
        rows = []
        for target_delay in D_list:
            logger.info("sweep point %s D=%d", engine, target_delay)
            try:
                rows.append(operating_point(cfg, engine, target_delay, jobs))
            except UserWarning as err:
                logger.warning("sweep point %s D=%d failed: %s", engine,
                               target_delay, err)
                rows.append(TradeoffRecord(engine=Engine(engine).value,
                                           D_target=target_delay, n=cfg.n,
                                           alpha=cfg.alpha, error=str(err)))
        rows.sort(key=lambda rec: (rec.point is None,
                                   0 if rec.point is None else rec.point.M,
                                   rec.D_target))
        records.extend(rows)

    return records


def _strictly(vals, decreasing=False):
    vals = list(vals)
    if decreasing:
        return all(a > b for a, b in zip(vals, vals[1:]))
    return all(a < b for a, b in zip(vals, vals[1:]))


def trend_verdicts(records, alpha, band=3.):
    """Monotonicity and normalization checks of a sweep, per engine.

    Returns:
        (dict): engine -> dict(M_increasing_in_D, P_decreasing_in_M,
                normalization_ratio, normalization_ok)
    """
    verdicts = {}
    for engine in ENGINES:
        pts = [rec.point for rec in records
               if rec.engine == engine and rec.point is not None]
        if len(pts) == 0:
            continue
        by_d = sorted(pts, key=lambda pt: pt.D_target)
        by_m = sorted(pts, key=lambda pt: pt.M)
        norm = [pt.P_total * pt.M * pt.D_measured ** (alpha - 2)
                for pt in pts if np.isfinite(pt.D_measured)]
        ratio = max(norm) / min(norm) if norm and min(norm) > 0 else float("nan")
        verdicts[engine] = dict(
            M_increasing_in_D=_strictly(pt.M for pt in by_d),
            P_decreasing_in_M=_strictly((pt.P_total for pt in by_m), True),
            normalization_ratio=ratio,
            normalization_ok=bool(ratio < band))
        if not verdicts[engine]["M_increasing_in_D"]:
            logger.warning("%s: M* not increasing with D", engine)

    return verdicts


def power_dominance(records, rel_tol=0.1):
    """Pairs (D_opp, P_opp, P_base) where delays match within rel_tol.
    """
    opp = [rec.point for rec in records
           if rec.engine == "opportunistic" and rec.point is not None]
    base = [rec.point for rec in records
            if rec.engine == "baseline" and rec.point is not None]
    matched = []
    for pt_o in opp:
        for pt_b in base:
            if abs(pt_o.D_measured / pt_b.D_measured - 1.) <= rel_tol:
                matched.append((pt_o.D_measured, pt_o.P_total, pt_b.P_total))

    return matched


LEMMA_THRESHOLDS = {1: 0.95, 2: 0.95, 3: 0.99}
CELL_OCCUPANCY = 64
PATH_PAIRS = 64
PATH_DELAY = 8


@dataclass(frozen=True)
class ConcentrationReport:
    lemma: int
    pass_fraction: float
    empirical_mean: float
    bound: float
    samples: int
    delta: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.pass_fraction >= self.bound


def _lemma1(cfg, seeds, delta, n):
    g = max(1, int(np.sqrt(n / float(CELL_OCCUPANCY))))
    mean = n / float(g * g)
    ok = 0
    spread = []
    for seed in range(seeds):
        layout = place_nodes(n, "random", substream(cfg.seed, "verify", 1, seed))
        counts = np.bincount(layout_cells(layout, g), minlength=g * g)
        spread.append((counts.min(), counts.max()))
        ok += int(np.all((counts > (1 - delta) * mean)
                         & (counts < (1 + delta) * mean)))

    return ConcentrationReport(lemma=1, pass_fraction=ok / float(seeds),
                               empirical_mean=mean, bound=LEMMA_THRESHOLDS[1],
                               samples=seeds, delta=delta,
                               details=dict(n=n, cells_per_side=g,
                                            min_count=int(min(s[0] for s in spread)),
                                            max_count=int(max(s[1] for s in spread))))


def layout_cells(layout, cells_per_side):
    """Flat cell index row * g + col of every node.
    """
    cell_of = cell_coordinates(layout.positions, cells_per_side)
    return cell_of[:, 0] * cells_per_side + cell_of[:, 1]


def _lemma2(cfg, seeds, delta, n, M, target_delay, placement):
    horizontal = placement == "regular"
    g = cells_per_side_for(target_delay, cfg.grid_factor, cfg.tdma_k)
    maxima = []
    for seed in range(seeds):
        layout = assign_cells(place_nodes(n, placement,
                                          substream(cfg.seed, "verify", 2, seed)),
                              g)
        pairs = draw_sd_pairs(layout, M, substream(cfg.seed, "verify", 3, seed),
                              horizontal=horizontal)
        counts = paths_per_cell([build_route(pair) for pair in pairs])
        maxima.append(max(counts.values()))

    maxima = np.array(maxima, dtype=float)
    mean = float(maxima.mean())
    ok = (maxima > (1 - delta) * mean) & (maxima < (1 + delta) * mean)
    if np.all(maxima == maxima[0]):
        ok[:] = True
    return ConcentrationReport(lemma=2, pass_fraction=float(ok.mean()),
                               empirical_mean=mean, bound=LEMMA_THRESHOLDS[2],
                               samples=seeds, delta=delta,
                               details=dict(n=n, M=M, D=target_delay,
                                            cells_per_side=g,
                                            placement=placement))


def _lemma3(cfg, blocks, delta, M, target_delay):
    state = build_network(cfg, Engine.OPPORTUNISTIC, target_delay, M, 1., 0)
    layout = state.ctx.layout
    rng_sel = substream(cfg.seed, "verify", 4)
    mask = state.ctx.relay_mask

    def eligible(nid):
        return mask is None or mask[nid]

    offset = max(state.active_hops, key=lambda off: len(state.active_hops[off]))

    holders, seen = {}, set()
    for rind, hind in state.active_hops[offset]:
        route = state.routes[rind]
        key = (rind, route.hops[hind].from_cell)
        if key in seen:
            continue
        seen.add(key)
        if hind == 0:
            holders[(rind, hind)] = route.pair.source
        else:
            pool = [nid for nid in layout.nodes_in(route.hops[hind].from_cell)
                    if eligible(nid)]
            if pool:
                holders[(rind, hind)] = pool[int(rng_sel.integers(len(pool)))]
    transmitters = sorted(set(holders.values()))
    busy = set(transmitters)

    receivers, desired = [], []
    for (rind, hind), tx in holders.items():
        cell = state.routes[rind].hops[hind].to_cell
        for nid in layout.nodes_in(cell):
            if nid not in busy and eligible(nid):
                receivers.append(nid)
                desired.append(transmitters.index(tx))
    if len(receivers) == 0 or len(transmitters) < 2:
        raise ConfigError("no interference to sample, increase M")

    gain = path_gain(distances(layout.positions, receivers, transmitters),
                     cfg.alpha)
    rng = substream(cfg.seed, "verify", 5)
    if Fading(cfg.fading) is Fading.NONE:
        fading = np.ones((blocks,) + gain.shape)
    else:
        fading = rng.exponential(1., size=(blocks,) + gain.shape)
    powers = fading * gain
    rows = np.arange(len(receivers))
    interference = powers.sum(axis=2) - powers[:, rows, desired]

    mean = interference.mean(axis=0)
    ok = interference <= (1 + delta) * mean
    return ConcentrationReport(lemma=3, pass_fraction=float(ok.mean()),
                               empirical_mean=float(mean.mean()),
                               bound=LEMMA_THRESHOLDS[3],
                               samples=int(ok.size), delta=delta,
                               details=dict(n=cfg.n, M=M, D=target_delay,
                                            receivers=len(receivers),
                                            transmitters=len(transmitters)))


def verify_concentration(which, cfg, seeds=None, delta=None, **kwds):
    """Fraction of instances within (1 +- delta) of their empirical mean.

    Lemma 1 counts nodes per cell, every cell of a seed must pass. Lemma 2
    takes the busiest cell's path count per seed. Lemma 3 samples the
    interference at every receiver of a fixed transmitter set over fresh
    fading blocks, upper side only.

    Args:
        which (int): 1, 2 or 3
        cfg (RunConfig): run configuration
        seeds (int): seeds (lemmas 1, 2) or blocks (lemma 3)
        delta (float): relative deviation
        kwds: n, M, target_delay, placement overrides

    Returns:
        (ConcentrationReport)
    """
    delta = cfg.verify_delta if delta is None else delta
    if which in (1, 2) and not 0 < delta <= 1:
        raise ConfigError("verify_delta must lie in (0, 1] for lemmas 1 and 2")
    if not delta > 0:
        raise ConfigError("verify_delta must be > 0")

    if which == 1:
        seeds = cfg.verify_seeds if seeds is None else seeds
        return _lemma1(cfg, seeds, delta, kwds.get('n', cfg.verify_n))
    if which == 2:
        seeds = cfg.verify_seeds if seeds is None else seeds
        return _lemma2(cfg, seeds, delta, kwds.get('n', cfg.verify_n),
                       kwds.get('M', PATH_PAIRS),
                       kwds.get('target_delay', PATH_DELAY),
                       kwds.get('placement', "random"))
    if which == 3:
        blocks = cfg.verify_blocks if seeds is None else seeds
        target_delay = kwds.get('target_delay', min(cfg.D_list))
        default_m = int(np.ceil(target_delay * np.log2(cfg.n)))
        M = kwds.get('M', min(max(cfg.M, default_m), max_pairs(cfg)))
        return _lemma3(cfg, blocks, delta, M, target_delay)

    raise ConfigError("unknown lemma %s, expected 1, 2 or 3" % which)


def single_link_params(cfg):
    """Rayleigh channel of the single link studies.
    """
    if not cfg.N0 > 0:
        raise ConfigError("N0: single link studies need a positive noise power")
    return ChannelParams(alpha=cfg.alpha, noise_power=cfg.N0,
                         fading=Fading.RAYLEIGH, eta=cfg.eta)


def fan_layout(m, cells_per_side, distance):
    """One transmitter in cell (1, 0) and m receivers on an arc of radius
    distance, all inside one cell ((1, 2) for the default 2.5 cells).

    Returns:
        (NetworkLayout, (int, int)): layout and the receivers' cell
    """
    side = 1. / cells_per_side
    tx = np.array([0.25 * side, 1.5 * side])
    theta = np.linspace(-0.15, 0.15, m)
    rx = tx + distance * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    layout = NetworkLayout(n=m + 1, placement=Placement.RANDOM_UNIFORM,
                           positions=np.vstack([tx, rx]))
    layout = assign_cells(layout, cells_per_side, check_occupancy=False)
    target = tuple(int(v) for v in layout.cell_of[1])
    if len(layout.nodes_in(target)) != m:
        raise ConfigError("receivers at distance %g do not share a cell"
                          % distance)

    return layout, target


@dataclass(frozen=True)
class MudGainReport:
    occupancies: tuple
    required_power: tuple
    slope: float
    intercept: float
    r_squared: float


def mud_gain_study(cfg, occupancies=(2, 4, 8, 16, 32), trials=2000,
                   target_success=0.95, distance=None):
    """Per-hop power needed for a hop success target against occupancy m.

    A Mode 1 hop towards an interference free cell of m nodes, all at the
    same distance from the transmitter. The hop success rate over a fixed
    set of fading blocks is driven to target_success by power calibration,
    then ln(power) is regressed on ln(m).

    Args:
        cfg (RunConfig): run configuration
        occupancies (tuple of int): cell occupancies m, at least 3
        trials (int): fading blocks per occupancy
        target_success (float): hop success rate to reach
        distance (float): hop length, 2.5 cells by default

    Returns:
        (MudGainReport)
    """
    if len(occupancies) < 3:
        raise FitError("need at least 3 occupancies")
    params = single_link_params(cfg)
    g = grid_size(cfg, Engine.OPPORTUNISTIC, min(cfg.D_list))
    if distance is None:
        distance = 2.5 / g

    required = []
    for m in occupancies:
        layout, target = fan_layout(m, g, distance)
        rng = substream(cfg.seed, "verify", 6, m)
        samples = [draw_block_fading(None, params.fading, rng, block_id=ind)
                   for ind in range(trials)]
        rng_sel = substream(cfg.seed, "verify", 8, m)

        def success(power):
            ctx = HopContext(layout, params, power)
            hops = [mode1_hop(0, target, [], sample, ctx, rng_sel)
                    for sample in samples]
            return float(np.mean([not hop.outage for hop in hops]))

        start = cfg.eta * cfg.N0 * distance ** cfg.alpha
        power = calibrate_power(success, target=target_success,
                                tolerance=0.005, max_iters=60, start=start)
        logger.info("mud gain m=%d: power %.4g", m, power)
        required.append(power)

    fit = stats.linregress(np.log(occupancies), np.log(required))
    return MudGainReport(occupancies=tuple(occupancies),
                         required_power=tuple(required),
                         slope=float(fit.slope),
                         intercept=float(fit.intercept),
                         r_squared=float(fit.rvalue ** 2))


@dataclass(frozen=True)
class OutageCdfReport:
    D: int
    c4: float
    ks_statistic: float
    p_value: float
    blocks: int
    curve: tuple

    def passed(self, max_distance=0.02):
        return self.ks_statistic < max_distance


def outage_cdf_check(cfg, target_delay=None, blocks=100000, levels=9):
    """Critical per-pair power of an isolated link against the outage cdf.

    The link spans 2.5 cells, the most frequent hop length. Every fading
    block gives the unit power SINR of the link, hence the smallest
    per-pair power P = p D decoding it. c4 is fitted by maximum likelihood
    and the KS distance is measured on the implied fading samples.

    Returns:
        (OutageCdfReport): curve holds (P, empirical, analytic) rows
    """
    target_delay = min(cfg.D_list) if target_delay is None else target_delay
    params = single_link_params(cfg)
    distance = 2.5 / grid_size(cfg, Engine.OPPORTUNISTIC, target_delay)
    positions = np.array([[0., 0.], [distance, 0.]])

    rng = substream(cfg.seed, "verify", 7, target_delay)
    unit_sinr = np.array([
        sinr_at(1, 0, [], 1., draw_block_fading(None, params.fading, rng,
                                                block_id=ind),
                params, positions)
        for ind in range(blocks)])
    critical = target_delay * cfg.eta / unit_sinr

    scale = 1. / (critical * target_delay ** (cfg.alpha - 1))
    c4 = 1. / float(scale.mean())
    implied = c4 * scale
    ks = stats.kstest(implied, 'expon')

    calibrated = target_delay * distance ** cfg.alpha * cfg.target_Pr
    curve = []
    for factor in np.geomspace(0.25, 4., levels):
        power = calibrated * factor
        curve.append((float(power), float(np.mean(critical > power)),
                      analytic_outage_cdf(power, target_delay, cfg.alpha, c4)))

    return OutageCdfReport(D=target_delay, c4=c4,
                           ks_statistic=float(ks.statistic),
                           p_value=float(ks.pvalue), blocks=blocks,
                           curve=tuple(curve))


@dataclass(frozen=True)
class BracketRow:
    cell: tuple
    alpha: float
    low: float
    exact: float
    high: float

    @property
    def ok(self):
        return self.low <= self.exact <= self.high


def layer_bracket_check(cells_per_side=35, k=5, alphas=(2.5, 4.)):
    """Layered lower and upper sums against the exact interference sum.

    One unit-power transmitter per co-active cell, every interior cell
    taken as reference.

    Returns:
        (list of BracketRow)
    """
    rows = []
    for alpha in alphas:
        low, high = layered_bounds(cells_per_side, k, 1., 1., alpha)
        for row in range(cells_per_side):
            for col in range(cells_per_side):
                if not is_interior((row, col), cells_per_side, k):
                    continue
                exact = expected_interference_exact((row, col), cells_per_side,
                                                    k, 1., 1., alpha)
                rows.append(BracketRow(cell=(row, col), alpha=alpha, low=low,
                                       exact=exact, high=high))

    return rows


def layer_summary(cells_per_side=35, k=5, alpha=4.):
    """Per layer interference around the centre cell, one unit-power
    transmitter per co-active cell.

    Returns:
        (list of tuple): (layer, cell_count, min_dist, max_dist, contribution)
    """
    centre = (cells_per_side // 2, cells_per_side // 2)
    return [(row["layer"], row["cell_count"], row["min_dist"],
             row["max_dist"], row["contribution"])
            for row in layer_table(centre, cells_per_side, k, 1., 1., alpha)]
