"""Closed-form power, delay and throughput laws with fitted constants.

All logarithms are base 2. Every law is reduced to one leading constant
times a known shape, constants come from simulation records.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
import logging

import numpy as np
from scipy.optimize import brentq

from .channel import analytic_outage_cdf
from .errors import ConfigError, FitError

logger = logging.getLogger(__name__)


class Law(Enum):
    OPP_POWER = "opp_power"
    OPP_DELAY = "opp_delay"
    OPP_POWER_REFINED = "opp_power_refined"
    OPP_DELAY_REFINED = "opp_delay_refined"
    BASE_POWER = "base_power"
    BASE_DELAY = "base_delay"
    CUTSET = "cutset"
    OUTAGE_CDF = "outage_cdf"
    OPP_TRADEOFF = "opp_tradeoff"
    BASE_TRADEOFF = "base_tradeoff"


@dataclass(frozen=True, eq=False)
class ScalingCurve:
    """Analytic (x, y) series of one law.

    x is M for every law but OUTAGE_CDF (x is the per-pair power P) and
    the trade-off series (x is the delay D).
    """
    law: Law
    constants: dict
    x: np.ndarray
    y: np.ndarray
    in_regime: np.ndarray = field(default=None)

    def samples(self):
        flags = self.in_regime
        if flags is None:
            flags = np.ones(len(self.x), dtype=bool)
        return [(float(x), float(y), bool(flag))
                for x, y, flag in zip(self.x, self.y, flags)]


def _check_positive(**constants):
    for name, val in constants.items():
        if not val > 0:
            raise ConfigError("%s must be > 0, got %s" % (name, val))


def _check_alpha(alpha):
    if not alpha > 2:
        raise ConfigError("alpha must be > 2, got %s" % alpha)


def regime_bounds(n, epsilon=0.05):
    """Range [log n, n^(1/2 - epsilon)] of pair counts where the laws hold.
    """
    return float(np.log2(n)), float(n ** (0.5 - epsilon))


def in_regime(M, n, epsilon=0.05):
    low, high = regime_bounds(n, epsilon)
    M = np.asarray(M, dtype=float)
    return (M >= low) & (M <= high)


def opp_delay_curve(n, M, c=1., epsilon=0.05):
    """Opportunistic delay D = M / (c log n).

    Args:
        n (int): number of nodes
        M (array-like): pair counts
        c (float): leading constant
        epsilon (float): regime margin

    Returns:
        (ScalingCurve)
    """
    _check_positive(c=c)
    M = np.asarray(M, dtype=float)
    return ScalingCurve(law=Law.OPP_DELAY, constants=dict(c=c), x=M,
                        y=M / (c * np.log2(n)),
                        in_regime=in_regime(M, n, epsilon))


def opp_pairs_refined(n, D, c=1.):
    """Pair count c D log(sqrt(n) / (D log n)) reached at delay D.
    """
    return c * D * np.log2(np.sqrt(n) / (D * np.log2(n)))


def refined_delay(n, M, c=1.):
    """Delay solving M = c D log(sqrt(n) / (D log n)), nan if none.

    The right side increases up to D = sqrt(n) / (e log n), only that
    branch is searched.
    """
    peak = np.sqrt(n) / (np.e * np.log2(n))
    if not 0 < M <= opp_pairs_refined(n, peak, c):
        return float("nan")

    return float(brentq(lambda dval: opp_pairs_refined(n, dval, c) - M,
                        1e-12 * peak, peak))


def opp_delay_refined_curve(n, M, c=1., epsilon=0.05):
    _check_positive(c=c)
    M = np.asarray(M, dtype=float)
    delay = np.array([refined_delay(n, mval, c) for mval in M])
    return ScalingCurve(law=Law.OPP_DELAY_REFINED, constants=dict(c=c), x=M,
                        y=delay, in_regime=in_regime(M, n, epsilon))


def opp_power_curve(n, M, alpha, c=1., epsilon=0.05):
    """Opportunistic per-pair power P = c (log n)^(alpha - 2) / M^(alpha - 1).

    Args:
        n (int): number of nodes
        M (array-like): pair counts
        alpha (float): path-loss exponent, > 2
        c (float): leading constant
        epsilon (float): regime margin

    Returns:
        (ScalingCurve)
    """
    _check_positive(c=c)
    _check_alpha(alpha)
    M = np.asarray(M, dtype=float)
    return ScalingCurve(law=Law.OPP_POWER, constants=dict(c=c), x=M,
                        y=c * np.log2(n) ** (alpha - 2) / M ** (alpha - 1),
                        in_regime=in_regime(M, n, epsilon))


def opp_power_refined_curve(n, M, alpha, c=1., c_delay=1., epsilon=0.05):
    """P = c / (M D^(alpha - 2)) with D from the refined delay law.
    """
    _check_positive(c=c, c_delay=c_delay)
    _check_alpha(alpha)
    M = np.asarray(M, dtype=float)
    delay = np.array([refined_delay(n, mval, c_delay) for mval in M])
    return ScalingCurve(law=Law.OPP_POWER_REFINED,
                        constants=dict(c=c, c_delay=c_delay), x=M,
                        y=c / (M * delay ** (alpha - 2)),
                        in_regime=in_regime(M, n, epsilon))


def baseline_curves(M, alpha, c_P=1., c_D=1., n=None, epsilon=0.05):
    """Non-opportunistic P = c_P M^(1 - alpha) and D = c_D M.

    Returns:
        (ScalingCurve, ScalingCurve): power and delay series
    """
    _check_positive(c_P=c_P, c_D=c_D)
    _check_alpha(alpha)
    M = np.asarray(M, dtype=float)
    flags = None if n is None else in_regime(M, n, epsilon)
    power = ScalingCurve(law=Law.BASE_POWER, constants=dict(c=c_P), x=M,
                         y=c_P * M ** (1 - alpha), in_regime=flags)
    delay = ScalingCurve(law=Law.BASE_DELAY, constants=dict(c=c_D), x=M,
                         y=c_D * M, in_regime=flags)
    return power, delay


def cutset_bound(M, n, c5=1.):
    """Throughput upper bound c5 M log n.
    """
    _check_positive(c5=c5)
    return c5 * np.asarray(M, dtype=float) * np.log2(n)


def cutset_curve(n, M, c5=1., epsilon=0.05):
    M = np.asarray(M, dtype=float)
    return ScalingCurve(law=Law.CUTSET, constants=dict(c=c5), x=M,
                        y=cutset_bound(M, n, c5),
                        in_regime=in_regime(M, n, epsilon))


def outage_cdf_curve(powers, delay, alpha, c4=1.):
    _check_positive(c4=c4)
    powers = np.asarray(powers, dtype=float)
    return ScalingCurve(law=Law.OUTAGE_CDF, constants=dict(c=c4, D=delay),
                        x=powers,
                        y=np.asarray(analytic_outage_cdf(powers, delay, alpha,
                                                         c4)))


def tradeoff_curves(n, delays, alpha, c_opp_power=1., c_opp_delay=1.,
                    c_base_power=1., c_base_delay=1.):
    """Per-pair power as a function of delay, M eliminated.

    Opportunistic: M = c_opp_delay D log n. Baseline: M = D / c_base_delay.

    Returns:
        (np.ndarray, np.ndarray): P_opp(D) and P_base(D)
    """
    delays = np.asarray(delays, dtype=float)
    m_opp = c_opp_delay * delays * np.log2(n)
    m_base = delays / c_base_delay
    p_opp = opp_power_curve(n, m_opp, alpha, c_opp_power).y
    p_base = baseline_curves(m_base, alpha, c_base_power, c_base_delay)[0].y
    return p_opp, p_base


def tradeoff_series(n, alpha, constants=None, delays=None, epsilon=0.05):
    """P(D) of both engines as curves, x is the delay D.

    A point is in regime when the pair count its engine needs for that
    delay lies in the regime of n.

    Args:
        n (int): number of nodes
        alpha (float): path-loss exponent
        constants (dict): c_opp_power, c_opp_delay, c_base_power,
                          c_base_delay, default 1 each
        delays (array-like): delays D, default 1 to 8
        epsilon (float): regime margin

    Returns:
        (ScalingCurve, ScalingCurve): opportunistic and baseline series
    """
    cst = dict(c_opp_power=1., c_opp_delay=1., c_base_power=1.,
               c_base_delay=1.)
    cst.update({key: val for key, val in (constants or {}).items()
                if key in cst and val is not None})
    delays = np.arange(1, 9) if delays is None else delays
    delays = np.asarray(delays, dtype=float)
    p_opp, p_base = tradeoff_curves(n, delays, alpha, **cst)

    m_opp = cst["c_opp_delay"] * delays * np.log2(n)
    m_base = delays / cst["c_base_delay"]
    return (ScalingCurve(Law.OPP_TRADEOFF, cst, delays, p_opp,
                         in_regime(m_opp, n, epsilon)),
            ScalingCurve(Law.BASE_TRADEOFF, cst, delays, p_base,
                         in_regime(m_base, n, epsilon)))


def law_shape(law, x, n, alpha):
    """Value of a law with unit leading constant.

    Args:
        law (Law): law to evaluate
        x (array-like): M values
        n (int): number of nodes
        alpha (float): path-loss exponent

    Returns:
        (np.ndarray)
    """
    law = Law(law)
    x = np.asarray(x, dtype=float)
    if law is Law.OPP_POWER:
        return opp_power_curve(n, x, alpha).y
    if law is Law.OPP_DELAY:
        # D = M / (c log n): the fitted quantity is 1 / c
        return x / np.log2(n)
    if law is Law.BASE_POWER:
        return x ** (1 - alpha)
    if law is Law.BASE_DELAY:
        return x
    if law is Law.CUTSET:
        return x * np.log2(n)

    raise FitError("law %s has no single leading constant to fit" % law.value)


@dataclass(frozen=True)
class FitResult:
    law: Law
    constant: float
    r_squared: float
    residuals: tuple


def fit_constants(records, law, n, alpha, min_span=4.):
    """Least-squares leading constant of a law in the log domain.

    For OPP_DELAY the returned constant is c of D = M / (c log n).

    Raises: FitError with fewer than 3 records or an x span under min_span

    Args:
        records (iterable of (float, float)): (M, measured value) pairs
        law (Law): law to fit
        n (int): number of nodes
        alpha (float): path-loss exponent
        min_span (float): smallest allowed max(x) / min(x)

    Returns:
        (FitResult)
    """
    law = Law(law)
    pts = [(float(x), float(y)) for x, y in records
           if np.isfinite(x) and np.isfinite(y) and x > 0 and y > 0]
    if len(pts) < 3:
        raise FitError("need at least 3 usable records, got %d" % len(pts))
    x, y = np.array(pts).T
    if x.max() / x.min() < min_span:
        raise FitError("records span a factor %.3g in x, need %g"
                       % (x.max() / x.min(), min_span))

    log_y = np.log(y)
    log_shape = np.log(law_shape(law, x, n, alpha))
    log_c = float(np.mean(log_y - log_shape))
    residuals = log_y - log_shape - log_c
    ss_res = float(np.sum(residuals ** 2))
    ss_tot = float(np.sum((log_y - log_y.mean()) ** 2))
    if ss_res <= 1e-24:
        r_squared = 1.
    elif ss_tot == 0:
        r_squared = 0.
    else:
        r_squared = 1. - ss_res / ss_tot

    constant = float(np.exp(log_c))
    if law is Law.OPP_DELAY:
        constant = 1. / constant
    logger.info("fit %s: c=%.4g R2=%.3f", law.value, constant, r_squared)
    return FitResult(law=law, constant=constant, r_squared=r_squared,
                     residuals=tuple(float(val) for val in residuals))


def law_records(records, law):
    """(M, value) pairs of a law from sweep records of the matching engine.

    Args:
        records (list of TradeoffRecord): sweep output
        law (Law): OPP_* laws read opportunistic rows, BASE_* laws baseline
                   rows, CUTSET reads every row

    Returns:
        (list of (float, float))
    """
    law = Law(law)
    engine = {Law.OPP_POWER: "opportunistic", Law.OPP_DELAY: "opportunistic",
              Law.BASE_POWER: "baseline", Law.BASE_DELAY: "baseline"}.get(law)
    pts = []
    for rec in records:
        if rec.point is None or (engine is not None and rec.engine != engine):
            continue
        pt = rec.point
        if law in (Law.OPP_POWER, Law.BASE_POWER):
            pts.append((pt.M, pt.P_total))
        elif law in (Law.OPP_DELAY, Law.BASE_DELAY):
            pts.append((pt.M, pt.D_measured))
        else:
            pts.append((pt.M, pt.throughput))

    return pts


def all_curves(n, alpha, constants=None, epsilon=0.05, delay=2, c4=1.,
               M=None, powers=None, delays=None):
    """Every law series over the regime of n, trade-off series last.

    Args:
        n (int): number of nodes
        alpha (float): path-loss exponent
        constants (dict): c_opp_power, c_opp_delay, c_base_power,
                          c_base_delay, c5, default 1 each
        epsilon (float): regime margin
        delay (int): D of the outage cdf series
        c4 (float): constant of the outage cdf
        M (array-like): pair counts, default every integer around the regime
        powers (array-like): per-pair powers of the outage cdf series
        delays (array-like): delays of the trade-off series

    Returns:
        (list of ScalingCurve): in Law order
    """
    cst = dict(c_opp_power=1., c_opp_delay=1., c_base_power=1.,
               c_base_delay=1., c5=1.)
    cst.update({key: val for key, val in (constants or {}).items()
                if val is not None})
    if M is None:
        low, high = regime_bounds(n, epsilon)
        M = np.arange(max(1, int(np.floor(low))), int(np.ceil(high)) + 1)
    if powers is None:
        powers = np.geomspace(1e-3, 1e1, 41) / delay ** (alpha - 1)

    base_power, base_delay = baseline_curves(M, alpha, cst["c_base_power"],
                                             cst["c_base_delay"], n, epsilon)
    return [opp_power_curve(n, M, alpha, cst["c_opp_power"], epsilon),
            opp_delay_curve(n, M, cst["c_opp_delay"], epsilon),
            opp_power_refined_curve(n, M, alpha, cst["c_opp_power"],
                                    cst["c_opp_delay"], epsilon),
            opp_delay_refined_curve(n, M, cst["c_opp_delay"], epsilon),
            base_power,
            base_delay,
            cutset_curve(n, M, cst["c5"], epsilon),
            outage_cdf_curve(powers, delay, alpha, c4),
            *tradeoff_series(n, alpha, cst, delays, epsilon)]


def fit_all(records, n, alpha):
    """Constants of the four power and delay laws, skipping unfit laws.

    Returns:
        (dict): config key -> constant
    """
    keys = {Law.OPP_POWER: "c_opp_power", Law.OPP_DELAY: "c_opp_delay",
            Law.BASE_POWER: "c_base_power", Law.BASE_DELAY: "c_base_delay"}
    fitted = {}
    for law, key in keys.items():
        try:
            fitted[key] = fit_constants(law_records(records, law), law, n,
                                        alpha).constant
        except FitError as err:
            logger.warning("no constant for %s: %s", law.value, err)

    return fitted
