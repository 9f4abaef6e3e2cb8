"""Versioned CSV outputs and their readers.

Every file starts with a '# opp_routing <kind> v<version>' comment line
followed by a mandatory header row.
"""
from __future__ import annotations

import csv
import io
import logging
import os

import numpy as np

from .analytics import Law, cutset_bound, law_shape, regime_bounds
from .errors import ConfigError
from .experiment import OperatingPoint, TradeoffRecord

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

TRIAL_HEADER = ("trial", "engine", "M", "D_target", "per_hop_power",
                "delivered", "outage_rate", "mean_hops", "mean_Pr", "mean_PI")
TRACE_HEADER = ("trial", "pair", "hop", "slot", "candidates", "sinr",
                "interference", "outcome")
TRADEOFF_HEADER = ("engine", "n", "alpha", "D_target", "D_measured", "M_star",
                   "per_hop_power", "P_total", "mean_PI", "mean_Pr", "outage",
                   "throughput", "ci_low", "ci_high", "accepted", "errors")
CURVE_HEADER = ("law", "x", "y", "in_regime")
OVERLAY_HEADER = ("law", "engine", "D_target", "M", "measured", "theory",
                  "cutset", "in_regime")
VERIFY_HEADER = ("lemma", "pass_fraction", "bound", "empirical_mean", "delta",
                 "samples", "passed")
LAYER_HEADER = ("layer", "cell_count", "min_dist", "max_dist", "contribution")


def fmt(val):
    """Deterministic text form of a cell.
    """
    if val is None:
        return ""
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, (float, np.floating)):
        return repr(float(val))
    if isinstance(val, (int, np.integer)):
        return str(int(val))

    return str(val)


def render_csv(kind, header, rows):
    """CSV text of a table.

    Args:
        kind (str): table name, written in the comment line
        header (tuple of str): column names
        rows (iterable of sequences): one entry per column

    Returns:
        (str)
    """
    buf = io.StringIO()
    buf.write("# opp_routing %s v%d\n" % (kind, SCHEMA_VERSION))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError("row of %d cells for %d columns"
                             % (len(row), len(header)))
        writer.writerow([fmt(val) for val in row])

    return buf.getvalue()


def write_csv(pth, kind, header, rows):
    """Write a table, creating the parent directory if needed.
    """
    dirname = os.path.dirname(pth)
    if dirname != "" and not os.path.exists(dirname):
        os.makedirs(dirname)
    with open(pth, 'w', encoding='utf-8', newline='') as fhw:
        fhw.write(render_csv(kind, header, rows))
    logger.info("wrote %s", pth)


def parse_csv(txt):
    """Read back render_csv output.

    Returns:
        (str, int, list of dict): kind, version and rows as text
    """
    lines = txt.splitlines()
    if len(lines) == 0 or not lines[0].startswith("# opp_routing "):
        raise ConfigError("not an opp_routing table")
    kind, version = lines[0][len("# opp_routing "):].split()
    version = int(version.lstrip("v"))
    if version > SCHEMA_VERSION:
        raise ConfigError("table version %d is newer than %d"
                          % (version, SCHEMA_VERSION))

    reader = csv.DictReader(lines[1:])
    return kind, version, list(reader)


def read_csv(pth):
    with open(pth, 'r', encoding='utf-8') as fhr:
        return parse_csv(fhr.read())


def _nanmean(vals):
    vals = [val for val in vals if not np.isnan(val)]
    return float(np.mean(vals)) if vals else float("nan")


def trial_rows(results):
    """One row per trial.

    Args:
        results (list of TrialResult): simulated trials

    Returns:
        (list of tuple)
    """
    rows = []
    for res in results:
        hops = res.delivered_hops
        outcomes = res.hop_outcomes()
        rows.append((res.trial, res.engine, res.M, res.D_target,
                     res.per_hop_power, res.delivered,
                     1. - res.delivered / float(len(res.packets)),
                     float(np.mean(hops)) if hops else float("nan"),
                     _nanmean([hop.mean_signal for hop in outcomes]),
                     _nanmean([hop.mean_interference for hop in outcomes])))

    return rows


def trace_rows(results):
    """One row per attempted hop of every packet.
    """
    rows = []
    for res in results:
        for pkt in res.packets:
            for hop in pkt.per_hop:
                rows.append((res.trial, pkt.pair_index, hop.hop_index,
                             hop.slot, hop.candidate_count, hop.measured_sinr,
                             hop.measured_interference,
                             "outage" if hop.outage else "ok"))

    return rows


def tradeoff_rows(records):
    rows = []
    for rec in records:
        pt = rec.point
        if pt is None:
            rows.append((rec.engine, rec.n, rec.alpha, rec.D_target)
                        + (None,) * 10 + (False, rec.error))
        else:
            rows.append((rec.engine, rec.n, rec.alpha, rec.D_target,
                         pt.D_measured, pt.M, pt.per_hop_power, pt.P_total,
                         pt.mean_PI, pt.mean_Pr, pt.outage_rate,
                         pt.throughput, rec.ci_low, rec.ci_high, rec.accepted,
                         rec.error))

    return rows


def load_tradeoff(pth):
    """Sweep records from a tradeoff.csv.

    Returns:
        (list of TradeoffRecord)
    """
    kind, _, rows = read_csv(pth)
    if kind != "tradeoff":
        raise ConfigError("'%s' holds a %s table, not tradeoff" % (pth, kind))

    def num(txt):
        return float("nan") if txt == "" else float(txt)

    records = []
    for row in rows:
        point = None
        if row["M_star"] != "":
            point = OperatingPoint(n=int(row["n"]), M=int(row["M_star"]),
                                   D_target=int(row["D_target"]),
                                   per_hop_power=num(row["per_hop_power"]),
                                   D_measured=num(row["D_measured"]),
                                   mean_PI=num(row["mean_PI"]),
                                   mean_Pr=num(row["mean_Pr"]),
                                   outage_rate=num(row["outage"]),
                                   throughput=num(row["throughput"]))
        records.append(TradeoffRecord(engine=row["engine"],
                                      D_target=int(row["D_target"]),
                                      n=int(row["n"]),
                                      alpha=float(row["alpha"]),
                                      point=point,
                                      ci_low=num(row["ci_low"]),
                                      ci_high=num(row["ci_high"]),
                                      accepted=row["accepted"] == "true",
                                      error=row["errors"]))

    return records


def curve_rows(curves):
    return [(curve.law.value, x, y, flag)
            for curve in curves for x, y, flag in curve.samples()]


_OVERLAY_LAWS = ((Law.OPP_POWER, "opportunistic", "P_total"),
                 (Law.OPP_DELAY, "opportunistic", "D_measured"),
                 (Law.BASE_POWER, "baseline", "P_total"),
                 (Law.BASE_DELAY, "baseline", "D_measured"))


def overlay_rows(records, n, alpha, constants, c5=1., epsilon=0.05):
    """Measured operating points next to the fitted laws at the same M.

    Args:
        records (list of TradeoffRecord): sweep output
        n (int): number of nodes
        alpha (float): path-loss exponent
        constants (dict): c_opp_power, c_opp_delay, c_base_power,
                          c_base_delay
        c5 (float): cut-set constant
        epsilon (float): regime margin

    Returns:
        (list of tuple)
    """
    keys = {Law.OPP_POWER: "c_opp_power", Law.OPP_DELAY: "c_opp_delay",
            Law.BASE_POWER: "c_base_power", Law.BASE_DELAY: "c_base_delay"}
    low, high = regime_bounds(n, epsilon)
    rows = []
    for law, engine, attr in _OVERLAY_LAWS:
        cst = constants.get(keys[law]) or 1.
        for rec in records:
            if rec.engine != engine or rec.point is None:
                continue
            pt = rec.point
            shape = float(law_shape(law, [pt.M], n, alpha)[0])
            theory = shape / cst if law is Law.OPP_DELAY else cst * shape
            rows.append((law.value, engine, rec.D_target, pt.M,
                         getattr(pt, attr), theory,
                         float(cutset_bound(pt.M, n, c5)),
                         bool(low <= pt.M <= high)))

    return rows


def verification_rows(reports):
    return [(rep.lemma, rep.pass_fraction, rep.bound, rep.empirical_mean,
             rep.delta, rep.samples, rep.passed) for rep in reports]
