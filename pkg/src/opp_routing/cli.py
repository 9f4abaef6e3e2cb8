"""Command line front end: simulate, sweep, verify and curves.
"""
from __future__ import annotations

from argparse import ArgumentParser
import logging
import os
import sys

from . import analytics, experiment, report
from .config import dump_config, load_config, parse_assignments
from .errors import CalibrationError, ConfigError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VERIFY = 2
EXIT_CALIBRATION = 3


def _out(cfg, name):
    return os.path.join(cfg.output_dir, name)


def echo_config(cfg):
    """Write the resolved configuration next to the results.
    """
    if not os.path.exists(cfg.output_dir):
        os.makedirs(cfg.output_dir)
    with open(_out(cfg, "config.txt"), 'w', encoding='utf-8') as fhw:
        fhw.write(dump_config(cfg))


def cmd_simulate(cfg):
    """Trials at fixed M for every engine and delay target.

    Power is cfg.per_hop_power when given, calibrated to target_Pr
    otherwise.

    Args:
        cfg (RunConfig): resolved configuration

    Returns:
        (int): exit status
    """
    results = []
    for engine in cfg.engines:
        for target_delay in cfg.D_list:
            sampler = experiment.Sampler(cfg, engine, target_delay,
                                         cfg.calibration_trials)
            power = experiment.calibrate_received_power(cfg, sampler, cfg.M)
            res = experiment.run_trials(cfg, engine, target_delay, cfg.M,
                                        power, cfg.trials)
            summ = experiment.summarize(res)
            print("%s D=%d M=%d p=%.4g: delivery %.3f, hops %.3f, "
                  "P_r %.3g, P_I %.3g" % (engine, target_delay, cfg.M, power,
                                          summ.delivery_rate, summ.D_measured,
                                          summ.mean_Pr, summ.mean_PI))
            results.extend(res)

    report.write_csv(_out(cfg, "trials.csv"), "trials", report.TRIAL_HEADER,
                     report.trial_rows(results))
    if cfg.trace:
        report.write_csv(_out(cfg, "trace.csv"), "trace", report.TRACE_HEADER,
                         report.trace_rows(results))

    return EXIT_OK


def cmd_sweep(cfg):
    """Trade-off sweep over engines and delay targets.

    Args:
        cfg (RunConfig): resolved configuration

    Returns:
        (int): exit status
    """
    records = experiment.run_tradeoff_sweep(cfg)
    report.write_csv(_out(cfg, "tradeoff.csv"), "tradeoff",
                     report.TRADEOFF_HEADER, report.tradeoff_rows(records))

    for rec in records:
        if rec.point is None:
            print("%s D=%d: failed (%s)" % (rec.engine, rec.D_target, rec.error))
        else:
            pt = rec.point
            print("%s D=%d: M*=%d D=%.3f P=%.4g outage=%.3f throughput=%.3f"
                  % (rec.engine, rec.D_target, pt.M, pt.D_measured, pt.P_total,
                     pt.outage_rate, pt.throughput))

    for engine, verdict in experiment.trend_verdicts(records, cfg.alpha).items():
        print("%s: M* increasing in D: %s, P decreasing in M*: %s, "
              "P M D^(alpha-2) spread %.3g (%s)"
              % (engine, verdict["M_increasing_in_D"],
                 verdict["P_decreasing_in_M"], verdict["normalization_ratio"],
                 "ok" if verdict["normalization_ok"] else "too wide"))
    for delay, p_opp, p_base in experiment.power_dominance(records):
        print("D~%.3f: P_opp %.4g %s P_base %.4g"
              % (delay, p_opp, "<" if p_opp < p_base else ">=", p_base))

    return EXIT_OK


def cmd_verify(cfg, lemmas, mud=False, outage_cdf=False, layers=False):
    """Concentration checks and single link studies.

    Args:
        cfg (RunConfig): resolved configuration
        lemmas (list of int): lemmas to check, in the given order
        mud (bool): run the MUD gain regression
        outage_cdf (bool): run the outage cdf KS check
        layers (bool): run the layered interference bracket

    Returns:
        (int): EXIT_VERIFY if any selected check fails
    """
    failed = False
    reports = []
    for lemma in lemmas:
        rep = experiment.verify_concentration(lemma, cfg)
        reports.append(rep)
        print("lemma %d: pass fraction %.4f (required %.2f, delta %g, "
              "%d samples) %s" % (lemma, rep.pass_fraction, rep.bound,
                                  rep.delta, rep.samples,
                                  "PASS" if rep.passed else "FAIL"))
        failed |= not rep.passed
    if reports:
        report.write_csv(_out(cfg, "verification.csv"), "verification",
                         report.VERIFY_HEADER,
                         report.verification_rows(reports))

    if mud:
        rep = experiment.mud_gain_study(cfg)
        ok = rep.slope < 0 and rep.r_squared > 0.9
        print("mud gain: slope %.4g, R2 %.4f %s"
              % (rep.slope, rep.r_squared, "PASS" if ok else "FAIL"))
        report.write_csv(_out(cfg, "mud_gain.csv"), "mud_gain",
                         ("m", "required_power"),
                         list(zip(rep.occupancies, rep.required_power)))
        failed |= not ok

    if outage_cdf:
        rep = experiment.outage_cdf_check(cfg)
        print("outage cdf: D=%d c4 %.4g, KS %.4f %s"
              % (rep.D, rep.c4, rep.ks_statistic,
                 "PASS" if rep.passed() else "FAIL"))
        report.write_csv(_out(cfg, "outage_cdf.csv"), "outage_cdf",
                         ("P", "empirical", "analytic"), rep.curve)
        failed |= not rep.passed()

    if layers:
        rows = experiment.layer_bracket_check()
        ok = all(row.ok for row in rows)
        print("interference layers: %d interior cells bracketed %s"
              % (len(rows), "PASS" if ok else "FAIL"))
        report.write_csv(_out(cfg, "layers.csv"), "layers",
                         ("row", "col", "alpha", "low", "exact", "high"),
                         [row.cell + (row.alpha, row.low, row.exact, row.high)
                          for row in rows])
        report.write_csv(_out(cfg, "layer_table.csv"), "layer_table",
                         report.LAYER_HEADER,
                         experiment.layer_summary(alpha=cfg.alpha))
        failed |= not ok

    return EXIT_VERIFY if failed else EXIT_OK


def curve_constants(cfg):
    """Constants of the laws: given in cfg, else fitted on tradeoff.csv.
    """
    keys = ("c_opp_power", "c_opp_delay", "c_base_power", "c_base_delay")
    constants = {key: getattr(cfg, key) for key in keys}
    pth = _out(cfg, "tradeoff.csv")
    if any(val is None for val in constants.values()) and os.path.exists(pth):
        fitted = analytics.fit_all(report.load_tradeoff(pth), cfg.n, cfg.alpha)
        for key, val in fitted.items():
            if constants[key] is None:
                constants[key] = val

    return {key: (1. if val is None else val) for key, val in constants.items()}


def cmd_curves(cfg):
    """Theory series, plus an overlay when a sweep output exists.

    Args:
        cfg (RunConfig): resolved configuration

    Returns:
        (int): exit status
    """
    constants = curve_constants(cfg)
    delay = min(cfg.D_list) if cfg.D_list else 2
    curves = analytics.all_curves(cfg.n, cfg.alpha,
                                  dict(constants, c5=cfg.c5),
                                  epsilon=cfg.regime_epsilon, delay=delay,
                                  c4=cfg.c4)
    report.write_csv(_out(cfg, "curves.csv"), "curves", report.CURVE_HEADER,
                     report.curve_rows(curves))
    low, high = analytics.regime_bounds(cfg.n, cfg.regime_epsilon)
    print("regime M in [%.3f, %.3f]" % (low, high))

    pth = _out(cfg, "tradeoff.csv")
    if os.path.exists(pth):
        records = report.load_tradeoff(pth)
        report.write_csv(_out(cfg, "overlay.csv"), "overlay",
                         report.OVERLAY_HEADER,
                         report.overlay_rows(records, cfg.n, cfg.alpha,
                                             constants, cfg.c5,
                                             cfg.regime_epsilon))
    else:
        logger.info("no tradeoff.csv in %s, curves only", cfg.output_dir)

    return EXIT_OK


def _split_assignment(txt):
    if "=" not in txt:
        raise ConfigError("--set expects key=value, got '%s'" % txt)
    key, val = txt.split("=", 1)
    return key.strip(), val


def build_parser():
    parser = ArgumentParser(prog='opp-routing',
                            description='Opportunistic routing simulator')
    parser.add_argument('-v', '--verbose', action='count', default=0,
                        help="log progress, twice for details")

    subparsers = parser.add_subparsers(dest='command')
    subparsers.required = True
    for name, hlp in (('simulate', "trials at fixed M"),
                      ('sweep', "power-delay trade-off sweep"),
                      ('verify', "concentration checks"),
                      ('curves', "closed-form law series")):
        sub = subparsers.add_parser(name, help=hlp)
        sub.add_argument('--config', dest='config', default=None,
                         help="key=value configuration file")
        sub.add_argument('--set', dest='assignments', action='append',
                         default=[], metavar='KEY=VALUE',
                         help="override a configuration key")
        sub.add_argument('--seed', type=int, default=None)
        sub.add_argument('--trials', type=int, default=None)
        sub.add_argument('--jobs', type=int, default=None,
                         help="maximum number of worker processes")
        sub.add_argument('--output-dir', dest='output_dir', default=None)
        sub.add_argument('--trace', action='store_const', const=True,
                         default=None, help="dump per hop traces")
        if name == 'verify':
            sub.add_argument('--lemma', dest='lemmas', action='append',
                             type=int, choices=(1, 2, 3), default=[])
            sub.add_argument('--all', dest='all_lemmas', action='store_true',
                             help="lemmas 1, 2 and 3 in order")
            sub.add_argument('--mud', action='store_true',
                             help="MUD gain regression")
            sub.add_argument('--outage-cdf', dest='outage_cdf',
                             action='store_true',
                             help="outage cdf KS check")
            sub.add_argument('--layers', action='store_true',
                             help="layered interference bracket")

    return parser


def main(argv=None):
    """Parse arguments, resolve configuration and run a subcommand.

    Returns:
        (int): exit status
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose,
                                                      logging.DEBUG)
    logging.basicConfig(level=level,
                        format="%(levelname)s %(name)s: %(message)s")

    try:
        overrides = parse_assignments(_split_assignment(txt)
                                      for txt in args.assignments)
        for key in ('seed', 'trials', 'jobs', 'output_dir', 'trace'):
            if getattr(args, key) is not None:
                overrides[key] = getattr(args, key)
        cfg = load_config(args.config, overrides)

        if args.command == 'verify':
            lemmas = [1, 2, 3] if args.all_lemmas else args.lemmas
            if not (lemmas or args.mud or args.outage_cdf or args.layers):
                parser.error("verify needs --lemma, --all, --mud, "
                             "--outage-cdf or --layers")

        echo_config(cfg)
        if args.command == 'simulate':
            return cmd_simulate(cfg)
        if args.command == 'sweep':
            return cmd_sweep(cfg)
        if args.command == 'verify':
            return cmd_verify(cfg, lemmas, args.mud, args.outage_cdf,
                              args.layers)
        return cmd_curves(cfg)
    except ConfigError as err:
        print("configuration error: %s" % err, file=sys.stderr)
        return EXIT_CONFIG
    except CalibrationError as err:
        print("calibration error: %s" % err, file=sys.stderr)
        for power, val in err.history:
            print("  p=%g -> %g" % (power, val), file=sys.stderr)
        return EXIT_CALIBRATION
    except UserWarning as err:
        print("%s: %s" % (type(err).__name__, err), file=sys.stderr)
        return EXIT_CONFIG


if __name__ == '__main__':
    sys.exit(main())
