"""Run configuration: flat key=value files, defaults and seeded substreams.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, fields, replace
import os

import numpy as np

from .errors import ConfigError

logger = logging.getLogger(__name__)

ENGINES = ("opportunistic", "baseline")
PLACEMENTS = ("regular", "random")
FADINGS = ("rayleigh", "none")
TIE_BREAKS = ("random", "closest")
PAIR_RULES = ("interference", "outage")

# named random substreams, see substream()
STREAMS = {"topology": 0,
           "pairs": 1,
           "fading": 2,
           "selection": 3,
           "verify": 4}


@dataclass(frozen=True)
class RunConfig:
    """Every knob of a run, with its default value.
    """
    n: int = 1024
    placement: str = "regular"
    alpha: float = 4.0
    N0: float = 1.0
    eta: float = 1.0
    fading: str = "rayleigh"
    tdma_k: int = 4
    engine: str = "both"
    D_list: tuple = (2, 4, 8)
    M: int = 8
    epsilon0: float = 0.05
    trials: int = 2000
    seed: int = 1
    grid_factor: float = 3.75
    horizontal: bool = True
    tie_break: str = "random"
    exclude_endpoints: bool = True
    baseline_tdma_k: int = 3
    baseline_grid_factor: float = 1.5
    target_Pr: float = 1.0
    target_PI: float = 1.0
    calibration_tolerance: float = 0.05
    calibration_trials: int = 100
    max_iters: int = 40
    pair_rule: str = "interference"
    per_hop_power: float = None
    regime_epsilon: float = 0.05
    bootstrap_resamples: int = 1000
    confidence: float = 0.95
    verify_seeds: int = 100
    verify_delta: float = 0.5
    verify_blocks: int = 1000
    verify_n: int = 4096
    c_opp_power: float = None
    c_opp_delay: float = None
    c_base_power: float = None
    c_base_delay: float = None
    c4: float = 1.0
    c5: float = 1.0
    trace: bool = False
    jobs: int = 1
    output_dir: str = "results"

    @property
    def engines(self):
        """Engines selected by the 'engine' key, in fixed order.
        """
        if self.engine == "both":
            return ENGINES

        return (self.engine,)


def _to_bool(txt):
    low = txt.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False

    raise ValueError("not a boolean: '%s'" % txt)


def _to_int_list(txt):
    items = [item.strip() for item in txt.split(",") if item.strip() != ""]
    return tuple(int(item) for item in items)


def _optional_float(txt):
    if txt.strip().lower() in ("", "none"):
        return None

    return float(txt)


_CONVERTERS = {
    "n": int, "placement": str, "alpha": float, "N0": float, "eta": float,
    "fading": str, "tdma_k": int, "engine": str, "D_list": _to_int_list,
    "M": int, "epsilon0": float, "trials": int, "seed": int,
    "grid_factor": float, "horizontal": _to_bool, "tie_break": str,
    "exclude_endpoints": _to_bool, "baseline_tdma_k": int,
    "baseline_grid_factor": float, "target_Pr": float, "target_PI": float,
    "calibration_tolerance": float, "calibration_trials": int,
    "max_iters": int, "pair_rule": str, "per_hop_power": _optional_float,
    "regime_epsilon": float, "bootstrap_resamples": int,
    "confidence": float, "verify_seeds": int, "verify_delta": float,
    "verify_blocks": int, "verify_n": int,
    "c_opp_power": _optional_float, "c_opp_delay": _optional_float,
    "c_base_power": _optional_float, "c_base_delay": _optional_float,
    "c4": float, "c5": float, "trace": _to_bool, "jobs": int,
    "output_dir": str,
}


def parse_assignments(pairs):
    """Convert raw (key, text) assignments into typed values.

    Raises: ConfigError naming the first unknown or malformed key

    Args:
        pairs (iterable of (str, str)): raw assignments

    Returns:
        (dict): key -> typed value
    """
    values = {}
    for key, txt in pairs:
        if key not in _CONVERTERS:
            raise ConfigError("unknown configuration key '%s'" % key)
        try:
            values[key] = _CONVERTERS[key](txt.strip())
        except ValueError as err:
            raise ConfigError("bad value for key '%s': %s" % (key, err))

    return values


def parse_config_text(txt):
    """Parse the flat key=value format.

    Args:
        txt (str): file content

    Returns:
        (dict): key -> typed value
    """
    pairs = []
    for lineno, line in enumerate(txt.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if line == "":
            continue
        if "=" not in line:
            raise ConfigError("line %d: expected 'key = value'" % lineno)
        key, val = line.split("=", 1)
        pairs.append((key.strip(), val))

    return parse_assignments(pairs)


def load_config(pth=None, overrides=None):
    """Build a validated RunConfig.

    Args:
        pth (str): path to a key=value file, default None for defaults only
        overrides (dict): typed values that win over the file content

    Returns:
        (RunConfig)
    """
    values = {}
    if pth is not None:
        if not os.path.exists(pth):
            raise ConfigError("config file '%s' does not exist" % pth)
        with open(pth, 'r', encoding='utf-8') as fhw:
            values.update(parse_config_text(fhw.read()))

    if overrides is not None:
        values.update(overrides)

    cfg = replace(RunConfig(), **values)
    validate(cfg)
    return cfg


def format_value(val):
    if val is None:
        return "none"
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, tuple):
        return ",".join(str(item) for item in val)

    return str(val)


def dump_config(cfg):
    """Render a config in the key=value format it was parsed from.

    Args:
        cfg (RunConfig): resolved configuration

    Returns:
        (str)
    """
    lines = ["# resolved opp_routing configuration"]
    for fdef in fields(cfg):
        lines.append("%s = %s" % (fdef.name, format_value(getattr(cfg, fdef.name))))

    return "\n".join(lines) + "\n"


def validate(cfg):
    """Check value ranges, raise ConfigError naming the offending key.

    Args:
        cfg (RunConfig): configuration to check

    Returns:
        None
    """
    checks = [
        ("n", cfg.n >= 4, "n must be at least 4"),
        ("placement", cfg.placement in PLACEMENTS,
         "placement must be one of %s" % (PLACEMENTS,)),
        ("alpha", cfg.alpha > 2, "alpha must be > 2"),
        ("N0", cfg.N0 >= 0, "N0 must be >= 0"),
        ("eta", cfg.eta > 0, "eta must be > 0"),
        ("fading", cfg.fading in FADINGS,
         "fading must be one of %s" % (FADINGS,)),
        ("tdma_k", cfg.tdma_k in (4, 5),
         "tdma_k must be 4 or 5 for opportunistic routing"),
        ("baseline_tdma_k", cfg.baseline_tdma_k in (3, 4, 5),
         "baseline_tdma_k must be 3, 4 or 5"),
        ("engine", cfg.engine in ENGINES + ("both",),
         "engine must be opportunistic, baseline or both"),
        ("D_list", all(dval >= 1 for dval in cfg.D_list),
         "every delay target must be >= 1"),
        ("M", cfg.M >= 1, "M must be >= 1"),
        ("M", 2 * cfg.M <= cfg.n, "precondition 2M <= n violated"),
        ("epsilon0", 0 < cfg.epsilon0 < 1, "epsilon0 must lie in (0, 1)"),
        ("trials", cfg.trials >= 1, "trials must be >= 1"),
        ("grid_factor", cfg.grid_factor > 0, "grid_factor must be > 0"),
        ("baseline_grid_factor", cfg.baseline_grid_factor > 0,
         "baseline_grid_factor must be > 0"),
        ("tie_break", cfg.tie_break in TIE_BREAKS,
         "tie_break must be one of %s" % (TIE_BREAKS,)),
        ("target_Pr", cfg.target_Pr > 0, "target_Pr must be > 0"),
        ("target_PI", cfg.target_PI > 0, "target_PI must be > 0"),
        ("calibration_tolerance", cfg.calibration_tolerance > 0,
         "calibration_tolerance must be > 0"),
        ("calibration_trials", cfg.calibration_trials >= 1,
         "calibration_trials must be >= 1"),
        ("max_iters", cfg.max_iters >= 1, "max_iters must be >= 1"),
        ("pair_rule", cfg.pair_rule in PAIR_RULES,
         "pair_rule must be one of %s" % (PAIR_RULES,)),
        ("per_hop_power", cfg.per_hop_power is None or cfg.per_hop_power >= 0,
         "per_hop_power must be >= 0"),
        ("regime_epsilon", 0 < cfg.regime_epsilon < 0.5,
         "regime_epsilon must lie in (0, 0.5)"),
        ("confidence", 0 < cfg.confidence < 1,
         "confidence must lie in (0, 1)"),
        ("verify_delta", cfg.verify_delta > 0, "verify_delta must be > 0"),
        ("verify_seeds", cfg.verify_seeds >= 1, "verify_seeds must be >= 1"),
        ("verify_blocks", cfg.verify_blocks >= 1,
         "verify_blocks must be >= 1"),
        ("verify_n", cfg.verify_n >= 4, "verify_n must be at least 4"),
        ("jobs", cfg.jobs >= 1, "jobs must be >= 1"),
    ]
    for key, ok, msg in checks:
        if not ok:
            raise ConfigError("%s: %s" % (key, msg))

    if cfg.placement == "regular":
        side = int(round(np.sqrt(cfg.n)))
        if side * side != cfg.n:
            raise ConfigError("n: regular placement needs a perfect square, "
                              "got %d" % cfg.n)
    elif cfg.horizontal:
        raise ConfigError("horizontal: horizontal-only pairs need "
                          "the regular placement")

    for key in ("c_opp_power", "c_opp_delay", "c_base_power",
                "c_base_delay", "c4", "c5"):
        val = getattr(cfg, key)
        if val is not None and val <= 0:
            raise ConfigError("%s: fitted constants must be > 0" % key)


def substream(seed, name, *keys):
    """Independent generator for a named stream of the root seed.

    Args:
        seed (int): root seed
        name (str): one of STREAMS
        keys (int): extra identifiers (trial index, block, ...)

    Returns:
        (np.random.Generator)
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, STREAMS[name]]
    entropy.extend(int(key) for key in keys)
    return np.random.default_rng(np.random.SeedSequence(entropy))
