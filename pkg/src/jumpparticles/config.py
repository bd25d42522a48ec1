"""Scenario configuration: a versioned key-value tree in YAML (or JSON).

Unknown keys are rejected; every default is filled in so the resolved tree
can be written back out and rerun verbatim.
"""
from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError
from .models import COEFFICIENTS, MODEL_NAMES

SCHEMA_VERSION = 1
SCENARIOS = ("simulate", "density", "tv-estimate", "convergence-study", "validate-model", "tail-quantities")
THEOREMS = ("2.3i", "2.3ii", "2.4i", "2.4ii")

DEFAULTS: dict[str, Any] = {
    "schema_version": SCHEMA_VERSION,
    "scenario": None,
    "seed": 0,
    "threads": 1,
    "out": "out",
    "model": {"name": None, "params": {}},
    "coefficients": {"name": None, "params": {}},
    "simulation": {
        "T": 1.0,
        "dt": 0.1,
        "M": 1,
        "N": 1000,
        "init": {"kind": "point", "mean": [0.0], "cov": None, "file": None},
        "record": None,
        "snapshot_format": "csv",
    },
    "estimator": {
        "theorem": "2.3i",
        "epsilon": 0.5,
        "N": "auto",
        "repeats": 1,
        "grid": {"lo": -4.0, "hi": 4.0, "points": 81},
    },
    "convergence": {
        "ladder": [0.08, 0.04, 0.02, 0.01],
        "seeds": 20,
        "minimum_slope": 0.7,
    },
    "validation": {
        "sample_budget": 2000,
        "moment_p": 2.0,
        "theta_growth": 1.25,
    },
}


def _merge(defaults: dict, given: dict, path: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown key '{where}'; allowed: {sorted(defaults)}")
        if key == "params":
            if not isinstance(value, dict):
                raise ConfigError(f"'{where}' must be a mapping")
            out[key] = dict(value)
        elif isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{where}' must be a mapping")
            out[key] = _merge(defaults[key], value, where)
        else:
            out[key] = value
    return out


def _number(cfg: dict, path: str, lo=None, hi=None, integer=False, strict_lo=False):
    node = cfg
    for part in path.split("."):
        node = node[part]
    if isinstance(node, bool) or not isinstance(node, (int, float)) or (integer and not isinstance(node, int)):
        raise ConfigError(f"'{path}' must be {'an integer' if integer else 'a number'}, got {node!r}")
    bad = (lo is not None and (node <= lo if strict_lo else node < lo)) or (hi is not None and node > hi)
    if bad:
        lo_s = "" if lo is None else f"{lo} {'<' if strict_lo else '<='} "
        hi_s = "" if hi is None else f" <= {hi}"
        raise ConfigError(f"'{path}' = {node} is out of range; required {lo_s}{path.split('.')[-1]}{hi_s}")
    return node


def validate(cfg: dict) -> dict:
    if cfg["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {cfg['schema_version']!r}; this build reads {SCHEMA_VERSION}")
    if cfg["scenario"] not in SCENARIOS:
        raise ConfigError(f"unknown scenario {cfg['scenario']!r}; choose from {list(SCENARIOS)}")
    if cfg["model"]["name"] not in MODEL_NAMES:
        raise ConfigError(f"unknown model {cfg['model']['name']!r}; choose from {list(MODEL_NAMES)}")
    coeff = cfg["coefficients"]["name"]
    if coeff is not None and coeff not in COEFFICIENTS:
        raise ConfigError(f"unknown coefficient model {coeff!r}; choose from {sorted(COEFFICIENTS)}")
    seed = _number(cfg, "seed", 0, 2 ** 64 - 1, integer=True)
    cfg["seed"] = seed
    _number(cfg, "threads", 1, integer=True)
    _number(cfg, "simulation.T", 0)
    _number(cfg, "simulation.dt", 0, strict_lo=True)
    _number(cfg, "simulation.M", 1, integer=True)
    _number(cfg, "simulation.N", 1, integer=True)
    if cfg["simulation"]["snapshot_format"] not in ("csv", "binary", "both"):
        raise ConfigError("'simulation.snapshot_format' must be csv, binary or both")
    init = cfg["simulation"]["init"]
    if init["kind"] not in ("point", "gaussian", "samples"):
        raise ConfigError("'simulation.init.kind' must be point, gaussian or samples")
    if init["kind"] == "samples" and not init["file"]:
        raise ConfigError("'simulation.init.file' is required when init.kind is samples")
    est = cfg["estimator"]
    if est["theorem"] not in THEOREMS:
        raise ConfigError(f"'estimator.theorem' must be one of {list(THEOREMS)}")
    _number(cfg, "estimator.epsilon", 0, 1, strict_lo=True)
    if not cfg["estimator"]["epsilon"] < 1:
        raise ConfigError("'estimator.epsilon' must lie in (0, 1)")
    if est["N"] != "auto":
        _number(cfg, "estimator.N", 1, integer=True)
    _number(cfg, "estimator.repeats", 1, integer=True)
    _number(cfg, "estimator.grid.points", 1, integer=True)
    if not est["grid"]["lo"] < est["grid"]["hi"]:
        raise ConfigError("'estimator.grid' needs lo < hi")
    ladder = cfg["convergence"]["ladder"]
    if not isinstance(ladder, list) or len(ladder) < 4 or any(not isinstance(v, (int, float)) or v <= 0 for v in ladder):
        raise ConfigError("'convergence.ladder' must list at least 4 positive step sizes (3 error rungs)")
    _number(cfg, "convergence.seeds", 1, integer=True)
    _number(cfg, "validation.sample_budget", 1000, integer=True)
    _number(cfg, "validation.moment_p", 1)
    _number(cfg, "validation.theta_growth", 1, strict_lo=True)
    return cfg


def resolve(tree: Any, source: str = "<config>") -> dict:
    if tree is None:
        raise ConfigError(f"{source}: empty configuration")
    if not isinstance(tree, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    return validate(_merge(DEFAULTS, tree, ""))


def load_tree(text: str, source: str = "<inline>"):
    """Raw key-value tree of a YAML/JSON document; a manifest yields its config."""
    if not text.strip():
        raise ConfigError(f"{source}: empty configuration")
    try:
        tree = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"{source}: malformed config{where}: {getattr(exc, 'problem', exc)}") from None
    if isinstance(tree, dict) and "manifest_version" in tree:
        tree = tree.get("config")
        if not isinstance(tree, dict):
            raise ConfigError(f"{source}: manifest has no config section")
    return tree


def parse_text(text: str, source: str = "<inline>") -> dict:
    return resolve(load_tree(text, source), source)


def parse_config(path_or_text) -> dict:
    """Parse a config file (YAML, JSON, or a run manifest) or inline YAML text."""
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and "\n" not in path_or_text
                                          and Path(path_or_text).suffix in (".yaml", ".yml", ".json")):
        path = Path(path_or_text)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return parse_text(text, str(path))
    return parse_text(str(path_or_text))


def dumps(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True)
