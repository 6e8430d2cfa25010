"""Versioned JSON run configuration with desk and paper-scale presets."""
from __future__ import annotations

import copy
import json
import math
from pathlib import Path

SCHEMA_VERSION = 1

_NUM = (int, float)

# every accepted key with its default; the value's type doubles as the schema
DEFAULTS = {
    "version": SCHEMA_VERSION,
    "seed": 0,
    "grid": {"avenues": 11, "streets": 21, "block_length": 250.0, "block_width": 100.0},
    "base_stations": {
        "count": 9,
        "rule": "lattice",
        "tx_antennas": 128,
        "carrier_frequency": 2.0e9,
        "tx_power": 49.0,
    },
    "channel": {
        "intercept_db": 33.46,
        "slope_db": 35.74,
        "shadowing_std_db": 8.0,
        "noise_dbm": -92.0,
        "bandwidth_hz": 20e6,
        "doppler_penalty": 3.0,
        "tau": 1e-3,
        "min_distance": 1.0,
    },
    "routing": {
        "gamma": 54.0,
        "epsilon": 0.01,
        "speed_set": [10.0, 20.0, 30.0],
        "sample_spacing": 5.0,
        "gamma_floor": 0.0,
        "gamma_step": 5.0,
        "fallback": True,
        "max_paths": 10000,
        "max_segments": None,
    },
    "montecarlo": {
        "trials": 1000,
        "schemes": ["two-layer", "greedy-cc", "greedy", "shortest-time"],
        "endpoints": "corners",
        "accounting": "quantile",
        "workers": 1,
    },
    "sweeps": {
        "gamma": [30.0, 40.0, 55.0, 70.0],
        "bs_count": [3, 6, 9, 12, 15],
        "bs_rule": "lattice",
        "trials": 200,
        "f_c": [0.5e9, 1e9, 2e9, 3e9, 4e9, 5e9, 6e9],
        "alpha": [2.0, 4.0],
        "lambda_m_T_m": [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9],
    },
    "traffic": {
        "tdd": {
            "T_slot": 1e-4,
            "T_pilot": 5e-4,
            "T_m": 1e-2,
            "lambda_m": 25.0,
            "L": 10,
            "alpha": 2.0,
            "f_c": 1e9,
            "c": 3e8,
            "v_l": None,
            "max_avs_per_channel": None,
        },
        "B0": 10.0,
        "policy": "max_min",
        "incidence": None,
    },
}

# keys whose value may be null, or a richer value than the default suggests
_NULLABLE = {
    "routing.max_segments": int,
    "traffic.tdd.v_l": _NUM,
    "traffic.tdd.max_avs_per_channel": int,
    "traffic.incidence": (str, dict),
}
_CHOICES = {
    "base_stations.rule": ("lattice", "nested", "random"),
    "sweeps.bs_rule": ("lattice", "nested", "random"),
    "montecarlo.endpoints": ("corners", "random"),
    "montecarlo.accounting": ("quantile", "realized"),
    "traffic.policy": ("max_min", "max_total", "proportional"),
}
SCHEMES = ("two-layer", "greedy", "greedy-cc", "shortest-time")

PRESETS = {
    "desk": {},
    "paper": {
        "grid": {"avenues": 11, "streets": 51},
        "base_stations": {"count": 21},
        "routing": {"gamma": 55.0},
        "montecarlo": {"trials": 10000},
        "sweeps": {"bs_count": [9, 12, 15, 18, 21, 24], "trials": 1000},
    },
}


class ConfigError(ValueError):
    """Malformed or invalid run configuration; the message names the key."""


def deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _check(node, schema, path):
    for k, v in node.items():
        key = f"{path}.{k}" if path else k
        if k not in schema:
            raise ConfigError(f"unknown key '{key}'")
        ref = schema[k]
        if v is None:
            if key in _NULLABLE or ref is None:
                continue
            raise ConfigError(f"'{key}' may not be null")
        if key in _NULLABLE and isinstance(v, _NULLABLE[key]) and not isinstance(v, bool):
            continue
        if isinstance(ref, dict):
            if not isinstance(v, dict):
                raise ConfigError(f"'{key}' must be an object")
            _check(v, ref, key)
        elif isinstance(ref, bool):
            if not isinstance(v, bool):
                raise ConfigError(f"'{key}' must be true or false")
        elif isinstance(ref, _NUM):
            if isinstance(v, bool) or not isinstance(v, _NUM) or not math.isfinite(v):
                raise ConfigError(f"'{key}' must be a finite number")
            if isinstance(ref, int) and not isinstance(ref, bool) and not float(v).is_integer():
                raise ConfigError(f"'{key}' must be an integer")
        elif isinstance(ref, str):
            if not isinstance(v, str):
                raise ConfigError(f"'{key}' must be a string")
            if key in _CHOICES and v not in _CHOICES[key]:
                raise ConfigError(f"'{key}' must be one of {list(_CHOICES[key])}, got {v!r}")
        elif isinstance(ref, list):
            if not isinstance(v, list) or not v:
                raise ConfigError(f"'{key}' must be a non-empty list")
            for i, item in enumerate(v):
                if key == "montecarlo.schemes":
                    if item not in SCHEMES:
                        raise ConfigError(f"'{key}[{i}]' must be one of {list(SCHEMES)}, got {item!r}")
                elif isinstance(item, bool) or not isinstance(item, _NUM):
                    raise ConfigError(f"'{key}[{i}]' must be a number")
        elif ref is None and not isinstance(v, _NUM):
            raise ConfigError(f"'{key}' must be a number or null")


def _semantic(cfg):
    g = cfg["grid"]
    if g["avenues"] < 2 or g["streets"] < 2:
        raise ConfigError("'grid.avenues' and 'grid.streets' must be at least 2")
    if g["block_length"] <= 0 or g["block_width"] <= 0:
        raise ConfigError("'grid.block_length' and 'grid.block_width' must be positive")
    if cfg["base_stations"]["count"] < 1:
        raise ConfigError("'base_stations.count' must be at least 1")
    r = cfg["routing"]
    if not 0 < r["epsilon"] < 1:
        raise ConfigError("'routing.epsilon' must lie in (0, 1)")
    if any(s <= 0 for s in r["speed_set"]):
        raise ConfigError("'routing.speed_set' entries must be positive")
    if r["sample_spacing"] <= 0:
        raise ConfigError("'routing.sample_spacing' must be positive")
    if r["gamma_step"] <= 0:
        raise ConfigError("'routing.gamma_step' must be positive")
    if cfg["montecarlo"]["trials"] < 1:
        raise ConfigError("'montecarlo.trials' must be at least 1")
    if cfg["montecarlo"]["workers"] < 1:
        raise ConfigError("'montecarlo.workers' must be at least 1")
    if cfg["sweeps"]["trials"] < 1:
        raise ConfigError("'sweeps.trials' must be at least 1")
    if cfg["traffic"]["B0"] <= 0:
        raise ConfigError("'traffic.B0' must be positive")
    for axis in ("gamma", "bs_count", "f_c", "alpha", "lambda_m_T_m"):
        vals = cfg["sweeps"][axis]
        if list(vals) != sorted(vals):
            raise ConfigError(f"'sweeps.{axis}' values must be sorted ascending")


def validate(cfg: dict) -> dict:
    if not isinstance(cfg, dict):
        raise ConfigError("configuration must be a JSON object")
    version = cfg.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"'version' {version!r} is not supported (expected {SCHEMA_VERSION})")
    _check(cfg, DEFAULTS, "")
    _semantic(cfg)
    return cfg


def resolve(user: dict | None = None, preset: str = "desk", overrides: dict | None = None) -> dict:
    """Defaults, then preset, then user document, then overrides; validated."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    user = user or {}
    if not isinstance(user, dict):
        raise ConfigError("configuration must be a JSON object")
    _check(user, DEFAULTS, "")
    cfg = deep_merge(deep_merge(DEFAULTS, PRESETS[preset]), user)
    if overrides:
        cfg = deep_merge(cfg, overrides)
    return validate(cfg)


def load_document(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: invalid JSON ({e.msg})") from None


def load_config(path=None, preset: str = "desk", overrides: dict | None = None) -> dict:
    doc = load_document(path) if path is not None else {}
    return resolve(doc, preset, overrides)
