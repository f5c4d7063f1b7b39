"""TOML configuration schema, strict validation, and resolved-config echo.

A run configuration is a TOML file with the sections below; unknown
sections or keys are rejected so typos cannot silently fall back to
defaults. Every command echoes the fully resolved configuration (defaults
filled in) as ``resolved_config.toml`` in its output directory, and that
echo re-parses to an identical configuration.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .errors import ConfigError
from .model import InitSpec, ModelParams, PointMass, SigmoidRate, TableRate, UniformBand

_REQUIRED = object()

# section -> key -> (expected type tag, default)
_SCHEMA: dict[str, dict[str, tuple[str, Any]]] = {
    "model": {
        "alpha": ("float", _REQUIRED),
        "beta": ("float", _REQUIRED),
        "lambda": ("float", _REQUIRED),
    },
    "rate": {
        "kind": ("str", "sigmoid"),
        "a": ("float", 3.0),
        "knots": ("pairs", []),
    },
    "init": {
        "kind": ("str", "pointmass"),
        "u": ("float", _REQUIRED),
        "r": ("float", _REQUIRED),
        "relative_width": ("float", 0.1),
    },
    "run": {
        "n": ("int", 1000),
        "horizon": ("float", 5.0),
        "grid_points": ("int", 201),
        "strategy": ("str", "monotone"),
        "seed": ("int", None),
        "out_dir": ("str", "out"),
        "max_events": ("int", 100000),
        "threads": ("int", 1),
        "snapshots": ("bool", False),
    },
    "limit": {
        "rel_tol": ("float", 1e-8),
        "abs_tol": ("float", 1e-10),
        "horizon_cap": ("float", 1e3),
    },
    "study": {
        "n_list": ("intlist", [100, 316, 1000, 3162, 10000]),
        "replicas": ("int", 200),
        "epsilon": ("float", 1.0),
        "t": ("float", 2.0),
        "horizon": ("float", 50.0),
    },
    "phase": {
        "init_list": ("pairs", [[2.0, 1.0], [1.0, 2.0], [10.0, 0.25], [0.75, 0.5], [1.0, 1.5]]),
    },
    "equilibria": {
        "search_max": ("float", None),
    },
    "nullclines": {
        "points": ("int", 400),
        "u_max": ("float", None),
    },
    "bifurcation": {
        "kappa_min": ("float", 0.01),
        "kappa_max": ("float", 2.0),
        "points": ("int", 50),
    },
    "validate": {
        "d": ("float", 1.0),
    },
}


def _coerce(section: str, key: str, tag: str, value):
    ok = True
    if tag == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            ok = False
        else:
            value = float(value)
            ok = math.isfinite(value)
    elif tag == "int":
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif tag == "bool":
        ok = isinstance(value, bool)
    elif tag == "str":
        ok = isinstance(value, str)
    elif tag == "intlist":
        ok = (isinstance(value, list) and len(value) > 0
              and all(isinstance(v, int) and not isinstance(v, bool) for v in value))
    elif tag == "pairs":
        ok = isinstance(value, list) and all(
            isinstance(p, list) and len(p) == 2
            and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in p)
            for p in value)
        if ok:
            value = [[float(a), float(b)] for a, b in value]
    if not ok:
        raise ConfigError(f"[{section}] {key} has invalid value {value!r} (expected {tag})")
    return value


def resolve(raw: dict) -> dict:
    """Validate a parsed TOML mapping against the schema and fill defaults.

    Unknown sections or keys raise; keys with a None default stay None
    when absent (they are genuinely optional)."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a table")
    for section in raw:
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(raw[section], dict):
            raise ConfigError(f"[{section}] must be a table")
        for key in raw[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
    resolved: dict = {}
    for section, keys in _SCHEMA.items():
        resolved[section] = {}
        for key, (tag, default) in keys.items():
            if section in raw and key in raw[section]:
                resolved[section][key] = _coerce(section, key, tag, raw[section][key])
            elif default is _REQUIRED:
                raise ConfigError(f"missing required config key [{section}] {key}")
            else:
                resolved[section][key] = default
    return resolved


@dataclass(frozen=True)
class RunConfig:
    """A fully resolved run configuration with constructed model objects."""

    resolved: dict
    params: ModelParams
    init: InitSpec

    def __eq__(self, other) -> bool:
        return isinstance(other, RunConfig) and self.resolved == other.resolved

    @property
    def run(self) -> dict:
        return self.resolved["run"]

    @property
    def study(self) -> dict:
        return self.resolved["study"]

    @property
    def limit(self) -> dict:
        return self.resolved["limit"]


def _build_rate(resolved: dict):
    rate_cfg = resolved["rate"]
    if rate_cfg["kind"] == "sigmoid":
        return SigmoidRate(rate_cfg["a"])
    if rate_cfg["kind"] == "table":
        knots = rate_cfg["knots"]
        if not knots:
            raise ConfigError("[rate] kind='table' needs a nonempty knots list")
        return TableRate([p[0] for p in knots], [p[1] for p in knots])
    raise ConfigError(f"[rate] kind must be 'sigmoid' or 'table', got {rate_cfg['kind']!r}")


def _build_init(resolved: dict) -> InitSpec:
    init_cfg = resolved["init"]
    if init_cfg["kind"] == "pointmass":
        return PointMass(init_cfg["u"], init_cfg["r"])
    if init_cfg["kind"] == "uniform":
        return UniformBand(init_cfg["u"], init_cfg["r"], init_cfg["relative_width"])
    raise ConfigError(f"[init] kind must be 'pointmass' or 'uniform', got {init_cfg['kind']!r}")


def build(raw: dict) -> RunConfig:
    resolved = resolve(raw)
    params = ModelParams(
        alpha=resolved["model"]["alpha"],
        beta=resolved["model"]["beta"],
        lam=resolved["model"]["lambda"],
        rate=_build_rate(resolved),
    )
    if resolved["run"]["strategy"] not in ("monotone", "global"):
        raise ConfigError(f"[run] strategy must be 'monotone' or 'global'")
    return RunConfig(resolved=resolved, params=params, init=_build_init(resolved))


def load(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = _toml.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") from exc
    return build(raw)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        r = repr(v)
        # keep floats typed as floats on re-parse
        return r if any(c in r for c in ".eE") or r in ("inf", "-inf", "nan") else r + ".0"
    if isinstance(v, str):
        escaped = v.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise ConfigError(f"cannot serialise config value {v!r}")


def emit(resolved: dict) -> str:
    """Render a resolved configuration back to TOML (round-trip exact).

    None-valued optional keys are omitted; re-parsing restores them."""
    out = []
    for section in _SCHEMA:
        body = [(k, v) for k, v in resolved[section].items() if v is not None]
        if not body:
            continue
        out.append(f"[{section}]")
        for k, v in body:
            out.append(f"{k} = {_toml_value(v)}")
        out.append("")
    return "\n".join(out)


def parse_text(text: str) -> RunConfig:
    try:
        raw = _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    return build(raw)
