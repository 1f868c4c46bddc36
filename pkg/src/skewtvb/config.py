"""Run configuration: a TOML file validated against a strict key schema.

Unknown keys fail fast with the offending dotted path; missing required keys
are reported the same way.  The resolved config (defaults filled in, CLI
overrides applied) is what gets hashed into every output file.
"""

from __future__ import annotations

from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .scenarios import KNOWN_ESTIMATORS


class ConfigError(ValueError):
    """Configuration file problem; message names the offending key."""


_NUMBER = (int, float)

# leaf schema: key -> (allowed types, default); required leaves have _REQUIRED
_REQUIRED = object()

_RUN_SCHEMA = {
    "seed": (int, _REQUIRED),
    "runs": (int, 100),
    "jobs": (int, 1),
    "out": (str, "out"),
}

_SCENARIO_SCHEMA = {
    "kind": (str, "tracking"),
    "K": (int, 100),
    "q": (_NUMBER, 0.5),
    "delta": (_NUMBER, 5.0),
    "nu": (_NUMBER, 4.0),
    "r": (_NUMBER, 1.0),
    "constellation_seed": (int, None),
    "outlier_c": (_NUMBER, None),
}

_ESTIMATOR_SCHEMA = {
    "kind": (str, None),
    "max_iters": (int, 5),
    "convergence_tol": (_NUMBER, 1e-6),
    "ordering": (str, "optimal"),
    "ordering_seed": (int, None),
    "n_particles": (int, 2000),
    "gate_quantile": (_NUMBER, 0.99),
    "iters_sweep": (list, None),
}

_TRUNC_BENCH_SCHEMA = {
    "cases": (int, 200),
    "c": (list, [5.0, 10.0, 25.0]),
    "delta": (_NUMBER, 20.0),
    "oracle_samples": (int, 200_000),
    "random_cases": (int, 100),
    "random_dim": (int, 3),
}

_CRLB_SCHEMA = {
    "delta_c": (list, [0.0, 2.0, 5.0]),
    "nu": (list, [4.0, 10.0, 1e12]),
    "K": (int, 50),
    "runs_per_cell": (int, 0),
    "pf_particles": (int, 2000),
    "with_stf": (bool, True),
}

_SCENARIO_KINDS = ("tracking", "single_epoch", "crlb_study")


def _check_leaf(path: str, value, spec):
    types, _ = spec
    if isinstance(value, bool) and types is int:
        raise ConfigError(f"config key {path} must be an integer, got a boolean")
    if not isinstance(value, types):
        raise ConfigError(f"config key {path} has wrong type {type(value).__name__}")
    return value


def _resolve_table(prefix: str, table: dict, schema: dict) -> dict:
    out = {}
    for key in table:
        if key not in schema:
            raise ConfigError(f"unknown config key: {prefix}.{key}")
    for key, spec in schema.items():
        if key in table:
            out[key] = _check_leaf(f"{prefix}.{key}", table[key], spec)
        elif spec[1] is _REQUIRED:
            raise ConfigError(f"missing config key: {prefix}.{key}")
        elif spec[1] is not None:
            out[key] = spec[1]
    return out


def resolve_config(raw: dict) -> dict:
    """Validate a parsed TOML document and fill in defaults."""
    known_tables = {"run", "scenario", "estimators", "trunc_bench", "crlb"}
    for key in raw:
        if key not in known_tables:
            raise ConfigError(f"unknown config key: {key}")
    if "run" not in raw:
        raise ConfigError("missing config key: run.seed")
    cfg = {"run": _resolve_table("run", raw["run"], _RUN_SCHEMA)}
    cfg["scenario"] = _resolve_table("scenario", raw.get("scenario", {}),
                                     _SCENARIO_SCHEMA)
    if cfg["scenario"]["kind"] not in _SCENARIO_KINDS:
        raise ConfigError(
            f"config key scenario.kind must be one of {_SCENARIO_KINDS}, "
            f"got {cfg['scenario']['kind']!r}")
    estimators = {}
    for name, table in raw.get("estimators", {}).items():
        if not isinstance(table, dict):
            raise ConfigError(f"config key estimators.{name} must be a table")
        est = _resolve_table(f"estimators.{name}", table, _ESTIMATOR_SCHEMA)
        kind = est.get("kind", name)
        if kind not in KNOWN_ESTIMATORS:
            raise ConfigError(
                f"config key estimators.{name}.kind: unknown estimator {kind!r}")
        est["kind"] = kind
        estimators[name] = est
    cfg["estimators"] = estimators
    cfg["trunc_bench"] = _resolve_table("trunc_bench", raw.get("trunc_bench", {}),
                                        _TRUNC_BENCH_SCHEMA)
    cfg["crlb"] = _resolve_table("crlb", raw.get("crlb", {}), _CRLB_SCHEMA)
    return cfg


def load_config(path) -> dict:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}")
    return resolve_config(raw)
