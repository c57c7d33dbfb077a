"""Run configurations: JSON files plus flag overrides, schema-validated.

Unknown keys are rejected exhaustively; flags win over file values.  A
manifest written by a previous run can be passed wherever a config file is
accepted: its embedded config echo is extracted (provenance-first reruns).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Callable

from .errors import ConfigError

__all__ = ["Field", "SCHEMAS", "build_config", "validate_initial_spec"]


@dataclass(frozen=True)
class Field:
    default: Any
    kind: str  # int | float | bool | str | list_int | list_float | dict
    check: Callable[[Any], bool] | None = None
    describe: str = ""


def _positive(v) -> bool:
    return v > 0


def _nonneg(v) -> bool:
    return v >= 0


def validate_initial_spec(spec) -> bool:
    from .initial import InitialLaw
    InitialLaw.from_spec(spec)  # raises ConfigError on bad content
    return True


_INITIAL = {"kind": "gaussian", "mean": 0.0, "std": 1.0}

SCHEMAS: dict[str, dict[str, Field]] = {
    "kernel-check": {
        "p_values": Field([1.0, 2.0, 4.0], "list_float", lambda v: all(p >= 1 for p in v),
                          "Lp exponents, each >= 1"),
        "t_values": Field([0.25, 0.5, 1.0, 2.0, 4.0], "list_float", lambda v: all(t > 0 for t in v)),
        "lam": Field(0.0, "float", _nonneg),
        "chi": Field(1.0, "float", _positive),
        "n_oracle": Field(1000, "int", _positive, "random (x, a, b) triples for the quadrature oracle"),
        "slope_tol": Field(1e-3, "float", _positive),
        "oracle_tol": Field(1e-10, "float", _positive),
        "seed": Field(20240601, "int", _nonneg),
    },
    "simulate": {
        "n_particles": Field(64, "int", _positive),
        "dt": Field(0.005, "float", _positive),
        "n_steps": Field(100, "int", _positive),
        "chi": Field(1.0, "float", _nonneg, "0 disables the interaction"),
        "lam": Field(0.0, "float", _nonneg),
        "r_driftless": Field(0, "int", _nonneg, "0 = fully interacting system"),
        "initial": Field(_INITIAL, "dict", validate_initial_spec),
        "cutoff": Field(True, "bool"),
        "seed": Field(20240601, "int", _nonneg),
    },
    "pde": {
        "x_min": Field(-8.0, "float"),
        "x_max": Field(8.0, "float"),
        "n_cells": Field(801, "int", lambda v: v >= 16),
        "dt": Field(0.005, "float", _positive, "snapshot spacing (particle grid)"),
        "n_steps": Field(100, "int", _positive),
        "pde_dt": Field(0.0, "float", _nonneg, "internal step; 0 = auto (largest stable divisor)"),
        "chi": Field(1.0, "float", _nonneg),
        "lam": Field(0.0, "float", _nonneg),
        "initial": Field(_INITIAL, "dict", validate_initial_spec),
        "seed": Field(20240601, "int", _nonneg),
    },
    "chaos": {
        "n_values": Field([32, 128, 512], "list_int", lambda v: all(n >= 1 for n in v)),
        "n_replicas": Field(16, "int", lambda v: v >= 2),
        "eval_times": Field([0.25, 0.5], "list_float", lambda v: all(t > 0 for t in v)),
        "dt": Field(0.005, "float", _positive),
        "n_steps": Field(100, "int", _positive),
        "chi": Field(1.0, "float", _nonneg),
        "lam": Field(0.0, "float", _nonneg),
        "initial": Field(_INITIAL, "dict", validate_initial_spec),
        "x_min": Field(-8.0, "float"),
        "x_max": Field(8.0, "float"),
        "n_cells": Field(801, "int", lambda v: v >= 16),
        "cutoff": Field(True, "bool"),
        "seed": Field(20240601, "int", _nonneg),
    },
    "stochastic": {
        "analysis": Field("girsanov", "str",
                          lambda v: v in ("girsanov", "lemma31", "expmoment", "novikov")),
        "dt": Field(1.0 / 256.0, "float", _positive),
        "n_steps": Field(64, "int", _positive),
        "n_particles": Field(8, "int", _positive),
        "r_driftless": Field(1, "int", _nonneg),
        "n_samples": Field(10000, "int", _positive),
        "chi": Field(1.0, "float", _nonneg),
        "initial": Field(_INITIAL, "dict", validate_initial_spec),
        # lemma31 options
        "windows": Field([0.02, 0.04, 0.08, 0.16], "list_float", lambda v: all(w > 0 for w in v)),
        "window_anchor": Field(0.05, "float", _nonneg, "t1; windows are [t1, t1 + w]"),
        "restart_point": Field(0.0, "float"),
        # expmoment options
        "alpha": Field(0.5, "float", _positive),
        "scale_inv_n": Field([8, 32, 128], "list_int", lambda v: all(n >= 1 for n in v)),
        "y_law": Field("brownian", "str", lambda v: v in ("brownian", "constant")),
        "y_value": Field(0.0, "float"),
        # novikov options
        "kappa": Field(0.5, "float", _positive),
        "seed": Field(20240601, "int", _nonneg),
    },
    "bench": {
        "n_values": Field([16, 32, 64, 128], "list_int", lambda v: all(n >= 2 for n in v)),
        "dt": Field(0.005, "float", _positive),
        "n_steps": Field(50, "int", _positive),
        "chi": Field(1.0, "float", _nonneg),
        "initial": Field(_INITIAL, "dict", validate_initial_spec),
        "position_tol": Field(1e-12, "float", _positive, "max |cutoff-on - cutoff-off| final positions"),
        "seed": Field(20240601, "int", _nonneg),
    },
}


def _coerce(name: str, field: Field, value):
    try:
        if field.kind == "int":
            if isinstance(value, bool) or int(value) != float(value):
                raise ValueError
            return int(value)
        if field.kind == "float":
            return float(value)
        if field.kind == "bool":
            if isinstance(value, bool):
                return value
            if isinstance(value, str):
                if value.lower() in ("true", "1", "yes"):
                    return True
                if value.lower() in ("false", "0", "no"):
                    return False
            raise ValueError
        if field.kind == "str":
            if not isinstance(value, str):
                raise ValueError
            return value
        if field.kind == "list_int":
            return [int(v) for v in value]
        if field.kind == "list_float":
            return [float(v) for v in value]
        if field.kind == "dict":
            if not isinstance(value, dict):
                raise ValueError
            return value
    except (TypeError, ValueError):
        raise ConfigError(f"config key {name!r}: cannot interpret {value!r} as {field.kind}")
    raise ConfigError(f"schema bug: unknown kind {field.kind}")


def build_config(command: str, file_path: str | None, overrides: dict) -> dict:
    """Merge defaults, config file and flag overrides; validate exhaustively."""
    schema = SCHEMAS[command]
    merged = {k: f.default for k, f in schema.items()}

    if file_path:
        try:
            with open(file_path) as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {file_path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {file_path} is not valid JSON: {exc}")
        if not isinstance(doc, dict):
            raise ConfigError(f"config file {file_path} must contain a JSON object")
        if "config" in doc and "command" in doc:  # a run manifest
            if doc["command"] != command:
                raise ConfigError(
                    f"manifest {file_path} is for command {doc['command']!r}, not {command!r}")
            doc = doc["config"]
        unknown = sorted(set(doc) - set(schema))
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {', '.join(unknown)}")
        merged.update(doc)

    for k, v in overrides.items():
        if v is None:
            continue
        if k not in schema:
            raise ConfigError(f"unknown config key for {command}: {k}")
        merged[k] = v

    out = {}
    for k, f in schema.items():
        val = _coerce(k, f, merged[k])
        if f.check is not None and not f.check(val):
            raise ConfigError(f"config key {k!r}: value {val!r} violates its constraint"
                              + (f" ({f.describe})" if f.describe else ""))
        out[k] = val
    return out
