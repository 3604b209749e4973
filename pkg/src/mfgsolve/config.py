"""Run configuration: strict YAML parsing with defaults, validation, and echo."""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from .grid import Grid
from .model import (
    CouplingSpec,
    HamiltonianSpec,
    ModelParams,
    PotentialSpec,
    SubcriticalityError,
)

COMMANDS = ("solve", "sweep", "flattest", "groundstate", "hopfcole", "verify")


class ConfigError(ValueError):
    pass


_SCHEMA = {
    "command": str,
    "seed": int,
    "grid": {"dim": int, "half_width": float, "points_per_axis": int},
    "model": {
        "C_H": float,
        "gamma": float,
        "C_f": float,
        "alpha": float,
        "M": float,
        "epsilon": float,
        "mollifier_width": float,
        "potential": {
            "form": str,
            "b": float,
            "prefactor": float,
            "minima": list,
            "exponents": list,
        },
    },
    "solver": {
        "theta": float,
        "max_outer": int,
        "tol": float,
        "hjb_tol": float,
        "hjb_max_iter": int,
        "mollified": bool,
        "mollifier_width": float,
        "fp_scheme": str,
        "hjb_order": int,
        "recenter": bool,
    },
    "sweep": {"epsilons": list, "eta": float, "radii": list},
    "flattest": {"epsilons": list},
    "groundstate": {"deltas": list, "b": float},
    "verify": {"fenchel_samples": int, "subadditivity_fractions": list, "competitor_trials": int},
}

_DEFAULTS = {
    "command": "solve",
    "seed": 0,
    "grid": {"dim": 1, "half_width": 8.0, "points_per_axis": 401},
    "model": {
        "C_H": 0.5,
        "gamma": 2.0,
        "C_f": 1.0,
        "alpha": 1.0,
        "M": 1.0,
        "epsilon": 0.25,
        "mollifier_width": 0.05,
        "potential": {"form": "power", "b": 2.0, "prefactor": 1.0},
    },
    "solver": {},
    "sweep": {"epsilons": [0.2, 0.1, 0.05, 0.025], "eta": 0.1, "radii": [1.0, 2.0, 4.0, 8.0, 16.0]},
    "flattest": {"epsilons": [0.2, 0.1, 0.05]},
    "groundstate": {"deltas": [0.5, 0.25, 0.125, 0.0625], "b": 2.0},
    "verify": {"fenchel_samples": 10000, "subadditivity_fractions": [0.25, 0.5, 0.75], "competitor_trials": 50},
}


def _check_keys(data, schema, path=""):
    if not isinstance(data, dict):
        raise ConfigError(f"section '{path or '<root>'}' must be a mapping")
    for key, val in data.items():
        if key not in schema:
            raise ConfigError(f"unknown key '{path}{key}'")
        spec = schema[key]
        if isinstance(spec, dict):
            _check_keys(val, spec, path=f"{path}{key}.")
        elif spec is float:
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                raise ConfigError(f"key '{path}{key}' must be a number, got {val!r}")
        elif spec is int:
            if not isinstance(val, int) or isinstance(val, bool):
                raise ConfigError(f"key '{path}{key}' must be an integer, got {val!r}")
        elif not isinstance(val, spec):
            raise ConfigError(f"key '{path}{key}' must be {spec.__name__}, got {val!r}")


def _merged(defaults, data):
    out = {}
    for key, dval in defaults.items():
        if isinstance(dval, dict):
            out[key] = _merged(dval, data.get(key, {}))
        else:
            out[key] = data.get(key, dval)
    for key, val in data.items():
        if key not in out:
            out[key] = val
    return out


@dataclass
class RunConfig:
    command: str
    seed: int
    raw: dict = field(repr=False, default_factory=dict)

    def grid(self) -> Grid:
        g = self.raw["grid"]
        return Grid(dim=g["dim"], half_width=float(g["half_width"]), points_per_axis=g["points_per_axis"])

    def model(self) -> ModelParams:
        m = self.raw["model"]
        p = m["potential"]
        kwargs = {"form": p["form"]}
        if p["form"] == "power":
            kwargs.update(b=float(p["b"]), prefactor=float(p.get("prefactor", 1.0)))
        elif p["form"] == "polynomial_product":
            kwargs.update(
                prefactor=float(p.get("prefactor", 1.0)),
                minima=tuple(tuple(float(c) for c in _aspoint(xj)) for xj in p["minima"]),
                exponents=tuple(float(b) for b in p["exponents"]),
            )
        try:
            return ModelParams(
                hamiltonian=HamiltonianSpec(C_H=float(m["C_H"]), gamma=float(m["gamma"])),
                coupling=CouplingSpec(C_f=float(m["C_f"]), alpha=float(m["alpha"])),
                potential=PotentialSpec(**kwargs),
                dim=self.raw["grid"]["dim"],
                M=float(m["M"]),
                epsilon=float(m["epsilon"]),
                mollifier_width=float(m["mollifier_width"]),
            )
        except (SubcriticalityError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def solver(self):
        from .mfg import SolverConfig

        try:
            return SolverConfig(**self.raw["solver"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"solver section: {exc}") from exc

    def section(self, name: str) -> dict:
        return self.raw[name]

    def echo(self) -> str:
        return yaml.safe_dump(self.raw, sort_keys=True)


def _aspoint(xj):
    return xj if isinstance(xj, (list, tuple)) else [xj]


def parse_config(text: str, command: str | None = None) -> RunConfig:
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"not valid YAML: {exc}") from exc
    _check_keys(data, _SCHEMA)
    merged = _merged(_DEFAULTS, data)
    if command is not None:
        merged["command"] = command
    cmd = merged["command"]
    if cmd not in COMMANDS:
        raise ConfigError(f"unknown command '{cmd}' (expected one of {', '.join(COMMANDS)})")
    cfg = RunConfig(command=cmd, seed=int(merged["seed"]), raw=merged)
    cfg.model()  # fail fast: subcriticality and positivity gates
    cfg.grid()
    cfg.solver()
    return cfg
