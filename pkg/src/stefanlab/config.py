"""Experiment configuration: flat dotted-key TOML files.

Example::

    grid.lower = [-4.0]
    grid.upper = [4.0]
    grid.nodes = [512]
    kernel.alpha = 1.0
    nonlinearity.kind = "stefan"
    problem.epsilon = 1e-3
    problem.T = 2.0

Every key is validated against ``SCHEMA``; errors name the offending key.
"""

from __future__ import annotations

import copy
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .kernels import FORMS, KernelSpec
from .nonlinearity import NonlinearitySpec
from .operator import Grid
from .solver import ProblemSpec

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "SCHEMA", "initial_data"]


class ConfigError(ValueError):
    pass


def _positive(v):
    return v > 0


def _in_open_unit(v):
    return 0 < v < 1


# key -> (type(s), default, check, message)
SCHEMA: dict = {
    "grid.lower": (list, [-4.0], None, ""),
    "grid.upper": (list, [4.0], None, ""),
    "grid.nodes": (list, [512], None, ""),
    "kernel.form": (str, "pure_fractional", lambda v: v in FORMS, f"must be one of {FORMS}"),
    "kernel.alpha": (float, 1.0, lambda v: 0 < v < 2, "must lie in (0, 2)"),
    "kernel.lambda": (float, 1.0, lambda v: v >= 1, "must be >= 1"),
    "kernel.truncation_radius": (float, 2.0, _positive, "must be positive"),
    "nonlinearity.kind": (str, "stefan", lambda v: v in ("stefan", "porous", "polynomial"),
                          "must be one of ('stefan', 'porous', 'polynomial')"),
    "nonlinearity.a": (float, 1.0, _positive, "must be positive"),
    "nonlinearity.b": (float, 1.0, _positive, "must be positive"),
    "nonlinearity.m": (float, 2.0, lambda v: v > 1, "must exceed 1"),
    "nonlinearity.c1": (float, 1e-6, _positive, "must be positive"),
    "nonlinearity.slope": (float, 1.0, _positive, "must be positive"),
    "nonlinearity.cubic": (float, 0.0, lambda v: v >= 0, "must be nonnegative"),
    "initial.shape": (str, "hat", lambda v: v in ("hat", "gaussian", "constant", "random"),
                      "must be one of ('hat', 'gaussian', 'constant', 'random')"),
    "initial.height": (float, 1.0, None, ""),
    "initial.low": (float, 0.0, None, ""),
    "initial.center": (list, None, None, ""),
    "initial.width": (float, 1.0, _positive, "must be positive"),
    "initial.seed": (int, 0, None, ""),
    "problem.epsilon": (float, 1e-3, _positive, "must be positive"),
    "problem.epsilon_ladder": (list, None, None, ""),
    "problem.scheme": (str, "explicit", lambda v: v in ("explicit", "implicit"), "must be 'explicit' or 'implicit'"),
    "problem.T": (float, 1.0, lambda v: v >= 0, "must be nonnegative"),
    "problem.dt": (float, None, _positive, "must be positive"),
    "problem.cfl_safety": (float, 0.9, lambda v: 0 < v <= 1, "must lie in (0, 1]"),
    "analysis.enabled": (bool, True, None, ""),
    "analysis.center": (list, None, None, ""),
    "analysis.t0": (float, None, None, ""),
    "analysis.radius": (float, 1.0, _positive, "must be positive"),
    "analysis.depth": (int, 3, lambda v: v >= 1, "must be >= 1"),
    "analysis.levels": (int, 6, lambda v: v >= 1, "must be >= 1"),
    "analysis.energy_k": (float, 0.25, lambda v: 0 <= v < 1, "must lie in [0, 1)"),
    "analysis.energy_level": (int, 0, lambda v: v >= 0, "must be >= 0"),
    "analysis.lambda": (float, 0.25, _in_open_unit, "must lie in (0, 1)"),
    "analysis.sigma": (float, 0.1, _positive, "must be positive"),
    "analysis.c0": (float, 0.5, _in_open_unit, "must lie in (0, 1)"),
    "analysis.delta": (float, 0.01, _positive, "must be positive"),
    "analysis.porous_C": (float, None, _positive, "must be positive"),
    "analysis.porous_N0": (float, None, _positive, "must be positive"),
    "output.directory": (str, "runs/experiment", None, ""),
    "output.snapshots": (int, 64, lambda v: v >= 1, "must be >= 1"),
    "output.weights_cache": (str, None, None, ""),
}

SCALAR_KEYS = [k for k, (t, *_rest) in SCHEMA.items() if t in (float, int, str, bool)]


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(key: str, value):
    typ, _default, check, msg = SCHEMA[key]
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(f"{key}: must be finite, got {value!r}")
    elif typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
    elif typ is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true or false, got {value!r}")
    elif typ is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
    elif typ is list:
        if not isinstance(value, list):
            value = [value]
        if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value):
            raise ConfigError(f"{key}: expected a list of numbers, got {value!r}")
    if check is not None and not check(value):
        raise ConfigError(f"{key}: {msg}, got {value!r}")
    return value


@dataclass
class ExperimentConfig:
    values: dict  # fully populated flat mapping
    source: str | None = None

    def __getitem__(self, key):
        return self.values[key]

    def with_value(self, key: str, value) -> "ExperimentConfig":
        if key not in SCHEMA:
            raise ConfigError(f"{key}: unknown configuration key")
        raw = copy.deepcopy(self.values)
        raw[key] = value
        return parse_config(raw, self.source)

    def to_dict(self) -> dict:
        return dict(self.values)

    @property
    def dim(self) -> int:
        return len(self.values["grid.nodes"])

    def grid(self) -> Grid:
        v = self.values
        try:
            return Grid.box(v["grid.lower"], v["grid.upper"], [int(n) for n in v["grid.nodes"]])
        except ValueError as exc:
            raise ConfigError(f"grid: {exc}") from exc

    def kernel(self) -> KernelSpec:
        v = self.values
        return KernelSpec(
            alpha=v["kernel.alpha"],
            Lambda=v["kernel.lambda"],
            dim=self.dim,
            truncation_radius=v["kernel.truncation_radius"],
            form=v["kernel.form"],
        )

    def nonlinearity(self) -> NonlinearitySpec:
        v = self.values
        kind = v["nonlinearity.kind"]
        if kind == "stefan":
            return NonlinearitySpec.stefan(v["nonlinearity.a"], v["nonlinearity.b"])
        if kind == "porous":
            return NonlinearitySpec.porous(v["nonlinearity.m"], v["nonlinearity.c1"])
        return NonlinearitySpec.polynomial(v["nonlinearity.slope"], v["nonlinearity.cubic"])

    @property
    def epsilons(self) -> list:
        lad = self.values["problem.epsilon_ladder"]
        return list(lad) if lad else [self.values["problem.epsilon"]]

    @property
    def is_ladder(self) -> bool:
        return bool(self.values["problem.epsilon_ladder"])

    def problem(self, epsilon: float | None = None) -> ProblemSpec:
        v = self.values
        grid = self.grid()
        return ProblemSpec(
            grid=grid,
            kernel=self.kernel(),
            nonlinearity=self.nonlinearity(),
            epsilon=v["problem.epsilon"] if epsilon is None else epsilon,
            u0=initial_data(grid, v),
            T=v["problem.T"],
            scheme=v["problem.scheme"],
            dt=v["problem.dt"],
            cfl_safety=v["problem.cfl_safety"],
            snapshots=v["output.snapshots"],
            weights_cache=v["output.weights_cache"],
        )

    @property
    def center(self) -> list:
        c = self.values["analysis.center"]
        if c is None:
            g = self.grid()
            return [0.5 * (a + b) for a, b in zip(g.lower, g.upper)]
        return list(c)

    @property
    def t0(self) -> float:
        t0 = self.values["analysis.t0"]
        return self.values["problem.T"] if t0 is None else t0


def initial_data(grid: Grid, v: dict) -> np.ndarray:
    shape = v["initial.shape"]
    center = v["initial.center"] or [0.5 * (a + b) for a, b in zip(grid.lower, grid.upper)]
    r = grid.distance_to_center(center)
    height, width = v["initial.height"], v["initial.width"]
    if shape == "hat":
        return height * np.maximum(1.0 - r / width, 0.0)
    if shape == "gaussian":
        return height * np.exp(-((r / width) ** 2))
    if shape == "constant":
        return np.full(grid.size, height)
    rng = np.random.default_rng(v["initial.seed"])
    return rng.uniform(v["initial.low"], height, grid.size)


def parse_config(raw: dict, source: str | None = None) -> ExperimentConfig:
    flat = _flatten(raw)
    unknown = sorted(set(flat) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown configuration key")
    values = {}
    for key, (_t, default, _c, _m) in SCHEMA.items():
        values[key] = _coerce(key, flat[key]) if key in flat and flat[key] is not None else copy.deepcopy(default)
    dim = len(values["grid.nodes"])
    if dim not in (1, 2):
        raise ConfigError(f"grid.nodes: dimension must be 1 or 2, got {dim}")
    for key in ("grid.lower", "grid.upper"):
        if len(values[key]) != dim:
            raise ConfigError(f"{key}: expected {dim} entries to match grid.nodes")
    for key in ("initial.center", "analysis.center"):
        if values[key] is not None and len(values[key]) != dim:
            raise ConfigError(f"{key}: expected {dim} entries to match grid.nodes")
    if any(n < 1 or int(n) != n for n in values["grid.nodes"]):
        raise ConfigError("grid.nodes: entries must be positive integers")
    lad = values["problem.epsilon_ladder"]
    if lad is not None:
        if len(lad) < 2 or any(e <= 0 for e in lad) or any(b >= a for a, b in zip(lad, lad[1:])):
            raise ConfigError("problem.epsilon_ladder: need at least two positive, strictly decreasing values")
    cfg = ExperimentConfig(values, source)
    cfg.grid()  # spacing checks
    _check_cylinder(cfg)
    return cfg


def _check_cylinder(cfg: ExperimentConfig) -> None:
    v = cfg.values
    if not v["analysis.enabled"] or v["problem.T"] == 0:
        return
    g = cfg.grid()
    R = v["analysis.radius"]
    if not g.contains_ball(cfg.center, R * (1 - 1e-12)):
        raise ConfigError(f"analysis.radius: ball of radius {R} about {cfg.center} is not inside the domain")
    t0 = cfg.t0
    if not (t0 <= v["problem.T"] + 1e-12 and t0 - R ** v["kernel.alpha"] >= -1e-12):
        raise ConfigError(
            f"analysis.t0: cylinder time range ({t0 - R ** v['kernel.alpha']:.6g}, {t0:.6g}] must lie inside (0, T]"
        )


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    if p.suffix == ".json":
        meta = json.loads(text)
        try:
            return parse_config(meta["experiment"]["config"], str(p))
        except KeyError as exc:
            raise ConfigError(f"{p}: no embedded experiment config") from exc
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    return parse_config(raw, str(p))
