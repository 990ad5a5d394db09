"""Time integration of the regularized problem in enthalpy form.

The unknown is the enthalpy ``v = beta_eps(u)``; the temperature is recovered
as ``u = phi_eps(v)``. One explicit step is

    v_new = v + dt * L u,        u_new = phi_eps(v_new)

which is a monotone (order-preserving) map whenever
``dt * (sum_j w_ij + s_i) <= inf beta_eps'`` on the range of ``u``. The
implicit step solves ``v_new - dt * L phi_eps(v_new) = v`` by damped Newton.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import linalg

from .kernels import KernelSpec
from .nonlinearity import NonlinearitySpec, RegularizedNonlinearity, regularize
from .operator import Grid, WeightMatrix, apply_operator, build_weights
from .records import (
    EXTREMA_COLUMNS,
    RunRecord,
    read_extrema,
    read_field_csv,
    snapshot_name,
    write_extrema,
    write_field_csv,
    write_meta,
)

__all__ = [
    "ProblemSpec",
    "State",
    "CFLViolation",
    "NewtonError",
    "ResumeError",
    "cfl_timestep",
    "step_explicit",
    "step_implicit",
    "run",
    "epsilon_ladder",
    "LadderReport",
]

logger = logging.getLogger(__name__)

NEWTON_TOL = 1e-10
NEWTON_MAXITER = 50
MIN_DAMPING = 2.0**-10


class CFLViolation(ValueError):
    pass


class NewtonError(RuntimeError):
    def __init__(self, message: str, residuals: list):
        super().__init__(message)
        self.residuals = list(residuals)


class ResumeError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    grid: Grid
    kernel: KernelSpec
    nonlinearity: NonlinearitySpec
    epsilon: float
    u0: np.ndarray
    T: float
    scheme: str = "explicit"
    dt: float | None = None  # None: explicit uses the CFL step; implicit uses 10x CFL
    cfl_safety: float = 0.9
    snapshots: int = 64
    v0: np.ndarray | None = None
    normalization: tuple | None = None
    weights_cache: str | None = None

    def __post_init__(self):
        u0 = np.asarray(self.u0 if self.v0 is None else self.v0, dtype=float)
        if u0.shape != (self.grid.size,):
            raise ValueError(f"initial data has shape {u0.shape}, grid has {self.grid.size} nodes")
        if not np.all(np.isfinite(u0)):
            raise ValueError("initial data must be finite")
        if not self.T >= 0:
            raise ValueError(f"T must be nonnegative, got {self.T}")
        if self.scheme not in ("explicit", "implicit"):
            raise ValueError(f"scheme must be 'explicit' or 'implicit', got {self.scheme!r}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if int(self.snapshots) != self.snapshots or self.snapshots < 1:
            raise ValueError("snapshots must be a positive integer")

    @cached_property
    def reg(self) -> RegularizedNonlinearity:
        return regularize(self.nonlinearity, self.epsilon)

    @cached_property
    def weights(self) -> WeightMatrix:
        return build_weights(self.grid, self.kernel, 0.0, cache_dir=self.weights_cache)

    @cached_property
    def monotone_limit(self) -> float:
        u = self.initial_state.u
        return _cfl_limit(self, float(u.min()), float(u.max()), self.weights)

    def weights_at(self, t: float) -> WeightMatrix:
        if not self.kernel.time_dependent:
            return self.weights
        return build_weights(self.grid, self.kernel, t)

    @cached_property
    def initial_state(self) -> "State":
        if self.v0 is not None:
            v = np.array(self.v0, dtype=float)
            u = np.asarray(self.reg.phi_eps(v), dtype=float)
        else:
            u = np.array(self.u0, dtype=float)
            v = np.asarray(self.reg.beta_eps(u), dtype=float)
            # midpoint selection of the graph at u = 0
            v[u == 0.0] = 0.0
        return State(0.0, 0, u, v)

    def describe(self) -> dict:
        u0 = self.initial_state.u
        return {
            "grid": self.grid.to_dict(),
            "kernel": self.kernel.to_dict(),
            "nonlinearity": self.nonlinearity.to_dict(),
            "epsilon": self.epsilon,
            "T": self.T,
            "scheme": self.scheme,
            "dt_requested": self.dt,
            "cfl_safety": self.cfl_safety,
            "snapshots": int(self.snapshots),
            "initial_data_sha256": hashlib.sha256(np.ascontiguousarray(self.initial_state.v).tobytes()).hexdigest(),
            "initial_range": [float(u0.min()), float(u0.max())],
            "normalization": list(self.normalization) if self.normalization else None,
        }


@dataclass
class State:
    t: float
    step: int
    u: np.ndarray
    v: np.ndarray
    newton_iterations: int = 0


def _cfl_limit(problem: ProblemSpec, u_lo: float, u_hi: float, weights: WeightMatrix) -> float:
    top = float(np.max(weights.diagonal))
    if not top > 0:
        raise ValueError("degenerate operator: all row sums are zero")
    return problem.reg.inf_derivative(min(u_lo, 0.0), max(u_hi, 0.0)) / top


def cfl_timestep(problem: ProblemSpec) -> float:
    """Largest explicit step keeping the update monotone, times the safety factor."""
    return problem.cfl_safety * problem.monotone_limit


def step_explicit(problem: ProblemSpec, state: State, dt: float) -> State:
    w = problem.weights_at(state.t)
    lo, hi = float(state.u.min()), float(state.u.max())
    u0 = problem.initial_state.u
    if w is problem.weights and lo >= min(u0.min(), 0.0) and hi <= max(u0.max(), 0.0):
        # range inside the initial one: reuse the bound computed there
        limit = cfl_timestep(problem) / problem.cfl_safety
    else:
        limit = _cfl_limit(problem, lo, hi, w)
    if dt > limit * (1.0 + 1e-12):
        raise CFLViolation(f"dt={dt:.6g} exceeds the monotonicity limit {limit:.6g}")
    v = state.v + dt * apply_operator(w, state.u)
    u = np.asarray(problem.reg.phi_eps(v), dtype=float)
    return State(state.t + dt, state.step + 1, u, v)


def step_implicit(problem: ProblemSpec, state: State, dt: float) -> State:
    if not dt > 0:
        raise ValueError("dt must be positive")
    w = problem.weights_at(state.t + dt)
    A = w.matrix
    reg = problem.reg
    v_old = state.v
    v = v_old.copy()

    def residual(vv):
        uu = np.asarray(reg.phi_eps(vv), dtype=float)
        return vv - dt * (A @ uu) - v_old, uu

    F, u = residual(v)
    norm = float(np.max(np.abs(F)))
    history = [norm]
    it = 0
    while norm > NEWTON_TOL:
        if it >= NEWTON_MAXITER:
            raise NewtonError(f"Newton did not converge in {NEWTON_MAXITER} iterations (residual {norm:.3e})", history)
        J = -dt * A * np.asarray(reg.phi_eps_prime(v), dtype=float)[None, :]
        J[np.diag_indices_from(J)] += 1.0
        delta = linalg.solve(J, -F, check_finite=False)
        lam = 1.0
        while True:
            v_try = v + lam * delta
            F_try, u_try = residual(v_try)
            n_try = float(np.max(np.abs(F_try)))
            if n_try < norm or lam <= MIN_DAMPING:
                break
            lam *= 0.5
        v, F, u, norm = v_try, F_try, u_try, n_try
        history.append(norm)
        it += 1
    return State(state.t + dt, state.step + 1, u, v, newton_iterations=it)


def _time_grid(problem: ProblemSpec) -> tuple[float, int, int]:
    """``(dt, steps_per_snapshot, snapshots)`` with snapshots falling exactly on steps."""
    S = int(problem.snapshots)
    if problem.T == 0:
        return 0.0, 0, 0
    if problem.dt is not None:
        target = problem.dt
    elif problem.scheme == "explicit":
        target = cfl_timestep(problem)
    else:
        target = 10.0 * cfl_timestep(problem)
    per = max(1, math.ceil(problem.T / (S * target) - 1e-9))
    return problem.T / (S * per), per, S


def _extrema_row(state: State) -> list:
    return [state.step, state.t, state.u.min(), state.u.max(), state.v.min(), state.v.max()]


def run(
    problem: ProblemSpec,
    out_dir=None,
    resume: bool = False,
    meta_extra: dict | None = None,
    stop_after_snapshots: int | None = None,
) -> RunRecord:
    """Integrate to ``T``; snapshots at ``k T / snapshots``, extrema every step.

    With ``out_dir`` each snapshot is written as soon as it is produced, so an
    interrupted run can be continued with ``resume=True``. ``stop_after_snapshots``
    halts early (used to exercise resume).
    """
    dt, per, S = _time_grid(problem)
    times = [k * problem.T / S for k in range(S + 1)] if S else [0.0]
    step_fn = step_explicit if problem.scheme == "explicit" else step_implicit
    meta = {
        "problem": problem.describe(),
        "dt": dt,
        "steps_per_snapshot": per,
        "snapshot_times": times,
        "cfl_timestep": cfl_timestep(problem) if problem.T > 0 or problem.scheme == "explicit" else None,
        "extrema_columns": list(EXTREMA_COLUMNS),
    }
    if meta_extra:
        meta.update(meta_extra)

    state = problem.initial_state
    us, vs, ext, newton = [state.u], [state.v], [_extrema_row(state)], []
    start = 0
    d = Path(out_dir) if out_dir is not None else None
    if d is not None and resume and (d / "meta.json").exists():
        state, us, vs, ext, start = _load_partial(problem, d, meta)
    elif d is not None:
        d.mkdir(parents=True, exist_ok=True)
        write_meta(d, meta)
        write_field_csv(d / snapshot_name(0), problem.grid, {"u": state.u, "v": state.v})
        write_extrema(d, np.array(ext))

    for k in range(start + 1, S + 1):
        if stop_after_snapshots is not None and k > stop_after_snapshots:
            break
        for _ in range(per):
            state = step_fn(problem, state, dt)
            ext.append(_extrema_row(state))
            newton.append(state.newton_iterations)
        # pin the clock to the snapshot grid so resume sees identical times
        state.t = times[k]
        us.append(state.u)
        vs.append(state.v)
        if d is not None:
            write_field_csv(d / snapshot_name(k), problem.grid, {"u": state.u, "v": state.v})
            write_extrema(d, np.array(ext))
    n = len(us)
    record = RunRecord(
        grid=problem.grid,
        times=np.asarray(times[:n], dtype=float),
        u=np.array(us),
        v=np.array(vs),
        extrema=np.array(ext, dtype=float),
        dt=dt,
        steps_per_snapshot=per,
        meta=meta,
        newton_iterations=newton,
    )
    return record


def _load_partial(problem: ProblemSpec, d: Path, meta: dict):
    old = json.loads((d / "meta.json").read_text())
    fresh = json.loads(json.dumps(meta["problem"]))
    if old.get("problem") != fresh or old.get("dt") != meta["dt"]:
        raise ResumeError(f"{d} holds a different problem; refusing to resume")
    us, vs = [], []
    k = 0
    while (d / snapshot_name(k)).exists() and k < len(meta["snapshot_times"]):
        data = read_field_csv(d / snapshot_name(k))
        us.append(data["u"])
        vs.append(data["v"])
        k += 1
    if not us:
        raise ResumeError(f"{d} has no snapshots to resume from")
    last = k - 1
    step = last * meta["steps_per_snapshot"]
    ext = [list(r) for r in read_extrema(d) if int(r[0]) <= step]
    for r in ext:
        r[0] = int(r[0])
    state = State(meta["snapshot_times"][last], step, us[-1], vs[-1])
    logger.info("resuming %s from snapshot %d (t=%g)", d, last, state.t)
    return state, us, vs, ext, last


@dataclass
class LadderReport:
    epsilons: list
    runs: list = field(repr=False)
    distances: list  # ||u^{eps_i}(T) - u^{eps_{i+1}}(T)||_inf
    linf_bounds: list
    decay: list  # per-eps value from the analysis hook, or None
    cauchy_factor: float = 1.5

    @property
    def cauchy_ok(self) -> bool:
        d = self.distances
        return all(d[i + 1] <= self.cauchy_factor * d[i] + 1e-14 for i in range(len(d) - 1))

    @property
    def linf_spread(self) -> float:
        return float(max(self.linf_bounds) - min(self.linf_bounds))

    def rows(self) -> list[dict]:
        out = []
        for i, e in enumerate(self.epsilons):
            out.append(
                {
                    "epsilon": e,
                    "linf_bound": self.linf_bounds[i],
                    "distance_to_next": self.distances[i] if i < len(self.distances) else None,
                    "decay": self.decay[i],
                }
            )
        return out


def epsilon_ladder(
    problem: ProblemSpec,
    epsilons,
    analysis_hook: Callable[[RunRecord], float] | None = None,
    out_dir=None,
) -> LadderReport:
    eps = [float(e) for e in epsilons]
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilons must be strictly decreasing")
    runs = []
    for e in eps:
        sub = None if out_dir is None else Path(out_dir) / f"eps_{e:.0e}"
        runs.append(run(replace(problem, epsilon=e), out_dir=sub))
    finals = [r.final_u for r in runs]
    distances = [float(np.max(np.abs(a - b))) for a, b in zip(finals, finals[1:])]
    decay = [analysis_hook(r) if analysis_hook else None for r in runs]
    return LadderReport(eps, runs, distances, [r.linf_bound for r in runs], decay)
