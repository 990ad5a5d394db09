"""Parabolic cylinders, the level/radius ladder, cutoffs and the unit frame.

Diagnostics are evaluated in the unit frame of a physical cylinder
``Q_R(x0, t0)``: ``xi = (x - x0) / R`` and ``tau = (t - t0) / R**alpha``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..operator import Grid
from ..records import RunRecord

__all__ = [
    "CoverageError",
    "ParabolicCylinder",
    "DeGiorgiLadder",
    "degiorgi_levels",
    "smoothstep",
    "smoothstep_slope",
    "UnitFrame",
    "unit_frame",
    "normalize_run",
    "NormalizedRun",
]

TIME_TOL = 1e-9


class CoverageError(ValueError):
    """A cylinder is not covered by the grid or the snapshot times."""


@dataclass(frozen=True)
class ParabolicCylinder:
    """``{|x - x0| < R} x (t0 - R**alpha, t0]``."""

    x0: tuple
    t0: float
    R: float
    alpha: float

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError(f"cylinder radius must be positive, got {self.R}")
        if not 0 < self.alpha < 2:
            raise ValueError(f"alpha must lie in (0, 2), got {self.alpha}")
        object.__setattr__(self, "x0", tuple(np.atleast_1d(np.asarray(self.x0, dtype=float)).tolist()))

    @property
    def t_bottom(self) -> float:
        return self.t0 - self.R**self.alpha

    def shrink(self, factor: float) -> "ParabolicCylinder":
        return ParabolicCylinder(self.x0, self.t0, self.R / factor, self.alpha)

    def space_mask(self, grid: Grid) -> np.ndarray:
        return grid.distance_to_center(self.x0) < self.R

    def time_mask(self, times) -> np.ndarray:
        times = np.asarray(times)
        return (times > self.t_bottom + TIME_TOL * self.R**self.alpha) & (times <= self.t0 + TIME_TOL)

    def check_coverage(self, run: RunRecord) -> None:
        g = run.grid
        if len(self.x0) != g.dim:
            raise CoverageError(f"cylinder centre has dimension {len(self.x0)}, grid has {g.dim}")
        if not g.contains_ball(self.x0, self.R * (1 - 1e-12)):
            raise CoverageError(f"ball of radius {self.R} about {self.x0} leaves the domain")
        if self.t_bottom < run.times[0] - TIME_TOL or self.t0 > run.times[-1] + TIME_TOL:
            raise CoverageError(
                f"time window ({self.t_bottom:.6g}, {self.t0:.6g}] outside the run's [{run.times[0]:.6g}, {run.times[-1]:.6g}]"
            )
        if not self.space_mask(g).any():
            raise CoverageError(f"no grid node within {self.R} of {self.x0}")
        if not self.time_mask(run.times).any():
            raise CoverageError(f"no snapshot in ({self.t_bottom:.6g}, {self.t0:.6g}]")


def smoothstep(s):
    """Cubic ``3s^2 - 2s^3`` clamped to [0, 1]."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def smoothstep_slope(width: float) -> float:
    """Maximum slope of a smoothstep ramp of the given width."""
    return 1.5 / width


@dataclass(frozen=True)
class DeGiorgiLadder:
    m: int
    alpha: float

    @property
    def k(self) -> float:
        return 0.5 * (1.0 - 2.0**-self.m)

    @property
    def R(self) -> float:
        return 0.5 * (1.0 + 2.0**-self.m)

    @property
    def R_next(self) -> float:
        return 0.5 * (1.0 + 2.0 ** -(self.m + 1))

    @property
    def t_bottom(self) -> float:
        return -self.R**self.alpha

    def space_cutoff(self, r):
        """1 on ``|x| <= R_{m+1}``, 0 on ``|x| >= R_m``."""
        r = np.asarray(r, dtype=float)
        return smoothstep((self.R - r) / (self.R - self.R_next))

    def time_cutoff(self, tau):
        """1 on ``tau >= -R_{m+1}^alpha``, 0 on ``tau <= -R_m^alpha``; zero for ``tau > 0``."""
        tau = np.asarray(tau, dtype=float)
        lo, hi = -(self.R**self.alpha), -(self.R_next**self.alpha)
        return np.where(tau > 0, 0.0, smoothstep((tau - lo) / (hi - lo)))

    def cutoff(self, r, tau):
        """``zeta_m(r, tau)`` broadcast over radius and time arrays."""
        return self.space_cutoff(r) * self.time_cutoff(tau)

    @property
    def gradient_bound(self) -> float:
        """Exact maximum of ``|grad zeta_m|``; equals ``6 * 2^m``."""
        return smoothstep_slope(self.R - self.R_next)

    @property
    def time_derivative_bound(self) -> float:
        return smoothstep_slope(self.R**self.alpha - self.R_next**self.alpha)

    def in_cylinder(self, r, tau, level: int | None = None):
        """Indicator of the closed cylinder ``{|x| <= R_j, -R_j^alpha <= tau <= 0}``, ``j`` defaulting to ``m``."""
        R = self.R if level is None else degiorgi_levels(level, self.alpha).R
        r, tau = np.asarray(r), np.asarray(tau)
        return ((r <= R) & (tau >= -(R**self.alpha)) & (tau <= 0)).astype(float)


def degiorgi_levels(m: int, alpha: float) -> DeGiorgiLadder:
    if int(m) != m or m < 0:
        raise ValueError(f"ladder index must be a nonnegative integer, got {m}")
    return DeGiorgiLadder(int(m), float(alpha))


@dataclass
class UnitFrame:
    """A run seen from ``Q_R(x0, t0)`` blown up to unit size."""

    run: RunRecord
    x0: tuple
    t0: float
    R: float
    alpha: float

    @cached_property
    def grid(self) -> Grid:
        g = self.run.grid
        lower = [(a - c) / self.R for a, c in zip(g.lower, self.x0)]
        upper = [(b - c) / self.R for b, c in zip(g.upper, self.x0)]
        return Grid.box(lower, upper, g.shape)

    @cached_property
    def r(self) -> np.ndarray:
        return self.run.grid.distance_to_center(self.x0) / self.R

    @cached_property
    def tau(self) -> np.ndarray:
        return (self.run.times - self.t0) / self.R**self.alpha

    @cached_property
    def dtau(self) -> np.ndarray:
        return self.run.time_weights() / self.R**self.alpha

    @property
    def cell(self) -> float:
        return self.grid.cell_volume

    def window(self, lo: float, hi: float = 0.0, closed_bottom: bool = True) -> np.ndarray:
        """Snapshot indices with ``tau`` in ``[lo, hi]`` (or ``(lo, hi]``)."""
        tol = TIME_TOL
        below = self.tau >= lo - tol if closed_bottom else self.tau > lo + tol
        return np.flatnonzero(below & (self.tau <= hi + tol))

    def require(self, radius: float, tau_lo: float) -> None:
        if not self.run.grid.contains_ball(self.x0, radius * self.R * (1 - 1e-12)):
            raise CoverageError(f"ball of radius {radius * self.R:g} about {self.x0} leaves the domain")
        t_lo = self.t0 + tau_lo * self.R**self.alpha
        if t_lo < self.run.times[0] - TIME_TOL or self.t0 > self.run.times[-1] + TIME_TOL:
            raise CoverageError(f"time range [{t_lo:.6g}, {self.t0:.6g}] not covered by the run")
        if len(self.window(tau_lo)) == 0:
            raise CoverageError(f"no snapshot in [{t_lo:.6g}, {self.t0:.6g}]")


def unit_frame(run: RunRecord, x0, t0: float, R: float = 1.0, alpha: float | None = None) -> UnitFrame:
    if alpha is None:
        alpha = float(run.meta["problem"]["kernel"]["alpha"])
    x0 = tuple(np.atleast_1d(np.asarray(x0, dtype=float)).tolist())
    return UnitFrame(run, x0, float(t0), float(R), float(alpha))


@dataclass
class NormalizedRun:
    run: RunRecord  # copy with u mapped affinely
    lower: float
    upper: float

    @property
    def scale(self) -> float:
        return self.upper - self.lower

    def transformed_beta(self, beta):
        """``beta~(w) = beta((M - m) w + m) / (M - m)`` for a callable ``beta``."""
        m, s = self.lower, self.scale
        return lambda w: np.asarray(beta(s * np.asarray(w) + m)) / s


def normalize_run(run: RunRecord, cyl: ParabolicCylinder) -> NormalizedRun:
    """Affine map of ``u`` onto [0, 1] using its range over ``cyl``; ``v`` is kept."""
    cyl.check_coverage(run)
    sm, tm = cyl.space_mask(run.grid), cyl.time_mask(run.times)
    block = run.u[np.ix_(tm, sm)]
    lo, hi = float(block.min()), float(block.max())
    span = hi - lo
    if span <= 0:
        u = np.zeros_like(run.u)
        span = 1.0
    else:
        u = (run.u - lo) / span
    meta = dict(run.meta)
    meta["normalization"] = {"lower": lo, "upper": hi, "cylinder": [list(cyl.x0), cyl.t0, cyl.R]}
    copy = RunRecord(
        grid=run.grid,
        times=run.times,
        u=u,
        v=run.v,
        extrema=run.extrema,
        dt=run.dt,
        steps_per_snapshot=run.steps_per_snapshot,
        meta=meta,
        newton_iterations=run.newton_iterations,
    )
    return NormalizedRun(copy, lo, lo + span)
