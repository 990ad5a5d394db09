"""Level-set measures behind the isoperimetric-type alternative.

All measures are discrete space-time sums ``count * h^n * dtau`` in the unit
frame of the diagnostic cylinder, so they are additive over disjoint cylinders.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..records import RunRecord
from .cylinders import ParabolicCylinder, smoothstep, unit_frame

__all__ = ["DiagnosticTriple", "isoperimetric_diagnostic", "rescaled_field", "space_time_measure"]

NEGATIVE_TOL = 1e-10


def rescaled_field(u, sigma: float, lam: float, k: int):
    """``v_k = 2 u / (lam^k sigma)``."""
    return 2.0 * np.asarray(u, dtype=float) / (lam**k * sigma)


def space_time_measure(mask: np.ndarray, cell: float, dtau: np.ndarray) -> float:
    """``sum`` of ``cell * dtau`` over the True entries of a (snapshots, nodes) mask."""
    return float(np.sum(mask.sum(axis=1) * dtau) * cell)


@dataclass
class DiagnosticTriple:
    A: float  # |{v >= 1} & Q_1|
    B: float  # |{lam < v < 1} & Q_1|
    C: float  # mean over Q_1/2 of ((1 - v/lam)^+)^2
    measure_q1: float
    measure_q_half: float
    lam: float
    sigma: float
    c0: float
    delta: float
    times: np.ndarray = field(repr=False)
    E: np.ndarray = field(repr=False)
    M: np.ndarray = field(repr=False)

    @property
    def hypothesis(self) -> bool:
        return self.A >= self.c0 * self.sigma * self.measure_q1 and self.B < self.delta * self.measure_q1

    @property
    def conclusion(self) -> bool:
        return self.C < self.sigma

    @property
    def implication(self) -> bool:
        return (not self.hypothesis) or self.conclusion

    @property
    def vacuous(self) -> bool:
        return not self.hypothesis


def _exterior_cutoff_mass(lower, upper, dim: int) -> float:
    """``int xi^2`` over the part of ``B_2`` outside the (unit-frame) domain box."""
    m = 4000 if dim == 1 else 400
    s = -2.0 + (np.arange(m) + 0.5) * (4.0 / m)
    pts = np.stack(np.meshgrid(*([s] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    r = np.linalg.norm(pts, axis=1)
    outside = np.zeros(len(pts), dtype=bool)
    for a in range(dim):
        outside |= (pts[:, a] <= lower[a]) | (pts[:, a] >= upper[a])
    xi = smoothstep(2.0 - r)
    return float(np.sum(xi[outside] ** 2) * (4.0 / m) ** dim)


def isoperimetric_diagnostic(
    run: RunRecord,
    lam: float,
    cyl: ParabolicCylinder,
    sigma: float,
    c0: float,
    delta: float = 0.01,
    values=None,
) -> DiagnosticTriple:
    """Measure ``(A, B, C)`` on ``cyl`` and test ``(A >= c0 sigma |Q_1| and B < delta |Q_1|) => C < sigma``.

    ``values`` (snapshots x nodes) defaults to ``run.u``. Also returns, for
    each snapshot with ``-1 <= tau <= 0``, ``E(t) = int (xi (2 lam - v)^+)^2``
    with ``1_{B_1} <= xi <= 1_{B_2}`` and ``M(t) = |{lam <= v <= 1} & B_1|``.
    """
    if not 0 < lam < 1:
        raise ValueError(f"lambda must lie in (0, 1), got {lam}")
    if not (sigma > 0 and 0 < c0 < 1 and delta > 0):
        raise ValueError("need sigma > 0, 0 < c0 < 1 and delta > 0")
    cyl.check_coverage(run)
    frame = unit_frame(run, cyl.x0, cyl.t0, cyl.R, cyl.alpha)
    v = np.asarray(run.u if values is None else values, dtype=float)
    if v.shape != run.u.shape:
        raise ValueError(f"values have shape {v.shape}, run has {run.u.shape}")

    r, cell = frame.r, frame.cell
    idx1 = frame.window(-1.0, closed_bottom=False)
    in1 = r < 1.0
    block = v[np.ix_(idx1, in1)]
    if block.size and block.min() < -NEGATIVE_TOL:
        raise ValueError(f"hypothesis v >= 0 violated: min over Q_1 is {block.min():.3e}")
    dt1 = frame.dtau[idx1]
    q1 = space_time_measure(np.ones_like(block, dtype=bool), cell, dt1)
    A = space_time_measure(block >= 1.0, cell, dt1)
    B = space_time_measure((block > lam) & (block < 1.0), cell, dt1)

    idxh = frame.window(-(0.5**frame.alpha), closed_bottom=False)
    inh = r < 0.5
    half = v[np.ix_(idxh, inh)]
    dth = frame.dtau[idxh]
    qh = space_time_measure(np.ones_like(half, dtype=bool), cell, dth)
    integrand = np.maximum(1.0 - half / lam, 0.0) ** 2
    C = float(np.sum(integrand.sum(axis=1) * dth) * cell / qh) if qh > 0 else 0.0

    lam2 = 2.0 * lam
    idxE = frame.window(-1.0)
    xi = smoothstep(2.0 - r)
    ext = lam2**2 * _exterior_cutoff_mass(frame.grid.lower, frame.grid.upper, frame.grid.dim)
    E = np.sum((xi[None, :] * np.maximum(lam2 - v[idxE], 0.0)) ** 2, axis=1) * cell + ext
    M = np.sum(((v[idxE] >= lam) & (v[idxE] <= 1.0)) & in1[None, :], axis=1) * cell
    return DiagnosticTriple(A, B, C, q1, qh, lam, sigma, c0, delta, run.times[idxE], E, M)
