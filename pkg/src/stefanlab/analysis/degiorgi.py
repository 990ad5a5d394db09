"""Truncation energies on the level ladder, the smallness threshold, the
energy recursion, and the empirical constant of the Caccioppoli-type energy
inequality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..operator import pure_weights, quadratic_energy
from ..records import RunRecord
from .cylinders import DeGiorgiLadder, UnitFrame, unit_frame

__all__ = [
    "truncation_energy",
    "degiorgi_threshold",
    "simulate_recursion",
    "RecursionTrace",
    "energy_inequality_report",
    "EnergyReport",
    "frame_for",
]

ZERO_FLOOR = 1e-300
DIVERGENCE_CAP = 1e12


def frame_for(run_or_frame, x0=None, t0=None, R: float = 1.0) -> UnitFrame:
    """Accept a :class:`UnitFrame` as is, or build one around ``(x0, t0)`` (default: domain centre, final time)."""
    if isinstance(run_or_frame, UnitFrame):
        return run_or_frame
    run: RunRecord = run_or_frame
    g = run.grid
    if x0 is None:
        x0 = [0.5 * (a + b) for a, b in zip(g.lower, g.upper)]
    if t0 is None:
        t0 = float(run.times[-1])
    return unit_frame(run, x0, t0, R)


def _energy_terms(frame: UnitFrame, f: np.ndarray, idx: np.ndarray):
    """``(sup_t sum f^2 h^n, sum_t |f|^2_{H^{alpha/2}} dtau)`` over snapshots ``idx``; ``f`` is (snapshots, nodes)."""
    if len(idx) == 0:
        return 0.0, 0.0
    block = f[idx]
    l2 = np.sum(block * block, axis=1) * frame.cell
    w = pure_weights(frame.grid, frame.alpha)
    semis = quadratic_energy(w, block.T)
    return float(np.max(l2)), float(np.sum(semis * frame.dtau[idx]))


def truncation_energy(run, ladder: DeGiorgiLadder, x0=None, t0=None, R: float = 1.0) -> float:
    """``I_m = sup_t int (zeta_m u_m)^2 + int |zeta_m u_m|^2_{H^{alpha/2}} dt`` with ``u_m = (u - k_m)^+``.

    Evaluated in the unit frame, over snapshots with ``-R_m^alpha <= tau <= 0``.
    """
    frame = frame_for(run, x0, t0, R)
    frame.require(ladder.R, ladder.t_bottom)
    idx = frame.window(ladder.t_bottom)
    zeta = ladder.cutoff(frame.r[None, :], frame.tau[:, None])
    f = zeta * np.maximum(frame.run.u - ladder.k, 0.0)
    sup_l2, integral = _energy_terms(frame, f, idx)
    return sup_l2 + integral


def degiorgi_threshold(C: float, n: int, alpha: float) -> float:
    """``4^(-4 n^2 / alpha^2) * C^(-n / alpha)``."""
    if not C > 0:
        raise ValueError(f"C must be positive, got {C}")
    if not 0 < alpha <= 2:
        raise ValueError(f"alpha must lie in (0, 2], got {alpha}")
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    return 4.0 ** (-4.0 * n * n / alpha**2) * C ** (-n / alpha)


@dataclass
class RecursionTrace:
    values: list
    threshold: float
    convention: str
    diverged: bool
    decayed: bool

    def first_below(self, level: float = 1e-12) -> int | None:
        for i, v in enumerate(self.values):
            if v < level:
                return i
        return None

    @property
    def monotone(self) -> bool:
        vals = self.values
        return all(b <= a for a, b in zip(vals, vals[1:]))


def simulate_recursion(
    I0: float, C: float, n: int, alpha: float, steps: int = 200, convention: str = "literal"
) -> RecursionTrace:
    """Iterate the energy recursion with equality.

    ``literal``: ``I_m = C 4^(2m) I_{m-2}^(1 + alpha/n)`` seeded ``I_0 = I_1 = I0``
    (even and odd subsequences interleaved).

    ``standard``: ``Y_{k+1} = C 256^k Y_k^(1 + alpha/n)``, ``Y_0 = I0``, the
    form whose critical seed is exactly :func:`degiorgi_threshold`.
    """
    if I0 < 0:
        raise ValueError("I0 must be nonnegative")
    if steps < 2:
        raise ValueError("steps must be >= 2")
    if convention not in ("literal", "standard"):
        raise ValueError(f"unknown convention {convention!r}")
    p = 1.0 + alpha / n
    logC = math.log(C)
    thr = degiorgi_threshold(C, n, alpha)

    def advance(prev: float, log_gain: float) -> float:
        if prev <= ZERO_FLOOR:
            return 0.0
        # in logs so that huge intermediates never overflow
        lv = logC + log_gain + p * math.log(prev)
        if lv > math.log(DIVERGENCE_CAP) + 1.0:
            return math.inf
        return math.exp(lv) if lv > math.log(ZERO_FLOOR) else 0.0

    vals = [float(I0)]
    if convention == "literal":
        vals.append(float(I0))
        for m in range(2, steps + 1):
            vals.append(advance(vals[m - 2], 2 * m * math.log(4.0)))
            if not math.isfinite(vals[-1]) or vals[-1] > DIVERGENCE_CAP:
                break
    elif I0 > 0:
        # Y_k = thr 256^(-k/beta) exp(e_k) with e_{k+1} = (1 + beta) e_k exactly; iterating the
        # offset from the critical trajectory keeps seeds a few ulps from thr resolvable
        beta = alpha / n
        log_thr, step_log = math.log(thr), math.log(256.0) / beta
        e = math.log1p((I0 - thr) / thr)
        for k in range(1, steps + 1):
            e *= p
            lv = log_thr - k * step_log + e
            if lv > math.log(DIVERGENCE_CAP) + 1.0:
                vals.append(math.inf)
                break
            vals.append(math.exp(lv) if lv > math.log(ZERO_FLOOR) else 0.0)
            if vals[-1] == 0.0:
                break
    else:
        vals.extend([0.0] * steps)
    diverged = not math.isfinite(vals[-1]) or vals[-1] > DIVERGENCE_CAP
    decayed = not diverged and vals[-1] <= ZERO_FLOOR
    return RecursionTrace(vals, thr, convention, diverged, decayed)


@dataclass
class EnergyReport:
    lhs: float
    rhs: float
    R: float
    alpha: float
    k: float

    @property
    def c_emp(self) -> float:
        if self.rhs == 0:
            return 0.0 if self.lhs == 0 else math.inf
        return self.lhs / (self.R ** (-self.alpha) * self.rhs)

    @property
    def vacuous(self) -> bool:
        return self.lhs == 0 and self.rhs == 0

    @property
    def violation(self) -> bool:
        return self.rhs == 0 and self.lhs > 0


def energy_inequality_report(run, k: float, ladder: DeGiorgiLadder, x0=None, t0=None, R: float = 1.0) -> EnergyReport:
    """Empirical constant of the energy inequality with cutoff ``zeta_m`` and ``R = R_m``.

    LHS: ``sup_t int (zeta (u-k)^+)^2 + int |zeta (u-k)^+|^2_{H^{alpha/2}} dt`` for ``-1 <= tau <= 0``.
    RHS integrand: ``((u-k)^+)^2 + (u-k)^+`` over ``B_1 x (-1, 0]``.
    """
    frame = frame_for(run, x0, t0, R)
    frame.require(1.0, -1.0)
    idx = frame.window(-1.0)
    pos = np.maximum(frame.run.u - k, 0.0)
    zeta = ladder.cutoff(frame.r[None, :], frame.tau[:, None])
    sup_l2, integral = _energy_terms(frame, zeta * pos, idx)
    inner = frame.r < 1.0
    rhs_idx = frame.window(-1.0, closed_bottom=False)
    block = pos[np.ix_(rhs_idx, inner)]
    rhs = float(np.sum((block * block + block).sum(axis=1) * frame.dtau[rhs_idx]) * frame.cell)
    return EnergyReport(sup_l2 + integral, rhs, ladder.R, frame.alpha, k)
