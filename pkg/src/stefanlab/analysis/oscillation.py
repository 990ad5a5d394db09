"""Oscillation over nested cylinders and continuity-modulus fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from ..records import RunRecord
from .cylinders import CoverageError, ParabolicCylinder

__all__ = [
    "oscillation",
    "DecayRow",
    "DecayReport",
    "oscillation_decay_report",
    "ModulusFit",
    "fit_modulus",
    "alternative_constants",
    "fit_sigma_constants",
    "NOISE_FLOOR",
]

NOISE_FLOOR = 1e-10
SHRINK = 4.0
OFFSET_BOUNDS = (0.05, 64.0)


def oscillation(run: RunRecord, cyl: ParabolicCylinder) -> float:
    """``max - min`` of ``u`` over snapshot nodes inside the cylinder."""
    cyl.check_coverage(run)
    block = run.u[np.ix_(cyl.time_mask(run.times), cyl.space_mask(run.grid))]
    if block.size == 0:
        raise CoverageError("cylinder contains no space-time nodes")
    return float(block.max() - block.min())


@dataclass
class DecayRow:
    level: int
    radius: float
    osc: float
    mu: float | None  # osc_{j+1} / osc_j
    nodes: int
    snapshots: int

    @property
    def flagged(self) -> bool:
        return self.mu is not None and self.mu >= 1.0 and self.osc > NOISE_FLOOR


@dataclass
class DecayReport:
    rows: list
    x0: tuple
    t0: float
    R: float

    @property
    def oscillations(self) -> list:
        return [r.osc for r in self.rows]

    @property
    def factors(self) -> list:
        return [r.mu for r in self.rows[:-1]]

    @property
    def mu0(self) -> float | None:
        return self.rows[0].mu if self.rows else None

    @property
    def flags(self) -> list:
        return [r.level for r in self.rows if r.flagged]

    def table(self) -> list[dict]:
        return [
            {"level": r.level, "radius": r.radius, "osc": r.osc, "mu": r.mu, "nodes": r.nodes, "snapshots": r.snapshots}
            for r in self.rows
        ]


def oscillation_decay_report(run: RunRecord, x0, t0: float, R: float, depth: int, alpha: float | None = None) -> DecayReport:
    """Oscillation on ``Q_{R/4^j}(x0, t0)`` for ``j = 0..depth`` and the ratios between levels."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if alpha is None:
        alpha = float(run.meta["problem"]["kernel"]["alpha"])
    cyl = ParabolicCylinder(x0, t0, R, alpha)
    rows = []
    for j in range(depth + 1):
        c = cyl.shrink(SHRINK**j)
        osc = oscillation(run, c)
        rows.append(DecayRow(j, c.R, osc, None, int(c.space_mask(run.grid).sum()), int(c.time_mask(run.times).sum())))
    for a, b in zip(rows, rows[1:]):
        a.mu = b.osc / a.osc if a.osc > 0 else None
    return DecayReport(rows, cyl.x0, float(t0), float(R))


@dataclass
class ModulusFit:
    model: str  # "holder" or "log_power"
    exponent: float  # gamma for holder, p for log_power
    amplitude: float
    residual: float  # RMS residual of log(osc) for the chosen model
    holder: dict = field(default_factory=dict)
    log_power: dict = field(default_factory=dict)
    oscillations: list = field(default_factory=list)
    factors: list = field(default_factory=list)
    geometric: dict | None = None

    @property
    def gamma(self) -> float | None:
        return self.holder.get("gamma")


def _holder_fit(j: np.ndarray, y: np.ndarray) -> dict:
    X = np.column_stack([np.ones_like(j), -j * math.log(SHRINK)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    res = y - X @ coef
    return {"gamma": float(coef[1]), "amplitude": float(math.exp(coef[0])), "residual": float(np.sqrt(np.mean(res**2)))}


def _log_power_given_offset(j, y, j0):
    X = np.column_stack([np.ones_like(j), -np.log(j + j0)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    res = y - X @ coef
    return coef, float(np.sqrt(np.mean(res**2)))


def _log_power_fit(j: np.ndarray, y: np.ndarray) -> dict:
    lo, hi = OFFSET_BOUNDS
    # coarse log-spaced scan, then bounded refinement around the best cell
    grid = np.geomspace(lo, hi, 97)
    errs = [_log_power_given_offset(j, y, g)[1] for g in grid]
    i = int(np.argmin(errs))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(lambda s: _log_power_given_offset(j, y, s)[1], bounds=(a, b), method="bounded",
                                   options={"xatol": 1e-12})
    j0 = float(res.x) if res.fun <= errs[i] else float(grid[i])
    coef, err = _log_power_given_offset(j, y, j0)
    with np.errstate(over="ignore"):
        amp = float(np.exp(coef[0]))
    return {"p": float(coef[1]), "offset": j0, "amplitude": amp, "log_amplitude": float(coef[0]), "residual": err}


def fit_modulus(decay, porous: dict | None = None, tie_tolerance: float = 1e-12) -> ModulusFit:
    """Fit ``osc_j = A 4^(-gamma j)`` and ``osc_j = A (j + j0)^(-p)`` in log space.

    The model with the smaller RMS log-residual wins; ties go to Hölder.
    ``decay`` is a :class:`DecayReport` or a sequence of oscillations. For
    porous-medium runs pass ``porous={"ell": ..., "C": ..., "N0": ...}`` to
    add the geometric decay check ``mu_j <= 1 - C ell^N0``.
    """
    osc = np.asarray(decay.oscillations if isinstance(decay, DecayReport) else decay, dtype=float)
    # keep the leading run of resolvable levels
    below = np.flatnonzero(osc <= NOISE_FLOOR)
    osc = osc[: below[0]] if len(below) else osc
    if len(osc) < 4:
        raise ValueError(f"need at least 4 levels with positive oscillation, got {len(osc)}")
    j = np.arange(len(osc), dtype=float)
    y = np.log(osc)
    h = _holder_fit(j, y)
    lp = _log_power_fit(j, y)
    if lp["residual"] < h["residual"] - tie_tolerance:
        model, expo, amp, res = "log_power", lp["p"], lp["amplitude"], lp["residual"]
    else:
        model, expo, amp, res = "holder", h["gamma"], h["amplitude"], h["residual"]
    factors = (osc[1:] / osc[:-1]).tolist()
    geometric = None
    if porous is not None:
        bound = 1.0 - porous["C"] * porous["ell"] ** porous["N0"]
        geometric = {"bound": bound, "max_factor": max(factors), "holds": max(factors) <= bound, **porous}
    return ModulusFit(model, expo, amp, res, h, lp, osc.tolist(), factors, geometric)


def alternative_constants(sigma: float, delta: float, lam: float) -> dict:
    """Constants of the intermediate-value alternative: ``k0 = ceil(1/delta)``, ``sigma_bar = lam^(k0+1) sigma / 4``."""
    if not (sigma > 0 and 0 < delta <= 1 and 0 < lam < 1):
        raise ValueError("need sigma > 0, 0 < delta <= 1, 0 < lambda < 1")
    k0 = math.ceil(1.0 / delta - 1e-12)
    return {"k0": k0, "sigma_bar": lam ** (k0 + 1) * sigma / 4.0}


def fit_sigma_constants(ratios, sigma_bars) -> dict:
    """Fit ``sigma_bar = C * ratio^N0`` by least squares in log space.

    ``ratio`` is ``inf beta~' / (beta~(1) - beta~(0))`` for each measurement and
    ``sigma_bar = 1 - mu`` the measured decay margin.
    """
    r = np.asarray(ratios, dtype=float)
    s = np.asarray(sigma_bars, dtype=float)
    ok = (r > 0) & (s > 0)
    if ok.sum() < 2:
        raise ValueError("need at least two positive (ratio, sigma_bar) pairs")
    X = np.column_stack([np.ones(ok.sum()), np.log(r[ok])])
    coef, *_ = np.linalg.lstsq(X, np.log(s[ok]), rcond=None)
    res = np.log(s[ok]) - X @ coef
    return {"C": float(math.exp(coef[0])), "N0": float(coef[1]), "residual": float(np.sqrt(np.mean(res**2))), "points": int(ok.sum())}
