"""Constitutive nonlinearities: the enthalpy graph beta, its inverse phi, and
the regularized single-valued families used by the solvers.

Three kinds are supported:

``stefan(a, b)``
    The two-phase Stefan graph ``a*x - 1`` (x < 0), ``[-1, 1]`` (x = 0),
    ``b*x + 1`` (x > 0).
``porous(m)``
    ``sign(x) |x|**(1/m)`` with ``m > 1``; the derivative blows up at 0.
``smooth(f, df)``
    Any continuous strictly increasing function with ``f(0) = 0`` and
    ``df >= c1 > 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate, optimize

__all__ = [
    "Interval",
    "NonlinearitySpec",
    "RegularizedNonlinearity",
    "ConditionReport",
    "beta_eval",
    "phi_eval",
    "regularize",
    "b_functional",
    "check_conditions",
    "ell_ratio",
]

KINDS = ("stefan", "porous", "smooth")


class Interval(NamedTuple):
    """Closed interval ``[lo, hi]``; a singleton has ``lo == hi``."""

    lo: float
    hi: float

    @property
    def is_singleton(self) -> bool:
        return self.lo == self.hi


@dataclass(frozen=True)
class NonlinearitySpec:
    kind: str
    a: float = 1.0
    b: float = 1.0
    m: float = 2.0
    c1: float = 1e-6
    func: Callable | None = field(default=None, compare=False, repr=False)
    deriv: Callable | None = field(default=None, compare=False, repr=False)
    inverse: Callable | None = field(default=None, compare=False, repr=False)
    derivative_cap: Callable[[float], float] | None = field(default=None, compare=False, repr=False)
    # free-form parameters kept for serialization of smooth kinds
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "stefan" and not (self.a > 0 and self.b > 0):
            raise ValueError("stefan slopes a, b must be positive")
        if self.kind == "porous" and not self.m > 1:
            raise ValueError("porous exponent m must exceed 1")
        if self.kind == "smooth" and (self.func is None or self.deriv is None):
            raise ValueError("smooth nonlinearity needs both a function and its derivative")
        if self.c1 <= 0:
            raise ValueError("c1 must be positive")

    @classmethod
    def stefan(cls, a: float = 1.0, b: float = 1.0) -> "NonlinearitySpec":
        return cls("stefan", a=a, b=b, c1=min(a, b))

    @classmethod
    def porous(cls, m: float, c1: float = 1e-6) -> "NonlinearitySpec":
        cap = lambda eps: eps ** ((1.0 - m) / m) / m  # noqa: E731
        return cls("porous", m=m, c1=c1, derivative_cap=cap)

    @classmethod
    def smooth(cls, func, deriv, c1: float, derivative_cap=None, params=(), inverse=None) -> "NonlinearitySpec":
        return cls(
            "smooth",
            func=func,
            deriv=deriv,
            inverse=inverse,
            c1=c1,
            derivative_cap=derivative_cap,
            params=tuple(params),
        )

    @classmethod
    def polynomial(cls, slope: float = 1.0, cubic: float = 0.0) -> "NonlinearitySpec":
        """``beta(x) = slope*x + cubic*x**3``; ``slope=1, cubic=0`` is the nonlocal heat equation."""
        if slope <= 0 or cubic < 0:
            raise ValueError("polynomial nonlinearity needs slope > 0 and cubic >= 0")
        return cls.smooth(
            lambda x: slope * x + cubic * x**3,
            lambda x: slope + 3.0 * cubic * x**2,
            c1=slope,
            params=(("slope", slope), ("cubic", cubic)),
            inverse=(lambda y: y / slope) if cubic == 0 else None,
        )

    def to_dict(self) -> dict:
        if self.kind == "stefan":
            return {"kind": "stefan", "a": self.a, "b": self.b}
        if self.kind == "porous":
            return {"kind": "porous", "m": self.m, "c1": self.c1}
        return {"kind": "smooth", **dict(self.params)}

    # unregularized pieces, scalar or array

    def beta(self, x):
        """Single-valued part of beta; for the stefan graph returns 0 at x = 0."""
        x = np.asarray(x, dtype=float)
        if self.kind == "stefan":
            return np.where(x < 0, self.a * x - 1.0, np.where(x > 0, self.b * x + 1.0, 0.0))
        if self.kind == "porous":
            return np.sign(x) * np.abs(x) ** (1.0 / self.m)
        return np.asarray(self.func(x), dtype=float)

    def beta_prime(self, x):
        """Classical derivative, ``inf`` where it does not exist."""
        x = np.asarray(x, dtype=float)
        if self.kind == "stefan":
            return np.where(x < 0, self.a, np.where(x > 0, self.b, np.inf))
        if self.kind == "porous":
            with np.errstate(divide="ignore"):
                return np.abs(x) ** (1.0 / self.m - 1.0) / self.m
        return np.asarray(self.deriv(x), dtype=float) * np.ones_like(x)

    def phi(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "stefan":
            return np.where(y <= -1.0, (y + 1.0) / self.a, np.where(y > 1.0, (y - 1.0) / self.b, 0.0))
        if self.kind == "porous":
            return np.sign(y) * np.abs(y) ** self.m
        if self.inverse is not None:
            return np.asarray(self.inverse(y), dtype=float)
        return _invert_monotone(self.func, self.deriv, y, self.c1)


def beta_eval(spec: NonlinearitySpec, x: float) -> Interval:
    """Value set of beta at ``x``; the stefan graph is ``[-1, 1]`` at 0."""
    if spec.kind == "stefan" and x == 0:
        return Interval(-1.0, 1.0)
    val = float(spec.beta(x))
    return Interval(val, val)


def phi_eval(spec: NonlinearitySpec, x: float) -> float:
    return float(spec.phi(x))


def _invert_monotone(f, df, y, c1, maxiter=200):
    """Safeguarded Newton solve of ``f(x) = y`` for increasing f with ``f' >= c1``, ``f(0) = 0``."""
    y = np.asarray(y, dtype=float)
    scalar = y.ndim == 0
    y = np.atleast_1d(y)
    lo = np.minimum(0.0, y / c1)
    hi = np.maximum(0.0, y / c1)
    x = np.clip(y / max(float(np.asarray(df(0.0))), c1), lo, hi)
    for _ in range(maxiter):
        r = np.asarray(f(x), dtype=float) - y
        lo = np.where(r < 0, x, lo)
        hi = np.where(r > 0, x, hi)
        d = np.asarray(df(x), dtype=float) * np.ones_like(x)
        x_new = x - r / d
        bad = ~((x_new > lo) & (x_new < hi))
        x_new = np.where(bad, 0.5 * (lo + hi), x_new)
        done = np.abs(x_new - x) <= 1e-15 * np.maximum(1.0, np.abs(x))
        x = x_new
        if done.all():
            break
    return x[0] if scalar else x


@dataclass(frozen=True)
class RegularizedNonlinearity:
    """Single-valued, strictly increasing approximation ``beta_eps`` and its exact inverse.

    stefan: the graph's vertical segment is replaced by two chords through the
    origin, ``(-eps, -a*eps - 1) -> (0, 0) -> (eps, b*eps + 1)``; for ``a == b``
    this is the single chord of slope ``(a*eps + b*eps + 2) / (2*eps)``.

    porous: ``beta_eps' = clip(beta', c1, C(eps))`` with ``C(eps) = beta'(eps)``,
    integrated from ``beta_eps(0) = 0``; closed form on every piece.

    smooth: left as is (already nondegenerate).
    """

    base: NonlinearitySpec
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    # -- stefan helpers
    @property
    def _slopes(self):
        a, b, e = self.base.a, self.base.b, self.epsilon
        return a, (a * e + 1.0) / e, (b * e + 1.0) / e, b

    # -- porous helpers
    @property
    def _porous_pieces(self):
        m, e, c1 = self.base.m, self.epsilon, self.base.c1
        cap = e ** (1.0 / m - 1.0) / m
        x1 = (m * c1) ** (m / (1.0 - m))  # beta'(x1) == c1
        x1 = max(x1, e)
        y0 = cap * e
        y1 = y0 + x1 ** (1.0 / m) - e ** (1.0 / m)
        return m, e, c1, cap, x1, y0, y1

    def beta_eps(self, x):
        x = np.asarray(x, dtype=float)
        kind = self.base.kind
        if kind == "stefan":
            a, sl, sr, b = self._slopes
            e = self.epsilon
            return np.where(
                x <= -e, a * x - 1.0, np.where(x < 0, sl * x, np.where(x < e, sr * x, b * x + 1.0))
            )
        if kind == "porous":
            m, e, c1, cap, x1, y0, y1 = self._porous_pieces
            ax = np.abs(x)
            mid = y0 + np.minimum(np.maximum(ax, e), x1) ** (1.0 / m) - e ** (1.0 / m)
            out = np.where(ax <= e, cap * ax, np.where(ax <= x1, mid, y1 + c1 * (ax - x1)))
            return np.sign(x) * out
        return self.base.beta(x)

    def beta_eps_prime(self, x):
        x = np.asarray(x, dtype=float)
        kind = self.base.kind
        if kind == "stefan":
            a, sl, sr, b = self._slopes
            e = self.epsilon
            core = np.where(x < 0, sl, np.where(x > 0, sr, 0.5 * (sl + sr)))
            return np.where(x <= -e, a, np.where(x >= e, b, core))
        if kind == "porous":
            m, e, c1, cap, x1, _, _ = self._porous_pieces
            ax = np.abs(x)
            mid = np.maximum(ax, e) ** (1.0 / m - 1.0) / m
            return np.where(ax <= e, cap, np.where(ax <= x1, mid, c1))
        return self.base.beta_prime(x)

    def phi_eps(self, y):
        y = np.asarray(y, dtype=float)
        kind = self.base.kind
        if kind == "stefan":
            a, sl, sr, b = self._slopes
            e = self.epsilon
            ylo, yhi = -(a * e + 1.0), b * e + 1.0
            return np.where(
                y <= ylo, (y + 1.0) / a, np.where(y < 0, y / sl, np.where(y < yhi, y / sr, (y - 1.0) / b))
            )
        if kind == "porous":
            m, e, c1, cap, x1, y0, y1 = self._porous_pieces
            ay = np.abs(y)
            mid = np.maximum(np.minimum(ay, y1) - y0 + e ** (1.0 / m), 0.0) ** m
            out = np.where(ay <= y0, ay / cap, np.where(ay <= y1, mid, x1 + (ay - y1) / c1))
            return np.sign(y) * out
        return self.base.phi(y)

    def phi_eps_prime(self, y):
        return 1.0 / self.beta_eps_prime(self.phi_eps(y))

    def inf_derivative(self, lo: float, hi: float) -> float:
        """``inf beta_eps'`` over ``[lo, hi]``."""
        if lo > hi:
            lo, hi = hi, lo
        kind = self.base.kind
        if kind == "stefan":
            a, sl, sr, b = self._slopes
            e = self.epsilon
            vals = []
            if lo <= -e:
                vals.append(a)
            if hi >= e:
                vals.append(b)
            if lo < 0 and hi > -e:
                vals.append(sl)
            if hi > 0 and lo < e:
                vals.append(sr)
            if not vals:
                vals.append(float(self.beta_eps_prime(lo)))
            return min(vals)
        if kind == "porous":
            # beta_eps' is even and nonincreasing in |x|
            return float(self.beta_eps_prime(max(abs(lo), abs(hi))))
        xs = np.linspace(lo, hi, 2049)
        d = lambda s: float(self.beta_eps_prime(s))  # noqa: E731
        best = float(np.min(self.beta_eps_prime(xs)))
        res = optimize.minimize_scalar(d, bounds=(lo, hi), method="bounded") if hi > lo else None
        if res is not None and res.success:
            best = min(best, float(res.fun))
        return best

    def breakpoints(self) -> tuple[float, ...]:
        if self.base.kind == "stefan":
            return (-self.epsilon, 0.0, self.epsilon)
        if self.base.kind == "porous":
            _, e, _, _, x1, _, _ = self._porous_pieces
            return (-x1, -e, 0.0, e, x1)
        return (0.0,)


def regularize(spec: NonlinearitySpec, epsilon: float) -> RegularizedNonlinearity:
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    return RegularizedNonlinearity(spec, float(epsilon))


def b_functional(reg: RegularizedNonlinearity, u: float, k: float) -> float:
    """``B((u-k)^+) = int_0^{(u-k)^+} beta_eps'(k + tau) tau dtau``."""
    d = u - k
    if d <= 0:
        return 0.0
    cuts = sorted({0.0, d, *(p - k for p in reg.breakpoints() if 0.0 < p - k < d)})
    if reg.base.kind == "stefan":
        total = 0.0
        for t0, t1 in zip(cuts[:-1], cuts[1:]):
            slope = float(reg.beta_eps_prime(k + 0.5 * (t0 + t1)))
            total += 0.5 * slope * (t1 * t1 - t0 * t0)
        return total
    f = lambda tau: float(reg.beta_eps_prime(k + tau)) * tau  # noqa: E731
    total = 0.0
    for t0, t1 in zip(cuts[:-1], cuts[1:]):
        val, _ = integrate.quad(f, t0, t1, epsabs=1e-10, epsrel=1e-12, limit=200)
        total += val
    return total


def ell_ratio(beta, beta_prime, lo: float, hi: float) -> float:
    """``inf_[lo,hi] beta' * (hi - lo) / (beta(hi) - beta(lo))``; at most 1 for increasing beta."""
    d = lambda s: float(beta_prime(s))  # noqa: E731
    inf_d = min(d(lo), d(hi))
    res = optimize.minimize_scalar(d, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    if res.success:
        inf_d = min(inf_d, float(res.fun))
    return inf_d * (hi - lo) / (float(beta(hi)) - float(beta(lo)))


@dataclass
class ConditionReport:
    interval: tuple[float, float]
    monotone: bool
    beta_at_zero: float
    beta_zero_ok: bool
    inf_derivative: float
    c1: float
    c1_ok: bool
    cap_ok: bool | None
    derivative_defined: bool
    ell_interval: float
    ell_min: float
    flags: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.flags


def check_conditions(
    spec: NonlinearitySpec | RegularizedNonlinearity,
    sample_count: int = 200,
    interval: tuple[float, float] = (-1.0, 1.0),
    cap_epsilons: tuple[float, ...] = (0.5, 0.1, 0.01),
) -> ConditionReport:
    """Sample the structural conditions on ``interval`` and flag every violation.

    The lower derivative bound is only checked on ``interval`` (the attained
    range of a solution); for porous media it cannot hold on all of R.
    """
    if sample_count < 2:
        raise ValueError("sample_count must be at least 2")
    if isinstance(spec, RegularizedNonlinearity):
        base, beta, dbeta = spec.base, spec.beta_eps, spec.beta_eps_prime
        regularized = True
    else:
        base, beta, dbeta = spec, spec.beta, spec.beta_prime
        regularized = False
    lo, hi = interval
    xs = np.linspace(lo, hi, sample_count)
    vals = beta(xs)
    flags = []

    monotone = bool(np.all(np.diff(vals) > 0))
    if not monotone:
        flags.append("not strictly increasing on sampled points")

    b0 = float(beta(0.0))
    beta_zero_ok = b0 == 0.0
    if not beta_zero_ok:
        flags.append(f"beta(0) = {b0} != 0")

    derivative_defined = True
    if base.kind == "stefan" and not regularized:
        derivative_defined = False
        flags.append("beta' undefined at 0 (graph with vertical segment [-1, 1])")

    ds = dbeta(xs[xs != 0.0])
    inf_d = float(np.min(ds)) if ds.size else float("nan")
    c1_ok = inf_d >= base.c1 * (1 - 1e-12)
    if not c1_ok:
        flags.append(f"inf beta' = {inf_d:.6g} below c1 = {base.c1:.6g} on {interval}")

    cap_ok = None
    if base.derivative_cap is not None:
        cap_ok = True
        for eps in cap_epsilons:
            band = np.concatenate([np.linspace(-1 / eps, -eps, 400), np.linspace(eps, 1 / eps, 400)])
            if np.max(dbeta(band)) > base.derivative_cap(eps) * (1 + 1e-12):
                cap_ok = False
                flags.append(f"beta' exceeds C(eps) on eps={eps} band")

    ell_int = float("nan")
    ell_min = float("nan")
    if derivative_defined or not (lo < 0 < hi):
        ell_int = ell_ratio(beta, dbeta, lo, hi)
        # all sample pairs; running minimum of beta' over [x_i, x_j]
        dx = dbeta(xs)
        best = np.inf
        for i in range(sample_count - 1):
            run_min = np.minimum.accumulate(dx[i:])[1:]
            ratio = run_min * (xs[i + 1 :] - xs[i]) / (vals[i + 1 :] - vals[i])
            best = min(best, float(np.min(ratio)))
        ell_min = best
    return ConditionReport(
        interval=(lo, hi),
        monotone=monotone,
        beta_at_zero=b0,
        beta_zero_ok=beta_zero_ok,
        inf_derivative=inf_d,
        c1=base.c1,
        c1_ok=c1_ok,
        cap_ok=cap_ok,
        derivative_defined=derivative_defined,
        ell_interval=ell_int,
        ell_min=ell_min,
        flags=flags,
    )
