"""Symmetric jump kernels of order alpha, envelope validation, and the
shrinking-cylinder rescaling.

Every kernel is bounded by the envelope

    1{|x-y| <= r} / Lambda * |x-y|^-(n+alpha)  <=  K(x, y, t)  <=  Lambda * |x-y|^-(n+alpha)

where ``r`` is the truncation radius (2 for an unscaled kernel).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

__all__ = [
    "KernelSpec",
    "BoundsReport",
    "kernel_eval",
    "check_kernel_bounds",
    "rescale_kernel",
]

FORMS = ("pure_fractional", "truncated_fractional", "custom")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel description.

    ``pure_fractional`` is exactly ``|x-y|^-(n+alpha)``;
    ``truncated_fractional`` is the same kernel cut off beyond
    ``truncation_radius``; ``custom`` evaluates ``func(x, y, t)`` on arrays of
    points with a trailing axis of length ``dim``.
    """

    alpha: float
    Lambda: float = 1.0
    dim: int = 1
    truncation_radius: float = 2.0
    form: str = "pure_fractional"
    func: Callable | None = field(default=None, compare=False, repr=False)
    time_dependent: bool = False
    # rescaling history as (scale, origin, t0) tuples, outermost last
    rescalings: tuple = ()

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise ValueError(f"kernel.alpha must lie in (0, 2), got {self.alpha}")
        if self.Lambda < 1.0:
            raise ValueError(f"kernel.lambda must be >= 1, got {self.Lambda}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.dim}")
        if self.form not in FORMS:
            raise ValueError(f"kernel.form must be one of {FORMS}, got {self.form!r}")
        if self.form == "custom" and self.func is None:
            raise ValueError("custom kernel needs a function handle")
        if not self.truncation_radius > 0:
            raise ValueError("kernel.truncation_radius must be positive")

    @property
    def order(self) -> float:
        return self.dim + self.alpha

    def evaluate(self, x, y, t=0.0):
        """Vectorized ``K(x, y, t)``; points have shape ``(..., dim)``, or plain ``(...)`` in 1-D."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        d = _distance(x, y, self.dim)
        if self.form == "custom":
            return np.asarray(self.func(x, y, t), dtype=float)
        with np.errstate(divide="ignore"):
            k = d ** (-self.order)
        if self.form == "truncated_fractional":
            k = np.where(d <= self.truncation_radius, k, 0.0)
        return k

    def lower_envelope(self, d):
        d = np.asarray(d, dtype=float)
        return np.where(d <= self.truncation_radius, d ** (-self.order) / self.Lambda, 0.0)

    def upper_envelope(self, d):
        return self.Lambda * np.asarray(d, dtype=float) ** (-self.order)

    def to_dict(self) -> dict:
        out = {
            "form": self.form,
            "alpha": self.alpha,
            "lambda": self.Lambda,
            "dim": self.dim,
            "truncation_radius": self.truncation_radius,
        }
        if self.rescalings:
            out["rescalings"] = [list(map(_jsonable, r)) for r in self.rescalings]
        return out

    def digest(self) -> str | None:
        """Stable content hash; ``None`` for custom kernels (function handles are not hashable content)."""
        if self.form == "custom":
            return None
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, tuple):
        return list(v)
    return v


def _distance(x, y, dim):
    if dim == 1:
        return np.abs(x - y)
    return np.sqrt(np.sum((x - y) ** 2, axis=-1))


def kernel_eval(spec: KernelSpec, x, y, t: float = 0.0) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.array_equal(x, y):
        raise ValueError("kernel is singular on the diagonal x == y")
    return float(spec.evaluate(x, y, t))


@dataclass
class BoundsReport:
    upper_ratio: float  # max K / (Lambda d^-(n+alpha))
    lower_ratio: float  # min K / (d^-(n+alpha) / Lambda) over d <= r
    max_asymmetry: float
    samples: int
    worst_upper_distance: float
    worst_lower_distance: float
    tolerance: float = 1e-12

    @property
    def upper_ok(self) -> bool:
        return self.upper_ratio <= 1.0 + self.tolerance

    @property
    def lower_ok(self) -> bool:
        return self.lower_ratio >= 1.0 - self.tolerance

    @property
    def symmetric(self) -> bool:
        return self.max_asymmetry <= self.tolerance

    @property
    def passed(self) -> bool:
        return self.upper_ok and self.lower_ok and self.symmetric


def check_kernel_bounds(
    spec: KernelSpec,
    sample_count: int = 100_000,
    seed: int = 0,
    d_range: tuple[float, float] = (1e-4, 1e2),
    box: float = 4.0,
    t_range: tuple[float, float] = (0.0, 1.0),
) -> BoundsReport:
    """Monte Carlo envelope check.

    Distances are log-uniform over ``d_range``; the endpoints of the range and
    the truncation radius are always probed.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    n = spec.dim
    r = spec.truncation_radius
    probes = [d_range[0], d_range[1]]
    if d_range[0] <= r <= d_range[1]:
        probes.append(r)
    d = np.concatenate([np.exp(rng.uniform(np.log(d_range[0]), np.log(d_range[1]), sample_count)), probes])
    m = d.size
    x = rng.uniform(-box, box, (m, n))
    direction = rng.normal(size=(m, n))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    y = x + d[:, None] * direction
    t = rng.uniform(*t_range, m)
    if n == 1:
        x, y = x[:, 0], y[:, 0]
    kxy = spec.evaluate(x, y, t)
    kyx = spec.evaluate(y, x, t)
    asym = np.abs(kxy - kyx) / np.maximum(np.abs(kxy), np.finfo(float).tiny)
    d = _distance(np.asarray(x), np.asarray(y), n)

    upper = kxy / spec.upper_envelope(d)
    iu = int(np.argmax(upper))
    inside = d <= r
    if inside.any():
        lower = kxy[inside] / (d[inside] ** (-spec.order) / spec.Lambda)
        il = int(np.argmin(lower))
        lower_ratio, lower_d = float(lower[il]), float(d[inside][il])
    else:
        lower_ratio, lower_d = float("inf"), float("nan")
    return BoundsReport(
        upper_ratio=float(upper[iu]),
        lower_ratio=lower_ratio,
        max_asymmetry=float(np.max(asym)),
        samples=m,
        worst_upper_distance=float(d[iu]),
        worst_lower_distance=lower_d,
    )


def rescale_kernel(spec: KernelSpec, x0, t0: float, R: float, k: int) -> KernelSpec:
    """Kernel seen from the cylinder ``Q_{R/2^k}(x0, t0)`` blown up to unit size.

    ``Kbar(x, y, t) = s^(n+alpha) K(x0 + s x, x0 + s y, t0 + s^alpha t)`` with
    ``s = R / 2^k``. The envelope holds with the truncation radius widened to
    ``r / s``.
    """
    if not 0.0 < R <= 1.0:
        raise ValueError(f"rescaling radius must satisfy 0 < R <= 1, got {R}")
    if k < 0 or int(k) != k:
        raise ValueError("k must be a nonnegative integer")
    s = R / 2.0**k
    x0 = np.asarray(x0, dtype=float)
    new_radius = spec.truncation_radius / s
    history = spec.rescalings + ((s, tuple(np.atleast_1d(x0).tolist()), float(t0)),)
    if spec.form in ("pure_fractional", "truncated_fractional"):
        # |x-y|^-(n+alpha) is exactly scale invariant; only the cutoff moves
        return replace(spec, truncation_radius=new_radius, rescalings=history)

    base = spec.func
    order = spec.order
    alpha = spec.alpha

    def rescaled(x, y, t, _base=base, _s=s, _x0=x0, _t0=t0):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return _s**order * np.asarray(_base(_x0 + _s * x, _x0 + _s * y, _t0 + _s**alpha * np.asarray(t)))

    return replace(spec, func=rescaled, truncation_radius=new_radius, rescalings=history)
