import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stefanlab.kernels import KernelSpec
from stefanlab.operator import (
    Grid,
    apply_operator,
    build_weights,
    dirichlet_form,
    fractional_seminorm,
    quadratic_energy,
)


def _log_quadrature(alpha, a, b, panels=1_000_000):
    """Midpoint rule for int_a^b r^-(1+alpha) dr in z = log r."""
    z = np.log(a) + (np.arange(panels) + 0.5) * (np.log(b) - np.log(a)) / panels
    return float(np.sum(np.exp(-alpha * z)) * (np.log(b) - np.log(a)) / panels)


def test_midpoint_weight():
    w = build_weights(Grid.interval(0.0, 2.0, 4), KernelSpec(alpha=1.0))
    assert w.W[0, 2] == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_tail_weight_center_pure(alpha):
    w = build_weights(Grid.interval(-1.0, 1.0, 101), KernelSpec(alpha=alpha))
    oracle = 2 * _log_quadrature(alpha, 1.0, 1e60 ** (1 / alpha))
    assert w.tail[50] == pytest.approx(oracle, rel=1e-6)


@pytest.mark.parametrize("alpha", [0.5, 1.5])
def test_tail_weight_center_truncated(alpha):
    w = build_weights(Grid.interval(-1.0, 1.0, 101), KernelSpec(alpha=alpha, form="truncated_fractional"))
    assert w.tail[50] == pytest.approx(2 * _log_quadrature(alpha, 1.0, 2.0), rel=1e-6)


@pytest.mark.parametrize("dim", [1, 2])
def test_exact_symmetry(dim):
    g = Grid.interval(-1, 1, 64) if dim == 1 else Grid.box((-1, -1), (1, 1), (12, 12))
    w = build_weights(g, KernelSpec(alpha=0.8, dim=dim))
    assert np.array_equal(w.W, w.W.T)
    assert np.all(w.tail >= 0) and np.all(np.diag(w.W) == 0)


def test_zero_and_odd_fields():
    g = Grid.interval(-1, 1, 65)
    w = build_weights(g, KernelSpec(alpha=1.2))
    assert not apply_operator(w, np.zeros(g.size)).any()
    Lu = apply_operator(w, np.sin(3 * g.coords))
    assert abs(Lu[32]) <= 1e-12


def test_constant_field_sees_only_tail():
    g = Grid.interval(-1, 1, 40)
    w = build_weights(g, KernelSpec(alpha=1.0))
    assert np.allclose(apply_operator(w, np.full(g.size, 2.0)), -2.0 * w.tail, rtol=1e-13, atol=0)


def test_dimension_mismatch():
    w = build_weights(Grid.interval(-1, 1, 16), KernelSpec(alpha=1.0))
    with pytest.raises(ValueError):
        apply_operator(w, np.zeros(17))


@pytest.fixture(scope="module")
def w1():
    return build_weights(Grid.interval(-1, 1, 96), KernelSpec(alpha=0.9))


@pytest.fixture(scope="module")
def w2():
    return build_weights(Grid.box((-1, -1), (1, 1), (10, 10)), KernelSpec(alpha=1.3, dim=2))


def test_dirichlet_properties(w1):
    rng = np.random.default_rng(2)
    for _ in range(100):
        u, v = rng.normal(size=(2, w1.size))
        assert dirichlet_form(w1, u, u) >= 0
        assert dirichlet_form(w1, u, v) == pytest.approx(dirichlet_form(w1, v, u), rel=1e-12, abs=1e-12)


def test_summation_by_parts_2d(w2):
    rng = np.random.default_rng(3)
    h2 = w2.grid.cell_volume
    for _ in range(10):
        u, v = rng.normal(size=(2, w2.size))
        lhs = float(np.sum(apply_operator(w2, u) * v) * h2)
        assert lhs == pytest.approx(-0.5 * dirichlet_form(w2, u, v), rel=1e-12, abs=1e-12)


def test_quadratic_energy_batch(w1):
    U = np.random.default_rng(4).normal(size=(w1.size, 3))
    batch = quadratic_energy(w1, U)
    single = [dirichlet_form(w1, U[:, j], U[:, j]) for j in range(3)]
    assert np.allclose(batch, single, rtol=1e-12)


def test_seminorm_scaling_and_spike():
    g = Grid.interval(-1, 1, 64)
    u = np.cos(2 * g.coords)
    assert fractional_seminorm(g, 0 * u, 1.0) == 0.0
    assert fractional_seminorm(g, 3 * u, 1.0) == pytest.approx(9 * fractional_seminorm(g, u, 1.0), rel=1e-12)
    spike = np.zeros(g.size)
    spike[20] = 1.0
    w = build_weights(g, KernelSpec(alpha=1.0))
    direct = sum(w.W[i, j] * (spike[i] - spike[j]) ** 2 for i in range(g.size) for j in range(g.size)) + 2 * w.tail[20]
    assert fractional_seminorm(g, spike, 1.0) == pytest.approx(direct * g.h, rel=1e-12)
    assert fractional_seminorm(g, spike, 1.0) == pytest.approx(2 * (w.row_sum[20] + w.tail[20]) * g.h, rel=1e-12)


def test_weight_cache(tmp_path):
    g, k = Grid.interval(-1, 1, 32), KernelSpec(alpha=0.6)
    a = build_weights(g, k, cache_dir=tmp_path)
    b = build_weights(g, k, cache_dir=tmp_path)
    assert list(tmp_path.iterdir()) and np.array_equal(a.W, b.W) and np.array_equal(a.tail, b.tail)


def test_custom_kernel_near_pure():
    g = Grid.interval(-1, 1, 64)
    pure = build_weights(g, KernelSpec(alpha=1.0))
    custom = build_weights(g, KernelSpec(alpha=1.0, form="custom", func=lambda x, y, t: np.abs(x - y) ** -2.0))
    assert np.allclose(custom.W, pure.W, rtol=1e-12)
    assert np.allclose(custom.tail, pure.tail, rtol=1e-4)


@settings(max_examples=25, deadline=None)
@given(st.integers(8, 48), st.floats(0.2, 1.8))
def test_row_sums_positive(n, alpha):
    w = build_weights(Grid.interval(0, 1, n), KernelSpec(alpha=alpha))
    assert np.all(w.diagonal > 0)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid.interval(1.0, 0.0, 10)
    with pytest.raises(ValueError):
        Grid.interval(0.0, 1.0, 0)
