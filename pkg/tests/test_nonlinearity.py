import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stefanlab.nonlinearity import (
    NonlinearitySpec,
    b_functional,
    beta_eval,
    check_conditions,
    ell_ratio,
    phi_eval,
    regularize,
)

SPECS = {
    "stefan": NonlinearitySpec.stefan(),
    "stefan_ab": NonlinearitySpec.stefan(2.0, 0.5),
    "porous2": NonlinearitySpec.porous(2.0),
    "porous3": NonlinearitySpec.porous(3.0),
    "heat": NonlinearitySpec.polynomial(),
    "cubic": NonlinearitySpec.polynomial(1.0, 0.5),
}


def test_beta_eval_graph():
    s = NonlinearitySpec.stefan(2.0, 1.0)
    assert tuple(beta_eval(s, -1.0)) == (-3.0, -3.0)
    assert tuple(beta_eval(s, 0.0)) == (-1.0, 1.0)
    assert tuple(beta_eval(NonlinearitySpec.porous(2.0), 0.0)) == (0.0, 0.0)


@pytest.mark.parametrize("a,b,x,expected", [(1, 1, -2.0, -1.0), (1, 1, 0.5, 0.0), (1, 2, 3.0, 1.0)])
def test_phi_eval_branches(a, b, x, expected):
    assert phi_eval(NonlinearitySpec.stefan(a, b), x) == pytest.approx(expected, abs=1e-15)


def test_stefan_chord():
    reg = regularize(NonlinearitySpec.stefan(), 0.1)
    assert float(reg.beta_eps(0.1)) == pytest.approx(1.1, abs=1e-14)
    assert float(reg.beta_eps_prime(0.0)) == pytest.approx(11.0, abs=1e-12)
    h = 1e-7
    fd = (float(reg.beta_eps(h)) - float(reg.beta_eps(-h))) / (2 * h)
    assert fd == pytest.approx(11.0, rel=1e-8)


@pytest.mark.parametrize("name", sorted(SPECS))
@pytest.mark.parametrize("eps", [1e-1, 1e-3])
def test_inverse_property(name, eps):
    reg = regularize(SPECS[name], eps)
    x = np.random.default_rng(0).uniform(-3, 3, 100)
    assert np.max(np.abs(reg.phi_eps(reg.beta_eps(x)) - x)) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(sorted(SPECS)), st.floats(1e-4, 0.5), st.floats(-5, 5), st.floats(-5, 5))
def test_regularized_is_increasing(name, eps, x, y):
    reg = regularize(SPECS[name], eps)
    if x < y:
        assert float(reg.beta_eps(x)) < float(reg.beta_eps(y))


@pytest.mark.parametrize("name", ["stefan", "stefan_ab", "porous2"])
def test_breakpoints_continuous(name):
    reg = regularize(SPECS[name], 0.05)
    for p in reg.breakpoints():
        left, right = float(reg.beta_eps(p - 1e-12)), float(reg.beta_eps(p + 1e-12))
        assert abs(left - right) < 1e-9


@pytest.mark.parametrize("a,b", [(1.0, 1.0), (2.0, 0.5), (0.5, 3.0)])
def test_phi_eps_uniform_convergence(a, b):
    spec = NonlinearitySpec.stefan(a, b)
    y = np.linspace(-6, 6, 20001)
    exact = np.array([phi_eval(spec, t) for t in y])
    for eps in (1e-1, 1e-2, 1e-3):
        gap = np.max(np.abs(regularize(spec, eps).phi_eps(y) - exact))
        assert gap <= 2 * eps * max(a, b, 1) / min(a, b)


def test_b_functional_constant_derivative():
    reg = regularize(NonlinearitySpec.polynomial(3.0), 0.1)
    assert b_functional(reg, 0.9, 0.5) == pytest.approx(3.0 * 0.08, rel=1e-12)
    assert b_functional(reg, 0.2, 0.5) == 0.0


def test_b_functional_trapezoid_oracle():
    reg = regularize(NonlinearitySpec.stefan(), 0.1)
    k, u = -0.05, 0.05
    tau = np.linspace(0.0, u - k, 1_000_001)
    oracle = np.trapezoid(reg.beta_eps_prime(k + tau) * tau, tau) if hasattr(np, "trapezoid") else np.trapz(reg.beta_eps_prime(k + tau) * tau, tau)
    assert b_functional(reg, u, k) == pytest.approx(oracle, rel=1e-8)


def test_b_functional_porous_matches_quadrature():
    reg = regularize(NonlinearitySpec.porous(2.0), 0.01)
    tau = np.linspace(0.0, 0.7, 2_000_001)
    oracle = np.sum(0.5 * (tau[1:] ** 2 - tau[:-1] ** 2) * reg.beta_eps_prime(0.1 + 0.5 * (tau[1:] + tau[:-1])))
    assert b_functional(reg, 0.8, 0.1) == pytest.approx(oracle, rel=1e-6)


def test_ell_ratio_porous_dense_oracle():
    spec = NonlinearitySpec.porous(2.0)
    xs = np.linspace(0.1, 1.0, 1_000_001)
    oracle = np.min(spec.beta_prime(xs)) * 0.9 / (float(spec.beta(1.0)) - float(spec.beta(0.1)))
    assert ell_ratio(spec.beta, spec.beta_prime, 0.1, 1.0) == pytest.approx(oracle, rel=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(0.01, 5))
def test_ell_ratio_linear_is_one(lo, width):
    spec = NonlinearitySpec.polynomial(2.0)
    assert ell_ratio(spec.beta, spec.beta_prime, lo, lo + width) == pytest.approx(1.0, rel=1e-12)


def test_conditions_report():
    raw = check_conditions(NonlinearitySpec.stefan())
    assert not raw.passed and any("undefined" in f for f in raw.flags)
    assert check_conditions(regularize(NonlinearitySpec.stefan(), 1e-2)).passed
    assert check_conditions(NonlinearitySpec.polynomial(1.0, 1.0)).passed


def test_invalid_specs():
    with pytest.raises(ValueError):
        NonlinearitySpec.stefan(0.0, 1.0)
    with pytest.raises(ValueError):
        NonlinearitySpec.porous(1.0)
    with pytest.raises(ValueError):
        regularize(NonlinearitySpec.stefan(), 0.0)
