from dataclasses import replace

import numpy as np
import pytest

from stefanlab.kernels import KernelSpec
from stefanlab.nonlinearity import NonlinearitySpec
from stefanlab.operator import Grid
from stefanlab.records import RunRecord
from stefanlab.solver import (
    CFLViolation,
    NewtonError,
    ProblemSpec,
    ResumeError,
    cfl_timestep,
    epsilon_ladder,
    run,
    step_explicit,
    step_implicit,
)


def hat(grid, height=2.0, width=1.0):
    return height * np.maximum(1.0 - np.abs(grid.coords) / width, 0.0)


def problem(nl=None, n=128, T=0.5, eps=1e-3, u0=None, **kw):
    g = Grid.interval(-2.0, 2.0, n)
    return ProblemSpec(
        grid=g,
        kernel=KernelSpec(alpha=1.0),
        nonlinearity=nl or NonlinearitySpec.stefan(),
        epsilon=eps,
        u0=hat(g) if u0 is None else u0(g),
        T=T,
        **kw,
    )


def test_zero_time():
    rec = run(problem(T=0.0))
    assert rec.u.shape[0] == 1 and np.array_equal(rec.u[0], hat(rec.grid))


def test_zero_field_stays():
    p = problem(u0=lambda g: np.zeros(g.size))
    s = p.initial_state
    for _ in range(20):
        s = step_explicit(p, s, 1e-3)
    assert not s.u.any() and not s.v.any()


def test_heat_maximum_principle_and_monotone_max():
    p = problem(NonlinearitySpec.polynomial(), u0=lambda g: np.random.default_rng(1).uniform(0, 1, g.size), snapshots=16)
    rec = run(p)
    assert rec.u.min() >= 0.0 and rec.u.max() <= 1.0
    assert np.all(np.diff(rec.extrema[:, 3]) <= 1e-15)


def test_cfl_formula_for_linear_beta():
    p = problem(NonlinearitySpec.polynomial())
    assert cfl_timestep(p) == pytest.approx(0.9 / np.max(p.weights.diagonal), rel=1e-12)


def test_cfl_scales_with_h():
    coarse = cfl_timestep(problem(NonlinearitySpec.polynomial(), n=128))
    fine = cfl_timestep(problem(NonlinearitySpec.polynomial(), n=256))
    assert 0.4 <= fine / coarse <= 0.6


@pytest.mark.parametrize("shift", [0.0, -0.5])
def test_cfl_independent_of_epsilon(shift):
    # one-phase data touches the chord only at 0; two-phase data crosses it
    dts = [cfl_timestep(problem(eps=e, u0=lambda g: hat(g) + shift)) for e in (1e-1, 1e-2, 1e-3)]
    assert max(dts) == pytest.approx(min(dts), rel=1e-12)


def test_cfl_violation():
    p = problem()
    with pytest.raises(CFLViolation):
        step_explicit(p, p.initial_state, 2.0 * cfl_timestep(p))


NONLINEARITIES = {
    "stefan": NonlinearitySpec.stefan(),
    "porous": NonlinearitySpec.porous(2.0),
    "cubic": NonlinearitySpec.polynomial(1.0, 1.0),
}


def _step_gap(p, dt):
    s = p.initial_state
    return float(np.max(np.abs(step_explicit(p, s, dt).u - step_implicit(p, s, dt).u)))


@pytest.mark.parametrize("name", ["stefan", "cubic"])
def test_implicit_matches_explicit_small_step(name):
    p = problem(NONLINEARITIES[name], n=64, u0=lambda g: np.exp(-4 * g.coords**2))
    assert _step_gap(p, 1e-6) <= 1e-10


@pytest.mark.parametrize("name", sorted(NONLINEARITIES))
@pytest.mark.parametrize("smooth", [True, False])
def test_implicit_explicit_gap_is_second_order(name, smooth):
    p = problem(NONLINEARITIES[name], n=64, u0=(lambda g: np.exp(-4 * g.coords**2)) if smooth else None)
    ratio = _step_gap(p, 1e-6) / _step_gap(p, 5e-7)
    assert 3.5 <= ratio <= 4.5


def test_implicit_large_step_maximum_principle():
    p = problem(n=64, scheme="implicit", T=1.0, snapshots=8)
    rec = run(p)
    assert rec.u.min() >= -1e-8 and rec.u.max() <= 2.0 + 1e-8
    assert rec.dt > cfl_timestep(p)


def test_newton_failure_carries_history(monkeypatch):
    import stefanlab.solver as solver

    monkeypatch.setattr(solver, "NEWTON_MAXITER", 1)
    p = problem(n=64, eps=1e-4)
    with pytest.raises(NewtonError) as info:
        step_implicit(p, p.initial_state, 0.5)
    assert len(info.value.residuals) == 2


def _plateau_onset(p, dt, node, t_max=6.0):
    s = p.initial_state
    onset, inside = None, 0
    while s.t < t_max:
        s = step_explicit(p, s, dt)
        if onset is None and s.v[node] < 1.0:
            onset = s.t
        if onset is not None:
            if s.u[node] > 2 * p.epsilon:
                break
            inside += 1
            if inside >= 20:
                break
    return onset, inside


def test_latent_plateau_against_fine_step():
    p = problem(n=128)
    node = int(np.argmin(np.abs(p.grid.coords)))
    dt = cfl_timestep(p)
    onset, steps = _plateau_onset(p, dt, node)
    fine, _ = _plateau_onset(p, dt / 10, node)
    assert steps >= 20
    assert onset == pytest.approx(fine, rel=0.05)


def test_two_resolutions_agree():
    a = run(problem(n=256, T=0.5, snapshots=4))
    b = run(problem(n=512, T=0.5, snapshots=4))
    fine = 0.5 * (b.final_u[0::2] + b.final_u[1::2])
    assert np.max(np.abs(a.final_u - fine)) <= 0.05 * np.max(np.abs(fine))


def test_snapshots_on_exact_times():
    rec = run(problem(T=0.5, snapshots=5))
    assert np.array_equal(rec.times, np.array([0.5 * k / 5 for k in range(6)]))


def test_ladder_smooth_identical():
    rep = epsilon_ladder(problem(NonlinearitySpec.polynomial(), T=0.2, snapshots=4), [1e-1, 1e-2, 1e-3])
    assert max(rep.distances) <= 1e-12


def test_ladder_stefan_cauchy():
    rep = epsilon_ladder(problem(T=0.5, snapshots=4), [1e-1, 1e-2, 1e-3])
    assert rep.distances[1] <= 1.5 * rep.distances[0]
    assert rep.linf_spread <= 1e-10


def test_ladder_requires_decreasing():
    with pytest.raises(ValueError):
        epsilon_ladder(problem(), [1e-2, 1e-1])


def test_resume_bit_exact(tmp_path):
    p = problem(T=0.5, snapshots=10)
    full = run(p, out_dir=tmp_path / "full")
    run(p, out_dir=tmp_path / "part", stop_after_snapshots=4)
    resumed = run(p, out_dir=tmp_path / "part", resume=True)
    assert np.array_equal(full.u, resumed.u)
    assert np.array_equal(full.extrema, resumed.extrema)
    assert np.array_equal(RunRecord.load(tmp_path / "part").u, full.u)


def test_resume_rejects_other_problem(tmp_path):
    run(problem(T=0.5, snapshots=10), out_dir=tmp_path, stop_after_snapshots=3)
    with pytest.raises(ResumeError):
        run(problem(T=0.5, snapshots=10, eps=1e-2), out_dir=tmp_path, resume=True)


def test_record_roundtrip(tmp_path):
    rec = run(problem(T=0.2, snapshots=3))
    rec.save(tmp_path)
    back = RunRecord.load(tmp_path)
    assert np.array_equal(back.u, rec.u) and np.array_equal(back.v, rec.v) and np.array_equal(back.times, rec.times)


def test_problem_replace_keeps_weights_shape():
    p = problem()
    q = replace(p, epsilon=1e-2)
    assert q.weights.W.shape == p.weights.W.shape
