import numpy as np
import pytest

import oracles
from degdiff.grid import Field, Grid, laplacian_values
from degdiff.model import InitialDataSpec, Nonlinearity, ProblemSpec, SourceSpec, potential, truncated_source
from degdiff.grid import gradient_values
from degdiff.solver import (
    Regularization,
    SolverError,
    StepperConfig,
    config_hash,
    load_trajectory,
    mollify_measure,
    run,
    run_schedule,
    save_trajectory,
    step_elliptic_parabolic,
    step_primal,
)

ZERO = SourceSpec("zero")


def spec_for(m=2.0, q=2.0, L=1.0, T=0.1, initial=None, grad=True, source=ZERO):
    initial = initial or InitialDataSpec("gaussian_bump", {"amplitude": 1.0, "width": 0.3})
    return ProblemSpec(m, q, 1, L, T, source, initial, gradient_source=grad)


def test_config_validation():
    with pytest.raises(ValueError):
        StepperConfig(scheme="rk4")
    with pytest.raises(ValueError):
        StepperConfig(dt=-1.0)
    with pytest.raises(ValueError):
        Regularization(4, (1, 4, 2))


@pytest.mark.parametrize("scheme", ["semi_implicit", "newton_implicit"])
def test_zero_is_fixed_point(scheme):
    g = Grid(1, 16)
    out = step_primal(g.zeros(), spec_for(), Regularization(8), StepperConfig(dt=1e-3, scheme=scheme))
    assert np.all(out.values == 0)
    nl = Nonlinearity(0.5, 8)
    v = step_elliptic_parabolic(g.zeros(), nl, g.zeros(), StepperConfig(dt=1e-3))
    assert np.all(v.values == 0)


@pytest.mark.parametrize("scheme", ["semi_implicit", "newton_implicit"])
def test_heat_step_matches_dense_solve(scheme):
    g = Grid(1, 8, 1.0)
    spec = spec_for(m=1.0, q=1.5, grad=False)
    u = np.random.default_rng(0).random(8)
    dt = 0.01
    out = step_primal(Field(g, u), spec, Regularization(10), StepperConfig(dt=dt, scheme=scheme, newton_tol=1e-13))
    ref = np.linalg.solve(np.eye(8) - dt * oracles.dense_laplacian_1d(8, 1.0), u)
    assert np.allclose(out.values, ref, rtol=1e-11, atol=1e-13)


def test_linear_b_step_matches_dense_solve():
    g = Grid(1, 8, 1.0)
    nl = Nonlinearity(1.0, 1)  # b(s) = s
    v = np.random.default_rng(1).random(8)
    h = np.random.default_rng(2).random(8)
    dt = 0.02
    out = step_elliptic_parabolic(Field(g, v), nl, Field(g, h), StepperConfig(dt=dt, newton_tol=1e-13))
    ref = np.linalg.solve(np.eye(8) - dt * oracles.dense_laplacian_1d(8, 1.0), v + dt * h)
    assert np.allclose(out.values, ref, rtol=1e-11)


def test_primal_step_consistency_in_dt():
    g = Grid(1, 32, 1.0)
    n = 1e6
    spec = spec_for()
    x = g.axis()
    u = 0.5 + 0.5 * np.cos(0.5 * np.pi * x)
    target = laplacian_values(potential(2.0, n, u), g.h) + truncated_source(2.0, n, gradient_values(u, g.h))
    errs = []
    dts = [1e-4, 5e-5, 2.5e-5, 1.25e-5]
    for dt in dts:
        new = step_primal(Field(g, u), spec, Regularization(n), StepperConfig(dt=dt, scheme="newton_implicit", newton_tol=1e-14))
        errs.append(np.max(np.abs((new.values - u) / dt - target)))
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.1)


@pytest.mark.parametrize("dt", [1e-2, 1e-3, 1e-4])
def test_primal_and_elliptic_parabolic_paths_agree(dt):
    # with v = (u + 1/n)^m - n^-m the matching b has offset n^-m, i.e. index n^m
    g = Grid(1, 32, 1.0)
    m, n = 2.0, 4.0
    u = 0.3 + 0.6 * np.cos(0.5 * np.pi * g.axis())
    spec = spec_for(m=m, grad=False)
    cfg = StepperConfig(dt=dt, scheme="newton_implicit", newton_tol=1e-13)
    u_new = step_primal(Field(g, u), spec, Regularization(n), cfg)
    nl = Nonlinearity(1.0 / m, n**m)
    v_new = step_elliptic_parabolic(Field(g, potential(m, n, u)), nl, g.zeros(), cfg)
    assert np.allclose(potential(m, n, u_new.values), v_new.values, atol=1e-10)


def test_two_dimensional_newton_step_is_symmetric_solve():
    g = Grid(2, 12, 1.0)
    spec = ProblemSpec(2.0, 2.0, 2, 1.0, 0.1, ZERO, InitialDataSpec("constant", {"value": 0.0}), gradient_source=False)
    x, y = g.coords()
    u = np.exp(-4 * (x**2 + y**2))
    cfg = StepperConfig(dt=1e-3, scheme="newton_implicit", newton_tol=1e-12)
    new = step_primal(Field(g, u), spec, Regularization(1e3), cfg)
    resid = new.values - u - 1e-3 * laplacian_values(potential(2.0, 1e3, new.values), g.h)
    assert np.max(np.abs(resid)) < 1e-11
    assert np.allclose(new.values, new.values.T, atol=1e-12)


# --- measures ----------------------------------------------------------------


def dirac(t0=0.0, x0=0.0):
    return SourceSpec("measure", location=(x0,), time=t0, mass=2.5)


@pytest.mark.parametrize("n", [1, 4, 64])
def test_mollified_mass_exact(n):
    g = Grid(1, 64, 1.0)
    meas = mollify_measure(dirac(), g, n, 0.01, 1.0)
    assert meas.total() == pytest.approx(2.5, rel=1e-10)


def test_mollifier_radius_shrinks():
    g = Grid(1, 64, 1.0)
    radii = [mollify_measure(dirac(0.5), g, n, 0.001, 1.0).radius_x for n in (2, 4, 8, 16, 32, 64)]
    assert all(b <= a for a, b in zip(radii, radii[1:]))
    assert radii[-1] == pytest.approx(4 * g.h)


def test_mollifier_action_converges():
    phi = lambda coords, t: np.exp(-coords[0] ** 2 - t)
    errs = []
    for cells, n, dt in ((32, 4, 0.01), (128, 16, 0.0025), (512, 64, 0.000625)):
        g = Grid(1, cells, 1.0)
        meas = mollify_measure(dirac(0.5, 0.2), g, n, dt, 1.0)
        errs.append(abs(meas.action(phi) - 2.5 * np.exp(-0.04 - 0.5)))
    assert errs[-1] < errs[0] and errs[-1] < 1e-2


def test_mollifier_support_errors():
    g = Grid(1, 64, 1.0)
    with pytest.raises(ValueError):
        mollify_measure(dirac(x0=0.95), g, 64, 0.01, 1.0)
    with pytest.raises(ValueError):
        mollify_measure(dirac(t0=0.99), g, 64, 0.01, 1.0)
    one_sided = mollify_measure(dirac(t0=0.0), g, 8, 0.01, 1.0)
    assert one_sided.time_weights[0] == one_sided.time_weights.max()


# --- drivers -----------------------------------------------------------------


def test_run_trivial_cases():
    g = Grid(1, 16)
    traj = run(spec_for(T=0.0), 8, g, StepperConfig(dt=0.01))
    assert traj.times == [0.0] and len(traj.snapshots) == 1
    zero = spec_for(initial=InitialDataSpec("constant", {"value": 0.0}))
    traj = run(zero, 8, g, StepperConfig(dt=0.01))
    assert all(np.all(s.values == 0) for s in traj.snapshots)
    assert traj.times[-1] == pytest.approx(0.1)
    with pytest.raises(ValueError):
        run(spec_for(T=0.01), 8, g, StepperConfig(dt=0.1))


def test_run_stride_and_metadata():
    g = Grid(1, 16)
    traj = run(spec_for(), 8, g, StepperConfig(dt=0.01, stride=3))
    assert len(traj.steps) == 10
    assert traj.times == pytest.approx([0.0, 0.03, 0.06, 0.09, 0.1])
    assert traj.snapshots[0] == Field(g, InitialDataSpec("gaussian_bump", {"amplitude": 1.0, "width": 0.3}).sample(g))
    assert all(np.all(s.values >= 0) for s in traj.snapshots)


def test_run_is_deterministic_and_threads_match():
    g = Grid(1, 32)
    spec = spec_for()
    cfg = StepperConfig(dt=0.005, scheme="newton_implicit")
    a = run(spec, 16, g, cfg)
    b = run(spec, 16, g, cfg)
    assert all(x == y for x, y in zip(a.snapshots, b.snapshots))
    seq = run_schedule(spec, [1, 2, 4], g, cfg, threads=1)
    par = run_schedule(spec, [1, 2, 4], g, cfg, threads=3)
    assert all(x.final == y.final for x, y in zip(seq, par))


def test_run_attaches_failure_time():
    g = Grid(1, 32)
    cfg = StepperConfig(dt=0.05, scheme="newton_implicit", newton_max_iter=1, newton_tol=1e-15)
    with pytest.raises(SolverError) as info:
        run(spec_for(T=0.2), 8, g, cfg)
    assert info.value.time == 0.0


def test_measure_run_mass_and_kind():
    g = Grid(1, 64, 0.5)
    spec = ProblemSpec(
        2.0, 2.0, 1, 0.5, 0.002, dirac(), InitialDataSpec("constant", {"value": 0.0}), gradient_source=False
    )
    traj = run(spec, 8, g, StepperConfig(dt=1e-4, scheme="newton_implicit"))
    assert traj.kind == "v"
    nl = Nonlinearity(0.5, 8)
    mass = np.sum(nl.b(traj.final.values)) * g.h
    assert mass == pytest.approx(2.5, rel=1e-6)
    with pytest.raises(ValueError):
        run(spec, 8, g, StepperConfig(dt=3e-4))


def test_persistence_round_trip(tmp_path):
    g = Grid(1, 16)
    traj = run(spec_for(), 8, g, StepperConfig(dt=0.02))
    h = config_hash({"a": 1})
    save_trajectory(traj, tmp_path, h)
    back = load_trajectory(tmp_path)
    assert back.times == traj.times and back.kind == "u"
    assert all(x == y for x, y in zip(back.snapshots, traj.snapshots))
    assert len(back.steps) == len(traj.steps)
    assert config_hash({"a": 1}) == h != config_hash({"a": 2})
