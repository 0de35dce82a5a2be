import numpy as np
import pytest
import sympy as sp
from scipy import integrate

import oracles
from degdiff.grid import Grid
from degdiff.model import InitialDataSpec, ProblemSpec, SourceSpec
from degdiff.special import (
    PME_COEFFICIENT,
    PME_EXPONENT,
    SelfSimilarProfile,
    barenblatt_eval,
    check_domain_margin,
    dominating_profile,
    from_pme_variables,
    from_pme_variables_array,
    to_pme_variables,
    to_pme_variables_array,
    transformed_pme_spec,
)


@pytest.mark.parametrize(
    "m,dim,ref",
    [(2.0, 1, oracles.BARENBLATT_C_M2_N1), (3.0, 1, oracles.BARENBLATT_C_M3_N1), (2.0, 2, oracles.BARENBLATT_C_M2_N2)],
)
def test_mass_constant_matches_closed_form(m, dim, ref):
    prof = SelfSimilarProfile(m, dim, 1.0, 0.1)
    assert prof.constant == pytest.approx(ref, rel=1e-12)
    assert prof.constant == pytest.approx(oracles.barenblatt_constant(m, dim, 1.0), rel=1e-12)


def test_profile_rejects_and_support():
    with pytest.raises(ValueError):
        SelfSimilarProfile(1.0, 1, 1.0, 0.1)
    with pytest.raises(ValueError):
        SelfSimilarProfile(2.0, 1, -1.0, 0.1)
    prof = SelfSimilarProfile(2.0, 1, 1.0, 0.1)
    r = prof.radius(0.3)
    assert barenblatt_eval(prof, r * 1.001, 0.3) == 0.0
    assert barenblatt_eval(prof, r * 0.999, 0.3) > 0.0


@pytest.mark.parametrize("m", [1.5, 2.0, 3.0])
def test_mass_conserved_in_time(m):
    prof = SelfSimilarProfile(m, 1, 0.7, 0.05)
    masses = []
    for t in (0.0, 0.9):
        r = prof.radius(t)
        val, _ = integrate.quad(lambda x: prof.evaluate((np.array(x),), t), -r, r, epsabs=0, epsrel=1e-12, limit=200)
        masses.append(val)
    assert masses[0] == pytest.approx(0.7, rel=1e-6)
    assert masses[1] == pytest.approx(masses[0], rel=1e-6)


def test_pde_residual_decays_with_refinement():
    m, t = 3.0, 0.4
    prof = SelfSimilarProfile(m, 1, 1.0, 0.1)
    R = prof.radius(t)
    errs, hs = [], []
    for h in (0.04, 0.02, 0.01, 0.005):
        x = np.arange(-0.7 * R, 0.7 * R, h)
        ut = (prof.evaluate((x,), t + 1e-6) - prof.evaluate((x,), t - 1e-6)) / 2e-6
        w = lambda s: prof.evaluate((s,), t) ** m
        lap = (w(x + h) - 2 * w(x) + w(x - h)) / h**2
        errs.append(np.max(np.abs(ut - lap)))
        hs.append(h)
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope >= 1.0


@pytest.mark.parametrize("dim", [1, 2])
def test_dominating_profile_covers_box(dim):
    prof = dominating_profile(1.5, dim, 2.0, 0.4)
    g = Grid(dim, 64, 1.0)
    coords = g.coords()
    inside = np.max(np.abs(np.stack(coords)), axis=0) <= 0.4
    vals = prof.evaluate(coords, 0.0)
    assert np.all(vals[inside] >= 2.0 * (1 - 1e-12))
    corner = tuple(np.array([0.4]) for _ in range(dim))
    assert prof.evaluate(corner, 0.0)[0] == pytest.approx(2.0, rel=1e-10)


def test_domain_margin_check():
    prof = SelfSimilarProfile(2.0, 1, 1.0, 0.1)
    check_domain_margin(prof, 4.0, 0.125, 0.4)
    with pytest.raises(ValueError):
        check_domain_margin(prof, 2.0, 0.125, 0.4)


# --- change of variables ------------------------------------------------------


def test_pme_map_basics():
    g = Grid(1, 16)
    assert np.all(to_pme_variables(g.zeros()).values == 0)
    assert float(to_pme_variables_array(1.0)) == pytest.approx(2.0 / 3.0, rel=1e-15)
    rng = np.random.default_rng(7)
    u = g.field(rng.random(16) * 10)
    back = from_pme_variables(to_pme_variables(u)).values
    assert np.allclose(back, u.values, rtol=1e-12, atol=0)
    w = rng.random(50) * 3
    assert np.allclose(to_pme_variables_array(from_pme_variables_array(w)), w, rtol=1e-12)
    with pytest.raises(ValueError):
        to_pme_variables_array(-1.0)
    with pytest.raises(ValueError):
        from_pme_variables_array(np.array([-0.1]))


def test_transformed_spec_fields():
    assert PME_COEFFICIENT == pytest.approx(oracles.PME_COEFFICIENT, rel=1e-15)
    spec = transformed_pme_spec()
    assert spec.m == PME_EXPONENT == 5.0 / 3.0
    assert spec.diffusion_coefficient == PME_COEFFICIENT
    assert spec.source.kind == "zero" and not spec.gradient_source
    base = ProblemSpec(2, 2, 1, 1.0, 0.2, SourceSpec("zero"), InitialDataSpec("constant", {"value": 1.0}))
    mapped = transformed_pme_spec(base)
    assert mapped.initial.sample(Grid(1, 8))[0] == pytest.approx(2.0 / 3.0)


def test_change_of_variables_symbolic():
    x, t = sp.symbols("x t")
    u = sp.Function("u", positive=True)(x, t)
    K = sp.Rational(4, 5) * sp.Rational(3, 2) ** sp.Rational(5, 3)
    w = sp.Rational(2, 3) * u ** sp.Rational(3, 2)
    ut = sp.diff(u**2, x, 2) + sp.diff(u, x) ** 2
    res = sp.diff(w, t).subs(sp.Derivative(u, t), ut) - K * sp.diff(w ** sp.Rational(5, 3), x, 2)
    assert sp.simplify(sp.powsimp(sp.expand(res), force=True)) == 0


def test_printed_quintic_map_is_not_a_solution_map():
    # w = c u^(5/2) leaves a nonzero residual for every c > 0
    x, t = sp.symbols("x t")
    u = sp.Function("u", positive=True)(x, t)
    K = sp.Rational(4, 5) * sp.Rational(3, 2) ** sp.Rational(5, 3)
    c = sp.Rational(2, 3) * sp.Rational(4, 5) ** sp.Rational(2, 5)
    w = c * u ** sp.Rational(5, 2)
    ut = sp.diff(u**2, x, 2) + sp.diff(u, x) ** 2
    res = sp.diff(w, t).subs(sp.Derivative(u, t), ut) - K * sp.diff(w ** sp.Rational(5, 3), x, 2)
    # evaluate on a concrete positive profile
    prof = 1 + x**2 / 4
    val = res.subs(u, prof).doit().subs({x: sp.Rational(1, 3)})
    assert abs(float(sp.N(val))) > 1e-3
