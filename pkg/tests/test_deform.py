import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helixforms import deform as dm
from helixforms import exprlang as el
from helixforms.forms import FormOnM, exterior_d, integrate, make_B
from helixforms.geometry import QuadratureSettings, boundary_circles, sample_points
from helixforms.homology import gauge_loops, kappa_basis
from helixforms.invariants import boundary_leak

Q2 = QuadratureSettings(level=2)
Q3 = QuadratureSettings(level=3)


def _pts(dom, n=500, seed=0):
    rng = np.random.default_rng(seed)
    return np.column_stack([sample_points(dom, n, rng), rng.uniform(0, 1, n)])


@pytest.fixture(scope="module")
def field(B_basic):
    return dm.ExactField.normal(B_basic)


@pytest.fixture(scope="module")
def probes(ann):
    return dm.random_bump_probes(ann, 5, seed=3)


def test_identity_pullback(B_basic, ann):
    p = _pts(ann)
    out = dm.apply_diffeo(dm.identity(), B_basic)
    assert np.array_equal(out.evaluate(p), B_basic.evaluate(p))


def test_fiber_rotation_stabilises_autonomous_B(B_basic, ann):
    p = _pts(ann)
    out = dm.apply_diffeo(dm.fiber_rotation(0.37), B_basic)
    assert np.allclose(out.evaluate(p), B_basic.evaluate(p), atol=1e-14)


def test_shear_keeps_boundary_condition(B_basic, ann):
    g = el.parse("ramp(0.25 - (x^2 + (y - 1.5)^2))^3")
    psi = dm.vertical_shear(g)
    dm.check_diffeo(psi, ann)
    out = dm.apply_diffeo(psi, B_basic)
    rng = np.random.default_rng(1)
    for c in boundary_circles(ann):
        assert boundary_leak(out, c, rng) <= 1e-12
    assert np.max(np.abs(exterior_d(out).evaluate(_pts(ann)))) <= 1e-10


def test_shear_rejects_t_dependence():
    with pytest.raises(dm.DeformError):
        dm.vertical_shear(el.T)


def test_radial_rotation_preserves_circles(ann):
    psi = dm.radial_rotation("0.7*(r - 1)*(2 - r) + 0.3")
    dm.check_diffeo(psi, ann)
    p = _pts(ann)
    img = psi(p)
    assert np.allclose(np.hypot(img[:, 0], img[:, 1]), np.hypot(p[:, 0], p[:, 1]))
    assert np.array_equal(img[:, 2], p[:, 2])


def test_check_diffeo_rejects_translation(ann):
    with pytest.raises(dm.DeformError):
        dm.check_diffeo(dm.DiffeoQ((el.X + 0.1, el.Y, el.T), "translate"), ann)


def test_compose():
    psi = dm.compose(dm.fiber_rotation(0.2), dm.vertical_shear(el.X))
    assert psi([[1.0, 2.0, 0.1]])[0] == pytest.approx([1.0, 2.0, 1.3])


@pytest.mark.parametrize("psi", [dm.vertical_shear(el.parse("0.5*sin(x*y)")),
                                 dm.radial_rotation("(r - 1)^2*(2 - r)^2*3"),
                                 dm.fiber_rotation(0.3)], ids=["shear", "rotation", "fiber"])
def test_pullback_invariance_of_helicity_and_flux(field, ann, psi):
    g = gauge_loops(ann, 1, 1, Q3)
    h = field.helicity(g, Q3)
    assert field.pulled_back(psi).helicity(g, Q3) == pytest.approx(h, rel=1e-6)
    basis = kappa_basis(ann, Q3)
    moved = [integrate(dm.apply_diffeo(psi, field.B), c) for c in basis.chains]
    assert moved == pytest.approx([integrate(field.B, c) for c in basis.chains], rel=1e-6)


# variations -----------------------------------------------------------------

def test_bump_probe_periods_vanish(ann, probes):
    for vf in probes:
        dm.check_variation(vf, ann)
        assert vf.kind == "A"


def test_bump_probe_rejects_boundary(ann):
    with pytest.raises(dm.DeformError):
        dm.bump_probe(ann, (1.1, 0.0), 0.3)


def test_kperp_variation_checked_against_gauge(ann):
    # (2 - r) dt: zero periods on {x_1} x S^1 and on S_2 x {0}, period 1 on {x_2} x S^1
    form = dm.FormOnQ.one_form(at=2.0 - dm.radius_expr())
    vf = dm.VariationForm(form, "A_kperp")
    dm.check_variation(vf, ann, gauge_loops(ann, 1, 1))
    with pytest.raises(dm.DeformError):
        dm.check_variation(vf, ann)


def test_exact_direction_has_zero_derivative(field, ann):
    I = dm.helicity_functional(gauge_loops(ann, 1, 1, Q2), Q2)
    vf = dm.exact_variation(el.parse("sin(x*y)*cos(2*pi*t)"))
    est = dm.directional_derivative(I, field, vf)
    assert abs(est.value) <= 1e-9
    assert abs(est.richardson) <= 1e-9


def test_flux_derivative_vanishes(field, ann, probes):
    basis = kappa_basis(ann, Q3)
    for idx in range(len(basis)):
        est = dm.directional_derivative(dm.flux_functional(basis, idx), field, probes[0])
        assert abs(est.value) <= 1e-5


def test_helicity_derivative_is_twice_pairing(field, ann, probes):
    """Measured: D_B H(A') = 2 * int_Q B ^ A' (helicity is quadratic in B)."""
    I = dm.helicity_functional(gauge_loops(ann, 1, 1, Q3), Q3)
    for vf in probes[:2]:
        est = dm.directional_derivative(I, field, vf)
        assert est.value == pytest.approx(2 * dm.pairing(field, vf, Q3), rel=1e-4)
        assert len(est.sweep) == 3


def test_derivative_linear_in_variation(field, ann, probes):
    I = dm.helicity_functional(gauge_loops(ann, 1, 1, Q2), Q2)
    a, b = probes[0], probes[1]
    combo = a.scaled(0.7) + b.scaled(-1.3)
    lhs = dm.directional_derivative(I, field, combo, h=1e-3).value
    rhs = 0.7 * dm.directional_derivative(I, field, a, h=1e-3).value \
        - 1.3 * dm.directional_derivative(I, field, b, h=1e-3).value
    assert lhs == pytest.approx(rhs, rel=1e-6, abs=1e-9)


def test_density_ratio_constant_across_regions(field, ann):
    g = gauge_loops(ann, 1, 1, Q3)
    I = dm.helicity_functional(g, Q3)
    left = dm.random_bump_probes(ann, 3, 11, region=lambda p: p[0] < 0)
    right = dm.random_bump_probes(ann, 3, 12, region=lambda p: p[0] > 0)
    a = dm.estimate_density_ratio(I, field, left, Q3, h=1e-3)
    b = dm.estimate_density_ratio(I, field, right, Q3, h=1e-3)
    assert a.residual <= 1e-3 and b.residual <= 1e-3
    assert a.ratio == pytest.approx(b.ratio, rel=2e-3)
    sq = dm.estimate_density_ratio(dm.squared_helicity(g, Q3), field, left, Q3, h=1e-3)
    # chain rule: ratio(h o I) = h'(I(B)) * ratio(I)
    assert sq.ratio == pytest.approx(2 * field.helicity(g, Q3) * a.ratio, rel=1e-3)


def test_density_ratio_rejects_degenerate_probes(field, ann, probes):
    I = dm.helicity_functional(gauge_loops(ann, 1, 1, Q2), Q2)
    with pytest.raises(dm.DeformError):
        dm.estimate_density_ratio(I, field, probes[:2], Q2)
    with pytest.raises(dm.DeformError, match="dependent"):
        dm.estimate_density_ratio(I, field, [probes[0], probes[0], probes[1]], Q2)


def test_domain_exit_detected(field, ann):
    I = dm.helicity_functional(gauge_loops(ann, 1, 1, Q2), Q2)
    A = field.potential(gauge_loops(ann, 1, 1, Q2))
    vf = dm.VariationForm(-A, "A_kperp")
    with pytest.raises(dm.DeformError, match="zero"):
        dm.directional_derivative(I, field, vf, h=1.0)


def test_lemma2_identity_exact(field, ann, probes):
    I = dm.helicity_functional(gauge_loops(ann, 1, 1, Q2), Q2)
    d0, d1 = dm.verify_lemma2(I, field, dm.identity(), probes[0], h=1e-3)
    assert d0 == d1


def test_lemma2_fiber_rotation(field, ann, probes):
    I = dm.helicity_functional(gauge_loops(ann, 1, 1, Q3), Q3)
    d0, d1 = dm.verify_lemma2(I, field, dm.fiber_rotation(0.37), probes[1], h=1e-3)
    assert d1 == pytest.approx(d0, rel=1e-5)
    basis = kappa_basis(ann, Q3)
    f0, f1 = dm.verify_lemma2(dm.flux_functional(basis, 0), field, dm.fiber_rotation(0.37),
                              probes[1], h=1e-3)
    assert abs(f0) <= 1e-5 and abs(f1) <= 1e-5


def test_lemma2_rejects_non_stabiliser(field, ann, probes):
    I = dm.helicity_functional(gauge_loops(ann, 1, 1, Q2), Q2)
    with pytest.raises(dm.DeformError, match="preserve"):
        dm.verify_lemma2(I, field, dm.vertical_shear(0.3 * el.X), probes[0])


# paths ------------------------------------------------------------------------

def test_path1a_constant(field, ann):
    g = gauge_loops(ann, 1, 1, Q2)
    path = dm.path_lemma1A(field, field, g, 5, Q2)
    c = field.helicity(g, Q2)
    assert all(p.helicity == pytest.approx(c, rel=1e-12) for p in path)


def test_path1a_rejects_unequal_helicity(field, ann):
    g = gauge_loops(ann, 1, 1, Q2)
    with pytest.raises(dm.DeformError, match="differ"):
        dm.path_lemma1A(field, field.scaled(2.0), g, 5, Q2)


def test_path1a_reports_sign_change(field, ann):
    g = gauge_loops(ann, 1, 1, Q2)
    # -B has the same helicity, but (1 - 2u) B passes through zero at u = 1/2
    with pytest.raises(dm.DeformError, match="u=0.5"):
        dm.path_lemma1A(field, field.scaled(-1.0), g, 5, Q2)


def test_path1a_tuned_endpoints(ann, H_basic):
    g = gauge_loops(ann, 1, 1, Q3)
    om1 = FormOnM.area_form(el.parse("1 + 0.3*x^2"))
    H1 = el.parse("(4 - x^2 - y^2)*(x^2 + y^2 + 1)/10")
    F0 = dm.ExactField.normal(make_B(FormOnM.area_form(1.0), H_basic, ann))
    c = F0.helicity(g, Q3)
    assert c == pytest.approx(-3 * math.pi, rel=1e-6)
    raw = dm.ExactField.normal(make_B(om1, H1, ann)).helicity(g, Q3)
    F1 = dm.ExactField.normal(make_B(om1, (c / raw) * H1, ann))
    path = dm.path_lemma1A(F0, F1, g, 17, Q3)
    assert max(abs(p.helicity - c) for p in path) <= 1e-4 * abs(c)
    # the unscaled interpolant does change helicity
    mid = F0.scaled(0.5) + F1.scaled(0.5)
    assert abs(mid.helicity(g, Q3) - c) > 1e-3 * abs(c)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 20.0))
def test_a_coefficient_endpoints(lam):
    assert dm.a_coefficient(0.0, lam) == 1.0
    assert dm.a_coefficient(1.0, lam) == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 20.0), st.floats(0.0, 1.0))
def test_path1b_closed_form(lam, u):
    mu = 1 - u + u * lam
    assert mu * (dm.a_coefficient(u, lam) + u / lam) == pytest.approx(1.0, rel=1e-12)


def test_path1b_trivial(ann, H_basic):
    g = gauge_loops(ann, 1, 1, Q2)
    om = FormOnM.area_form(1.0)
    path = dm.path_lemma1B(om, H_basic, H_basic, 1.0, lambda u: dm.identity(), ann, g, 5, Q2)
    c = path[0].helicity
    assert all(p.helicity == pytest.approx(c, rel=1e-12) for p in path)


def test_path1b_lambda2(ann, H_basic):
    g = gauge_loops(ann, 1, 1, Q3)
    om = FormOnM.area_form(1.0)
    H1 = 0.5 * H_basic
    fam = lambda u: dm.fiber_rotation(0.25 * u)
    path = dm.path_lemma1B(om, H_basic, H1, 2.0, fam, ann, g, 17, Q3)
    c = path[0].helicity
    assert max(abs(p.helicity - c) for p in path) <= 1e-4 * abs(c)
    end = dm.apply_diffeo(fam(1.0), make_B(om.scale(2.0), H1, ann))
    assert dm.max_pointwise_gap(path[-1].field.B, end, ann) <= 1e-12


def test_path1b_checks(ann, H_basic):
    g = gauge_loops(ann, 1, 1, Q2)
    om = FormOnM.area_form(1.0)
    with pytest.raises(dm.DeformError):
        dm.path_lemma1B(om, H_basic, H_basic, 2.0, lambda u: dm.identity(), ann, g, 3, Q2)
    with pytest.raises(dm.DeformError):
        dm.path_lemma1B(om, H_basic, H_basic, -1.0, lambda u: dm.identity(), ann, g, 3, Q2)
    with pytest.raises(dm.DeformError):
        dm.path_lemma1B(om, H_basic, H_basic, 1.0, lambda u: dm.identity(), ann,
                        gauge_loops(ann, 1, 2, Q2), 3, Q2)
