import math

import numpy as np
import pytest

from helixforms import exprlang as el
from helixforms.forms import DT, FormOnQ, exterior_d, integrate, SliceChain
from helixforms.geometry import QuadratureSettings
from helixforms.homology import gauge_loops, kappa_basis, periods
from helixforms.deform import random_periodic_function


def test_kappa_basis_sizes(ann, unit_disk, two_holes, quad3):
    assert kappa_basis(ann, quad3).labels == ("M x {0}", "Pi_12")
    assert len(kappa_basis(unit_disk, quad3)) == 1
    assert len(kappa_basis(two_holes, quad3)) == 3


def test_gauge_loops(ann, unit_disk, two_holes):
    g = gauge_loops(ann, 1, 1)
    assert g.labels == ("{x_1} x S^1", "S_2 x {0}")
    assert g.loops[0].point == (2.0, 0.0)
    g = gauge_loops(ann, 1, 2)
    assert g.labels == ("{x_2} x S^1", "S_2 x {0}")
    assert g.loops[0].point == (1.0, 0.0)
    assert gauge_loops(unit_disk, 1, 1).labels == ("{x_1} x S^1",)
    assert len(gauge_loops(two_holes, 2, 3).loops) == 3
    with pytest.raises(IndexError):
        gauge_loops(ann, 1, 3)


def test_periods_of_dt(two_holes):
    g = gauge_loops(two_holes, 1, 2)
    assert periods(DT, g) == [pytest.approx(1.0), 0.0, 0.0]


def test_winding_form_period(ann):
    r2 = el.X ** 2 + el.Y ** 2
    w = FormOnQ.one_form(-el.Y / r2, el.X / r2).scale(1 / (2 * math.pi))
    assert periods(w, gauge_loops(ann, 1, 1))[1] == pytest.approx(-1.0, rel=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_exact_forms_have_zero_periods(two_holes, seed):
    f = random_periodic_function(np.random.default_rng(seed))
    df = exterior_d(FormOnQ.function(f))
    for ell in (1, 2, 3):
        assert max(abs(p) for p in periods(df, gauge_loops(two_holes, ell, 1))) <= 1e-8


@pytest.mark.parametrize("t0", [0.25, 0.5, 0.8])
def test_flux_homology_invariant_across_slices(two_holes, t0):
    from helixforms.cli import load_scenario
    s = load_scenario("scenarios/two_holes.yaml")
    mesh = QuadratureSettings(level=3).mesh(s.domain)
    a = integrate(s.B, SliceChain(mesh, 0.0))
    b = integrate(s.B, SliceChain(mesh, t0))
    assert b == pytest.approx(a, rel=1e-9)
