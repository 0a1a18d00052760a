"""Flux, helicity and the Calabi invariant."""

from __future__ import annotations

import numpy as np

from . import exprlang as el
from .forms import (FormOnM, FormOnQ, NormalFormB, QRegion, exterior_d, integrate,
                    pullback, wedge)
from .gauge import vector_potential
from .geometry import DomainM, QuadratureSettings, boundary_circles, sample_points
from .homology import ChainBasis, GaugeSubspace, gauge_loops, kappa_basis, product_chain


class AdmissibilityError(ValueError):
    pass


def check_admissible(B: FormOnQ, dom: DomainM, samples: int = 1000, seed: int = 0,
                     tol: float = 1e-8) -> None:
    """Sampled checks of dB = 0 inside Q and j^* B = 0 on the boundary of Q."""
    rng = np.random.default_rng(seed)
    pts = sample_points(dom, samples, rng)
    t = rng.uniform(0, 1, samples)
    xyz = np.column_stack([pts, t])
    scale = 1.0 + float(np.max(np.abs(B.evaluate(xyz))))
    dB = exterior_d(B).evaluate(xyz)
    if np.max(np.abs(dB)) > tol * scale:
        raise AdmissibilityError(f"dB != 0 (max |dB| = {np.max(np.abs(dB)):.3e})")
    for i, curve in enumerate(boundary_circles(dom), start=1):
        leak = boundary_leak(B, curve, rng)
        if leak > tol * scale:
            raise AdmissibilityError(f"B does not restrict to zero on S_{i} x S^1 "
                                     f"(max |B(tangent, d/dt)| = {leak:.3e})")


def boundary_leak(B: FormOnQ, curve, rng, n: int = 200) -> float:
    """max |B(curve tangent, d/dt)| at random points of curve x S^1."""
    s = rng.uniform(0, 1, n)
    t = rng.uniform(0, 1, n)
    seg = curve.segments[0]
    p = seg.point(s)
    tan = seg.derivative(s)
    b02, b12 = el.evaluate_many([B.comps[(0, 2)], B.comps[(1, 2)]], p[:, 0], p[:, 1], t)
    return float(np.max(np.abs(b02 * tan[:, 0] + b12 * tan[:, 1])))


def flux(B: FormOnQ, basis: ChainBasis, *, check: bool = True) -> list[float]:
    """Integrals of B over the chains of the kappa basis."""
    if check:
        check_admissible(B, basis.domain)
    return [integrate(B, chain) for chain in basis.chains]


def flux_between(B: FormOnQ, dom: DomainM, ell: int, k: int,
                 quad: QuadratureSettings = QuadratureSettings()) -> float:
    """Flux(B) over Pi_{lk} = gamma_{lk} x S^1."""
    return integrate(B, product_chain(dom, ell, k, quad))


def helicity_density(B: FormOnQ, A: FormOnQ) -> FormOnQ:
    return wedge(B, A)


def helicity(B: NormalFormB, g: GaugeSubspace,
             quad: QuadratureSettings = QuadratureSettings()) -> float:
    """Integral over Q of B ^ A for the gauge-fixed potential A."""
    A = vector_potential(B, g)
    return integrate(wedge(B, A), QRegion(quad.mesh(g.domain), quad.circle))


def helicity_with_potential(B: FormOnQ, A: FormOnQ, dom: DomainM,
                            quad: QuadratureSettings = QuadratureSettings()) -> float:
    return integrate(wedge(B, A), QRegion(quad.mesh(dom), quad.circle))


def pulled_back_helicity(B: FormOnQ, A: FormOnQ, psi, dom: DomainM,
                         quad: QuadratureSettings = QuadratureSettings()) -> float:
    """Integral over Q of psi^*(B ^ A)."""
    return integrate(pullback(psi, wedge(B, A)), QRegion(quad.mesh(dom), quad.circle))


def helicity_matrix(B: NormalFormB, dom: DomainM,
                    quad: QuadratureSettings = QuadratureSettings()) -> np.ndarray:
    """H[l-1, k-1] = helicity for gauge kappa-perp_{lk}."""
    d = dom.d
    out = np.empty((d, d))
    for ell in range(1, d + 1):
        for k in range(1, d + 1):
            out[ell - 1, k - 1] = helicity(B, gauge_loops(dom, ell, k, quad), quad)
    return out


def calabi(omega: FormOnM, H, dom: DomainM,
           quad: QuadratureSettings = QuadratureSettings()) -> float:
    """Integral over Q of H pi^*omega ^ dt."""
    H = el.as_expr(H)
    density = el.mul(H, omega.comps[(0, 1)])
    return integrate(FormOnQ.three_form(density), QRegion(quad.mesh(dom), quad.circle))


def boundary_means(H, dom: DomainM, n_t: int = 64) -> list[float]:
    """Mean over t of H on each boundary circle, sampled at the anchors."""
    H = el.as_expr(H)
    t = np.arange(n_t) / n_t
    return [float(np.mean(el.evaluate_array(H, p[0], p[1], t))) for p in dom.anchors]

