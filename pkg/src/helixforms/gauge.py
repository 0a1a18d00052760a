"""Primitives and gauge-fixed vector potentials for B = pi_M^* omega - dH ^ dt."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import exprlang as el
from .exprlang import ExprDomainError
from .forms import (DT, FormOnM, FormOnQ, NormalFormB, exterior_d, pull_to_Q)
from .geometry import DomainM, sample_points
from .homology import GaugeSubspace, periods


class GaugeError(ValueError):
    pass


_GAUSS = {n: np.polynomial.legendre.leggauss(n) for n in (16, 32, 64, 128, 256, 512)}


class _ChordIntegral:
    """Q(x, y) = integral of f(s, y) ds from the outer circle's left edge to x."""

    def __init__(self, f: el.Expr, dom: DomainM, rtol: float = 1e-13):
        self.f = f
        self.cx, self.cy = dom.outer.center
        self.R = dom.outer.radius
        self.rtol = rtol

    def left_edge(self, y):
        return self.cx - np.sqrt(np.maximum(self.R ** 2 - (y - self.cy) ** 2, 0.0))

    def _gauss(self, x0, x, y, n):
        g, w = _GAUSS[n]
        half = 0.5 * (x - x0)
        s = x0[:, None] + half[:, None] * (g[None, :] + 1.0)
        try:
            vals = el.evaluate_array(self.f, s, y[:, None], 0.0)
        except ExprDomainError as err:
            bad = _first_bad(self.f, s, y)
            raise GaugeError(
                f"omega's density is not evaluable on the chord from ({x0[bad]:.6g}, {y[bad]:.6g}) "
                f"to ({x[bad]:.6g}, {y[bad]:.6g}): {err}") from None
        return half * (vals @ w)

    def __call__(self, x, y, t=None):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        shape = x.shape
        xf = x.ravel()
        yf = y.ravel()
        x0 = self.left_edge(yf)
        orders = sorted(_GAUSS)
        coarse = self._gauss(x0, xf, yf, orders[0])
        out = np.empty_like(xf)
        todo = np.arange(len(xf))
        for n in orders[1:]:
            fine = self._gauss(x0[todo], xf[todo], yf[todo], n)
            done = np.abs(fine - coarse) <= self.rtol * (1.0 + np.abs(fine))
            out[todo[done]] = fine[done]
            todo = todo[~done]
            coarse = fine[~done]
            if len(todo) == 0:
                break
        else:
            raise GaugeError(f"chord quadrature for the primitive did not converge at "
                             f"{len(todo)} points")
        return out.reshape(shape)


def _first_bad(f, s, y):
    for i in range(len(y)):
        try:
            el.evaluate_array(f, s[i], y[i], 0.0)
        except ExprDomainError:
            return i
    return 0


def primitive_alpha(omega: FormOnM, dom: DomainM, *, check: bool = True,
                    samples: int = 256, seed: int = 0) -> FormOnM:
    """alpha = Q(x, y) dy with d(alpha) = omega.

    Q integrates omega's density along horizontal chords of the outer disk,
    so the density must be defined over the holes as well.  Q is a numeric
    kernel; its partials come from central differences.
    """
    if omega.degree != 2:
        raise GaugeError("primitive_alpha expects a 2-form on M")
    f = omega.comps[(0, 1)]
    if check:
        pts = sample_points(dom, samples, np.random.default_rng(seed))
        vals = el.evaluate_array(f, pts[:, 0], pts[:, 1], 0.0)
        if not np.all(vals > 0):
            raise GaugeError("omega is not positive on M")
    kernel = el.Kernel("alpha", _ChordIntegral(f, dom), (el.X, el.Y, el.ZERO),
                       scale=dom.outer.radius)
    return FormOnM.one_form(0.0, kernel)


@dataclass(frozen=True, eq=False)
class ClosedFormBasis:
    """dt followed by beta_j = d atan2(y - y_j, x - x_j) / 2pi for each hole j."""

    forms: tuple[FormOnQ, ...]
    labels: tuple[str, ...]


def closed_form_basis(dom: DomainM) -> ClosedFormBasis:
    forms = [DT]
    labels = ["dt"]
    for j, h in enumerate(dom.holes, start=2):
        cx, cy = h.center
        theta = el.atan2(el.Y - cy, el.X - cx)
        forms.append(exterior_d(FormOnQ.function(theta)).scale(1.0 / (2 * math.pi)))
        labels.append(f"beta_{j}")
    return ClosedFormBasis(tuple(forms), tuple(labels))


@dataclass(frozen=True, eq=False)
class GaugeSolution:
    potential: FormOnQ
    alpha: FormOnM
    basis: ClosedFormBasis
    coefficients: tuple[float, ...]
    period_matrix: np.ndarray
    residual_periods: tuple[float, ...]


def _alpha_for(B: NormalFormB) -> FormOnM:
    alpha = getattr(B, "_alpha", None)
    if alpha is None:
        if B.domain is None:
            raise GaugeError("B carries no domain; build it with make_B(..., domain)")
        alpha = primitive_alpha(B.omega, B.domain)
        B._alpha = alpha
    return alpha


def solve_gauge(B: NormalFormB, g: GaugeSubspace) -> GaugeSolution:
    if not isinstance(B, NormalFormB):
        raise GaugeError("vector potentials are constructed for B in normal form only")
    if B.domain is not None and B.domain != g.domain:
        raise GaugeError("B and the gauge subspace live on different domains")
    if B.domain is None:
        B.domain = g.domain
    cache = B.__dict__.setdefault("_gauge_cache", {})
    key = id(g)
    if key in cache and cache[key][0] is g:
        return cache[key][1]
    alpha = _alpha_for(B)
    A0 = pull_to_Q(alpha) - FormOnQ.one_form(at=B.hamiltonian)
    basis = closed_form_basis(g.domain)
    P = np.array([periods(b, g) for b in basis.forms]).T  # rows: loops
    rhs = -np.array(periods(A0, g))
    if np.linalg.cond(P) > 1e12:
        raise GaugeError("singular period matrix for the requested gauge subspace")
    coeffs = np.linalg.solve(P, rhs)
    A = A0
    for c, form in zip(coeffs, basis.forms):
        A = A + form.scale(float(c))
    residual = tuple(float(v) for v in P @ coeffs - rhs)
    sol = GaugeSolution(A, alpha, basis, tuple(float(c) for c in coeffs), P, residual)
    cache[key] = (g, sol)
    return sol


def vector_potential(B: NormalFormB, g: GaugeSubspace) -> FormOnQ:
    """A with dA = B whose periods over the loops of ``g`` vanish."""
    return solve_gauge(B, g).potential
