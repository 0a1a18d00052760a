"""Differential forms with expression coefficients on M (x, y) and Q = M x S^1 (x, y, t).

Components are stored against increasing index tuples of the coordinate
coframe, e.g. ``(0, 2)`` for dx^dt.  The public coefficient accessors use
the cyclic convention

    1-form  a_x dx + a_y dy + a_t dt
    2-form  b_yt dy^dt + b_tx dt^dx + b_xy dx^dy
    3-form  c dx^dy^dt

so ``b_tx`` is minus the stored ``(0, 2)`` component.  Q is oriented by
dx^dy^dt and M by dx^dy.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from . import exprlang as el
from .exprlang import Expr
from .geometry import CircleRule, Curve, DomainM, QuadratureMesh, sample_points

_VARS = el.VARIABLES


class FormError(ValueError):
    pass


def _perm_sign(seq) -> int:
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


class Form:
    """A differential form of fixed degree on a ``dim``-dimensional chart."""

    dim = 3

    def __init__(self, degree: int, comps: Mapping[tuple[int, ...], Expr] | None = None):
        if not 0 <= degree <= self.dim:
            raise FormError(f"degree {degree} out of range for dimension {self.dim}")
        self.degree = degree
        full = {}
        for idx in combinations(range(self.dim), degree):
            full[idx] = el.as_expr((comps or {}).get(idx, el.ZERO))
        extra = set(comps or {}) - set(full)
        if extra:
            raise FormError(f"components {sorted(extra)} do not match degree {degree}")
        self.comps = full
        if self.dim == 2:
            for e in full.values():
                if "t" in e.free_vars():
                    raise FormError("forms on M must not depend on t")

    def _new(self, degree, comps):
        return type(self)._from(degree, comps)

    @classmethod
    def _from(cls, degree, comps):
        obj = cls.__new__(cls)
        Form.__init__(obj, degree, comps)
        return obj

    def __repr__(self):
        terms = ", ".join(f"{k}: {v}" for k, v in self.comps.items())
        return f"{type(self).__name__}(degree={self.degree}, {{{terms}}})"

    def _same_shape(self, other):
        if type(other).dim != self.dim or other.degree != self.degree:
            raise FormError("forms of different degree or dimension")

    def __add__(self, other):
        self._same_shape(other)
        return self._new(self.degree, {k: self.comps[k] + other.comps[k] for k in self.comps})

    def __sub__(self, other):
        self._same_shape(other)
        return self._new(self.degree, {k: self.comps[k] - other.comps[k] for k in self.comps})

    def __neg__(self):
        return self._new(self.degree, {k: -v for k, v in self.comps.items()})

    def scale(self, s) -> "Form":
        s = el.as_expr(s)
        return self._new(self.degree, {k: s * v for k, v in self.comps.items()})

    __rmul__ = scale

    def __mul__(self, s):
        if isinstance(s, Form):
            return wedge(self, s)
        return self.scale(s)

    def __xor__(self, other):
        return wedge(self, other)

    def coefficient_arrays(self, x, y, t=0.0) -> list[np.ndarray]:
        """Stored components (index order) evaluated on broadcast arrays."""
        return el.evaluate_many(list(self.comps.values()), x, y, t)

    def evaluate(self, points) -> np.ndarray:
        """Coefficients in the cyclic convention at ``points`` of shape (n, dim)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        t = points[:, 2] if self.dim == 3 else 0.0
        vals = self.coefficient_arrays(points[:, 0], points[:, 1], t)
        out = np.stack(vals, axis=-1) if vals else np.zeros((len(points), 0))
        if self.dim == 3 and self.degree == 2:
            # stored order (0,1), (0,2), (1,2) -> (yt, tx, xy)
            out = np.stack([out[:, 2], -out[:, 1], out[:, 0]], axis=-1)
        return out

    def map_coefficients(self, fn) -> "Form":
        return self._new(self.degree, {k: fn(v) for k, v in self.comps.items()})


class FormOnM(Form):
    dim = 2

    @classmethod
    def function(cls, f) -> "FormOnM":
        return cls._from(0, {(): el.as_expr(f)})

    @classmethod
    def one_form(cls, p, q) -> "FormOnM":
        return cls._from(1, {(0,): el.as_expr(p), (1,): el.as_expr(q)})

    @classmethod
    def area_form(cls, f) -> "FormOnM":
        return cls._from(2, {(0, 1): el.as_expr(f)})

    @property
    def coefficients(self) -> tuple[Expr, ...]:
        return tuple(self.comps.values())


class FormOnQ(Form):
    dim = 3

    @classmethod
    def function(cls, f) -> "FormOnQ":
        return cls._from(0, {(): el.as_expr(f)})

    @classmethod
    def one_form(cls, ax=0.0, ay=0.0, at=0.0) -> "FormOnQ":
        return cls._from(1, {(0,): el.as_expr(ax), (1,): el.as_expr(ay), (2,): el.as_expr(at)})

    @classmethod
    def two_form(cls, b_yt=0.0, b_tx=0.0, b_xy=0.0) -> "FormOnQ":
        return cls._from(2, {(1, 2): el.as_expr(b_yt), (0, 2): -el.as_expr(b_tx),
                             (0, 1): el.as_expr(b_xy)})

    @classmethod
    def three_form(cls, c) -> "FormOnQ":
        return cls._from(3, {(0, 1, 2): el.as_expr(c)})

    @property
    def coefficients(self) -> tuple[Expr, ...]:
        c = self.comps
        if self.degree == 2:
            return (c[(1, 2)], -c[(0, 2)], c[(0, 1)])
        return tuple(c.values())

    ax = property(lambda self: self._get(1, (0,)))
    ay = property(lambda self: self._get(1, (1,)))
    at = property(lambda self: self._get(1, (2,)))
    b_yt = property(lambda self: self._get(2, (1, 2)))
    b_tx = property(lambda self: -self._get(2, (0, 2)))
    b_xy = property(lambda self: self._get(2, (0, 1)))
    c = property(lambda self: self._get(3, (0, 1, 2)))

    def _get(self, degree, idx):
        if self.degree != degree:
            raise FormError(f"component {idx} needs degree {degree}, form has {self.degree}")
        return self.comps[idx]


DX = FormOnQ.one_form(ax=1.0)
DY = FormOnQ.one_form(ay=1.0)
DT = FormOnQ.one_form(at=1.0)


def wedge(a: Form, b: Form) -> Form:
    if type(a).dim != type(b).dim:
        raise FormError("cannot wedge forms on different spaces")
    deg = a.degree + b.degree
    if deg > a.dim:
        raise FormError(f"degree overflow: {a.degree} + {b.degree} > {a.dim}")
    out: dict[tuple[int, ...], Expr] = {}
    for I, fa in a.comps.items():
        if el._is_const(fa, 0.0):
            continue
        for J, fb in b.comps.items():
            if set(I) & set(J) or el._is_const(fb, 0.0):
                continue
            K = tuple(sorted(I + J))
            term = el.mul(fa, fb)
            if _perm_sign(I + J) < 0:
                term = el.neg(term)
            out[K] = el.add(out.get(K, el.ZERO), term)
    return a._new(deg, out)


def exterior_d(a: Form) -> Form:
    if a.degree >= a.dim:
        raise FormError("exterior derivative of a top-degree form")
    out: dict[tuple[int, ...], Expr] = {}
    for I, f in a.comps.items():
        for i in range(a.dim):
            if i in I:
                continue
            df = el.differentiate(f, _VARS[i])
            if el._is_const(df, 0.0):
                continue
            K = tuple(sorted((i,) + I))
            if sum(1 for j in I if j < i) % 2:
                df = el.neg(df)
            out[K] = el.add(out.get(K, el.ZERO), df)
    return a._new(a.degree + 1, out)


def _det(m):
    n = len(m)
    if n == 0:
        return el.ONE
    if n == 1:
        return m[0][0]
    if n == 2:
        return el.sub(el.mul(m[0][0], m[1][1]), el.mul(m[0][1], m[1][0]))
    out = el.ZERO
    for j in range(n):
        minor = [row[:j] + row[j + 1:] for row in m[1:]]
        term = el.mul(m[0][j], _det(minor))
        out = el.add(out, term) if j % 2 == 0 else el.sub(out, term)
    return out


def pullback(psi: Sequence[Expr], a: Form) -> Form:
    """Pull ``a`` back by the map with component expressions ``psi``."""
    psi = [el.as_expr(p) for p in psi]
    if len(psi) != a.dim:
        raise FormError(f"map needs {a.dim} components")
    names = _VARS[:a.dim]
    mapping = dict(zip(names, psi))
    jac = [[el.differentiate(p, v) for v in names] for p in psi]  # jac[j][i] = d psi_j / d x_i
    composed = {J: el.substitute(f, mapping) for J, f in a.comps.items()}
    out = {}
    for I in combinations(range(a.dim), a.degree):
        total = el.ZERO
        for J, f in composed.items():
            if el._is_const(f, 0.0):
                continue
            minor = [[jac[j][i] for i in I] for j in J]
            total = el.add(total, el.mul(f, _det(minor)))
        out[I] = total
    return a._new(a.degree, out)


def pull_to_Q(a: FormOnM) -> FormOnQ:
    """pi_M^* a."""
    return FormOnQ._from(a.degree, dict(a.comps))


def restrict_slice(a: FormOnQ, t0: float) -> FormOnM:
    """Restriction to the slice M x {t0}."""
    if a.degree > 2:
        raise FormError("restriction of a 3-form to a surface slice")
    sub = {"t": el.Const(t0)}
    comps = {I: el.substitute(f, sub) for I, f in a.comps.items() if 2 not in I}
    return FormOnM._from(a.degree, comps)


# ---------------------------------------------------------------------------
# normal form B_{omega,H}

class NormalFormB(FormOnQ):
    """B = pi_M^* omega - dH ^ dt, keeping (omega, H) for potential construction."""

    omega: FormOnM
    hamiltonian: Expr
    domain: DomainM | None


def make_B(omega: FormOnM, H, domain: DomainM | None = None, *, check: bool = True,
           samples: int = 256, seed: int = 0) -> NormalFormB:
    H = el.as_expr(H)
    if not isinstance(omega, FormOnM) or omega.degree != 2:
        raise FormError("omega must be a 2-form on M")
    if check:
        rng = np.random.default_rng(seed)
        if domain is not None:
            pts = sample_points(domain, samples, rng)
        else:
            pts = rng.uniform(-1, 1, size=(samples, 2))
        f = omega.coefficient_arrays(pts[:, 0], pts[:, 1])[0]
        if domain is not None and not np.all(f > 0):
            raise FormError("omega is not positive on M")
        h0 = el.evaluate_array(H, pts[:, 0], pts[:, 1], 0.0)
        h1 = el.evaluate_array(H, pts[:, 0], pts[:, 1], 1.0)
        if np.max(np.abs(h0 - h1)) > 1e-10:
            raise FormError("H is not periodic in t with period 1")
    B = pull_to_Q(omega) - wedge(exterior_d(FormOnQ.function(H)), DT)
    out = NormalFormB._from(2, B.comps)
    out.omega = omega
    out.hamiltonian = H
    out.domain = domain
    return out


# ---------------------------------------------------------------------------
# integration regions

@dataclass(frozen=True, eq=False)
class SliceChain:
    """M x {t0}, oriented by dx^dy."""

    mesh: QuadratureMesh
    t0: float = 0.0


@dataclass(frozen=True, eq=False)
class ProductChain:
    """curve x S^1 with orientation (curve direction, d/dt)."""

    curve: Curve
    rule: CircleRule
    panels: int = 16
    order: int = 8


@dataclass(frozen=True, eq=False)
class SliceLoop:
    """curve x {t0}."""

    curve: Curve
    t0: float = 0.0
    panels: int = 32
    order: int = 8


@dataclass(frozen=True, eq=False)
class FiberLoop:
    """{p} x S^1, oriented by increasing t."""

    point: tuple[float, float]
    rule: CircleRule


@dataclass(frozen=True, eq=False)
class QRegion:
    mesh: QuadratureMesh
    rule: CircleRule


_CHUNK_POINTS = 1 << 18


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("HELIXFORMS_THREADS", "1")))
    except ValueError:
        return 1


def _ordered_sum(parts) -> float:
    # partial sums combined in chunk order; independent of thread count
    return math.fsum(parts)


def integrate(a: Form, region, threads: int | None = None) -> float:
    """Integrate a form over a mesh, curve, chain, loop or all of Q."""
    threads = _threads() if threads is None else threads
    if isinstance(region, QuadratureMesh):
        if not (a.dim == 2 and a.degree == 2):
            raise FormError("a mesh of M integrates 2-forms on M")
        return _integrate_mesh(a.comps[(0, 1)], region.points, region.weights, threads)
    if isinstance(region, SliceChain):
        if not (a.dim == 3 and a.degree == 2):
            raise FormError("a slice chain integrates 2-forms on Q")
        return integrate(restrict_slice(a, region.t0), region.mesh, threads)
    if isinstance(region, Curve):
        if a.degree != 1:
            raise FormError("curves integrate 1-forms")
        if a.dim == 3:
            return integrate(a, SliceLoop(region), threads)
        rule = region.quadrature(32, 8)
        p, q = a.coefficient_arrays(rule.points[:, 0], rule.points[:, 1])
        return float(np.dot(rule.weights, p * rule.tangents[:, 0] + q * rule.tangents[:, 1]))
    if isinstance(region, SliceLoop):
        if not (a.dim == 3 and a.degree == 1):
            raise FormError("loops in Q integrate 1-forms on Q")
        rule = region.curve.quadrature(region.panels, region.order)
        ax, ay, _ = a.coefficient_arrays(rule.points[:, 0], rule.points[:, 1], region.t0)
        return float(np.dot(rule.weights, ax * rule.tangents[:, 0] + ay * rule.tangents[:, 1]))
    if isinstance(region, FiberLoop):
        if not (a.dim == 3 and a.degree == 1):
            raise FormError("loops in Q integrate 1-forms on Q")
        t = region.rule.nodes
        at = el.evaluate_array(a.comps[(2,)], region.point[0], region.point[1], t)
        return float(np.dot(region.rule.weights, at))
    if isinstance(region, ProductChain):
        if not (a.dim == 3 and a.degree == 2):
            raise FormError("product chains integrate 2-forms on Q")
        rule = region.curve.quadrature(region.panels, region.order)
        x = rule.points[:, 0:1]
        y = rule.points[:, 1:2]
        t = region.rule.nodes[None, :]
        b02, b12 = el.evaluate_many([a.comps[(0, 2)], a.comps[(1, 2)]], x, y, t)
        integrand = b02 * rule.tangents[:, 0:1] + b12 * rule.tangents[:, 1:2]
        return float(rule.weights @ integrand @ region.rule.weights)
    if isinstance(region, QRegion):
        if not (a.dim == 3 and a.degree == 3):
            raise FormError("Q integrates 3-forms")
        return _integrate_q(a.comps[(0, 1, 2)], region, threads)
    raise FormError(f"unsupported integration region {type(region).__name__}")


def _chunks(n, size):
    return [(s, min(s + size, n)) for s in range(0, n, size)]


def _run(fn, spans, threads):
    if threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, spans))
    return [fn(s) for s in spans]


def _integrate_mesh(f: Expr, points, weights, threads) -> float:
    def part(span):
        lo, hi = span
        v = el.evaluate_array(f, points[lo:hi, 0], points[lo:hi, 1], 0.0)
        return float(np.dot(weights[lo:hi], v))
    return _ordered_sum(_run(part, _chunks(len(weights), _CHUNK_POINTS), threads))


def _integrate_q(c: Expr, region: QRegion, threads) -> float:
    pts = region.mesh.points
    w = region.mesh.weights
    tn = region.rule.nodes[None, :]
    tw = region.rule.weights
    size = max(1, _CHUNK_POINTS // region.rule.n)

    def part(span):
        lo, hi = span
        v = el.evaluate_array(c, pts[lo:hi, 0:1], pts[lo:hi, 1:2], tn)
        return float(w[lo:hi] @ v @ tw)
    return _ordered_sum(_run(part, _chunks(len(w), size), threads))


def random_form(degree: int, rng: np.random.Generator, dim: int = 3, depth: int = 2) -> Form:
    """Form with random smooth coefficients (for identity checks)."""
    names = _VARS[:dim]

    def coeff():
        e = el.Const(round(rng.uniform(-1, 1), 3))
        for _ in range(depth):
            v = el.var(names[rng.integers(dim)])
            w = el.var(names[rng.integers(dim)])
            a, b = (round(q, 3) for q in rng.uniform(-1, 1, 2))
            choice = rng.integers(4)
            if choice == 0:
                term = el.sin(a * v + b * w)
            elif choice == 1:
                term = v * w * a + b
            elif choice == 2:
                term = el.exp(a * v) * w
            else:
                term = el.cos(v * b) * (w * a + 1)
            e = e * term + v * a if rng.integers(2) else e + term
        return e

    cls = FormOnQ if dim == 3 else FormOnM
    return cls._from(degree, {I: coeff() for I in combinations(range(dim), degree)})
