"""Diffeomorphisms of Q, variations, helicity-preserving paths and functional derivatives."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import exprlang as el
from .exprlang import Expr
from .forms import (FormOnM, FormOnQ, FiberLoop, QRegion, SliceLoop, exterior_d,
                    integrate, make_B, pullback, wedge)
from .gauge import vector_potential
from .geometry import (CircleRule, DomainM, QuadratureSettings, boundary_circles,
                       sample_points)
from .homology import ChainBasis, GaugeSubspace


class DeformError(ValueError):
    pass


# ---------------------------------------------------------------------------
# diffeomorphisms

@dataclass(frozen=True, eq=False)
class DiffeoQ:
    components: tuple[Expr, Expr, Expr]
    family: str
    params: dict = field(default_factory=dict)

    def __call__(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        vals = el.evaluate_many(list(self.components), points[:, 0], points[:, 1], points[:, 2])
        return np.stack(vals, axis=-1)


def identity() -> DiffeoQ:
    return DiffeoQ((el.X, el.Y, el.T), "identity")


def vertical_shear(g) -> DiffeoQ:
    """(x, y, t) -> (x, y, t + g(x, y))."""
    g = el.as_expr(g)
    if "t" in g.free_vars():
        raise DeformError("shear profile must not depend on t")
    return DiffeoQ((el.X, el.Y, el.T + g), "shear", {"g": str(g)})


def fiber_rotation(c: float) -> DiffeoQ:
    """(x, y, t) -> (x, y, t + c)."""
    return DiffeoQ((el.X, el.Y, el.T + float(c)), "fiber", {"c": float(c)})


def radius_expr(center=(0.0, 0.0)) -> Expr:
    cx, cy = center
    return el.sqrt((el.X - cx) ** 2 + (el.Y - cy) ** 2)


def radial_rotation(angle, center=(0.0, 0.0)) -> DiffeoQ:
    """(r, theta, t) -> (r, theta + u(r), t) about ``center``.

    ``angle`` is u as a tree or text; text may use ``r`` for the radius.
    """
    r = radius_expr(center)
    u = el.parse(angle, {"r": r}) if isinstance(angle, str) else el.as_expr(angle)
    cx, cy = center
    dx = el.X - cx
    dy = el.Y - cy
    c = el.cos(u)
    s = el.sin(u)
    return DiffeoQ((cx + dx * c - dy * s, cy + dx * s + dy * c, el.T), "rotation",
                   {"angle": str(u), "center": tuple(center)})


def compose(psi: DiffeoQ, phi: DiffeoQ) -> DiffeoQ:
    """psi o phi."""
    mapping = dict(zip(el.VARIABLES, phi.components))
    comps = tuple(el.substitute(c, mapping) for c in psi.components)
    return DiffeoQ(comps, f"{psi.family}*{phi.family}")


def check_diffeo(psi: DiffeoQ, dom: DomainM, samples: int = 1000, seed: int = 0,
                 tol: float = 1e-9) -> None:
    """Sampled check that psi maps Q into Q and each boundary circle onto itself."""
    rng = np.random.default_rng(seed)
    n_b = samples // 4
    inner = sample_points(dom, samples - n_b, rng)
    t = rng.uniform(0, 1, samples)
    img = psi(np.column_stack([inner, t[: len(inner)]]))
    if not np.all(dom.contains(img[:, :2], tol)):
        raise DeformError(f"{psi.family} maps interior points out of Q")
    per = max(1, n_b // dom.d)
    for i, curve in enumerate(boundary_circles(dom), start=1):
        pts = curve.point_at(rng.uniform(0, 1, per))
        img = psi(np.column_stack([pts, rng.uniform(0, 1, per)]))
        if np.max(np.abs(dom.circle(i).distance(img[:, :2]))) > tol * dom.outer.radius:
            raise DeformError(f"{psi.family} does not map S_{i} to itself")


def apply_diffeo(psi: DiffeoQ, a: FormOnQ) -> FormOnQ:
    return pullback(psi.components, a)


# ---------------------------------------------------------------------------
# fields with potentials

class ExactField:
    """An exact 2-form on Q together with its gauge-fixed potentials.

    Potentials of sums, multiples and perturbations are the matching
    combinations of potentials, which keeps the gauge conditions intact.
    """

    def __init__(self, B: FormOnQ, potential: Callable[[GaugeSubspace], FormOnQ],
                 domain: DomainM, base: "ExactField | None" = None,
                 psi: DiffeoQ | None = None):
        self.B = B
        self._potential = potential
        self.domain = domain
        self.base = base
        self.psi = psi

    @classmethod
    def normal(cls, B) -> "ExactField":
        if B.domain is None:
            raise DeformError("normal-form B needs its domain")
        return cls(B, lambda g: vector_potential(B, g), B.domain)

    def potential(self, g: GaugeSubspace) -> FormOnQ:
        return self._potential(g)

    def density(self, g: GaugeSubspace) -> FormOnQ:
        """The 3-form B ^ A whose integral is the helicity."""
        if self.psi is not None:
            return pullback(self.psi.components, self.base.density(g))
        return wedge(self.B, self.potential(g))

    def helicity(self, g: GaugeSubspace, quad: QuadratureSettings = QuadratureSettings()) -> float:
        return integrate(self.density(g), QRegion(quad.mesh(self.domain), quad.circle))

    def __add__(self, other: "ExactField") -> "ExactField":
        return ExactField(self.B + other.B, lambda g: self.potential(g) + other.potential(g),
                          self.domain)

    def scaled(self, s: float) -> "ExactField":
        s = float(s)
        return ExactField(self.B.scale(s), lambda g: self.potential(g).scale(s), self.domain)

    def perturbed(self, variation: "VariationForm", u: float) -> "ExactField":
        """B + u dA' with potential A + u A'."""
        u = float(u)
        dA = exterior_d(variation.form)
        return ExactField(self.B + dA.scale(u),
                          lambda g: self.potential(g) + variation.form.scale(u), self.domain)

    def pulled_back(self, psi: DiffeoQ) -> "ExactField":
        return ExactField(apply_diffeo(psi, self.B),
                          lambda g: apply_diffeo(psi, self.potential(g)), self.domain,
                          base=self, psi=psi)


# ---------------------------------------------------------------------------
# variations

@dataclass(frozen=True, eq=False)
class VariationForm:
    """A 1-form A' used as a variation direction.

    ``kind`` is ``"A"`` when every boundary period vanishes and ``"A_kperp"``
    when only the periods of a gauge subspace do.
    """

    form: FormOnQ
    kind: str = "A"
    support: tuple[tuple[float, float], float] | None = None

    def __add__(self, other: "VariationForm") -> "VariationForm":
        kind = "A" if self.kind == other.kind == "A" else "A_kperp"
        return VariationForm(self.form + other.form, kind)

    def scaled(self, s: float) -> "VariationForm":
        return VariationForm(self.form.scale(float(s)), self.kind, self.support)

    def pulled_back(self, psi: DiffeoQ) -> "VariationForm":
        return VariationForm(apply_diffeo(psi, self.form), self.kind)


def bump_probe(dom: DomainM, center, radius: float, direction=(1.0, 0.0, 0.0),
               phase: float = 0.0, power: int = 6) -> VariationForm:
    """phi (1 + cos 2pi(t - phase)) / 2 (p dx + q dy + s dt) with phi supported in a disk."""
    cx, cy = (float(c) for c in center)
    if not float(dom.clearance((cx, cy))) > radius:
        raise DeformError(f"bump at {center} with radius {radius} touches the boundary")
    rho2 = ((el.X - cx) ** 2 + (el.Y - cy) ** 2) / radius ** 2
    phi = el.ramp(1.0 - rho2) ** power
    prof = 0.5 * (1.0 + el.cos(2 * math.pi * (el.T - float(phase))))
    amp = phi * prof
    p, q, s = (float(v) for v in direction)
    form = FormOnQ.one_form(amp * p, amp * q, amp * s)
    return VariationForm(form, "A", ((cx, cy), float(radius)))


def random_bump_probes(dom: DomainM, n: int, seed: int = 0, radius: float | None = None,
                       region: Callable[[np.ndarray], bool] | None = None) -> list[VariationForm]:
    """``n`` bump probes with random centres, directions and phases.

    ``region`` optionally restricts the centres (a predicate on (x, y)).
    """
    rng = np.random.default_rng(seed)
    if radius is None:
        radius = 0.3 * min(dom.min_gap(), dom.outer.radius)
    out = []
    tries = 0
    while len(out) < n:
        tries += 1
        if tries > 1000 * n:
            raise DeformError("could not place bump probes; region too small")
        c = sample_points(dom, 1, rng, margin=1.05 * radius)[0]
        if region is not None and not region(c):
            continue
        direction = rng.normal(size=3)
        out.append(bump_probe(dom, c, radius, direction / np.linalg.norm(direction),
                              phase=float(rng.uniform())))
    return out


def random_periodic_function(rng: np.random.Generator, terms: int = 3) -> Expr:
    """Smooth function on Q, 1-periodic in t, with random coefficients."""
    f = el.ZERO
    for _ in range(terms):
        a, b, c, ph = (float(v) for v in rng.uniform(-1, 1, 4))
        m = int(rng.integers(0, 3))
        term = el.Const(c) * el.sin(a * el.X + b * el.Y + 0.3) \
            * el.cos(2 * math.pi * (m * el.T + ph))
        f = f + term
    return f + float(rng.uniform(-1, 1)) * el.X * el.Y


def exact_variation(f) -> VariationForm:
    return VariationForm(exterior_d(FormOnQ.function(el.as_expr(f))), "A")


def variation_periods(vf: VariationForm, dom: DomainM, n_t: int = 16) -> list[float]:
    """Periods over all generating loops of the boundary of Q."""
    rule = CircleRule(n_t)
    out = [integrate(vf.form, SliceLoop(c, 0.0)) for c in boundary_circles(dom)]
    out += [integrate(vf.form, FiberLoop(dom.anchor(i), rule)) for i in range(1, dom.d + 1)]
    return out


def check_variation(vf: VariationForm, dom: DomainM, g: GaugeSubspace | None = None,
                    tol: float = 1e-8) -> None:
    if vf.kind == "A":
        per = variation_periods(vf, dom)
    else:
        if g is None:
            raise DeformError("A_kperp variations are checked against a gauge subspace")
        per = [integrate(vf.form, loop) for loop in g.loops]
    if max(abs(p) for p in per) > tol:
        raise DeformError(f"variation has non-zero periods {per}")


# ---------------------------------------------------------------------------
# functionals

@dataclass(frozen=True, eq=False)
class Functional:
    name: str
    fn: Callable[[ExactField], float]

    def __call__(self, field: ExactField) -> float:
        return self.fn(field)


def helicity_functional(g: GaugeSubspace, quad: QuadratureSettings = QuadratureSettings()) -> Functional:
    return Functional(f"helicity[{g.ell},{g.k}]", lambda f: f.helicity(g, quad))


def flux_functional(basis: ChainBasis, index: int) -> Functional:
    chain = basis.chains[index]
    return Functional(f"flux[{basis.labels[index]}]", lambda f: integrate(f.B, chain))


def composed(h: Callable[[float], float], inner: Functional, name: str | None = None) -> Functional:
    return Functional(name or f"h({inner.name})", lambda f: h(inner(f)))


def product(a: Functional, b: Functional) -> Functional:
    return Functional(f"{a.name}*{b.name}", lambda f: a(f) * b(f))


def squared_helicity(g: GaugeSubspace, quad: QuadratureSettings = QuadratureSettings()) -> Functional:
    return composed(lambda s: s * s, helicity_functional(g, quad), f"helicity[{g.ell},{g.k}]^2")


# ---------------------------------------------------------------------------
# derivatives

@dataclass(frozen=True)
class DerivativeEstimate:
    value: float        # central difference at the chosen step
    richardson: float   # extrapolated from steps h and h/2
    step: float
    sweep: tuple[tuple[float, float], ...]  # (h, central difference)


def _field_norms(B: FormOnQ, dom: DomainM, samples: int = 400, seed: int = 1) -> np.ndarray:
    rng = np.random.default_rng(seed)
    pts = sample_points(dom, samples, rng)
    xyz = np.column_stack([pts, rng.uniform(0, 1, samples)])
    return np.linalg.norm(B.evaluate(xyz), axis=1)


def _check_nonvanishing(field: ExactField, scale: float, rtol: float = 1e-6):
    """Sampled check that B + u dA' stays away from zero relative to |B|."""
    if not np.all(_field_norms(field.B, field.domain) > rtol * scale):
        raise DeformError("B + u dA' has a zero; the variation leaves the domain")


def directional_derivative(I: Functional, field: ExactField, vf: VariationForm,
                           h: float | None = None, h0: float = 1e-2,
                           sweep: int = 2) -> DerivativeEstimate:
    """d/du I(B + u dA') at u = 0 by central differences.

    With ``h`` given, uses h and h/2.  Otherwise sweeps h0 / 2^k and keeps
    the step where consecutive differences agree best.
    """
    steps = [h, h / 2] if h is not None else [h0 / 2 ** k for k in range(sweep + 1)]
    scale = float(np.max(_field_norms(field.B, field.domain)))
    vals = []
    for s in steps:
        plus = field.perturbed(vf, s)
        minus = field.perturbed(vf, -s)
        _check_nonvanishing(plus, scale)
        _check_nonvanishing(minus, scale)
        vals.append((I(plus) - I(minus)) / (2 * s))
    best = min(range(len(steps) - 1), key=lambda k: abs(vals[k + 1] - vals[k]))
    rich = (4 * vals[best + 1] - vals[best]) / 3
    return DerivativeEstimate(vals[best + 1], rich, steps[best + 1], tuple(zip(steps, vals)))


@dataclass(frozen=True)
class DensityFit:
    ratio: float                 # least-squares lambda in D(A'_i) ~ lambda * int B ^ A'_i
    residual: float              # ||D - lambda G|| / ||D||  (nan when D vanishes)
    abs_residual: float
    derivatives: tuple[float, ...]
    pairings: tuple[float, ...]


def pairing(field: ExactField, vf: VariationForm,
            quad: QuadratureSettings = QuadratureSettings()) -> float:
    """Integral over Q of B ^ A'."""
    return integrate(wedge(field.B, vf.form), QRegion(quad.mesh(field.domain), quad.circle))


def _independence(probes: Sequence[VariationForm], dom: DomainM, n: int = 400, seed: int = 2):
    rng = np.random.default_rng(seed)
    pts = sample_points(dom, n, rng)
    xyz = np.column_stack([pts, rng.uniform(0, 1, n)])
    rows = np.array([p.form.evaluate(xyz).ravel() for p in probes])
    s = np.linalg.svd(rows, compute_uv=False)
    return s[-1] / s[0] if s[0] > 0 else 0.0


def estimate_density_ratio(I: Functional, field: ExactField, probes: Sequence[VariationForm],
                           quad: QuadratureSettings = QuadratureSettings(),
                           h: float | None = None) -> DensityFit:
    if len(probes) < 3:
        raise DeformError("need at least three probes")
    if _independence(probes, field.domain) < 1e-8:
        raise DeformError("probe set is linearly dependent")
    G = np.array([pairing(field, p, quad) for p in probes])
    if np.linalg.norm(G) == 0:
        raise DeformError("probes do not pair with B")
    D = np.array([directional_derivative(I, field, p, h=h).value for p in probes])
    lam = float(G @ D / (G @ G))
    r = D - lam * G
    nd = np.linalg.norm(D)
    rel = float(np.linalg.norm(r) / nd) if nd > 0 else float("nan")
    return DensityFit(lam, rel, float(np.linalg.norm(r)), tuple(D), tuple(G))


def verify_lemma2(I: Functional, field: ExactField, psi: DiffeoQ, vf: VariationForm,
                  h: float | None = None, samples: int = 1000, seed: int = 3) -> tuple[float, float]:
    """(D_B I(A'), D_B I(psi^* A')) for a stabiliser psi of B."""
    rng = np.random.default_rng(seed)
    pts = sample_points(field.domain, samples, rng)
    xyz = np.column_stack([pts, rng.uniform(0, 1, samples)])
    diff = apply_diffeo(psi, field.B).evaluate(xyz) - field.B.evaluate(xyz)
    if np.max(np.abs(diff)) > 1e-8:
        raise DeformError(f"psi does not preserve B (max deviation {np.max(np.abs(diff)):.3e})")
    d0 = directional_derivative(I, field, vf, h=h).value
    d1 = directional_derivative(I, field, vf.pulled_back(psi), h=h).value
    return d0, d1


# ---------------------------------------------------------------------------
# helicity-preserving paths

@dataclass(frozen=True, eq=False)
class PathSample:
    u: float
    field: ExactField
    helicity: float


def _same(a, b, rtol):
    return abs(a - b) <= rtol * max(abs(a), abs(b))


def path_lemma1A(F0: ExactField, F1: ExactField, g: GaugeSubspace, samples: int = 17,
                 quad: QuadratureSettings = QuadratureSettings(),
                 rtol: float = 1e-5) -> list[PathSample]:
    """((1-u) B0 + u B1) * sqrt(c / H((1-u) B0 + u B1)), sampled at ``samples`` values of u."""
    c0 = F0.helicity(g, quad)
    c1 = F1.helicity(g, quad)
    if not _same(c0, c1, rtol):
        raise DeformError(f"endpoint helicities differ: {c0} vs {c1}")
    c = 0.5 * (c0 + c1)
    if c == 0:
        raise DeformError("the path needs non-zero helicity")
    out = []
    for u in np.linspace(0.0, 1.0, samples):
        mix = F0.scaled(1 - u) + F1.scaled(u)
        hm = mix.helicity(g, quad)
        if hm == 0 or math.copysign(1, hm) != math.copysign(1, c):
            raise DeformError(f"interpolant helicity {hm} at u={u} has the wrong sign")
        Bu = mix.scaled(math.sqrt(c / hm))
        out.append(PathSample(float(u), Bu, Bu.helicity(g, quad)))
    return out


def a_coefficient(u: float, lam: float) -> float:
    """a(u) = 1 / (1 - u + u lam) - u / lam."""
    return 1.0 / (1.0 - u + u * lam) - u / lam


def lemma1B_field(omega: FormOnM, H0, H1, lam: float, psi: DiffeoQ, u: float,
                  dom: DomainM) -> ExactField:
    mu = 1.0 - u + u * lam
    Hu = el.add(el.mul(el.Const(a_coefficient(u, lam)), el.as_expr(H0)),
                el.mul(el.Const(u), el.as_expr(H1)))
    B = make_B(omega.scale(mu), Hu, dom)
    return ExactField.normal(B).pulled_back(psi)


def path_lemma1B(omega: FormOnM, H0, H1, lam: float, psi_family: Callable[[float], DiffeoQ],
                 dom: DomainM, g: GaugeSubspace, samples: int = 17,
                 quad: QuadratureSettings = QuadratureSettings(),
                 rtol: float = 1e-5) -> list[PathSample]:
    """psi_u^* B_{(1 - u + u lam) omega, a(u) H0 + u H1}."""
    if lam <= 0:
        raise DeformError("lambda must be positive")
    if (g.ell, g.k) != (1, 1):
        raise DeformError("the second path is stated for the gauge subspace (1, 1)")
    c0 = ExactField.normal(make_B(omega, H0, dom)).helicity(g, quad)
    c1 = ExactField.normal(make_B(omega.scale(lam), H1, dom)).helicity(g, quad)
    if not _same(c0, c1, rtol):
        raise DeformError(f"endpoint helicities differ: {c0} vs {c1}")
    out = []
    for u in np.linspace(0.0, 1.0, samples):
        F = lemma1B_field(omega, H0, H1, lam, psi_family(float(u)), float(u), dom)
        out.append(PathSample(float(u), F, F.helicity(g, quad)))
    return out


def max_pointwise_gap(a: FormOnQ, b: FormOnQ, dom: DomainM, samples: int = 1000,
                      seed: int = 4) -> float:
    rng = np.random.default_rng(seed)
    pts = sample_points(dom, samples, rng)
    xyz = np.column_stack([pts, rng.uniform(0, 1, samples)])
    return float(np.max(np.abs(a.evaluate(xyz) - b.evaluate(xyz))))
