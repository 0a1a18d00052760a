"""Scenario files, command dispatch and JSON reports.

Scenario files are YAML documents::

    schema_version: 1
    name: annulus-basic
    domain:
      outer: {center: [0, 0], radius: 2}
      holes: [{center: [0, 0], radius: 1}]
      anchors: [[2, 0], [1, 0]]          # optional
      paths: {"1-2": [[2, 0], [1, 0]]}   # optional polyline from x_1 to x_2
    omega: "1"                           # density f of omega = f dx^dy
    H: "(4 - x^2 - y^2)/3"
    diffeo: {family: shear, g: "x*y"}    # or rotation {angle, center} / fiber {c}
    gauge: [1, 1]
    quadrature: {level: 4, n_t: 16}
    tolerances: {rel: 1e-4}
    expected: {flux: [..], helicity: .., calabi: ..}   # optional
    path: {H1: "...", omega1: "...", lambda: 2}         # optional, for path-check

Exit codes: 0 when every check passes, 1 when a check fails, 2 on bad input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import deform as dm
from . import exprlang as el
from .exprlang import ExprError
from .forms import FormError, FormOnM, make_B
from .gauge import GaugeError, vector_potential
from .geometry import (Circle, DomainM, GeometryError, QuadratureSettings,
                       boundary_circles)
from .homology import gauge_loops, kappa_basis
from .invariants import (AdmissibilityError, calabi, flux, flux_between, helicity,
                         helicity_matrix, helicity_with_potential)

SCHEMA_VERSION = 1
SUITES = ("gauge-shift", "identities", "paths", "lemma2", "density", "invariance")

DEFAULT_TOLERANCES = {
    "rel": 1e-4,          # closed-form and identity checks
    "gauge": 1e-7,        # helicity under A -> A + df
    "invariance": 1e-6,   # pullback invariance
    "path": 1e-4,         # helicity along paths
    "density": 1e-3,      # density ratio and residual
    "disjoint": 2e-3,     # probe subsets in disjoint regions
    "square": 1e-2,       # chain-rule ratio for squared helicity
    "lemma2": 1e-5,
    "boundary": 1e-8,     # H boundary conditions
}


class ScenarioError(ValueError):
    pass


@dataclass(eq=False)
class Scenario:
    name: str
    domain: DomainM
    omega_text: str
    H_text: str
    omega: FormOnM
    H: el.Expr
    diffeo: dict | None
    gauge: tuple[int, int]
    quad: QuadratureSettings
    tolerances: dict
    expected: dict = field(default_factory=dict)
    path: dict = field(default_factory=dict)
    source: str = ""

    @property
    def B(self):
        b = getattr(self, "_B", None)
        if b is None:
            b = self._B = make_B(self.omega, self.H, self.domain)
        return b

    def psi(self) -> dm.DiffeoQ | None:
        return build_diffeo(self.diffeo, self.domain) if self.diffeo else None


# ---------------------------------------------------------------------------
# loading

def _circle(node, where) -> Circle:
    if not isinstance(node, dict) or "center" not in node or "radius" not in node:
        raise ScenarioError(f"{where}: expected a mapping with 'center' and 'radius'")
    c = node["center"]
    if not (isinstance(c, (list, tuple)) and len(c) == 2):
        raise ScenarioError(f"{where}.center: expected [x, y]")
    return Circle((float(c[0]), float(c[1])), float(node["radius"]))


def _parse_expr(text, where, aliases=None) -> el.Expr:
    if isinstance(text, (int, float)):
        text = repr(float(text))
    if not isinstance(text, str):
        raise ScenarioError(f"{where}: expected an expression string")
    try:
        return el.parse(text, aliases)
    except ExprError as err:
        raise ScenarioError(f"{where}: {err}") from None


def _domain(node) -> DomainM:
    if not isinstance(node, dict) or "outer" not in node:
        raise ScenarioError("domain: missing 'outer'")
    outer = _circle(node["outer"], "domain.outer")
    holes = tuple(_circle(h, f"domain.holes[{j}]") for j, h in enumerate(node.get("holes") or []))
    anchors = node.get("anchors")
    paths = []
    for key, pts in (node.get("paths") or {}).items():
        try:
            i, k = (int(v) for v in str(key).split("-"))
        except ValueError:
            raise ScenarioError(f"domain.paths: bad key {key!r}, expected 'i-k'") from None
        paths.append(((i, k), tuple(tuple(p) for p in pts)))
    try:
        return DomainM(outer, holes, anchors, tuple(paths))
    except GeometryError as err:
        raise ScenarioError(f"domain: {err}") from None


def check_boundary_conditions(H: el.Expr, dom: DomainM, tol: float = 1e-8,
                              n_s: int = 64, n_t: int = 16) -> None:
    """H constant on every S_i x {t}, and H = 0 on S_1 x S^1."""
    t = np.arange(n_t) / n_t
    curves = boundary_circles(dom)
    vals = []
    for curve in curves:
        pts = curve.point_at(np.arange(n_s) / n_s)
        vals.append(el.evaluate_array(H, pts[:, 0][:, None], pts[:, 1][:, None], t[None, :]))
    order = list(range(1, len(curves))) + [0]   # holes first, then the outer circle
    for j in order:
        spread = float(np.max(np.ptp(vals[j], axis=0)))
        if spread > tol:
            raise ScenarioError(f"H: not constant on S_{j + 1} (spread {spread:.3e})")
    bad = float(np.max(np.abs(vals[0])))
    if bad > tol:
        raise ScenarioError(f"H: must vanish on S_1 (max |H| = {bad:.3e})")


def build_diffeo(node: dict, dom: DomainM) -> dm.DiffeoQ:
    fam = node.get("family")
    if fam == "shear":
        return dm.vertical_shear(_parse_expr(node.get("g", "0"), "diffeo.g"))
    if fam == "fiber":
        return dm.fiber_rotation(float(node.get("c", 0.0)))
    if fam == "rotation":
        center = tuple(node.get("center", dom.outer.center))
        if any(math.dist(h.center, center) > 1e-12 for h in dom.holes) or \
                math.dist(dom.outer.center, center) > 1e-12:
            raise ScenarioError("diffeo: rotation needs circles concentric with its centre")
        r = dm.radius_expr(center)
        return dm.radial_rotation(_parse_expr(node.get("angle", "0"), "diffeo.angle", {"r": r}),
                                  center)
    raise ScenarioError(f"diffeo.family: unknown family {fam!r}")


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ScenarioError(f"{path}: {err.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ScenarioError(f"{path}: {err}") from None
    return scenario_from_dict(data, str(path))


def scenario_from_dict(data, source: str = "<dict>") -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario: expected a mapping at top level")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")
    for key in ("domain", "omega", "H"):
        if key not in data:
            raise ScenarioError(f"scenario: missing required key '{key}'")
    dom = _domain(data["domain"])
    omega_text = str(data["omega"])
    H_text = str(data["H"])
    f = _parse_expr(data["omega"], "omega")
    if "t" in f.free_vars():
        raise ScenarioError("omega: must not depend on t")
    H = _parse_expr(data["H"], "H")
    tol = dict(DEFAULT_TOLERANCES)
    tol.update({k: float(v) for k, v in (data.get("tolerances") or {}).items()})
    try:
        check_boundary_conditions(H, dom, tol["boundary"])
    except ExprError as err:
        raise ScenarioError(f"H: {err}") from None
    gauge = tuple(int(v) for v in data.get("gauge", (1, 1)))
    if len(gauge) != 2 or not all(1 <= v <= dom.d for v in gauge):
        raise ScenarioError(f"gauge: expected two indices in 1..{dom.d}")
    q = data.get("quadrature") or {}
    quad = QuadratureSettings(level=int(q.get("level", 4)), n_t=int(q.get("n_t", 16)))
    omega = FormOnM.area_form(f)
    diffeo = data.get("diffeo")
    if diffeo is not None and not isinstance(diffeo, dict):
        raise ScenarioError("diffeo: expected a mapping")
    s = Scenario(str(data.get("name", Path(source).stem)), dom, omega_text, H_text, omega, H,
                 diffeo, gauge, quad, tol, dict(data.get("expected") or {}),
                 dict(data.get("path") or {}), source)
    try:
        s.B
    except (FormError, ExprError) as err:
        raise ScenarioError(f"omega/H: {err}") from None
    if diffeo is not None:
        try:
            dm.check_diffeo(s.psi(), dom)
        except (dm.DeformError, ExprError) as err:
            raise ScenarioError(f"diffeo: {err}") from None
    return s


# ---------------------------------------------------------------------------
# reports

def _num(v):
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_num(x) for x in v]
    return float(v)


def _rel(value, target):
    scale = max(abs(target), 1e-300)
    return abs(value - target) / scale


class Report:
    def __init__(self, command: str, scenario: Scenario | None):
        self.data = {"command": command}
        if scenario is not None:
            self.data["scenario"] = {
                "name": scenario.name, "source": scenario.source, "d": scenario.domain.d,
                "omega": scenario.omega_text, "H": scenario.H_text,
                "gauge": list(scenario.gauge),
                "quadrature": {"level": scenario.quad.level, "n_t": scenario.quad.n_t},
            }
        self.data["values"] = {}
        self.data["checks"] = []

    def value(self, key, v):
        self.data["values"][key] = _num(v) if not isinstance(v, (dict, str)) else v

    def check(self, name, measured, target, tol, mode="rel", note=None):
        """Record a PASS/FAIL check; ``mode`` is 'rel', 'abs' or 'max'."""
        measured = float(measured)
        target = float(target)
        if mode == "rel":
            err = _rel(measured, target)
        elif mode == "abs":
            err = abs(measured - target)
        else:
            err = measured
        entry = {"name": name, "measured": measured, "target": target, "error": err,
                 "tolerance": float(tol), "mode": mode,
                 "status": "PASS" if err <= tol else "FAIL"}
        if note:
            entry["note"] = note
        self.data["checks"].append(entry)
        return entry

    @property
    def passed(self) -> bool:
        return all(c["status"] == "PASS" for c in self.data["checks"])

    def to_json(self) -> str:
        self.data["status"] = "PASS" if self.passed else "FAIL"
        return json.dumps(self.data, indent=2) + "\n"


# ---------------------------------------------------------------------------
# commands

def cmd_invariants(s: Scenario, matrix: bool = False) -> Report:
    rep = Report("invariants", s)
    B = s.B
    dom = s.domain
    ell, k = s.gauge
    coarse = QuadratureSettings(level=max(s.quad.level - 1, 0), n_t=s.quad.n_t)

    def compute(quad):
        fl = flux(B, kappa_basis(dom, quad))
        h = helicity(B, gauge_loops(dom, ell, k, quad), quad)
        return fl, h, calabi(s.omega, s.H, dom, quad)

    fl, h, cal = compute(s.quad)
    fl_c, h_c, cal_c = compute(coarse)
    rep.value("flux", fl)
    rep.value("flux_labels", {"labels": list(kappa_basis(dom, s.quad).labels)})
    rep.value("helicity", h)
    rep.value("calabi", cal)
    rep.value("error_estimate", {
        "flux": _num(np.abs(np.array(fl) - np.array(fl_c))),
        "helicity": abs(h - h_c), "calabi": abs(cal - cal_c),
        "compared_level": coarse.level})
    if matrix:
        rep.value("helicity_matrix", helicity_matrix(B, dom, s.quad))
    exp = s.expected
    tol = s.tolerances["rel"]
    if "flux" in exp:
        for j, (v, t) in enumerate(zip(fl, exp["flux"])):
            rep.check(f"flux[{j}]", v, t, tol)
    if "helicity" in exp:
        rep.check("helicity", h, exp["helicity"], tol)
    if "calabi" in exp:
        rep.check("calabi", cal, exp["calabi"], tol)
    psi = s.psi()
    if psi is not None:
        _invariance_checks(rep, s, psi, h, fl)
    return rep


def _invariance_checks(rep, s, psi, h, fl):
    dom = s.domain
    g = gauge_loops(dom, *s.gauge, s.quad)
    F = dm.ExactField.normal(s.B)
    tol = s.tolerances["invariance"]
    rep.check(f"{psi.family}: helicity of psi^*(B^A)", F.pulled_back(psi).helicity(g, s.quad),
              h, tol)
    fl_psi = flux(dm.apply_diffeo(psi, s.B), kappa_basis(dom, s.quad), check=False)
    for j, (a, b) in enumerate(zip(fl_psi, fl)):
        rep.check(f"{psi.family}: flux[{j}] of psi^*B", a, b, tol)


def suite_gauge_shift(s: Scenario, rep: Report, n: int = 20, seed: int = 0):
    dom = s.domain
    g = gauge_loops(dom, *s.gauge, s.quad)
    A = vector_potential(s.B, g)
    h0 = helicity_with_potential(s.B, A, dom, s.quad)
    rep.value("helicity", h0)
    rng = np.random.default_rng(seed)
    for j in range(n):
        f = dm.random_periodic_function(rng)
        shifted = A + dm.exact_variation(f).form
        rep.check(f"A + df #{j}", helicity_with_potential(s.B, shifted, dom, s.quad), h0,
                  s.tolerances["gauge"])


def suite_identities(s: Scenario, rep: Report):
    dom = s.domain
    Hm = helicity_matrix(s.B, dom, s.quad)
    rep.value("helicity_matrix", Hm)
    fM = flux(s.B, kappa_basis(dom, s.quad))[0]
    rep.value("flux_M", fM)
    tol = s.tolerances["rel"]
    for ell in range(1, dom.d + 1):
        for k in range(1, dom.d + 1):
            if ell == k:
                continue
            a = Hm[ell - 1, k - 1] - Hm[ell - 1, ell - 1]
            b = 0.5 * (Hm[ell - 1, ell - 1] - Hm[k - 1, k - 1])
            c = fM * flux_between(s.B, dom, ell, k, s.quad)
            rep.check(f"H_{ell}{k} - H_{ell}{ell} = (H_{ell}{ell} - H_{k}{k})/2", a, b, tol)
            rep.check(f"(H_{ell}{ell} - H_{k}{k})/2 = Flux[M] Flux[Pi_{ell}{k}]", b, c, tol)
            rep.check(f"H_{ell}{k} = (H_{ell}{ell} + H_{k}{k})/2", Hm[ell - 1, k - 1],
                      0.5 * (Hm[ell - 1, ell - 1] + Hm[k - 1, k - 1]), tol)


def _path_data(s: Scenario):
    p = s.path
    H1 = _parse_expr(p["H1"], "path.H1") if "H1" in p else s.H
    omega1 = FormOnM.area_form(_parse_expr(p["omega1"], "path.omega1")) if "omega1" in p \
        else s.omega
    lam = float(p.get("lambda", 2.0))
    c0 = float(p.get("fiber_speed", _fiber_c(s, 0.25)))
    return H1, omega1, lam, c0


def _fiber_c(s: Scenario, default: float) -> float:
    if s.diffeo and s.diffeo.get("family") == "fiber":
        return float(s.diffeo.get("c", default))
    return default


def run_path(s: Scenario, lemma: str, samples: int = 17):
    """Samples of the requested path; the endpoint data is rescaled to equal helicity."""
    dom = s.domain
    H1, omega1, lam, c0 = _path_data(s)
    if lemma == "1a":
        g = gauge_loops(dom, *s.gauge, s.quad)
        F0 = dm.ExactField.normal(s.B)
        c = F0.helicity(g, s.quad)
        raw = dm.ExactField.normal(make_B(omega1, H1, dom)).helicity(g, s.quad)
        H1s = el.mul(el.Const(c / raw), H1) if raw != 0 else H1
        F1 = dm.ExactField.normal(make_B(omega1, H1s, dom))
        return c, dm.path_lemma1A(F0, F1, g, samples, s.quad), None
    if lemma == "1b":
        g = gauge_loops(dom, 1, 1, s.quad)
        c = dm.ExactField.normal(s.B).helicity(g, s.quad)
        lam_omega = s.omega.scale(lam)
        raw = dm.ExactField.normal(make_B(lam_omega, H1, dom)).helicity(g, s.quad)
        H1s = el.mul(el.Const(c / raw), H1) if raw != 0 else H1
        family = lambda u: dm.fiber_rotation(u * c0)
        path = dm.path_lemma1B(s.omega, s.H, H1s, lam, family, dom, g, samples, s.quad)
        ends = (dm.apply_diffeo(family(0.0), s.B),
                dm.apply_diffeo(family(1.0), make_B(lam_omega, H1s, dom)))
        return c, path, ends
    raise ScenarioError(f"unknown lemma {lemma!r}")


def _path_checks(s, rep, lemma, samples):
    c, path, ends = run_path(s, lemma, samples)
    tol = s.tolerances["path"]
    worst = max(abs(p.helicity - c) for p in path) / abs(c)
    rep.value(f"path_{lemma}", {"c": c, "samples": [[p.u, p.helicity] for p in path]})
    rep.check(f"lemma {lemma}: max_u |H(B_u) - c| / |c|", worst, 0.0, tol, mode="max")
    if ends is not None:
        for name, F, E in (("start", path[0].field, ends[0]), ("end", path[-1].field, ends[1])):
            gap = dm.max_pointwise_gap(F.B, E, s.domain)
            rep.check(f"lemma {lemma}: {name} point matches (1000 samples)", gap, 0.0, 1e-10,
                      mode="max")
    return path


def suite_paths(s: Scenario, rep: Report, samples: int = 17):
    for lemma in ("1a", "1b"):
        _path_checks(s, rep, lemma, samples)


def _probe_split(dom: DomainM, n: int, seed: int):
    cx, _ = dom.outer.center
    left = dm.random_bump_probes(dom, n, seed, region=lambda p: p[0] < cx)
    right = dm.random_bump_probes(dom, n, seed + 1, region=lambda p: p[0] > cx)
    return left, right


def derivative_report(s: Scenario, rep: Report, functional: str, n_probes: int = 5,
                      seed: int = 0):
    dom = s.domain
    g = gauge_loops(dom, *s.gauge, s.quad)
    F = dm.ExactField.normal(s.B)
    probes = dm.random_bump_probes(dom, n_probes, seed)
    tol = s.tolerances
    if functional == "helicity":
        I = dm.helicity_functional(g, s.quad)
        target = 1.0
    elif functional == "sq-helicity":
        I = dm.squared_helicity(g, s.quad)
        target = 2.0 * F.helicity(g, s.quad)
    elif functional.startswith("flux:"):
        idx = int(functional.split(":", 1)[1])
        basis = kappa_basis(dom, s.quad)
        if not 0 <= idx < len(basis):
            raise ScenarioError(f"flux index {idx} out of range 0..{len(basis) - 1}")
        I = dm.flux_functional(basis, idx)
        target = 0.0
    else:
        raise ScenarioError(f"unknown functional {functional!r}")
    fit = dm.estimate_density_ratio(I, F, probes, s.quad)
    rep.value(f"{functional}: fit", {"ratio": fit.ratio, "residual": fit.residual,
                                      "derivatives": _num(fit.derivatives),
                                      "pairings": _num(fit.pairings)})
    if functional == "helicity":
        rep.check("helicity: density ratio", fit.ratio, target, tol["density"])
        rep.check("helicity: relative residual", fit.residual, 0.0, tol["density"], mode="max")
    elif functional == "sq-helicity":
        rep.check("sq-helicity: density ratio vs 2H(B)", fit.ratio, target, tol["square"])
    else:
        floor = tol["density"]
        rep.check(f"{functional}: density ratio", fit.ratio, 0.0, floor, mode="abs",
                  note="tolerance is the finite-difference noise floor")
    return fit


def suite_density(s: Scenario, rep: Report, n_probes: int = 5, seed: int = 0):
    fit = derivative_report(s, rep, "helicity", n_probes, seed)
    g = gauge_loops(s.domain, *s.gauge, s.quad)
    F = dm.ExactField.normal(s.B)
    I = dm.helicity_functional(g, s.quad)
    left, right = _probe_split(s.domain, 3, seed + 10)
    a = dm.estimate_density_ratio(I, F, left, s.quad).ratio
    b = dm.estimate_density_ratio(I, F, right, s.quad).ratio
    rep.value("helicity: disjoint subset ratios", [a, b])
    rep.check("helicity: disjoint subsets agree", a, b, s.tolerances["disjoint"])
    derivative_report(s, rep, "sq-helicity", n_probes, seed)
    derivative_report(s, rep, "flux:0", n_probes, seed)
    return fit


def suite_lemma2(s: Scenario, rep: Report, n_probes: int = 10, seed: int = 0):
    dom = s.domain
    psi = dm.fiber_rotation(_fiber_c(s, 0.37))
    F = dm.ExactField.normal(s.B)
    I = dm.helicity_functional(gauge_loops(dom, *s.gauge, s.quad), s.quad)
    for j, vf in enumerate(dm.random_bump_probes(dom, n_probes, seed)):
        d0, d1 = dm.verify_lemma2(I, F, psi, vf)
        rep.check(f"probe {j}: D(A') = D(psi^*A')", d1, d0, s.tolerances["lemma2"])


def suite_invariance(s: Scenario, rep: Report):
    dom = s.domain
    g = gauge_loops(dom, *s.gauge, s.quad)
    h = helicity(s.B, g, s.quad)
    fl = flux(s.B, kappa_basis(dom, s.quad))
    rep.value("helicity", h)
    rep.value("flux", fl)
    families = [dm.vertical_shear(_shear_profile(dom)), dm.fiber_rotation(0.3)]
    if all(math.dist(c.center, dom.outer.center) < 1e-12 for c in dom.holes):
        families.append(dm.radial_rotation(_rotation_profile(dom), dom.outer.center))
    else:
        rep.value("radial rotation", "skipped: circles are not concentric")
    if s.diffeo:
        families.append(s.psi())
    for psi in families:
        dm.check_diffeo(psi, dom)
        _invariance_checks(rep, s, psi, h, fl)


def _shear_profile(dom: DomainM) -> el.Expr:
    cx, cy = dom.outer.center
    return 0.4 * el.sin(1.3 * (el.X - cx) + 0.7 * (el.Y - cy)) + 0.2 * (el.X - cx) * (el.Y - cy)


def _rotation_profile(dom: DomainM) -> el.Expr:
    """u(r) vanishing to second order on every boundary radius."""
    r = dm.radius_expr(dom.outer.center)
    u = el.ONE
    for c in dom.circles:
        u = u * (r - c.radius) ** 2
    return 1.5 * u


def cmd_verify(s: Scenario, suite: str) -> Report:
    if suite not in SUITES:
        raise ScenarioError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    rep = Report(f"verify {suite}", s)
    {"gauge-shift": suite_gauge_shift, "identities": suite_identities, "paths": suite_paths,
     "lemma2": suite_lemma2, "density": suite_density,
     "invariance": suite_invariance}[suite](s, rep)
    return rep


def cmd_path_check(s: Scenario, lemma: str, samples: int) -> tuple[Report, str]:
    rep = Report(f"path-check {lemma}", s)
    path = _path_checks(s, rep, lemma, samples)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["u", "helicity"])
    for p in path:
        w.writerow([repr(p.u), repr(p.helicity)])
    return rep, buf.getvalue()


def cmd_derivative(s: Scenario, functional: str, probes: int) -> Report:
    rep = Report(f"derivative {functional}", s)
    derivative_report(s, rep, functional, probes)
    return rep


# ---------------------------------------------------------------------------
# entry point

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="helixforms", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("scenario")
        sp.add_argument("--level", type=int, help="override the mesh refinement level")
        sp.add_argument("--report", help="write the JSON report here instead of stdout")

    a = sub.add_parser("invariants", help="flux, helicity and Calabi values")
    common(a)
    a.add_argument("--gauge", help="gauge subspace as L,K")
    a.add_argument("--matrix", action="store_true", help="include the full helicity matrix")
    v = sub.add_parser("verify", help="run a verification suite")
    common(v)
    v.add_argument("--suite", required=True, choices=SUITES)
    c = sub.add_parser("path-check", help="sample a helicity-preserving path")
    common(c)
    c.add_argument("--lemma", required=True, choices=("1a", "1b"))
    c.add_argument("--samples", type=int, default=17)
    c.add_argument("--csv", help="write the (u, helicity) table here")
    d = sub.add_parser("derivative", help="estimate a functional's density ratio")
    common(d)
    d.add_argument("--functional", required=True)
    d.add_argument("--probes", type=int, default=5)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        s = load_scenario(args.scenario)
        if args.level is not None:
            s.quad = QuadratureSettings(level=args.level, n_t=s.quad.n_t)
        if getattr(args, "gauge", None):
            try:
                ell, k = (int(v) for v in args.gauge.split(","))
            except ValueError:
                raise ScenarioError(f"--gauge: expected L,K, got {args.gauge!r}") from None
            if not (1 <= ell <= s.domain.d and 1 <= k <= s.domain.d):
                raise ScenarioError(f"--gauge: indices must lie in 1..{s.domain.d}")
            s.gauge = (ell, k)
        table = None
        if args.command == "invariants":
            rep = cmd_invariants(s, args.matrix)
        elif args.command == "verify":
            rep = cmd_verify(s, args.suite)
        elif args.command == "path-check":
            rep, table = cmd_path_check(s, args.lemma, args.samples)
        else:
            rep = cmd_derivative(s, args.functional, args.probes)
    except (ScenarioError, ExprError, GeometryError, FormError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (GaugeError, AdmissibilityError, dm.DeformError) as err:
        print(f"check failed: {err}", file=sys.stderr)
        return 1
    text = rep.to_json()
    if args.report:
        Path(args.report).write_text(text)
    else:
        sys.stdout.write(text)
    if table is not None:
        if args.csv:
            Path(args.csv).write_text(table)
        else:
            sys.stderr.write(table)
    for chk in rep.data["checks"]:
        print(f"{chk['status']}  {chk['name']}  (error {chk['error']:.3e}, "
              f"tol {chk['tolerance']:.1e})", file=sys.stderr)
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
