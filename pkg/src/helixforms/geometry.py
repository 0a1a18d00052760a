"""Planar domains (a disk minus disjoint circular holes), curves and quadrature.

Boundary circles are numbered from 1: ``S_1`` is the outer circle and
``S_2 .. S_d`` are the holes in the order given.  Boundary curves carry the
boundary orientation of M (outer counterclockwise, holes clockwise).

The M quadrature is a degree-5 seven-point rule on quadratic (six-node)
triangles whose boundary-edge midpoints are snapped onto the circles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.spatial import Delaunay

Point = tuple[float, float]


class GeometryError(ValueError):
    pass


class MeshError(RuntimeError):
    pass


class PathConstructionError(GeometryError):
    pass


@dataclass(frozen=True)
class Circle:
    center: Point
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "radius", float(self.radius))
        if not self.radius > 0:
            raise GeometryError(f"circle radius must be positive, got {self.radius}")

    def point_at_angle(self, theta: float) -> Point:
        cx, cy = self.center
        return (cx + self.radius * math.cos(theta), cy + self.radius * math.sin(theta))

    def angle_of(self, p: Point) -> float:
        return math.atan2(p[1] - self.center[1], p[0] - self.center[0])

    def distance(self, p) -> np.ndarray:
        """Signed distance to the circle, positive outside."""
        p = np.asarray(p, dtype=float)
        return np.hypot(p[..., 0] - self.center[0], p[..., 1] - self.center[1]) - self.radius


@dataclass(frozen=True)
class DomainM:
    """Outer disk minus disjoint open disks.

    ``anchors`` holds one point per boundary circle (outer first); the
    default is the rightmost point of each circle.  ``paths`` optionally
    supplies explicit polylines for connecting paths, keyed by the 1-based
    pair ``(i, k)`` with ``i < k``.
    """

    outer: Circle
    holes: tuple[Circle, ...] = ()
    anchors: tuple[Point, ...] | None = None
    paths: tuple[tuple[tuple[int, int], tuple[Point, ...]], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "holes", tuple(self.holes))
        circles = self.circles
        R = self.outer.radius
        for j, h in enumerate(self.holes, start=2):
            gap = R - (math.dist(h.center, self.outer.center) + h.radius)
            if not gap > 0:
                raise GeometryError(f"hole S_{j} is not strictly inside the outer circle")
        for a in range(len(self.holes)):
            for b in range(a + 1, len(self.holes)):
                ha, hb = self.holes[a], self.holes[b]
                if not math.dist(ha.center, hb.center) - ha.radius - hb.radius > 0:
                    raise GeometryError(f"holes S_{a + 2} and S_{b + 2} overlap or touch")
        if self.anchors is None:
            anchors = tuple(c.point_at_angle(0.0) for c in circles)
        else:
            anchors = tuple((float(p[0]), float(p[1])) for p in self.anchors)
            if len(anchors) != len(circles):
                raise GeometryError(f"expected {len(circles)} anchors, got {len(anchors)}")
            for i, (c, p) in enumerate(zip(circles, anchors), start=1):
                if abs(float(c.distance(p))) > 1e-12 * c.radius:
                    raise GeometryError(f"anchor x_{i}={p} does not lie on S_{i}")
        object.__setattr__(self, "anchors", anchors)
        paths = tuple(((int(i), int(k)), tuple((float(x), float(y)) for x, y in pts))
                      for (i, k), pts in self.paths)
        object.__setattr__(self, "paths", paths)

    @property
    def circles(self) -> tuple[Circle, ...]:
        return (self.outer,) + self.holes

    @property
    def d(self) -> int:
        return 1 + len(self.holes)

    def circle(self, i: int) -> Circle:
        self._check_index(i)
        return self.circles[i - 1]

    def anchor(self, i: int) -> Point:
        self._check_index(i)
        return self.anchors[i - 1]

    def _check_index(self, i):
        if not 1 <= i <= self.d:
            raise IndexError(f"boundary index {i} out of range 1..{self.d}")

    @property
    def area(self) -> float:
        return math.pi * (self.outer.radius ** 2 - sum(h.radius ** 2 for h in self.holes))

    def min_gap(self) -> float:
        """Smallest distance between two boundary circles."""
        gaps = []
        R = self.outer.radius
        for h in self.holes:
            gaps.append(R - math.dist(h.center, self.outer.center) - h.radius)
        for a in range(len(self.holes)):
            for b in range(a + 1, len(self.holes)):
                ha, hb = self.holes[a], self.holes[b]
                gaps.append(math.dist(ha.center, hb.center) - ha.radius - hb.radius)
        return min(gaps) if gaps else R

    def contains(self, p, tol: float = 0.0) -> np.ndarray:
        """True for points of the closed domain (``tol`` widens it)."""
        p = np.asarray(p, dtype=float)
        inside = self.outer.distance(p) <= tol
        for h in self.holes:
            inside &= h.distance(p) >= -tol
        return inside

    def clearance(self, p) -> np.ndarray:
        """Distance to the nearest boundary circle (negative outside M)."""
        p = np.asarray(p, dtype=float)
        out = -self.outer.distance(p)
        for h in self.holes:
            out = np.minimum(out, h.distance(p))
        return out


def annulus(r_inner: float = 1.0, r_outer: float = 2.0, center: Point = (0.0, 0.0)) -> DomainM:
    return DomainM(Circle(center, r_outer), (Circle(center, r_inner),))


def disk(radius: float = 1.0, center: Point = (0.0, 0.0)) -> DomainM:
    return DomainM(Circle(center, radius))


def sample_points(dom: DomainM, n: int, rng: np.random.Generator, margin: float = 0.0) -> np.ndarray:
    """Uniform random points of M at distance >= ``margin`` from the boundary."""
    cx, cy = dom.outer.center
    R = dom.outer.radius
    out = np.empty((0, 2))
    while len(out) < n:
        cand = rng.uniform(-R, R, size=(2 * n + 16, 2)) + (cx, cy)
        keep = dom.clearance(cand) >= margin
        out = np.vstack([out, cand[keep]])
    return out[:n]


# ---------------------------------------------------------------------------
# curves

@dataclass(frozen=True)
class LineSegment:
    start: Point
    end: Point

    def point(self, s):
        s = np.asarray(s, dtype=float)[..., None]
        a = np.asarray(self.start)
        b = np.asarray(self.end)
        return a + s * (b - a)

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        return np.broadcast_to(np.subtract(self.end, self.start), s.shape + (2,))

    @property
    def length(self) -> float:
        return math.dist(self.start, self.end)

    def reversed(self) -> "LineSegment":
        return LineSegment(self.end, self.start)


@dataclass(frozen=True)
class ArcSegment:
    center: Point
    radius: float
    theta0: float
    sweep: float  # signed; positive is counterclockwise

    def point(self, s):
        th = self.theta0 + np.asarray(s, dtype=float) * self.sweep
        return np.stack([self.center[0] + self.radius * np.cos(th),
                         self.center[1] + self.radius * np.sin(th)], axis=-1)

    def derivative(self, s):
        th = self.theta0 + np.asarray(s, dtype=float) * self.sweep
        k = self.radius * self.sweep
        return np.stack([-k * np.sin(th), k * np.cos(th)], axis=-1)

    @property
    def start(self) -> Point:
        p = self.point(0.0)
        return (float(p[0]), float(p[1]))

    @property
    def end(self) -> Point:
        p = self.point(1.0)
        return (float(p[0]), float(p[1]))

    @property
    def length(self) -> float:
        return abs(self.radius * self.sweep)

    def reversed(self) -> "ArcSegment":
        return ArcSegment(self.center, self.radius, self.theta0 + self.sweep, -self.sweep)


@dataclass(frozen=True)
class CurveRule:
    """Points, parameter derivatives and weights: ``int a = sum w * a(p) . dp``."""

    points: np.ndarray
    tangents: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class Curve:
    segments: tuple
    closed: bool = False

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise GeometryError("a curve needs at least one segment")
        for a, b in zip(segs, segs[1:]):
            if math.dist(a.end, b.start) > 1e-10:
                raise GeometryError("consecutive segments do not share endpoints")
        if self.closed and math.dist(segs[-1].end, segs[0].start) > 1e-10:
            raise GeometryError("curve flagged closed but endpoints differ")

    @property
    def start(self) -> Point:
        return self.segments[0].start

    @property
    def end(self) -> Point:
        return self.segments[-1].end

    @property
    def length(self) -> float:
        return math.fsum(s.length for s in self.segments)

    def reversed(self) -> "Curve":
        return Curve(tuple(s.reversed() for s in reversed(self.segments)), self.closed)

    def point_at(self, frac) -> np.ndarray:
        """Points at arclength fractions in [0, 1]."""
        frac = np.atleast_1d(np.asarray(frac, dtype=float))
        lengths = np.array([s.length for s in self.segments])
        cum = np.concatenate([[0.0], np.cumsum(lengths)]) / lengths.sum()
        idx = np.clip(np.searchsorted(cum, frac, side="right") - 1, 0, len(lengths) - 1)
        out = np.empty(frac.shape + (2,))
        for j, seg in enumerate(self.segments):
            sel = idx == j
            if np.any(sel):
                local = (frac[sel] - cum[j]) / (cum[j + 1] - cum[j])
                out[sel] = seg.point(local)
        return out

    def quadrature(self, panels: int = 16, order: int = 8) -> CurveRule:
        """Composite Gauss-Legendre rule, ``panels`` per segment."""
        return _curve_rule(self, panels, order)


@lru_cache(maxsize=256)
def _curve_rule(curve: Curve, panels: int, order: int) -> CurveRule:
    gx, gw = np.polynomial.legendre.leggauss(order)
    gx = 0.5 * (gx + 1.0)
    gw = 0.5 * gw
    edges = np.linspace(0.0, 1.0, panels + 1)
    s = (edges[:-1, None] + np.diff(edges)[:, None] * gx[None, :]).ravel()
    w = (np.diff(edges)[:, None] * gw[None, :]).ravel()
    pts, tans, wts = [], [], []
    for seg in curve.segments:
        pts.append(seg.point(s))
        tans.append(seg.derivative(s))
        wts.append(w)
    return CurveRule(np.concatenate(pts), np.concatenate(tans), np.concatenate(wts))


def boundary_circles(dom: DomainM) -> list[Curve]:
    """S_1..S_d as closed curves starting at their anchors, with boundary orientation."""
    out = []
    for i, c in enumerate(dom.circles, start=1):
        theta0 = c.angle_of(dom.anchor(i))
        sweep = 2 * math.pi if i == 1 else -2 * math.pi
        out.append(Curve((ArcSegment(c.center, c.radius, theta0, sweep),), closed=True))
    return out


def _path_margin(dom: DomainM) -> float:
    r_min = min(c.radius for c in dom.circles)
    return 0.25 * min(dom.min_gap(), r_min)


def connecting_path(dom: DomainM, i: int, k: int) -> Curve:
    """Path from anchor x_i to anchor x_k inside M.

    Straight segment between points pushed off the two endpoint circles,
    with arc detours around any hole in the way.  ``dom.paths`` overrides
    the construction with an explicit polyline.
    """
    dom._check_index(i)
    dom._check_index(k)
    if i == k:
        raise GeometryError("connecting path needs two different boundary circles")
    if i > k:
        return connecting_path(dom, k, i).reversed()
    for key, pts in dom.paths:
        if key == (i, k):
            curve = _polyline(dom, i, k, pts)
            break
    else:
        curve = _default_path(dom, i, k)
    _validate_path(dom, curve, i, k)
    return curve


def _polyline(dom, i, k, pts) -> Curve:
    pts = list(pts)
    if math.dist(pts[0], dom.anchor(i)) > 1e-9 or math.dist(pts[-1], dom.anchor(k)) > 1e-9:
        raise PathConstructionError(f"explicit path for ({i},{k}) must run from x_{i} to x_{k}")
    pts[0] = dom.anchor(i)
    pts[-1] = dom.anchor(k)
    return Curve(tuple(LineSegment(a, b) for a, b in zip(pts, pts[1:])))


def _pushed_off(dom, j, m) -> Point:
    c = dom.circle(j)
    p = dom.anchor(j)
    u = np.subtract(p, c.center) / c.radius
    r = c.radius - m if j == 1 else c.radius + m
    return (c.center[0] + r * u[0], c.center[1] + r * u[1])


def _default_path(dom: DomainM, i: int, k: int) -> Curve:
    m = _path_margin(dom)
    P = np.array(_pushed_off(dom, i, m))
    Q = np.array(_pushed_off(dom, k, m))
    D = Q - P
    hits = []
    for j, h in enumerate(dom.holes, start=2):
        rho = h.radius + m
        f = P - np.asarray(h.center)
        a = D @ D
        b = 2 * f @ D
        c = f @ f - rho * rho
        disc = b * b - 4 * a * c
        if disc <= 0:
            continue
        sq = math.sqrt(disc)
        s1 = max((-b - sq) / (2 * a), 0.0)
        s2 = min((-b + sq) / (2 * a), 1.0)
        if s2 - s1 > 1e-9:
            hits.append((s1, s2, j))
    hits.sort()
    for (a1, a2, ja), (b1, b2, jb) in zip(hits, hits[1:]):
        if b1 < a2:
            raise PathConstructionError(
                f"detours around S_{ja} and S_{jb} overlap; supply an explicit path for ({i},{k})")
    segments = []
    cursor = P
    for s1, s2, j in hits:
        entry = P + s1 * D
        exit_ = P + s2 * D
        if np.linalg.norm(entry - cursor) > 1e-14:
            segments.append(LineSegment(tuple(cursor), tuple(entry)))
        h = dom.circle(j)
        rho = h.radius + m
        th0 = math.atan2(entry[1] - h.center[1], entry[0] - h.center[0])
        th1 = math.atan2(exit_[1] - h.center[1], exit_[0] - h.center[0])
        short = (th1 - th0 + math.pi) % (2 * math.pi) - math.pi
        options = [short, short - math.copysign(2 * math.pi, short)]
        chosen = None
        for sweep in options:
            arc = ArcSegment(h.center, rho, th0, sweep)
            pts = arc.point(np.linspace(0, 1, 200))
            ok = np.all(-dom.outer.distance(pts) > 0)
            for jj, c in enumerate(dom.circles[1:], start=2):
                if jj != j:
                    ok &= bool(np.all(c.distance(pts) > 0))
            if ok:
                chosen = arc
                break
        if chosen is None:
            raise PathConstructionError(
                f"cannot detour around S_{j}; supply an explicit path for ({i},{k})")
        segments.append(chosen)
        cursor = np.asarray(chosen.end)
    if np.linalg.norm(Q - cursor) > 1e-14:
        segments.append(LineSegment(tuple(cursor), tuple(Q)))
    segments = [LineSegment(dom.anchor(i), tuple(P))] + segments + \
        [LineSegment(tuple(Q), dom.anchor(k))]
    return Curve(tuple(_merge_collinear(segments)))


def _merge_collinear(segments):
    out = [segments[0]]
    for seg in segments[1:]:
        prev = out[-1]
        if isinstance(prev, LineSegment) and isinstance(seg, LineSegment):
            u = np.subtract(prev.end, prev.start)
            v = np.subtract(seg.end, seg.start)
            cross = u[0] * v[1] - u[1] * v[0]
            if abs(cross) <= 1e-12 * np.linalg.norm(u) * np.linalg.norm(v) and u @ v > 0:
                out[-1] = LineSegment(prev.start, seg.end)
                continue
        out.append(seg)
    return out


def _validate_path(dom: DomainM, curve: Curve, i: int, k: int, samples: int = 1000):
    pts = curve.point_at(np.linspace(0.0, 1.0, samples))
    tol = 1e-12 * dom.outer.radius
    if np.any(dom.outer.distance(pts) > tol):
        raise PathConstructionError(f"path ({i},{k}) leaves the outer disk")
    for j, h in enumerate(dom.holes, start=2):
        dist = h.distance(pts)
        if j in (i, k):
            if np.any(dist < -tol):
                raise PathConstructionError(f"path ({i},{k}) enters hole S_{j}")
        elif not np.min(dist) > 0:
            raise PathConstructionError(f"path ({i},{k}) has no clearance from hole S_{j}")


# ---------------------------------------------------------------------------
# quadrature

def _dunavant5():
    r15 = math.sqrt(15.0)
    a1, b1 = (6 - r15) / 21, (9 + 2 * r15) / 21
    a2, b2 = (6 + r15) / 21, (9 - 2 * r15) / 21
    w1, w2 = (155 - r15) / 1200, (155 + r15) / 1200
    pts = np.array([[1 / 3, 1 / 3], [a1, a1], [b1, a1], [a1, b1], [a2, a2], [b2, a2], [a2, b2]])
    wts = np.array([9 / 40, w1, w1, w1, w2, w2, w2]) * 0.5  # reference area 1/2
    return pts, wts


TRIANGLE_RULE = _dunavant5()


def _p2_shape(xi, eta):
    l0 = 1.0 - xi - eta
    l1, l2 = xi, eta
    N = np.stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
                  4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0], axis=-1)
    dxi = np.stack([-(4 * l0 - 1), 4 * l1 - 1, 0 * l2,
                    4 * (l0 - l1), 4 * l2, -4 * l2], axis=-1)
    deta = np.stack([-(4 * l0 - 1), 0 * l1, 4 * l2 - 1,
                     -4 * l1, 4 * l1, 4 * (l0 - l2)], axis=-1)
    return N, np.stack([dxi, deta], axis=-1)


@dataclass(frozen=True)
class CircleRule:
    """Uniform rule on S^1 = R/Z: nodes j/n with weights 1/n."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("S^1 rule needs at least one node")

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n) / self.n

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)


@dataclass(frozen=True, eq=False)
class QuadratureMesh:
    domain: DomainM
    level: int
    nodes: np.ndarray          # (N, 2) vertices of the straight mesh
    triangles: np.ndarray      # (T, 3) counterclockwise
    node_circle: np.ndarray    # (N,) 1-based circle index, 0 for interior nodes
    geometry: np.ndarray       # (T, 6, 2) quadratic triangle nodes
    points: np.ndarray = field(repr=False)   # (T*7, 2)
    weights: np.ndarray = field(repr=False)  # (T*7,)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def area(self) -> float:
        return math.fsum(self.weights)


def _base_size(dom: DomainM) -> float:
    r_min = min(h.radius for h in dom.holes) if dom.holes else dom.outer.radius
    return min(dom.outer.radius / 4, 0.5 * r_min, 0.7 * dom.min_gap())


def _base_mesh(dom: DomainM):
    h0 = _base_size(dom)
    pts = []
    tags = []
    for i, c in enumerate(dom.circles, start=1):
        n = max(12, math.ceil(2 * math.pi * c.radius / h0))
        th = c.angle_of(dom.anchor(i)) + 2 * math.pi * np.arange(n) / n
        pts.append(np.stack([c.center[0] + c.radius * np.cos(th),
                             c.center[1] + c.radius * np.sin(th)], axis=1))
        tags.append(np.full(n, i))
    R = dom.outer.radius
    cx, cy = dom.outer.center
    dy = h0 * math.sqrt(3) / 2
    rows = np.arange(-math.ceil(R / dy), math.ceil(R / dy) + 1)
    lattice = []
    for r in rows:
        xs = np.arange(-math.ceil(R / h0) - 1, math.ceil(R / h0) + 2) * h0 + (0.5 * h0 if r % 2 else 0.0)
        lattice.append(np.stack([xs + cx, np.full_like(xs, r * dy) + cy], axis=1))
    lattice = np.concatenate(lattice)
    lattice = lattice[dom.clearance(lattice) >= 0.6 * h0]
    pts.append(lattice)
    tags.append(np.zeros(len(lattice), dtype=int))
    nodes = np.concatenate(pts)
    node_circle = np.concatenate(tags)

    tri = Delaunay(nodes).simplices
    cen = nodes[tri].mean(axis=1)
    keep = dom.contains(cen)
    tri = tri[keep]
    # counterclockwise orientation
    p = nodes[tri]
    cross = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - \
            (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    tri[cross < 0] = tri[cross < 0][:, [0, 2, 1]]

    # the straight mesh must fill the polygonal domain exactly
    poly_area = 0.0
    for i, c in enumerate(dom.circles, start=1):
        n = int(np.sum(node_circle == i))
        a = 0.5 * n * c.radius ** 2 * math.sin(2 * math.pi / n)
        poly_area += a if i == 1 else -a
    p = nodes[tri]
    mesh_area = 0.5 * np.sum((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) -
                             (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    if abs(mesh_area - poly_area) > 1e-9 * poly_area:
        raise MeshError("base triangulation does not conform to the boundary circles")
    return nodes, tri, node_circle


def _edges(tri):
    e = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    key = np.sort(e, axis=1)
    uniq, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    return uniq, inv.reshape(3, -1).T, counts


def _boundary_edge_circle(nodes, node_circle, uniq, counts):
    """Circle index of each unique edge lying on the boundary, else 0."""
    a, b = uniq[:, 0], uniq[:, 1]
    same = (node_circle[a] == node_circle[b]) & (node_circle[a] > 0) & (counts == 1)
    return np.where(same, node_circle[a], 0)


def _snap(dom, pts, circle_idx):
    out = pts.copy()
    for i, c in enumerate(dom.circles, start=1):
        sel = circle_idx == i
        if np.any(sel):
            v = pts[sel] - np.asarray(c.center)
            out[sel] = np.asarray(c.center) + c.radius * v / np.linalg.norm(v, axis=1)[:, None]
    return out


def _refine(dom, nodes, tri, node_circle):
    uniq, tri_edges, counts = _edges(tri)
    bcirc = _boundary_edge_circle(nodes, node_circle, uniq, counts)
    mids = 0.5 * (nodes[uniq[:, 0]] + nodes[uniq[:, 1]])
    mids = _snap(dom, mids, bcirc)
    base = len(nodes)
    nodes = np.concatenate([nodes, mids])
    node_circle = np.concatenate([node_circle, bcirc])
    m01 = base + tri_edges[:, 0]
    m12 = base + tri_edges[:, 1]
    m20 = base + tri_edges[:, 2]
    v0, v1, v2 = tri[:, 0], tri[:, 1], tri[:, 2]
    new = np.concatenate([
        np.stack([v0, m01, m20], axis=1),
        np.stack([m01, v1, m12], axis=1),
        np.stack([m20, m12, v2], axis=1),
        np.stack([m01, m12, m20], axis=1),
    ])
    return nodes, new, node_circle


def _quadratic_geometry(dom, nodes, tri, node_circle):
    uniq, tri_edges, counts = _edges(tri)
    bcirc = _boundary_edge_circle(nodes, node_circle, uniq, counts)
    mids = _snap(dom, 0.5 * (nodes[uniq[:, 0]] + nodes[uniq[:, 1]]), bcirc)
    geo = np.concatenate([nodes[tri], mids[tri_edges]], axis=1)  # (T, 6, 2)
    return geo


def build_mesh(dom: DomainM, level: int) -> QuadratureMesh:
    """Quadrature mesh of M after ``level`` uniform refinements of the base mesh."""
    if level < 0:
        raise ValueError("refinement level must be >= 0")
    return _build_mesh(dom, int(level))


@lru_cache(maxsize=16)
def _build_mesh(dom: DomainM, level: int) -> QuadratureMesh:
    if level == 0:
        nodes, tri, node_circle = _base_mesh(dom)
    else:
        coarse = _build_mesh(dom, level - 1)
        nodes, tri, node_circle = _refine(dom, coarse.nodes, coarse.triangles, coarse.node_circle)
    geo = _quadratic_geometry(dom, nodes, tri, node_circle)
    qp, qw = TRIANGLE_RULE
    N, dN = _p2_shape(qp[:, 0], qp[:, 1])               # (q, 6), (q, 6, 2)
    points = np.einsum("qi,tij->tqj", N, geo)
    jac = np.einsum("qik,tij->tqjk", dN, geo)           # d(x,y)/d(xi,eta)
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    if np.any(det <= 0):
        raise MeshError("inverted curved triangle")
    weights = det * qw[None, :]
    return QuadratureMesh(dom, level, nodes, tri, node_circle, geo,
                          points.reshape(-1, 2), weights.ravel())


@dataclass(frozen=True)
class QuadratureSettings:
    level: int = 4
    n_t: int = 16
    curve_panels: int = 32
    curve_order: int = 8

    def mesh(self, dom: DomainM):
        return build_mesh(dom, self.level)

    @property
    def circle(self) -> CircleRule:
        return CircleRule(self.n_t)
