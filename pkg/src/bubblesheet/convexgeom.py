"""Convex bodies in R^3 and R^4, their blowdown cones and slice areas.

Bodies are described by support values on a fixed direction grid together
with the samples they came from: boundary points, ray generators for
polyhedral pieces, and optionally outward normals.  Unbounded bodies are
sampled out to a large ``sample_radius``; the blowdown cone is read off
from the directions of the far samples, which is ``lambda K`` for
``lambda = 1/sample_radius`` intersected with the unit ball.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull
from scipy.spatial.distance import pdist

from .errors import BubbleSheetError, InvariantFailed, OutsideDomain
from .profiles import ProfileKind, RadialProfile, solve_bowl_profile
from .spectral import SQRT2, CylinderGraph, ModeDecomposition


class EmptyBody(BubbleSheetError):
    pass


class NotACone(BubbleSheetError):
    pass


class NoNormals(BubbleSheetError):
    pass


class NotNeutralDominant(BubbleSheetError):
    pass


class EmptyIntersection(BubbleSheetError):
    pass


class ConeTooLarge(BubbleSheetError):
    pass


GOLDEN = (1 + math.sqrt(5)) / 2
# constants of the 4d super-Fibonacci spiral
_PHI4 = math.sqrt(2.0)
_PSI4 = 1.533751168755204288118041


def fibonacci_directions(dim: int, n: int | None = None) -> np.ndarray:
    """Deterministic near-uniform unit vectors: 1024 in 3d, 4096 in 4d by default."""
    if dim == 3:
        n = n or 1024
        i = np.arange(n) + 0.5
        z = 1 - 2 * i / n
        rho = np.sqrt(1 - z * z)
        phi = 2 * math.pi * i / GOLDEN
        return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    if dim == 4:
        n = n or 4096
        s = np.arange(n) + 0.5
        r = np.sqrt(s / n)
        R = np.sqrt(1 - s / n)
        a = 2 * math.pi * s / _PHI4
        b = 2 * math.pi * s / _PSI4
        return np.stack([r * np.sin(a), r * np.cos(a), R * np.sin(b), R * np.cos(b)], axis=1)
    raise ValueError("dimension must be 3 or 4")


@dataclass
class ConvexBody:
    dim: int
    directions: np.ndarray
    support: np.ndarray
    points: np.ndarray | None = None
    rays: np.ndarray | None = None
    normals: np.ndarray | None = None
    sample_radius: float | None = None
    name: str = ""

    def __post_init__(self):
        if self.dim not in (3, 4):
            raise ValueError("dimension must be 3 or 4")
        self.directions = np.asarray(self.directions, dtype=float)
        self.support = np.asarray(self.support, dtype=float)
        if len(self.directions) == 0:
            raise EmptyBody("no support directions")
        if np.any(np.isnan(self.support)):
            raise ValueError("support values may be infinite but not NaN")
        for attr in ("points", "rays", "normals"):
            v = getattr(self, attr)
            if v is not None:
                setattr(self, attr, np.asarray(v, dtype=float).reshape(-1, self.dim))

    @property
    def is_cone(self) -> bool:
        finite = self.support[np.isfinite(self.support)]
        pts_ok = self.points is None or np.all(np.abs(self.points) <= 1e-12)
        return bool(pts_ok and np.all(np.abs(finite) <= 1e-9))

    def to_json(self) -> str:
        sup = ["inf" if math.isinf(v) else v for v in self.support.tolist()]
        return json.dumps({"dim": self.dim, "directions": self.directions.tolist(), "support": sup})

    @classmethod
    def from_json(cls, text: str) -> "ConvexBody":
        d = json.loads(text)
        sup = [math.inf if v == "inf" else float(v) for v in d["support"]]
        return cls(int(d["dim"]), np.array(d["directions"]), np.array(sup))


def _support_from_samples(directions, points, rays, sample_radius, ray_tol=1e-9):
    h = np.full(len(directions), -math.inf)
    if points is not None and len(points):
        h = np.max(directions @ points.T, axis=1)
    if rays is not None and len(rays):
        grows = np.max(directions @ rays.T, axis=1) > ray_tol
        h = np.where(grows, math.inf, h)
    if sample_radius is not None:
        h = np.where(h > 1e-3 * sample_radius, math.inf, h)
    if np.all(h == -math.inf):
        raise EmptyBody("body has no samples")
    return h


def body_from_samples(points=None, rays=None, *, dim: int, normals=None, sample_radius=None,
                      n_directions: int | None = None, name: str = "") -> ConvexBody:
    dirs = fibonacci_directions(dim, n_directions)
    pts = None if points is None else np.asarray(points, dtype=float).reshape(-1, dim)
    rr = None if rays is None else np.asarray(rays, dtype=float).reshape(-1, dim)
    if rr is not None and len(rr):
        rr = rr / np.linalg.norm(rr, axis=1, keepdims=True)
    h = _support_from_samples(dirs, pts, rr, sample_radius)
    return ConvexBody(dim, dirs, h, pts, rr, normals, sample_radius, name)


def translate(body: ConvexBody, shift) -> ConvexBody:
    shift = np.asarray(shift, dtype=float)
    pts = None if body.points is None else body.points + shift
    return body_from_samples(pts, body.rays, dim=body.dim, normals=body.normals,
                             sample_radius=body.sample_radius, n_directions=len(body.directions),
                             name=body.name)


def check_support_function(body: ConvexBody, *, pairs: int = 2000, seed: int = 0,
                           tol: float = 1e-9) -> float:
    """Sampled sublinearity ``h(w1 + w2) <= h(w1) + h(w2)``; returns the worst excess.

    Uses the stored samples when available and otherwise the direction
    grid, where the nearest grid direction stands in for the sum.
    """
    rng = np.random.default_rng(seed)
    d = body.directions
    i = rng.integers(0, len(d), pairs)
    j = rng.integers(0, len(d), pairs)
    s = d[i] + d[j]
    norm = np.linalg.norm(s, axis=1)
    keep = norm > 1e-6
    i, j, s, norm = i[keep], j[keep], s[keep], norm[keep]
    if body.points is not None or body.rays is not None:
        lhs = _support_from_samples(s / norm[:, None], body.points, body.rays, body.sample_radius) * norm
    else:
        k = np.argmax((s / norm[:, None]) @ d.T, axis=1)
        lhs = body.support[k] * norm
    rhs = body.support[i] + body.support[j]
    with np.errstate(invalid="ignore"):
        excess = np.where(np.isinf(rhs), -math.inf, lhs - rhs)
    worst = float(np.max(excess)) if excess.size else -math.inf
    if worst > tol * (1 + np.max(np.abs(body.support[np.isfinite(body.support)]), initial=0.0)):
        raise InvariantFailed(f"support function fails sublinearity by {worst:.3e}", "/support")
    return worst


# ---------------------------------------------------------- blowdown cones

def recession_cone(body: ConvexBody, *, far_fraction: float = 0.1) -> ConvexBody:
    """Blowdown cone as the limit of ``lambda K`` for ``lambda -> 0``.

    Ray generators carry over exactly.  For sampled unbounded bodies the
    far samples, those beyond ``far_fraction * sample_radius``, are scaled
    onto the unit sphere; bounded bodies give the cone ``{0}``.
    """
    if body.points is None and body.rays is None:
        raise EmptyBody("recession cones need sampled points or rays")
    dirs = []
    if body.rays is not None and len(body.rays):
        dirs.append(body.rays)
    if body.points is not None and body.sample_radius is not None and len(body.points):
        norms = np.linalg.norm(body.points, axis=1)
        far = norms >= far_fraction * body.sample_radius
        if np.any(far):
            dirs.append(body.points[far] / norms[far, None])
    rays = np.vstack(dirs) if dirs else np.zeros((0, body.dim))
    if len(rays):
        rays = np.unique(np.round(rays, 12), axis=0)
    origin = np.zeros((1, body.dim))
    h = np.where(np.max(body.directions @ rays.T, axis=1, initial=-1.0) > 1e-9, math.inf, 0.0) \
        if len(rays) else np.zeros(len(body.directions))
    return ConvexBody(body.dim, body.directions, h, origin, rays if len(rays) else None,
                      None, None, f"cone({body.name})")


class BlowdownTag(str, enum.Enum):
    POINT = "Point"
    HALF_LINE = "HalfLine"
    LINE = "Line"
    HALF_PLANE = "HalfPlane"
    PLANE = "Plane"
    HYPERPLANE = "Hyperplane"
    WEDGE = "Wedge"


@dataclass(frozen=True)
class BlowdownClass:
    tag: BlowdownTag
    axis: tuple = ()
    wedge_angle: float | None = None
    opening: float | None = None

    def __post_init__(self):
        if (self.wedge_angle is not None) != (self.tag is BlowdownTag.WEDGE):
            raise ValueError("wedge_angle is present exactly for wedges")

    def to_json(self) -> str:
        d = {"tag": self.tag.value, "axis": [list(map(float, a)) for a in self.axis]}
        if self.wedge_angle is not None:
            d["angle"] = self.wedge_angle
        return json.dumps(d, sort_keys=True)


def classify_blowdown(cone: ConvexBody, *, rank_tol: float = 1e-2, angle_tol: float = 1e-2,
                      max_dim: int = 3) -> BlowdownClass:
    """Tag a cone by its dimension, lineality and opening angle."""
    if not cone.is_cone:
        raise NotACone("input is not a cone")
    rays = cone.rays
    if rays is None or len(rays) == 0:
        return BlowdownClass(BlowdownTag.POINT)
    _, s, vt = np.linalg.svd(rays, full_matrices=False)
    rank = int(np.sum(s > rank_tol * s[0]))
    if rank > max_dim:
        raise ConeTooLarge(f"cone has dimension {rank}")
    basis = vt[:rank]
    coords = rays @ basis.T
    if rank == 1:
        c = coords[:, 0]
        u = basis[0] if np.max(c) >= -np.min(c) else -basis[0]
        if np.max(c) > 1 - angle_tol and np.min(c) < -1 + angle_tol:
            return BlowdownClass(BlowdownTag.LINE, (tuple(u),))
        return BlowdownClass(BlowdownTag.HALF_LINE, (tuple(u),))
    if rank == 2:
        ang = np.sort(np.mod(np.arctan2(coords[:, 1], coords[:, 0]), 2 * math.pi))
        gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * math.pi]]))
        k = int(np.argmax(gaps))
        gap = float(gaps[k])
        opening = 2 * math.pi - gap
        start = ang[(k + 1) % len(ang)]
        mid = start + opening / 2
        bis = math.cos(mid) * basis[0] + math.sin(mid) * basis[1]
        perp = -math.sin(mid) * basis[0] + math.cos(mid) * basis[1]
        if gap < math.pi - angle_tol:
            return BlowdownClass(BlowdownTag.PLANE, (tuple(basis[0]), tuple(basis[1])), opening=2 * math.pi)
        if abs(gap - math.pi) <= angle_tol:
            # line direction first, then the inward normal of the boundary line
            return BlowdownClass(BlowdownTag.HALF_PLANE, (tuple(perp), tuple(bis)), opening=opening)
        return BlowdownClass(BlowdownTag.WEDGE, (tuple(bis), tuple(perp)), wedge_angle=opening,
                             opening=opening)
    # three dimensions: only a full subspace has a tag
    hull = ConvexHull(np.vstack([coords, np.zeros((1, 3))]))
    eq = hull.equations
    if np.all(eq[:, -1] < -1e-6):
        return BlowdownClass(BlowdownTag.HYPERPLANE, tuple(map(tuple, basis)))
    raise ConeTooLarge("three-dimensional cone that is not a subspace")


def normal_cone_description(body: ConvexBody, *, tol: float = 1e-9) -> tuple:
    """``{w : <nu(p), w> < 0 for all sampled p}`` together with ``{0}``.

    Returns ``(cone, strictly_convex)``.  One normal shared by distinct
    boundary points means a flat piece of boundary; the flag is then False and the
    result should only be reported, not compared.
    """
    if body.normals is None or len(body.normals) == 0:
        raise NoNormals("body has no normal samples")
    nu = body.normals / np.linalg.norm(body.normals, axis=1, keepdims=True)
    if body.points is not None and len(body.points) == len(nu):
        pairs = np.unique(np.round(np.hstack([body.points, nu]), 9), axis=0)
        rounded = pairs[:, body.dim:]
    else:
        rounded = np.round(nu, 9)
    _, counts = np.unique(rounded, axis=0, return_counts=True)
    strictly = bool(np.all(counts == 1))
    d = body.dim
    # minimise t subject to <nu_i, w> <= t, -1 <= w <= 1
    c = np.zeros(d + 1)
    c[-1] = 1.0
    A = np.hstack([nu, -np.ones((len(nu), 1))])
    res = linprog(c, A_ub=A, b_ub=np.zeros(len(nu)), bounds=[(-1, 1)] * d + [(None, None)],
                  method="highs")
    origin = np.zeros((1, d))
    if not res.success or res.x[-1] >= -tol:
        h = np.zeros(len(body.directions))
        return ConvexBody(d, body.directions, h, origin, None, name=f"normal({body.name})"), strictly
    w = res.x[:d] / np.linalg.norm(res.x[:d])
    grid = body.directions
    inside = np.max(grid @ nu.T, axis=1) < 0
    rays = np.vstack([w[None, :], grid[inside]])
    h = np.where(np.max(grid @ rays.T, axis=1) > 1e-9, math.inf, 0.0)
    return ConvexBody(d, grid, h, origin, rays, name=f"normal({body.name})"), strictly


def cone_angle_between(a: ConvexBody, b: ConvexBody) -> float:
    """Largest angle from a ray of one cone to the nearest ray of the other."""
    ra = a.rays if a.rays is not None else np.zeros((0, a.dim))
    rb = b.rays if b.rays is not None else np.zeros((0, b.dim))
    if len(ra) == 0 and len(rb) == 0:
        return 0.0
    if len(ra) == 0 or len(rb) == 0:
        return math.pi
    cos = np.clip(ra @ rb.T, -1, 1)
    return float(max(np.max(np.arccos(np.max(cos, axis=1))), np.max(np.arccos(np.max(cos, axis=0)))))


# ------------------------------------------------------------ model bodies

def _far_levels(sample_radius: float, n: int = 40) -> np.ndarray:
    return np.concatenate([[0.0], np.logspace(-2, math.log10(sample_radius), n)])


def _sphere(k: int, n: int) -> np.ndarray:
    if k == 1:
        t = 2 * math.pi * np.arange(n) / n
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    return fibonacci_directions(3, n)


def _bowl_height(profile: RadialProfile, r):
    """Bowl height with a convex quadratic continuation past the sampled range."""
    r = np.asarray(r, dtype=float)
    nodes, vals, slopes = profile.nodes, profile.values, profile.slopes
    r_end, u_end, p_end = nodes[-1], vals[-1], slopes[-1]
    curvature = profile.parameter / profile.dim
    inside = r <= r_end
    out = np.empty_like(r)
    out[inside] = np.interp(r[inside], nodes, vals)
    d = r[~inside] - r_end
    out[~inside] = u_end + p_end * d + 0.5 * curvature * d * d
    return out


def _bowl_radius_for_height(profile, h):
    r_hi = np.maximum(1.0, np.sqrt(2 * np.maximum(h, 0) * profile.dim / profile.parameter)) * 4 + 50
    lo = np.zeros_like(h)
    hi = r_hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        above = _bowl_height(profile, mid) > h
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    return 0.5 * (lo + hi)


def model_body(name: str, *, sample_radius: float = 1e6, speed: float = 1.0) -> ConvexBody:
    """Convex time slices of the model flows in R^4.

    ``compact``: an ellipsoid.  ``bowl3``: the 3d translating bowl along x1.
    ``line``: R x B^3.  ``bowl2xR``: the 2d bowl in (x2, x3, x4) times R.
    ``plane``: R^2 x B^2.
    """
    R = sample_radius
    levels = _far_levels(R)
    signed = np.concatenate([-levels[:0:-1], levels])
    if name == "compact":
        dirs = fibonacci_directions(4, 2048)
        pts = dirs * np.array([1.5, 1.0, 1.2, 0.8])
        return body_from_samples(pts, dim=4, sample_radius=R, name=name)
    if name == "line":
        sph = fibonacci_directions(3, 256)
        pts = np.array([[s, *w] for s in signed for w in sph])
        return body_from_samples(pts, dim=4, sample_radius=R, name=name)
    if name == "plane":
        circ = _sphere(1, 32)
        ang = 2 * math.pi * np.arange(32) / 32
        pts = np.array([[l * math.cos(a), l * math.sin(a), *w] for l in levels for a in ang for w in circ])
        return body_from_samples(pts, dim=4, sample_radius=R, name=name)
    if name == "bowl3":
        prof = solve_bowl_profile(speed, r_max=20.0, dim=3)
        heights = levels
        radii = _bowl_radius_for_height(prof, heights)
        sph = fibonacci_directions(3, 256)
        pts = np.array([[h, *(r * w)] for h, r in zip(heights, radii) for w in sph])
        return body_from_samples(pts, dim=4, sample_radius=R, name=name)
    if name == "bowl2xR":
        prof = solve_bowl_profile(speed, r_max=20.0, dim=2)
        radii = _bowl_radius_for_height(prof, levels)
        circ = _sphere(1, 32)
        pts = np.array([[s, h, *(r * w)] for s in signed[::2] for h, r in zip(levels, radii) for w in circ])
        return body_from_samples(pts, dim=4, sample_radius=R, name=name)
    raise ValueError(f"unknown model body {name!r}")


MODEL_TABLE = {
    "compact": BlowdownTag.POINT,
    "bowl3": BlowdownTag.HALF_LINE,
    "line": BlowdownTag.LINE,
    "bowl2xR": BlowdownTag.HALF_PLANE,
    "plane": BlowdownTag.PLANE,
}


def wedge_body(angle: float, *, dim: int = 4, thickness: float = 1.0) -> ConvexBody:
    """``{x1 >= 0, |x2| <= x1 tan(angle/2)}`` plus a square in the remaining coordinates."""
    if not 0 < angle < math.pi:
        raise ValueError("wedge angle must lie in (0, pi)")
    half = angle / 2
    rays = np.zeros((2, dim))
    rays[0, :2] = (math.cos(half), math.sin(half))
    rays[1, :2] = (math.cos(half), -math.sin(half))
    corners = []
    for signs in np.ndindex(*(2,) * (dim - 2)):
        v = np.zeros(dim)
        v[2:] = thickness * (2 * np.array(signs) - 1)
        corners.append(v)
    return body_from_samples(np.array(corners), rays, dim=dim, name=f"wedge({angle:.6g})")


# ------------------------------------------------------ cross-section areas

def _bary_weights(nodes):
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    logw = -np.sum(np.log(np.abs(diff)), axis=1)
    sign = np.prod(np.sign(diff), axis=1)
    return sign * np.exp(logw - np.max(logw))


def _bary_matrix(nodes, x):
    """Rows interpolating nodal data to the points ``x``."""
    w = _bary_weights(nodes)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    diff = x[:, None] - nodes[None, :]
    exact = np.isclose(diff, 0.0, atol=1e-14)
    diff = np.where(exact, 1.0, diff)
    m = w[None, :] / diff
    m = m / m.sum(axis=1, keepdims=True)
    rows = np.any(exact, axis=1)
    m[rows] = exact[rows].astype(float)
    return m


def radius_at(g: CylinderGraph, x1, x2) -> np.ndarray:
    """``sqrt2 + u`` at off-grid points, one row of angles per point."""
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    nodes = g.grid.nodes
    a = _bary_matrix(nodes, x1)
    b = _bary_matrix(nodes, x2)
    u = np.einsum("pi,ijt,pj->pt", a, g.values, b)
    return SQRT2 + u


def _check_domain(g: CylinderGraph, x1, x2):
    r = np.hypot(x1, x2)
    if np.any(r > 2 * g.rho + 1e-12) or np.any(r > g.grid.max_radius):
        raise OutsideDomain("point outside the graph's radial domain")


def cross_section_area(g: CylinderGraph, x1, x2):
    """``(1/2) int_0^{2pi} (sqrt2 + u)^2 dtheta`` by the angular trapezoid rule."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    _check_domain(g, x1, x2)
    R = radius_at(g, x1.ravel(), x2.ravel())
    area = math.pi * np.mean(R * R, axis=1)
    return float(area[0]) if x1.ndim == 0 else area.reshape(x1.shape)


@dataclass
class Ellipsoid:
    """``{x : (x - c)^T A (x - c) <= 1}`` in R^4 with slices over (x1, x2)."""

    matrix: np.ndarray
    center: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def slice_area(self, a):
        A = np.asarray(self.matrix)
        a = np.asarray(a, dtype=float) - self.center[:2]
        Aaa, Aay, Ayy = A[:2, :2], A[:2, 2:], A[2:, 2:]
        schur = Aaa - Aay @ np.linalg.solve(Ayy, Aay.T)
        q = float(a @ schur @ a)
        return math.pi * max(1.0 - q, 0.0) / math.sqrt(np.linalg.det(Ayy))

    def interior_point(self, rng):
        L = np.linalg.cholesky(np.linalg.inv(self.matrix))
        v = rng.normal(size=4)
        v *= rng.uniform(0, 0.9) / np.linalg.norm(v)
        return self.center + L @ v


def _clip_polygon(poly: np.ndarray, normal: np.ndarray, offset: float) -> np.ndarray:
    """Keep the part of ``poly`` with ``normal . y <= offset``."""
    if len(poly) == 0:
        return poly
    out = []
    s = poly @ normal - offset
    n = len(poly)
    for i in range(n):
        j = (i + 1) % n
        if s[i] <= 0:
            out.append(poly[i])
        if (s[i] <= 0) != (s[j] <= 0):
            t = s[i] / (s[i] - s[j])
            out.append(poly[i] + t * (poly[j] - poly[i]))
    return np.array(out) if out else np.zeros((0, 2))


def _polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


@dataclass
class Polytope:
    """Convex hull of vertices in R^4, sliced by clipping a large square."""

    vertices: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        hull = ConvexHull(self.vertices)
        self.equations = hull.equations
        self.extent = float(np.max(np.abs(self.vertices))) * 4 + 1

    def slice_area(self, a):
        a = np.asarray(a, dtype=float)
        e = self.extent
        poly = np.array([[-e, -e], [e, -e], [e, e], [-e, e]])
        for eq in self.equations:
            normal, off = eq[2:4], -eq[4] - eq[:2] @ a
            if np.linalg.norm(normal) < 1e-14:
                if off < 0:
                    return 0.0
                continue
            poly = _clip_polygon(poly, normal, off)
        return _polygon_area(poly)

    def interior_point(self, rng):
        w = rng.dirichlet(np.ones(len(self.vertices)))
        return w @ self.vertices


def random_convex_body(seed: int):
    """Seeded ellipsoid (even seeds) or polytope (odd seeds) in R^4."""
    rng = np.random.default_rng(seed)
    if seed % 2 == 0:
        M = rng.normal(size=(4, 4))
        A = M @ M.T + 0.5 * np.eye(4)
        return Ellipsoid(A, rng.normal(size=4) * 0.3)
    pts = rng.normal(size=(int(rng.integers(12, 30)), 4))
    return Polytope(pts)


@dataclass(frozen=True)
class BrunnReport:
    passed: bool
    worst_second_difference: float
    witness: tuple
    samples: int

    def to_dict(self):
        return {"passed": self.passed, "worst_second_difference": self.worst_second_difference,
                "witness": list(self.witness), "samples": self.samples}


def brunn_concavity_check(obj, segment, *, n: int = 41, tol: float = 1e-8) -> BrunnReport:
    """Second differences of ``sqrt(area)`` along a segment of the (x1, x2)-plane."""
    p, q = (np.asarray(v, dtype=float) for v in segment)
    t = np.linspace(0, 1, n)
    pts = p[None, :] + t[:, None] * (q - p)[None, :]
    if isinstance(obj, CylinderGraph):
        areas = cross_section_area(obj, pts[:, 0], pts[:, 1])
    else:
        areas = np.array([obj.slice_area(a) for a in pts])
    if np.any(areas <= 0):
        raise OutsideDomain("segment leaves the region of positive area")
    root = np.sqrt(areas)
    # second difference per unit parameter step keeps the tolerance scale-free
    second = root[2:] - 2 * root[1:-1] + root[:-2]
    i = int(np.argmax(second))
    worst = float(second[i])
    return BrunnReport(worst <= tol, worst, tuple(map(float, pts[i + 1])), n)


# ---------------------------------------------------- neutral quadratic fit

@dataclass(frozen=True)
class NeutralQuadratic:
    Q: tuple
    eigenvalues: tuple
    kernel: tuple | None
    semi_negative: bool

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.Q)

    def to_dict(self):
        return {"Q": [list(r) for r in self.Q], "eigenvalues": list(self.eigenvalues),
                "kernel": None if self.kernel is None else list(self.kernel),
                "semi_negative": self.semi_negative}


def fit_neutral_quadratic(decomps, *, decade: float = math.log(10.0), threshold: float = 0.1,
                          psd_tol: float = 1e-3, rank_tol: float = 1e-3) -> NeutralQuadratic:
    """Quadratic form carried by the neutral modes of ``u / ||u||``.

    Coefficients of ``x1^2-2, x2^2-2, x1 x2`` on the normalized field give
    ``q11, q22`` and ``2 q12``.  Samples in the earliest decade of time are
    averaged.
    """
    decomps = sorted(decomps, key=lambda d: d.tau)
    if not decomps:
        raise ValueError("no decompositions")
    t0 = decomps[0].tau
    window = [d for d in decomps if d.tau <= t0 + decade + 1e-12]
    mats = []
    for d in window:
        up, u0, um = d.energies
        total = up + u0 + um
        if not u0 > 0 or (up + max(um, 0.0)) / u0 >= threshold or total <= 0:
            raise NotNeutralDominant(f"neutral energy does not dominate at tau = {d.tau}")
        scale = math.sqrt(total)
        raw = d.raw_neutral
        q11, q22, q12 = raw[4] / scale, raw[5] / scale, raw[6] / (2 * scale)
        mats.append([[q11, q12], [q12, q22]])
    Q = np.mean(np.array(mats), axis=0)
    w, v = np.linalg.eigh(Q)
    semi = bool(w[-1] <= psd_tol * max(1.0, np.max(np.abs(w))))
    if not semi:
        raise InvariantFailed(f"neutral quadratic has positive eigenvalue {w[-1]:.3e}", "/neutral/Q")
    kernel = None
    big = np.max(np.abs(w))
    small = np.abs(w) <= rank_tol * big
    if big > 0 and small.sum() == 1:
        k = v[:, int(np.argmax(small))]
        k = k if k[np.argmax(np.abs(k))] > 0 else -k
        kernel = tuple(map(float, k))
    return NeutralQuadratic(tuple(map(tuple, Q.tolist())), tuple(map(float, w)), kernel, semi)


# ------------------------------------------------------- level sets

def level_set_diameter(g: CylinderGraph, x1: float, *, cap: float | None = None,
                       n_x2: int = 201) -> float:
    """Diameter of the graphed surface cut by the hyperplane ``{x1 = const}``.

    The surface is sampled at ``n_x2`` values of ``x2`` across the graph
    domain (or ``|x2| <= cap``) and at every grid angle.
    """
    reach = min(2 * g.rho, g.grid.max_radius)
    if abs(x1) > reach:
        raise EmptyIntersection("plane misses the graph domain")
    half = math.sqrt(max(reach ** 2 - x1 ** 2, 0.0))
    if cap is not None:
        half = min(half, cap)
    x2 = np.linspace(-half, half, n_x2)
    R = radius_at(g, np.full_like(x2, x1), x2)
    th = g.grid.theta
    pts = np.stack([np.repeat(x2, len(th)), (R * np.cos(th)).ravel(), (R * np.sin(th)).ravel()], axis=1)
    if len(pts) >= 5:
        hull = ConvexHull(pts)
        pts = pts[hull.vertices]
    return float(np.max(pdist(pts)))
