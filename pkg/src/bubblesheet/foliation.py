"""Doubly rotationally symmetric leaves in R^4 built from R^3 shrinker profiles.

A profile curve ``|y| = u(x)`` in R^3 is lifted to

    {(x1, x2, x3, x4) : sqrt(x3^2 + x4^2) = u(r - 1),  r = sqrt(x1^2 + x2^2)}

so every half-plane through the x3x4-axis shows the profile shifted by one.
The leaves are compared against the shrinker equation through
``H - <x, nu>/2``, whose sign makes them inner and outer barriers.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BubbleSheetError, OutsideDomain
from .profiles import DEFAULT_L0, ProfileKind, RadialProfile
from .profiles import calibration_residual as _profile_calibration
from .spectral import SQRT2


class UnsupportedKind(BubbleSheetError):
    pass


class GeometryMismatch(BubbleSheetError):
    pass


class OffLeaf(BubbleSheetError):
    pass


class LiftKind(str, enum.Enum):
    GAMMA = "Gamma_a"
    GAMMA_TILDE = "GammaTilde_b"
    CYLINDER = "Cylinder"


DEFAULT_DELTA = 0.1
DEFAULT_L1 = DEFAULT_L0 + 1.0


@dataclass
class FoliationLeaf:
    source: RadialProfile
    lift_kind: LiftKind
    L1: float = DEFAULT_L1
    delta: float = DEFAULT_DELTA
    _curve: object = field(default=None, repr=False)

    def __post_init__(self):
        self._curve = self.source.curve()

    @property
    def parameter(self) -> float:
        return self.source.parameter

    @property
    def r_range(self) -> tuple:
        """Radii ``r`` in the flat plane over which the leaf is defined."""
        return (max(0.0, 1.0 + self._curve.x_min), 1.0 + self._curve.x_max)

    def profile_data(self, r):
        """``(u, psi, kappa)`` of the profile above ``x = r - 1``."""
        return self._curve.evaluate(np.asarray(r, dtype=float) - 1.0)

    def radius(self, r):
        return self._curve.height(np.asarray(r, dtype=float) - 1.0)

    def point(self, r, theta, phi):
        r = np.asarray(r, dtype=float)
        u = self.radius(r)
        return np.stack(np.broadcast_arrays(r * np.cos(theta), r * np.sin(theta),
                                            u * np.cos(phi), u * np.sin(phi)), axis=-1)

    def normal(self, r, theta, phi):
        """Unit normal pointing away from the x3x4-axis."""
        _, psi, _ = self.profile_data(r)
        s, c = np.sin(psi), np.cos(psi)
        return np.stack(np.broadcast_arrays(-s * np.cos(theta), -s * np.sin(theta),
                                            c * np.cos(phi), c * np.sin(phi)), axis=-1)

    def in_domain(self, p) -> np.ndarray:
        p = np.atleast_2d(p)
        return ((p[:, 2] ** 2 + p[:, 3] ** 2 <= 2.0 + self.delta + 1e-12)
                & (p[:, 0] ** 2 + p[:, 1] ** 2 >= self.L1 ** 2 - 1e-12))

    def probes(self, n_radial: int = 64, n_angular: int = 32, *, clip: bool = True,
               r_max: float | None = None) -> np.ndarray:
        """Tensor probe grid on the leaf, clipped to the domain.

        Radii are spaced uniformly between ``L1`` and the last radius where
        the leaf is still inside ``x3^2 + x4^2 <= 2 + delta`` and away
        from the tip.  The angle ``phi`` is fixed since the defect does not
        depend on it.  With ``clip=False`` only ``r >= L1`` is enforced,
        up to ``r_max`` when it is given.
        """
        lo, hi = self.r_range
        lo = max(lo, self.L1)
        if r_max is not None:
            hi = min(hi, r_max)
        rr = np.linspace(lo, hi, 4001)
        u = self.radius(rr)
        ok = u > 1e-3 * max(1.0, float(np.max(u)))
        if clip:
            ok &= u * u <= 2.0 + self.delta
        if not np.any(ok):
            raise OutsideDomain("leaf does not meet the domain")
        # first contiguous run from L1
        stop = int(np.argmin(ok)) if not np.all(ok) else len(ok)
        if stop == 0:
            raise OutsideDomain("leaf leaves the domain at r = L1")
        r = np.linspace(rr[0], rr[stop - 1], n_radial)
        theta = 2 * math.pi * np.arange(n_angular) / n_angular
        R, T = np.meshgrid(r, theta, indexing="ij")
        return self.point(R.ravel(), T.ravel(), 0.0)


def lift_leaf(profile: RadialProfile, *, L1: float = DEFAULT_L1, delta: float = DEFAULT_DELTA) -> FoliationLeaf:
    if profile.kind is ProfileKind.BOWL:
        raise UnsupportedKind("translators are not foliation leaves")
    if profile.is_cylinder:
        kind = LiftKind.CYLINDER
    elif profile.kind is ProfileKind.ADS:
        kind = LiftKind.GAMMA
    else:
        kind = LiftKind.GAMMA_TILDE
    return FoliationLeaf(profile, kind, L1, delta)


def _leaf_coordinates(leaf: FoliationLeaf, p, tol: float):
    p = np.atleast_2d(np.asarray(p, dtype=float))
    r = np.hypot(p[:, 0], p[:, 1])
    rad = np.hypot(p[:, 2], p[:, 3])
    lo, hi = leaf.r_range
    if np.any(r < lo - 1e-12) or np.any(r > hi + 1e-12):
        raise OffLeaf("radius outside the leaf")
    if np.any(np.abs(rad - leaf.radius(r)) > tol):
        raise OffLeaf("point is not on the leaf")
    theta = np.arctan2(p[:, 1], p[:, 0])
    return r, theta


def divergence_defect(leaf: FoliationLeaf, point, *, tol: float = 1e-6,
                      require_domain: bool = True) -> np.ndarray:
    """``H - <x, nu>/2`` at points of the leaf, normal pointing away from the axis.

    The mean curvature of the lift is the profile's mean curvature plus
    ``nu_r / r`` from the extra rotation, so the value splits into the
    profile's own shrinker residual and ``nu_r (1/r - 1/2)``.
    """
    pts = np.atleast_2d(np.asarray(point, dtype=float))
    if require_domain and not np.all(leaf.in_domain(pts)):
        raise OutsideDomain("point outside the barrier domain")
    r, _ = _leaf_coordinates(leaf, pts, tol)
    u, psi, kappa = leaf.profile_data(r)
    x = r - 1.0
    profile_part = -kappa + np.cos(psi) / u - 0.5 * (u * np.cos(psi) - x * np.sin(psi))
    nu_r = -np.sin(psi)
    out = profile_part + nu_r * (1.0 / r - 0.5)
    return out if np.ndim(point) > 1 else float(out[0])


def calibration_residual(profile: RadialProfile) -> float:
    return _profile_calibration(profile)


@dataclass(frozen=True)
class BarrierSignReport:
    kind: str
    parameter: float
    n_probes: int
    worst: float
    worst_point: tuple
    passed: bool

    def to_dict(self):
        return {"kind": self.kind, "parameter": self.parameter, "n_probes": self.n_probes,
                "worst": self.worst, "worst_point": list(self.worst_point), "passed": self.passed}


def barrier_sign_check(leaf: FoliationLeaf, *, tol: float = 1e-8, n_radial: int = 64,
                       n_angular: int = 32, clip: bool = True,
                       r_max: float | None = None) -> BarrierSignReport:
    """Inner leaves need defect <= tol, outer leaves defect >= -tol, the cylinder both."""
    pts = leaf.probes(n_radial, n_angular, clip=clip, r_max=r_max)
    d = divergence_defect(leaf, pts, require_domain=clip)
    if leaf.lift_kind is LiftKind.GAMMA:
        i = int(np.argmax(d))
        worst, ok = float(d[i]), bool(d[i] <= tol)
    elif leaf.lift_kind is LiftKind.GAMMA_TILDE:
        i = int(np.argmin(d))
        worst, ok = float(d[i]), bool(d[i] >= -tol)
    else:
        i = int(np.argmax(np.abs(d)))
        worst, ok = float(d[i]), bool(abs(d[i]) <= tol)
    return BarrierSignReport(leaf.lift_kind.value, float(leaf.parameter), len(d), worst,
                             tuple(map(float, pts[i])), ok)


@dataclass(frozen=True)
class OrderReport:
    ordered: bool
    pairs: tuple  # (param_i, param_j, relation, witness_r)

    def to_json(self) -> str:
        return json.dumps({"ordered": self.ordered, "pairs": [list(p) for p in self.pairs]},
                          sort_keys=True)


def verify_foliation_order(leaves, probes=None, *, n: int = 64) -> OrderReport:
    """Pairwise comparison of leaf radii at common abscissas.

    ``relation`` is ``"below"`` when the leaf with smaller parameter has the
    smaller radius at every probe, ``"above"`` for the reverse,
    ``"coincident"`` for identical radii and ``"crossing"`` otherwise.
    Leaves with equal parameters and identical radii are coincident, not a
    violation.  Ordering also requires one direction shared by all pairs.
    """
    leaves = sorted(leaves, key=lambda l: l.parameter)
    if len({l.lift_kind for l in leaves}) > 1:
        raise ValueError("leaves must share one lift kind")
    pairs = []
    ordered = True
    directions = set()
    for i in range(len(leaves)):
        for j in range(i + 1, len(leaves)):
            a, b = leaves[i], leaves[j]
            lo = max(a.r_range[0], b.r_range[0], a.L1)
            hi = min(a.r_range[1], b.r_range[1])
            if probes is None:
                # stop short of the nearer tip, where radii meet zero
                r = np.linspace(lo, lo + 0.98 * (hi - lo), n)
            else:
                r = np.asarray(probes, dtype=float)
                r = r[(r >= lo) & (r <= hi)]
            diff = b.radius(r) - a.radius(r)
            if np.all(np.abs(diff) <= 1e-14):
                rel, w = "coincident", float("nan")
            elif np.all(diff > 0):
                rel, w = "below", float(r[int(np.argmin(diff))])
            elif np.all(diff < 0):
                rel, w = "above", float(r[int(np.argmax(diff))])
            else:
                rel = "crossing"
                sign_change = np.nonzero(np.diff(np.sign(diff)))[0]
                w = float(r[sign_change[0]]) if sign_change.size else float(r[0])
                ordered = False
            if rel in ("below", "above"):
                directions.add(rel)
            pairs.append((float(a.parameter), float(b.parameter), rel, w))
    if len(directions) > 1:
        ordered = False
    return OrderReport(ordered, tuple(pairs))


@dataclass(frozen=True)
class ContactReport:
    contained_initially: bool
    crossed: bool
    first_crossing_tau: float | None
    first_crossing_point: tuple | None
    min_gap: float

    def to_dict(self):
        return {"contained_initially": self.contained_initially, "crossed": self.crossed,
                "first_crossing_tau": self.first_crossing_tau,
                "first_crossing_point": None if self.first_crossing_point is None else list(self.first_crossing_point),
                "min_gap": self.min_gap}


def barrier_contact_check(snapshots, leaf: FoliationLeaf, *, tol: float = 1e-10) -> ContactReport:
    """Watch the gap between the flow radius and an inner leaf over time.

    Gaps are read at grid nodes whose flat radius lies in the leaf's part
    of the domain, ``L1 <= r`` up to the leaf tip.
    """
    if leaf.lift_kind is not LiftKind.GAMMA:
        raise ValueError("contact checks use inner leaves")
    snaps = list(snapshots)
    if not snaps:
        raise ValueError("no snapshots")
    grid = snaps[0].grid
    if any(s.grid != grid for s in snaps):
        raise GeometryMismatch("snapshots use different grids")
    lo = max(leaf.L1, leaf.r_range[0])
    hi = leaf.r_range[1]
    rnodes = grid.radius
    if float(np.max(rnodes)) < hi:
        raise GeometryMismatch("grid does not reach the leaf tip")
    mask = (rnodes >= lo) & (rnodes <= hi)
    leaf_r = leaf.radius(rnodes[mask])
    x1, x2, th = grid.mesh
    first_tau = None
    first_pt = None
    contained = True
    min_gap = math.inf
    for k, s in enumerate(snaps):
        R = SQRT2 + s.values[mask]  # shape (n_nodes, n_theta)
        gap = R - leaf_r[:, None]
        g = float(np.min(gap))
        min_gap = min(min_gap, g)
        if k == 0 and g < -tol:
            contained = False
            break
        if g < -tol and first_tau is None:
            i, j = np.unravel_index(int(np.argmin(gap)), gap.shape)
            first_tau = float(s.tau)
            first_pt = (float(x1[mask][i, j]), float(x2[mask][i, j]), float(th[mask][i, j]))
            break
    return ContactReport(contained, first_tau is not None, first_tau, first_pt, min_gap)
