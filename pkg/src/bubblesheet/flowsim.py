"""Renormalized flows as graphs over the bubble-sheet cylinder.

A flow is stored as a sequence of :class:`CylinderGraph` snapshots.  They
come either from evolving the graph equation on the spectral grid or from
exact reference solutions (shrinking cylinders and the translating
bowl times a line), which are evaluated in closed form at any time.
"""
from __future__ import annotations

import enum
import functools
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BubbleSheetError, InvariantFailed
from .profiles import BowlShape, solve_bowl_profile
from .spectral import (SQRT2, CylinderGraph, NotAGraph, SpectralGrid, UNSTABLE_NAMES,
                       apply_linearized_operator, c2_norm, fine_tune_rotation, spectral_project,
                       truncate_graph)


class StepUnstable(BubbleSheetError):
    pass


class NeverAdmissible(BubbleSheetError):
    pass


class OutOfGraphRange(BubbleSheetError):
    pass


class ScaleRangeExhausted(BubbleSheetError):
    pass


class ExactlyCylindrical(BubbleSheetError):
    pass


class InsufficientSpan(BubbleSheetError):
    pass


class NoConvergence(BubbleSheetError):
    pass


class Scheme(str, enum.Enum):
    LINEARIZED = "Linearized"
    FULL_GRAPH = "FullGraph"


class ReferenceKind(str, enum.Enum):
    ROUND_CYLINDER = "round-cylinder"
    CYLINDER_TIMESHIFT = "cylinder-timeshift"
    BOWL_TIMES_LINE = "bowl-times-R"


ORIGIN = (0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class RadiusSchedule:
    """Graphical radius as a function of renormalized time.

    ``constant`` keeps ``rho = scale``; ``improved`` uses
    ``rho = scale * exp(-tau / 9)``, which satisfies ``-rho <= rho' <= 0``.
    """

    kind: str = "constant"
    scale: float = 10.0

    def __post_init__(self):
        if self.kind not in ("constant", "improved"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not self.scale > 0:
            raise ValueError("schedule scale must be positive")

    def __call__(self, tau: float) -> float:
        if self.kind == "constant":
            return float(self.scale)
        return float(self.scale * math.exp(-tau / 9.0))

    def derivative(self, tau: float) -> float:
        return 0.0 if self.kind == "constant" else -self(tau) / 9.0


@dataclass
class FlowTrajectory:
    snapshots: list
    scheme: str
    center: tuple = ORIGIN
    schedule: RadiusSchedule = field(default_factory=RadiusSchedule)
    tilted: bool = False
    # times where a reference surface was requested but is not a graph
    failed_taus: tuple = ()

    def __post_init__(self):
        taus = [s.tau for s in self.snapshots]
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise ValueError("snapshot times must increase")

    @property
    def taus(self) -> np.ndarray:
        return np.array([s.tau for s in self.snapshots])

    def decompositions(self):
        return [spectral_project(truncate_graph(s)) for s in self.snapshots]


# -------------------------------------------------------------- evolution

def graph_velocity(g: CylinderGraph) -> np.ndarray:
    """Normal renormalized mean curvature flow written for the radius ``R = sqrt2 + u``.

    Returns ``d_tau u = -N (H - <X, nu>/2)`` at every node, where
    ``N = sqrt(1 + |grad R|^2)`` and ``H`` is the mean curvature.
    """
    grid = g.grid
    R = SQRT2 + g.values
    if not np.all(np.isfinite(R)) or np.any(R <= 0):
        raise NotAGraph("radius left the admissible range")
    x1, x2, _ = grid.mesh
    # differentiate u, not R, so the constant sqrt2 contributes no roundoff
    u = g.values
    R1, R2, Rt = grid.d1(u), grid.d2(u), grid.dtheta(u)
    R11, R22, R12 = grid.dd1(u), grid.dd2(u), grid.d2(R1)
    R1t, R2t, Rtt = grid.dtheta(R1), grid.dtheta(R2), grid.dtheta(u, 2)
    inv2 = 1.0 / (R * R)
    N = np.sqrt(1.0 + R1 * R1 + R2 * R2 + Rt * Rt * inv2)
    # derivatives of N with the 1/R^2 factor held fixed
    N1 = (R1 * R11 + R2 * R12 + Rt * R1t * inv2) / N
    N2 = (R1 * R12 + R2 * R22 + Rt * R2t * inv2) / N
    Nt = (R1 * R1t + R2 * R2t + Rt * Rtt * inv2) / N
    div = (R11 / N - R1 * N1 / N ** 2) + (R22 / N - R2 * N2 / N ** 2) \
        + inv2 * (Rtt / N - Rt * Nt / N ** 2)
    H = 1.0 / (R * N) + Rt * Rt / (R ** 3 * N ** 3) - div
    return -N * H + 0.5 * (R - x1 * R1 - x2 * R2)


@functools.lru_cache(maxsize=8)
def _propagator(grid: SpectralGrid, dtau: float):
    return grid.linear_propagator(dtau)


def step_flow(g: CylinderGraph, dtau: float, scheme: str | Scheme = Scheme.FULL_GRAPH,
              rho: float | None = None) -> CylinderGraph:
    """One step of size ``dtau``.

    The linear part is integrated exactly; for the full graph equation the
    remaining nonlinearity is added explicitly before propagation
    (first-order integrating factor).
    """
    scheme = Scheme(scheme)
    if not dtau > 0:
        raise ValueError("dtau must be positive")
    prop = _propagator(g.grid, float(dtau))
    u = g.values
    if scheme is Scheme.LINEARIZED:
        new = prop(u)
    else:
        nonlinear = graph_velocity(g) - apply_linearized_operator(g).values
        new = prop(u + dtau * nonlinear)
    if not np.all(np.isfinite(new)):
        raise StepUnstable("non-finite values after step")
    before = float(np.max(np.abs(u)))
    after = float(np.max(np.abs(new)))
    if before > 0 and after > 10 * before and after > 1e-12:
        raise StepUnstable(f"sup norm jumped from {before:.3e} to {after:.3e}")
    if np.any(SQRT2 + new <= 0):
        raise NotAGraph("radius reached zero")
    return g.with_values(new, tau=g.tau + dtau, rho=rho if rho is not None else g.rho)


def evolve(g0: CylinderGraph, tau_end: float, *, dtau: float = 1e-3,
           scheme: str | Scheme = Scheme.FULL_GRAPH, record_every: float = 0.1,
           schedule: RadiusSchedule | None = None, center=ORIGIN) -> FlowTrajectory:
    scheme = Scheme(scheme)
    if tau_end < g0.tau:
        raise ValueError("tau_end precedes the initial time")
    n_steps = int(round((tau_end - g0.tau) / dtau))
    every = max(1, int(round(record_every / dtau)))
    schedule = schedule or RadiusSchedule("constant", g0.rho)
    tau0 = g0.tau
    g = g0.with_values(g0.values, rho=schedule(tau0))
    snaps = [g]
    for k in range(1, n_steps + 1):
        tau = tau0 + k * dtau
        g = step_flow(g, dtau, scheme, rho=schedule(tau))
        # keep times on the exact lattice so they do not drift
        g = g.with_values(g.values, tau=tau)
        if k % every == 0 or k == n_steps:
            snaps.append(g)
    return FlowTrajectory(snaps, scheme.value, tuple(center), schedule)


# ---------------------------------------------------- reference solutions

@functools.lru_cache(maxsize=16)
def _bowl(speed: float) -> BowlShape:
    return BowlShape(solve_bowl_profile(speed, r_max=40.0))


def _unit(direction):
    d = np.asarray(direction, dtype=float)
    n = np.linalg.norm(d)
    if d.shape != (2,) or n == 0:
        raise ValueError("direction must be a nonzero vector in the x1 x2 plane")
    return d / n


def _offset_radius(w, tau, c3, c4, theta):
    """``rbar - sqrt2`` for a circle centred at ``-(c3, c4)`` with
    ``e^tau r^2 = 2 + w`` seen from the origin in renormalized units."""
    et = math.exp(tau)
    along = c3 * np.cos(theta) + c4 * np.sin(theta)
    perp2 = c3 * c3 + c4 * c4 - along ** 2
    inner = w - et * perp2
    if np.any(2.0 + inner <= 0):
        raise OutOfGraphRange("circle does not enclose the renormalization centre")
    return inner / (np.sqrt(2.0 + inner) + SQRT2) - math.exp(tau / 2) * along


def reference_values(kind: str | ReferenceKind, params: dict, tau: float, grid: SpectralGrid,
                     center=ORIGIN) -> np.ndarray:
    kind = ReferenceKind(kind)
    x0 = [float(c) for c in center]
    if len(x0) != 5:
        raise ValueError("center is (x1, x2, x3, x4, t)")
    x1, x2, th = grid.mesh
    t0 = x0[4]
    if kind is ReferenceKind.ROUND_CYLINDER:
        return _offset_radius(np.zeros_like(x1) + 2.0 * math.exp(tau) * (-t0), tau, x0[2], x0[3], th)
    if kind is ReferenceKind.CYLINDER_TIMESHIFT:
        shift = float(params.get("K", params.get("shift", 0.0)))
        # R(t)^2 = 2 (shift - t), so e^tau R^2 - 2 = 2 e^tau (shift - t0)
        w = np.zeros_like(x1) + 2.0 * math.exp(tau) * (shift - t0)
        return _offset_radius(w, tau, x0[2], x0[3], th)
    speed = float(params.get("speed", 1.0))
    if not speed > 0:
        raise ValueError("speed must be positive")
    d = _unit(params.get("direction", (0.0, 1.0)))
    bowl = _bowl(speed)
    et = math.exp(tau)
    along_bar = d[0] * x1 + d[1] * x2
    offset = d[0] * x0[0] + d[1] * x0[1] - speed * t0
    # height above the tip at time t0 - e^-tau, measured along the axis
    height = offset + along_bar / math.sqrt(et) + speed / et
    if np.any(height < 0):
        raise OutOfGraphRange("grid reaches below the bowl tip")
    far = height > bowl.profile.values[-1]
    w = np.empty_like(height)
    if np.any(far):
        hb = along_bar[far]
        r = np.sqrt(2.0 * height[far] / speed)
        for _ in range(8):
            wf = (2.0 * et / speed) * (offset + hb / math.sqrt(et) - bowl.tail(r))
            r = np.sqrt((2.0 + wf) / et)
        w[far] = wf
    if np.any(~far):
        r = bowl.radius(height[~far])
        w[~far] = et * r * r - 2.0
    return _offset_radius(w, tau, x0[2], x0[3], th)


def synthesize_reference_flow(kind, params: dict, tau: float, grid: SpectralGrid | None = None,
                              rho: float = 10.0, center=ORIGIN) -> CylinderGraph:
    grid = grid or SpectralGrid()
    vals = reference_values(kind, params, tau, grid, center)
    return CylinderGraph(grid, vals, rho, tau)


def reference_trajectory(kind, params: dict, taus, grid: SpectralGrid | None = None,
                         schedule: RadiusSchedule | None = None, center=ORIGIN) -> FlowTrajectory:
    grid = grid or SpectralGrid()
    schedule = schedule or RadiusSchedule("improved", 1.0)
    snaps, failed = [], []
    for tau in sorted(float(t) for t in taus):
        try:
            snaps.append(synthesize_reference_flow(kind, params, tau, grid, schedule(tau), center))
        except OutOfGraphRange:
            failed.append(tau)
    return FlowTrajectory(snaps, f"reference:{ReferenceKind(kind).value}", tuple(center),
                          schedule, failed_taus=tuple(failed))


# ------------------------------------------------------- graphical radius

def estimate_graphical_radius(g: CylinderGraph, *, bisections: int = 30):
    """Largest ``L`` with C^2 norm on ``B(2L)`` at most ``L^-2``.

    The search is capped at half the outermost node radius.  Returns
    ``(L, meets_schedule)`` where the flag compares against
    ``exp(-tau/9)``.
    """
    cap = 0.5 * g.grid.max_radius

    def ok(L):
        return c2_norm(g, 2.0 * L) <= L ** -2

    if ok(cap):
        lo = cap
    else:
        hi = cap
        lo = None
        for j in range(1, 40):
            L = cap * 2.0 ** -j
            if ok(L):
                lo = L
                break
            hi = L
        if lo is None:
            raise NeverAdmissible("no radius passes the C^2 test")
        for _ in range(bisections):
            mid = math.sqrt(lo * hi)
            if ok(mid):
                lo = mid
            else:
                hi = mid
    return lo, bool(lo >= math.exp(-g.tau / 9.0))


# ---------------------------------------------------- bubble-sheet scale

@dataclass(frozen=True)
class ScaleResult:
    scale: float
    exponent: int
    tested: tuple  # (j, passed) pairs


def bubble_sheet_scale(traj: FlowTrajectory, eps: float = 0.1, *, radius: float | None = None,
                       j_range=range(-4, 40)) -> ScaleResult:
    """Smallest dyadic ``Z = 2^J`` such that the flow is ``eps``-cylindrical
    at every tested scale ``r >= Z``.

    Scale ``r`` looks at ``tau`` in ``[-2 ln r - ln 2, -2 ln r]`` and asks
    for C^2 norm at most ``eps`` on ``B(1/eps)``; the ball is clipped to
    the grid.  Requested times where the reference surface was not a graph
    count as failures.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    taus = traj.taus
    failed = np.array(traj.failed_taus)
    results = []
    for j in j_range:
        hi = -2.0 * j * math.log(2.0)
        lo = hi - math.log(2.0)
        inside = [s for s in traj.snapshots if lo - 1e-12 <= s.tau <= hi + 1e-12]
        bad = failed.size and np.any((failed >= lo - 1e-12) & (failed <= hi + 1e-12))
        if not inside and not bad:
            continue
        ball = min(1.0 / eps, traj.snapshots[0].grid.max_radius) if radius is None else radius
        passed = not bad and all(c2_norm(s, ball) <= eps for s in inside)
        results.append((j, bool(passed)))
    if not results:
        raise ScaleRangeExhausted("trajectory covers no dyadic window")
    if all(p for _, p in results):
        raise ExactlyCylindrical("every tested scale is eps-cylindrical")
    if not any(p for _, p in results):
        raise ScaleRangeExhausted("no tested scale is eps-cylindrical")
    last_fail = max(j for j, p in results if not p)
    above = [j for j, p in results if j > last_fail]
    if not above:
        raise ScaleRangeExhausted("the largest tested scale fails")
    J = min(above)
    return ScaleResult(2.0 ** J, J, tuple(results))


# --------------------------------------------------- expansion estimates

def fit_exponent(taus, values):
    """Least-squares slope of ``log|values|`` against ``tau`` with a 2-sigma interval."""
    taus = np.asarray(taus, dtype=float)
    vals = np.abs(np.asarray(values, dtype=float))
    keep = vals > 0
    if keep.sum() < 3:
        return float("nan"), float("nan")
    t, y = taus[keep], np.log(vals[keep])
    A = np.vstack([t, np.ones_like(t)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = max(len(t) - 2, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    return float(coef[0]), float(2.0 * math.sqrt(max(cov[0, 0], 0.0)))


@dataclass(frozen=True)
class ExpansionEstimate:
    """Limits of ``e^(-tau/2) a_i(tau)`` for ``i = 1..4`` as ``tau -> -inf``."""

    abar: tuple
    confidence: tuple
    universal: tuple
    a0_decay_exponent: float
    a0_decay_interval: float
    history: tuple  # (tau, a0, a1, a2, a3, a4)

    @property
    def direction(self) -> np.ndarray:
        v = np.array(self.abar[:2])
        n = np.linalg.norm(v)
        return v / n if n > 0 else v

    def to_dict(self) -> dict:
        return {"abar": list(self.abar), "confidence": list(self.confidence),
                "universal": list(self.universal),
                "a0_decay_exponent": self.a0_decay_exponent,
                "a0_decay_interval": self.a0_decay_interval}


def _aitken(s0, s1, s2):
    """Limit of a geometric tail ``s_k``, ``s2`` being the sample nearest the limit."""
    d1, d2 = s1 - s0, s2 - s1
    if d1 != 0:
        q = d2 / d1
        if 0 < q < 0.9:
            return s2 + d2 * q / (1.0 - q), abs(d2) * q / (1.0 - q) + abs(d2) * q
    return s2, abs(d2)


def extract_expansion_coefficients(traj: FlowTrajectory, *, decade: float = math.log(10.0),
                                   oscillation: float = 0.1) -> ExpansionEstimate:
    """Unstable-mode limits from the earliest part of a trajectory.

    The three earliest samples spaced by ``decade`` are extrapolated with
    Aitken's delta-squared rule; the interval adds the size of that
    correction to the last increment.
    """
    snaps = traj.snapshots
    if len(snaps) < 3:
        raise InsufficientSpan("need at least three snapshots")
    taus = traj.taus
    if taus[-1] - taus[0] < 2 * decade - 1e-9:
        raise InsufficientSpan("trajectory spans less than two decades")
    rows = []
    for s in snaps:
        g = s
        if traj.tilted:
            _, g = fine_tune_rotation(s)
        dec = spectral_project(truncate_graph(g))
        rows.append([s.tau] + [c * math.exp(-s.tau / 2) for c in dec.raw_unstable])
    hist = np.array(rows)

    def nearest(t):
        return int(np.argmin(np.abs(taus - t)))

    i2 = 0
    i1 = nearest(taus[0] + decade)
    i0 = nearest(taus[0] + 2 * decade)
    abar, conf = [], []
    scale = np.max(np.abs(hist[i2, 2:6])) if hist.size else 0.0
    window = hist[taus <= taus[0] + decade + 1e-9]
    for col in range(2, 6):
        s0, s1, s2 = hist[i0, col], hist[i1, col], hist[i2, col]
        vals = window[:, col]
        mean = float(np.mean(vals))
        if abs(mean) > 1e-3 * scale and scale > 0:
            spread = (np.max(vals) - np.min(vals)) / abs(mean)
            if spread > oscillation:
                raise NoConvergence(f"{UNSTABLE_NAMES[col - 1]} oscillates by {spread:.2%}")
        lim, ci = _aitken(s0, s1, s2)
        abar.append(float(lim))
        conf.append(float(ci))
    c = traj.center
    universal = (abar[0], abar[1], abar[2] + c[2], abar[3] + c[3])
    a0 = hist[:, 1] * np.exp(hist[:, 0] / 2)
    kappa, kappa_ci = fit_exponent(hist[:, 0], a0) if np.any(np.abs(a0) > 1e-300) else (math.nan, math.nan)
    return ExpansionEstimate(tuple(abar), tuple(conf), universal, kappa, kappa_ci,
                             tuple(map(tuple, hist)))


# ---------------------------------------------------------------- output

def mode_energy_csv(traj: FlowTrajectory) -> str:
    buf = io.StringIO()
    cols = ["tau", "U_plus", "U_zero", "U_minus"] + [f"a_{n}" for n in UNSTABLE_NAMES]
    buf.write(",".join(cols) + "\n")
    for dec in traj.decompositions():
        vals = [dec.tau, *dec.energies, *dec.raw_unstable]
        buf.write(",".join("%.17g" % v for v in vals) + "\n")
    return buf.getvalue()


def check_fixed_point(g: CylinderGraph, steps: int = 10, dtau: float = 1e-3,
                      scheme: str | Scheme = Scheme.FULL_GRAPH, tol: float = 1e-12) -> float:
    """Sup-norm drift of a graph evolved for a few steps; raises above ``tol``."""
    cur = g
    for _ in range(steps):
        cur = step_flow(cur, dtau, scheme)
    drift = float(np.max(np.abs(cur.values - g.values)))
    if drift > tol:
        raise InvariantFailed(f"fixed point drifted by {drift:.3e}", "/values")
    return drift
