"""Rotationally symmetric shrinker and translator profiles.

Three one-dimensional ODE families are solved here:

* ADS shrinkers ``r = u_a(x)``: concave, ``u_a(a) = 0``.  The curve closes
  smoothly on the axis at ``x = a``, so we start from a tip series and
  integrate backwards in arclength down to ``x = 0``.
* KM shrinkers ``r = u_b(x)``: convex and asymptotic to the cone of slope
  ``b``.  Integration starts far out from the conical series and runs
  backwards; the growing ``exp(x^2/4)`` mode decays in that direction.
* The rotationally symmetric bowl translator ``x_n = u(r)`` with speed ``v``.

All profiles carry nodes, values and slopes and are certified by
``ode_residual``, which uses only the sampled nodes.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .errors import BubbleSheetError

SQRT2 = math.sqrt(2.0)
DEFAULT_L0 = 4.0


class ShootingDiverged(BubbleSheetError):
    pass


class ParameterTooSmall(BubbleSheetError):
    pass


class SlopeNotReached(BubbleSheetError):
    pass


class TooFewNodes(BubbleSheetError):
    pass


class ProfileKind(str, enum.Enum):
    ADS = "ADS"
    KM = "KM"
    BOWL = "Bowl"


@dataclass(frozen=True, eq=False)
class RadialProfile:
    kind: ProfileKind
    parameter: float
    nodes: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    residual_bound: float
    dim: int = 2  # surface dimension; only bowls use dim != 2

    def __post_init__(self):
        for name in ("nodes", "values", "slopes"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.nodes.shape == self.values.shape == self.slopes.shape):
            raise ValueError("nodes, values and slopes must have equal length")

    @property
    def is_cylinder(self) -> bool:
        return self.kind is ProfileKind.ADS and math.isinf(self.parameter)

    def curve(self) -> "ProfileCurve":
        return ProfileCurve(self)


def cylinder_profile(x_max: float = 20.0, n: int = 2001) -> RadialProfile:
    """The round cylinder ``u = sqrt(2)``, viewed as the ``a = inf`` ADS limit."""
    x = np.linspace(0.0, x_max, n)
    return RadialProfile(ProfileKind.ADS, math.inf, x, np.full(n, SQRT2), np.zeros(n), 0.0)


def _integrator_rtol(tol: float) -> float:
    # finite-difference certification amplifies dense-output error, so the
    # integrator runs far below the requested residual tolerance
    return min(tol / 100.0, 1e-13)


# ---------------------------------------------------------------- ADS family

def _ads_tip_state(a: float, r0: float):
    # x = X(r) near the tip, from the shrinker equation expanded in r
    c1 = -a / 8.0
    c2 = -a * (a * a + 4.0) / 1024.0
    c3 = -a * (a ** 4 + 26.0 * a * a + 24.0) / 147456.0
    x = a + c1 * r0 ** 2 + c2 * r0 ** 4 + c3 * r0 ** 6
    dx = 2 * c1 * r0 + 4 * c2 * r0 ** 3 + 6 * c3 * r0 ** 5
    w = math.hypot(1.0, dx)
    # tangent oriented towards increasing x
    phi = math.atan2(-1.0 / w, -dx / w)
    return x, r0, phi


def _shrinker_arclength_rhs(s, y):
    x, r, phi = y
    c, sn = math.cos(phi), math.sin(phi)
    return [c, sn, c / r - 0.5 * (r * c - x * sn)]


def solve_ads_profile(a: float, tol: float = 1e-8, *, L0: float = DEFAULT_L0,
                      ds: float = 2e-3) -> RadialProfile:
    """Concave shrinker profile meeting the axis at ``x = a``.

    Nodes are uniform in arclength, from ``x = 0`` to the tip ``x = a``
    where ``u = 0`` and the slope is ``-inf``.
    """
    if not a >= L0:
        raise ParameterTooSmall(f"a={a} is below L0={L0}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    r0 = 1e-4
    y0 = _ads_tip_state(a, r0)
    s0 = r0  # arclength from the start point to the tip, to O(r0^3)

    def hit_axis_plane(s, y):
        return y[0]
    hit_axis_plane.terminal = True

    def lost_height(s, y):
        return y[1] - 1e-6
    lost_height.terminal = True

    rtol = _integrator_rtol(tol)
    sol = solve_ivp(_shrinker_arclength_rhs, (0.0, -20.0 * a), y0, method="DOP853",
                    rtol=rtol, atol=rtol * 1e-2, events=[hit_axis_plane, lost_height],
                    dense_output=True)
    if sol.status != 1 or len(sol.t_events[0]) == 0:
        raise ShootingDiverged(f"ADS integration for a={a} did not reach x=0")
    s_end = sol.t_events[0][0]
    total = -s_end + s0
    n = int(math.ceil(total / ds)) + 1
    # distance to the tip as a smooth map of the node index: spacing near
    # the tip is a tenth of the mean spacing
    tau = np.linspace(1.0, 0.0, n)
    dist = total * (0.1 * tau + 0.9 * tau ** 2)
    inner = np.minimum(s0 - dist[:-1], 0.0)
    x, r, phi = sol.sol(inner)
    x[0] = 0.0
    nodes = np.append(x, a)
    values = np.append(r, 0.0)
    slopes = np.append(np.tan(phi), -np.inf)
    prof = RadialProfile(ProfileKind.ADS, float(a), nodes, values, slopes, 0.0)
    bound = ode_residual(prof)
    return RadialProfile(ProfileKind.ADS, float(a), nodes, values, slopes, bound)


# ----------------------------------------------------------------- KM family

def _km_series(b: float, x):
    c = [1.0 / b,
         (-3 * b ** 2 - 1) / (2 * b ** 3 * (b ** 2 + 1)),
         (33 * b ** 4 + 20 * b ** 2 + 3) / (6 * b ** 5 * (b ** 2 + 1) ** 2),
         (-759 * b ** 6 - 593 * b ** 4 - 161 * b ** 2 - 15) / (24 * b ** 7 * (b ** 2 + 1) ** 3)]
    u = b * x + sum(ck * x ** (-(2 * k + 1)) for k, ck in enumerate(c))
    du = b - sum((2 * k + 1) * ck * x ** (-(2 * k + 2)) for k, ck in enumerate(c))
    return u, du


def _graph_shrinker_rhs(x, y):
    u, p = y
    return [p, (1 + p * p) * (0.5 * (x * p - u) + 1.0 / u)]


def _graph_shrinker_jac(x, y):
    u, p = y
    g = 0.5 * (x * p - u) + 1.0 / u
    return [[0.0, 1.0], [(1 + p * p) * (-0.5 - 1.0 / u ** 2), 2 * p * g + 0.5 * x * (1 + p * p)]]


def km_asymptotic_slope(profile: RadialProfile, index: int = -1) -> float:
    """Limit slope implied by the conical expansion at one node."""
    b = profile.parameter
    x = profile.nodes[index]
    _, du_series = _km_series(b, x)
    return float(profile.slopes[index] + (b - du_series))


def solve_km_profile(b: float, x_max: float = 50.0, tol: float = 1e-8, *,
                     dx: float | None = None) -> RadialProfile:
    """Convex shrinker profile on ``[0, x_max]`` with asymptotic slope ``b``.

    The default node spacing is 2e-3, coarsened so that at most 25001 nodes
    are emitted.
    """
    if dx is None:
        dx = max(2e-3, x_max / 25000.0)
    if not b > 0:
        raise ValueError("b must be positive")
    if x_max <= 0:
        raise ValueError("x_max must be positive")
    rtol = _integrator_rtol(tol)
    x_far = max(2.0 * x_max, 20.0 / b, x_max + 20.0)
    start = list(_km_series(b, x_far))

    def collapsed(x, y):
        return y[0] - 1e-6
    collapsed.terminal = True

    # stiff far range by Radau, the curved part near the axis by DOP853
    x_switch = min(x_max, 60.0)
    far = solve_ivp(_graph_shrinker_rhs, (x_far, x_switch), start, method="Radau",
                    jac=_graph_shrinker_jac, rtol=rtol, atol=rtol * 1e-2, dense_output=True)
    if far.status != 0 or not np.all(np.isfinite(far.y[:, -1])):
        raise ShootingDiverged(f"KM far-field integration failed for b={b}")
    near = solve_ivp(_graph_shrinker_rhs, (x_switch, 0.0), far.y[:, -1], method="DOP853",
                     rtol=rtol, atol=rtol * 1e-2, events=[collapsed], dense_output=True)
    if near.status != 0:
        raise ShootingDiverged(f"KM profile for b={b} collapsed before x=0")
    n = int(math.ceil(x_max / dx)) + 1
    x = np.linspace(0.0, x_max, n)
    u = np.empty(n)
    p = np.empty(n)
    inner = x <= x_switch
    u[inner], p[inner] = near.sol(x[inner])
    if np.any(~inner):
        u[~inner], p[~inner] = far.sol(x[~inner])
    prof = RadialProfile(ProfileKind.KM, float(b), x, u, p, 0.0)
    if abs(km_asymptotic_slope(prof) - b) > tol * (1 + b):
        raise SlopeNotReached(f"asymptotic slope not visible at x_max={x_max} for b={b}")
    bound = ode_residual(prof)
    return RadialProfile(ProfileKind.KM, float(b), x, u, p, bound)


# ---------------------------------------------------------------- translator

def _bowl_rhs(speed: float, dim: int):
    def rhs(r, y):
        u, p = y
        return [p, (1 + p * p) * (speed - (dim - 1) * p / r)]
    return rhs


def _bowl_axis_series(speed: float, dim: int, r):
    alpha = speed / dim
    beta = alpha ** 3 / (dim + 2)
    return alpha * r ** 2 / 2 + beta * r ** 4 / 4, alpha * r + beta * r ** 3


def solve_bowl_profile(speed: float, r_max: float = 40.0, tol: float = 1e-8, *,
                       dr: float = 2e-3, dim: int = 2) -> RadialProfile:
    """Rotationally symmetric translator ``x_n = u(r)`` moving with the given speed.

    ``dim`` is the dimension of the bowl itself (2 for the bowl in R^3).
    """
    if not speed > 0:
        raise ValueError("speed must be positive")
    rtol = _integrator_rtol(tol)
    r0 = 1e-4
    sol = solve_ivp(_bowl_rhs(speed, dim), (r0, r_max), list(_bowl_axis_series(speed, dim, r0)),
                    method="DOP853", rtol=rtol, atol=rtol * 1e-2, dense_output=True)
    if sol.status != 0 or not np.all(np.isfinite(sol.y[:, -1])):
        raise ShootingDiverged(f"bowl integration failed for speed={speed}")
    n = int(math.ceil(r_max / dr)) + 1
    r = np.linspace(0.0, r_max, n)
    u = np.empty(n)
    p = np.empty(n)
    near = r < r0
    u[near], p[near] = _bowl_axis_series(speed, dim, r[near])
    u[~near], p[~near] = sol.sol(r[~near])
    prof = RadialProfile(ProfileKind.BOWL, float(speed), r, u, p, 0.0, dim)
    bound = ode_residual(prof)
    return RadialProfile(ProfileKind.BOWL, float(speed), r, u, p, bound, dim)


def _bowl_slope_corrections(speed: float, r):
    vr = speed * r
    return 1.0 / vr + 2.0 / vr ** 3 + 11.0 / vr ** 5 + 90.0 / vr ** 7


def far_field_slope_ratio(profile: RadialProfile) -> float:
    """``u'(r)/r`` at the last node, corrected by the far-field expansion.

    For a bowl of speed ``v`` the corrected ratio converges to ``v``.
    """
    if profile.kind is not ProfileKind.BOWL or profile.dim != 2:
        raise ValueError("far-field expansion is available for 2d bowls only")
    r = profile.nodes[-1]
    v = profile.parameter
    return float((profile.slopes[-1] + _bowl_slope_corrections(v, r)) / r)


class BowlShape:
    """Height function of a 2d bowl on all of ``[0, inf)``.

    Inside the sampled range the profile spline is used; beyond it the
    far-field expansion with a matched constant.
    """

    def __init__(self, profile: RadialProfile):
        if profile.kind is not ProfileKind.BOWL or profile.dim != 2:
            raise ValueError("BowlShape needs a 2d bowl profile")
        self.profile = profile
        self.speed = profile.parameter
        self.r_match = float(profile.nodes[-1])
        self._spline = CubicSpline(profile.nodes, profile.values)
        self.constant = float(profile.values[-1] - self._series_part(self.r_match))

    def _series_part(self, r):
        v = self.speed
        return (v * r ** 2 / 2 - np.log(r) / v + 1 / (v ** 3 * r ** 2)
                + 11 / (4 * v ** 5 * r ** 4) + 15 / (v ** 7 * r ** 6))

    def height(self, r):
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        inside = r <= self.r_match
        out[inside] = self._spline(r[inside])
        out[~inside] = self._series_part(r[~inside]) + self.constant
        return out

    def tail(self, r):
        """Every term of the far-field height except ``v r^2 / 2``."""
        v = self.speed
        r = np.asarray(r, dtype=float)
        return (-np.log(r) / v + self.constant + 1 / (v ** 3 * r ** 2)
                + 11 / (4 * v ** 5 * r ** 4) + 15 / (v ** 7 * r ** 6))

    def radius(self, h):
        """Inverse of ``height`` for ``h >= 0``."""
        h = np.asarray(h, dtype=float)
        if np.any(h < 0):
            raise ValueError("height below the bowl tip")
        v = self.speed
        out = np.empty_like(h)
        h_match = float(self.profile.values[-1])
        far = h > h_match
        if np.any(far):
            r = np.sqrt(2 * h[far] / v)
            for _ in range(60):
                r_new = np.sqrt(2 * (h[far] - self.tail(r)) / v)
                if np.all(np.abs(r_new - r) <= 1e-15 * r_new):
                    r = r_new
                    break
                r = r_new
            out[far] = r
        near = ~far
        if np.any(near):
            nodes = self.profile.nodes
            vals = self.profile.values
            r = np.interp(h[near], vals, nodes)
            for _ in range(50):
                f = self._spline(r) - h[near]
                d = self._spline(r, 1)
                step = np.where(d > 0, f / np.where(d > 0, d, 1.0), 0.0)
                r = np.clip(r - step, 0.0, self.r_match)
                if np.all(np.abs(step) <= 1e-15 * (1 + r)):
                    break
            # near the tip u ~ v r^2 / 4, Newton stalls where d -> 0
            tip = r < 1e-6
            r[tip] = np.sqrt(np.maximum(4 * h[near][tip] / v, 0.0))
            out[near] = r
        return out


# ---------------------------------------------------------------- residuals

def _index_derivatives(f: np.ndarray):
    """First and second derivatives with respect to the node index."""
    n = len(f)
    d1 = np.full(n, np.nan)
    d2 = np.full(n, np.nan)
    if n >= 5:
        d1[2:-2] = (-f[4:] + 8 * f[3:-1] - 8 * f[1:-3] + f[:-4]) / 12.0
        d2[2:-2] = (-f[4:] + 16 * f[3:-1] - 30 * f[2:-2] + 16 * f[1:-3] - f[:-4]) / 12.0
    else:
        d1[1:-1] = (f[2:] - f[:-2]) / 2.0
        d2[1:-1] = f[2:] - 2 * f[1:-1] + f[:-2]
    return d1, d2


def ode_residuals(profile: RadialProfile) -> np.ndarray:
    """Nodewise residual of the defining ODE, NaN where the stencil does not fit.

    The residual is written in the geometric form (mean curvature minus the
    shrinker or translator term) with the curve parametrized by node index,
    which stays regular at the ADS tip.
    """
    x = profile.nodes
    u = profile.values
    if len(x) < 3:
        raise TooFewNodes("need at least 3 nodes")
    xt, xtt = _index_derivatives(x)
    ut, utt = _index_derivatives(u)
    speed = np.hypot(xt, ut)
    cos_psi = xt / speed
    sin_psi = ut / speed
    kappa = (xt * utt - ut * xtt) / speed ** 3
    if profile.kind is ProfileKind.BOWL:
        v = profile.parameter
        with np.errstate(divide="ignore", invalid="ignore"):
            res = kappa + (profile.dim - 1) * sin_psi / x - v * cos_psi
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            res = -kappa + cos_psi / u - 0.5 * (u * cos_psi - x * sin_psi)
    return res


def ode_residual(profile: RadialProfile) -> float:
    """Sup-norm of the ODE residual over interior nodes."""
    res = ode_residuals(profile)
    finite = res[np.isfinite(res)]
    if finite.size == 0:
        raise TooFewNodes("no interior node admits a stencil")
    return float(np.max(np.abs(finite)))


# --------------------------------------------------------- curve evaluation

class ProfileCurve:
    """Cubic-spline evaluation of a profile along its node parameter.

    ``evaluate(y)`` returns the height, the tangent angle and the signed
    curvature of the profile curve above abscissa ``y``.  Working in the
    node parameter keeps the ADS tip regular.
    """

    def __init__(self, profile: RadialProfile):
        self.profile = profile
        t = np.arange(len(profile.nodes), dtype=float)
        self._t = t
        self._x = CubicSpline(t, profile.nodes)
        self._u = CubicSpline(t, profile.values)
        self.x_min = float(profile.nodes[0])
        self.x_max = float(profile.nodes[-1])

    def parameter_at(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(y < self.x_min - 1e-12) or np.any(y > self.x_max + 1e-12):
            raise ValueError("abscissa outside the profile range")
        t = np.interp(y, self.profile.nodes, self._t)
        for _ in range(30):
            f = self._x(t) - y
            d = self._x(t, 1)
            step = f / d
            t = np.clip(t - step, 0.0, self._t[-1])
            if np.all(np.abs(step) < 1e-13):
                break
        return t

    def evaluate(self, y):
        t = self.parameter_at(y)
        xt, xtt = self._x(t, 1), self._x(t, 2)
        ut, utt = self._u(t, 1), self._u(t, 2)
        speed = np.hypot(xt, ut)
        psi = np.arctan2(ut, xt)
        kappa = (xt * utt - ut * xtt) / speed ** 3
        return self._u(t), psi, kappa

    def height(self, y):
        return self._u(self.parameter_at(y))


def calibration_residual(profile: RadialProfile, samples: int | None = None) -> float:
    """Sup of ``|H - <x, nu>/2| exp(-|x|^2/4)`` over points of the surface in R^3.

    Sample points are the midpoints between consecutive nodes.
    """
    if profile.kind is ProfileKind.BOWL:
        raise ValueError("calibration applies to shrinker profiles")
    if profile.is_cylinder:
        x = profile.nodes
        u = profile.values
        h = 1.0 / u
        return float(np.max(np.abs(h - 0.5 * u) * np.exp(-(x ** 2 + u ** 2) / 4)))
    curve = profile.curve()
    mids = 0.5 * (profile.nodes[1:] + profile.nodes[:-1])
    if samples is not None and samples < len(mids):
        mids = mids[np.linspace(0, len(mids) - 1, samples).astype(int)]
    u, psi, kappa = curve.evaluate(mids)
    ok = u > 1e-3
    u, psi, kappa, y = u[ok], psi[ok], kappa[ok], mids[ok]
    h = -kappa + np.cos(psi) / u
    support = u * np.cos(psi) - y * np.sin(psi)
    return float(np.max(np.abs(h - 0.5 * support) * np.exp(-(y ** 2 + u ** 2) / 4)))


# ---------------------------------------------------------------- csv io

_CSV_FIELDS = ("kind", "parameter", "x", "u", "du", "residual")


def _fmt(v: float) -> str:
    return "%.17g" % v


def profile_to_csv(profile: RadialProfile) -> str:
    if profile.dim != 2:
        raise ValueError("only 2d profiles have a CSV form")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_CSV_FIELDS)
    p = _fmt(profile.parameter)
    rb = _fmt(profile.residual_bound)
    for x, u, du in zip(profile.nodes, profile.values, profile.slopes):
        w.writerow((profile.kind.value, p, _fmt(x), _fmt(u), _fmt(du), rb))
    return buf.getvalue()


def profile_from_csv(text: str) -> RadialProfile:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ValueError("empty profile table")
    kind = ProfileKind(rows[0]["kind"])
    arr = {k: np.array([float(r[k]) for r in rows]) for k in ("x", "u", "du")}
    return RadialProfile(kind, float(rows[0]["parameter"]), arr["x"], arr["u"], arr["du"],
                         float(rows[0]["residual"]))
