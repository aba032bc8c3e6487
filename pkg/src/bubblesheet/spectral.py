"""Gaussian Hilbert space over the bubble-sheet cylinder R^2 x S^1(sqrt 2).

Fields live on a tensor grid: Gauss-Hermite nodes for the weight
``exp(-x^2/4)`` in each of ``x1, x2`` and a uniform angle grid.  Derivatives in ``x1, x2`` differentiate the polynomial
interpolant through the nodes and angular derivatives are spectral, so the
linearized operator

    L = d11 + d22 - (x1 d1 + x2 d2)/2 + (1/2) d_theta^2 + 1

acts exactly on polynomial-times-trigonometric fields of modest degree, with
eigenvalue ``1 - (k1 + k2)/2 - m^2/2`` on Hermite degree (k1, k2) and mode m.
"""
from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .errors import BubbleSheetError, GridMismatch

SQRT2 = math.sqrt(2.0)
# <1, 1> in the Gaussian space: (4 pi)^(-3/2) e^(-1/2) * sqrt(2) * 2 pi * 4 pi
GAUSSIAN_MASS = math.sqrt(2.0 * math.pi / math.e)


class GridTooCoarse(BubbleSheetError):
    pass


class NotAGraph(BubbleSheetError):
    pass


class NewtonStalled(BubbleSheetError):
    pass


@dataclass(frozen=True)
class SpectralGrid:
    """Tensor quadrature grid; ``order`` nodes per axis, ``n_theta`` angles."""

    order: int = 24
    n_theta: int = 32

    def __post_init__(self):
        if self.n_theta < 16 or self.n_theta & (self.n_theta - 1):
            raise ValueError("n_theta must be a power of two >= 16")
        if self.order < 2:
            raise ValueError("order must be at least 2")

    @functools.cached_property
    def _rule(self):
        y, w = np.polynomial.hermite.hermgauss(self.order)
        return 2.0 * y, w / math.sqrt(math.pi)

    @property
    def nodes(self) -> np.ndarray:
        return self._rule[0]

    @property
    def weights(self) -> np.ndarray:
        """Probability weights for the normalized measure ``exp(-x^2/4)/sqrt(4 pi)``."""
        return self._rule[1]

    @functools.cached_property
    def theta(self) -> np.ndarray:
        return 2.0 * math.pi * np.arange(self.n_theta) / self.n_theta

    @property
    def shape(self):
        return (self.order, self.order, self.n_theta)

    @functools.cached_property
    def mesh(self):
        return np.meshgrid(self.nodes, self.nodes, self.theta, indexing="ij")

    @functools.cached_property
    def radius(self) -> np.ndarray:
        """``r = sqrt(x1^2 + x2^2)`` on the (x1, x2) node plane."""
        x1, x2 = np.meshgrid(self.nodes, self.nodes, indexing="ij")
        return np.hypot(x1, x2)

    @functools.cached_property
    def quadrature_weights(self) -> np.ndarray:
        w = self.weights
        wt = np.full(self.n_theta, 1.0 / self.n_theta)
        q = GAUSSIAN_MASS * w[:, None, None] * w[None, :, None] * wt[None, None, :]
        q.setflags(write=False)
        return q

    @functools.cached_property
    def derivative_matrix(self) -> np.ndarray:
        """Derivative of the degree ``order-1`` polynomial interpolant at the nodes.

        Built from barycentric weights, which stays stable at the far nodes
        where the Gaussian weight underflows.
        """
        x = self.nodes
        diff = x[:, None] - x[None, :]
        np.fill_diagonal(diff, 1.0)
        logb = -np.sum(np.log(np.abs(diff)), axis=1)
        sign = np.prod(np.sign(diff), axis=1)
        ratio = sign[None, :] * sign[:, None] * np.exp(logb[None, :] - logb[:, None])
        d = ratio / diff
        np.fill_diagonal(d, 0.0)
        np.fill_diagonal(d, -d.sum(axis=1))
        d.setflags(write=False)
        return d

    @functools.cached_property
    def second_derivative_matrix(self) -> np.ndarray:
        d = self.derivative_matrix
        d2 = d @ d
        # constants must be annihilated exactly
        np.fill_diagonal(d2, 0.0)
        np.fill_diagonal(d2, -d2.sum(axis=1))
        d2.setflags(write=False)
        return d2

    @functools.cached_property
    def radial_operator(self) -> np.ndarray:
        """Nodal matrix of ``d^2 - (x/2) d`` in one variable."""
        return self.second_derivative_matrix - 0.5 * self.nodes[:, None] * self.derivative_matrix

    def linear_propagator(self, dt: float):
        """Callable applying ``exp(dt L)`` to nodal values."""
        e = expm(dt * self.radial_operator)
        m = np.arange(self.n_theta // 2 + 1, dtype=float)
        ang = np.exp(-0.5 * m * m * dt)
        growth = math.exp(dt)

        def apply(values):
            v = np.einsum("ik,kjt->ijt", e, values)
            v = np.einsum("jk,ikt->ijt", e, v)
            v = np.fft.irfft(np.fft.rfft(v, axis=2) * ang, n=self.n_theta, axis=2)
            return growth * v

        return apply

    @property
    def max_radius(self) -> float:
        return float(np.max(np.abs(self.nodes)))

    def field(self, func: Callable) -> np.ndarray:
        x1, x2, th = self.mesh
        return np.broadcast_to(np.asarray(func(x1, x2, th), dtype=float), self.shape).copy()

    def d1(self, values):
        return np.einsum("ik,kjt->ijt", self.derivative_matrix, values)

    def d2(self, values):
        return np.einsum("jk,ikt->ijt", self.derivative_matrix, values)

    def dd1(self, values):
        return np.einsum("ik,kjt->ijt", self.second_derivative_matrix, values)

    def dd2(self, values):
        return np.einsum("jk,ikt->ijt", self.second_derivative_matrix, values)

    def dtheta(self, values, order: int = 1):
        c = np.fft.rfft(values, axis=2)
        m = np.arange(c.shape[2])
        fac = (1j * m) ** order
        if self.n_theta % 2 == 0 and order % 2 == 1:
            fac[-1] = 0.0
        return np.fft.irfft(c * fac, n=self.n_theta, axis=2)

    def __eq__(self, other):
        return isinstance(other, SpectralGrid) and (self.order, self.n_theta) == (other.order, other.n_theta)

    def __hash__(self):
        return hash((self.order, self.n_theta))


def cutoff(s):
    """Smooth cutoff: 1 on ``|s| <= 1/2``, 0 on ``|s| >= 1``, quintic smoothstep between."""
    s = np.abs(np.asarray(s, dtype=float))
    t = np.clip(2.0 * s - 1.0, 0.0, 1.0)
    return 1.0 - t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)


@dataclass(frozen=True, eq=False)
class CylinderGraph:
    """Graph ``u(x1, x2, theta)`` over the cylinder with graphical radius ``rho``."""

    grid: SpectralGrid
    values: np.ndarray
    rho: float
    tau: float = 0.0
    truncated: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise GridMismatch(f"values of shape {vals.shape} on grid {self.grid.shape}")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def radial_nodes(self) -> np.ndarray:
        nodes = self.grid.nodes
        return nodes[np.abs(nodes) <= 2 * self.rho]

    @property
    def angular_nodes(self) -> np.ndarray:
        return self.grid.theta

    @property
    def domain_mask(self) -> np.ndarray:
        return self.grid.radius <= 2 * self.rho

    def with_values(self, values, **kw) -> "CylinderGraph":
        return replace(self, values=values, **kw)

    def c2_proxy(self, radius: float | None = None) -> float:
        return c2_norm(self, radius if radius is not None else 2 * self.rho)

    @property
    def admissible(self) -> bool:
        return self.c2_proxy() <= self.rho ** -2

    def to_csv(self) -> str:
        x1, x2, th = self.grid.mesh
        lines = ["x1,x2,theta,u"]
        for a, b, c, d in zip(x1.ravel(), x2.ravel(), th.ravel(), self.values.ravel()):
            lines.append("%.17g,%.17g,%.17g,%.17g" % (a, b, c, d))
        return "\n".join(lines) + "\n"


def graph_from(grid: SpectralGrid, func: Callable, rho: float = 10.0, tau: float = 0.0) -> CylinderGraph:
    return CylinderGraph(grid, grid.field(func), rho, tau)


def _values_and_grid(f, grid):
    if isinstance(f, CylinderGraph):
        return f.values, f.grid
    if grid is None:
        raise GridMismatch("a grid is required for raw arrays")
    arr = np.asarray(f, dtype=float)
    if arr.shape != grid.shape:
        raise GridMismatch(f"array shape {arr.shape} does not match grid {grid.shape}")
    return arr, grid


def gaussian_inner_product(f, g, grid: SpectralGrid | None = None) -> float:
    """``int_Gamma (4 pi)^(-3/2) exp(-|x|^2/4) f g`` by tensor quadrature."""
    fv, fgrid = _values_and_grid(f, grid)
    gv, ggrid = _values_and_grid(g, grid if grid is not None else fgrid)
    if fgrid != ggrid:
        raise GridMismatch("fields live on different grids")
    # numpy sums contiguous float arrays pairwise, so the order is fixed
    return float(np.sum(np.ascontiguousarray(fgrid.quadrature_weights * fv * gv)))


def gaussian_norm(f, grid: SpectralGrid | None = None) -> float:
    return math.sqrt(max(gaussian_inner_product(f, f, grid), 0.0))


def apply_linearized_operator(g: CylinderGraph) -> CylinderGraph:
    if g.grid.order < 5:
        raise GridTooCoarse("need at least 5 radial nodes")
    grid = g.grid
    u = g.values
    lin = grid.radial_operator
    out = np.einsum("ik,kjt->ijt", lin, u) + np.einsum("jk,ikt->ijt", lin, u)
    return g.with_values(out + 0.5 * grid.dtheta(u, 2) + u)


def truncate_graph(g: CylinderGraph) -> CylinderGraph:
    chi = cutoff(g.grid.radius / g.rho)
    return g.with_values(g.values * chi[:, :, None], truncated=True)


def c2_norm(g: CylinderGraph, radius: float) -> float:
    """Sup of ``|u|``, first and second derivatives over nodes with ``r <= radius``.

    Angular derivatives are taken with respect to arclength on S^1(sqrt 2).
    The innermost node ring is always included so the ball is never empty.
    """
    grid = g.grid
    u = g.values
    r = grid.radius
    mask = r <= max(radius, float(np.min(r)))
    d1, d2 = grid.d1(u), grid.d2(u)
    dt = grid.dtheta(u) / SQRT2
    parts = [u, d1, d2, dt, grid.dd1(u), grid.dd2(u), grid.d2(d1),
             grid.dtheta(u, 2) / 2.0, grid.dtheta(d1) / SQRT2, grid.dtheta(d2) / SQRT2]
    return float(max(np.max(np.abs(p[mask])) for p in parts))


# --------------------------------------------------------- eigenfunctions

def _basis_functions():
    one = lambda x1, x2, t: np.ones_like(x1)
    return {
        "unstable": [
            ("1", one, 1.0),
            ("x1", lambda x1, x2, t: x1, 0.5),
            ("x2", lambda x1, x2, t: x2, 0.5),
            ("cos", lambda x1, x2, t: np.cos(t), 0.5),
            ("sin", lambda x1, x2, t: np.sin(t), 0.5),
        ],
        "neutral": [
            ("x1cos", lambda x1, x2, t: x1 * np.cos(t), 0.0),
            ("x1sin", lambda x1, x2, t: x1 * np.sin(t), 0.0),
            ("x2cos", lambda x1, x2, t: x2 * np.cos(t), 0.0),
            ("x2sin", lambda x1, x2, t: x2 * np.sin(t), 0.0),
            ("x1^2-2", lambda x1, x2, t: x1 ** 2 - 2.0, 0.0),
            ("x2^2-2", lambda x1, x2, t: x2 ** 2 - 2.0, 0.0),
            ("x1x2", lambda x1, x2, t: x1 * x2, 0.0),
        ],
    }


EIGENFUNCTIONS = _basis_functions()
STABLE_WITNESSES = [
    ("x1^3-6x1", lambda x1, x2, t: x1 ** 3 - 6.0 * x1, -0.5),
    ("cos2", lambda x1, x2, t: np.cos(2 * t), -1.0),
    ("(x1^2-2)cos", lambda x1, x2, t: (x1 ** 2 - 2.0) * np.cos(t), -0.5),
]
# exact squared norms relative to GAUSSIAN_MASS
_EXACT_NORM2 = {"1": 1.0, "x1": 2.0, "x2": 2.0, "cos": 0.5, "sin": 0.5,
                "x1cos": 1.0, "x1sin": 1.0, "x2cos": 1.0, "x2sin": 1.0,
                "x1^2-2": 8.0, "x2^2-2": 8.0, "x1x2": 4.0}
UNSTABLE_NAMES = tuple(n for n, _, _ in EIGENFUNCTIONS["unstable"])
NEUTRAL_NAMES = tuple(n for n, _, _ in EIGENFUNCTIONS["neutral"])


def basis_norm(name: str) -> float:
    """Exact Gaussian norm of one listed eigenfunction."""
    return math.sqrt(_EXACT_NORM2[name] * GAUSSIAN_MASS)


@functools.lru_cache(maxsize=8)
def _basis_on(grid: SpectralGrid):
    fields = {}
    for group in ("unstable", "neutral"):
        for name, func, _ in EIGENFUNCTIONS[group]:
            f = grid.field(func)
            f /= basis_norm(name)
            f.setflags(write=False)
            fields[name] = f
    return fields


@dataclass(frozen=True)
class ModeDecomposition:
    """Coefficients on the normalized unstable and neutral eigenfunctions."""

    unstable: tuple
    neutral: tuple
    energies: tuple  # (U_plus, U_zero, U_minus)
    tau: float = 0.0

    @property
    def raw_unstable(self) -> tuple:
        """Coefficients with respect to the unnormalized functions 1, x1, x2, cos, sin."""
        return tuple(c / basis_norm(n) for c, n in zip(self.unstable, UNSTABLE_NAMES))

    @property
    def raw_neutral(self) -> tuple:
        return tuple(c / basis_norm(n) for c, n in zip(self.neutral, NEUTRAL_NAMES))

    @property
    def U_plus(self):
        return self.energies[0]

    @property
    def U_zero(self):
        return self.energies[1]

    @property
    def U_minus(self):
        return self.energies[2]

    def reconstruct(self, grid: SpectralGrid) -> np.ndarray:
        basis = _basis_on(grid)
        out = np.zeros(grid.shape)
        for c, n in zip(self.unstable, UNSTABLE_NAMES):
            out += c * basis[n]
        for c, n in zip(self.neutral, NEUTRAL_NAMES):
            out += c * basis[n]
        return out

    def to_dict(self) -> dict:
        d = {"tau": self.tau, "U_plus": self.energies[0], "U_zero": self.energies[1],
             "U_minus": self.energies[2]}
        for c, n in zip(self.unstable, UNSTABLE_NAMES):
            d[f"unstable[{n}]"] = c
        for c, n in zip(self.neutral, NEUTRAL_NAMES):
            d[f"neutral[{n}]"] = c
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def spectral_project(g: CylinderGraph) -> ModeDecomposition:
    """Project onto the 5 unstable and 7 neutral eigenfunctions.

    ``U_minus`` is the remainder of the squared norm; tiny negative
    quadrature noise is kept as computed so callers can see it.
    """
    basis = _basis_on(g.grid)
    unstable = tuple(gaussian_inner_product(g, basis[n], g.grid) for n in UNSTABLE_NAMES)
    neutral = tuple(gaussian_inner_product(g, basis[n], g.grid) for n in NEUTRAL_NAMES)
    up = float(sum(c * c for c in unstable))
    u0 = float(sum(c * c for c in neutral))
    total = gaussian_inner_product(g, g, g.grid)
    return ModeDecomposition(unstable, neutral, (up, u0, total - up - u0), g.tau)


# --------------------------------------------------------------- rotations

def generator(i: int) -> np.ndarray:
    """Basis of antisymmetric matrices with vanishing (1,2) and (3,4) entries.

    ``generator(0)`` rotates x1 into x3, then x1 into x4, x2 into x3,
    x2 into x4.
    """
    pairs = [(0, 2), (0, 3), (1, 2), (1, 3)]
    a, b = pairs[i]
    g = np.zeros((4, 4))
    g[b, a] = 1.0
    g[a, b] = -1.0
    return g


@dataclass(frozen=True)
class RotationState:
    coords: tuple = (0.0, 0.0, 0.0, 0.0)

    @property
    def A(self) -> np.ndarray:
        return sum(c * generator(i) for i, c in enumerate(self.coords))

    @property
    def S(self) -> np.ndarray:
        return expm(self.A)

    def orthogonality_defect(self) -> float:
        s = self.S
        return float(np.max(np.abs(s.T @ s - np.eye(4))))


def rotation_field(A: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    """``<A x, nu_Gamma>`` for ``x`` on the cylinder."""
    x1, x2, th = grid.mesh
    c, s = np.cos(th), np.sin(th)
    pts = np.stack([x1, x2, SQRT2 * c, SQRT2 * s])
    ax = np.einsum("ab,b...->a...", A, pts)
    return ax[2] * c + ax[3] * s


def rotation_pairing(A: np.ndarray, g: CylinderGraph) -> float:
    A = np.asarray(A, dtype=float)
    return gaussian_inner_product(rotation_field(A, g.grid), g.values, g.grid)


def _angular_modes(values, grid):
    return np.fft.rfft(values, axis=2) / grid.n_theta


def _eval_angle(modes, theta):
    """Evaluate real Fourier data (rfft/n) at per-node angles ``theta``."""
    n_modes = modes.shape[2]
    m = np.arange(n_modes)
    phase = np.exp(1j * theta[..., None] * m)
    # grids have an even angle count, so the last mode is the Nyquist mode
    weights = np.full(n_modes, 2.0)
    weights[0] = 1.0
    weights[-1] = 1.0
    return np.real(np.sum(weights * modes[:, :, None, :] * phase, axis=-1))


def regraph(g: CylinderGraph, S: np.ndarray, iterations: int = 30) -> CylinderGraph:
    """Graph over the cylinder of the rotated surface ``S (graph of g)``.

    Off-grid values of ``g`` are taken from its angular Fourier series and
    a second-order Taylor expansion in ``x1, x2`` about each node, which is
    accurate for the small rotations used here.
    """
    grid = g.grid
    u = g.values
    x1, x2, th = grid.mesh
    c, s = np.cos(th), np.sin(th)
    St = np.asarray(S, dtype=float).T
    base = np.einsum("ab,b...->a...", St, np.stack([x1, x2, 0 * x1, 0 * x1]))
    direc = np.einsum("ab,b...->a...", St, np.stack([0 * x1, 0 * x1, c, s]))
    d1u, d2u = grid.d1(u), grid.d2(u)
    taylor = [_angular_modes(a, grid) for a in
              (u, d1u, d2u, grid.dd1(u), grid.dd2(u), grid.d2(d1u))]
    radius = SQRT2 + u
    for _ in range(iterations):
        q = base + radius * direc
        dx1 = q[0] - x1
        dx2 = q[1] - x2
        ang = np.arctan2(q[3], q[2])
        ev = [_eval_angle(m, ang) for m in taylor]
        u_q = (ev[0] + dx1 * ev[1] + dx2 * ev[2]
               + 0.5 * dx1 ** 2 * ev[3] + 0.5 * dx2 ** 2 * ev[4] + dx1 * dx2 * ev[5])
        target = SQRT2 + u_q
        if np.any(target <= 0):
            raise NotAGraph("rotated surface reaches the axis")
        # |b34 + R d34| = target, solved for R > 0
        b3, b4, e3, e4 = base[2], base[3], direc[2], direc[3]
        aa = e3 * e3 + e4 * e4
        bb = 2 * (b3 * e3 + b4 * e4)
        cc = b3 * b3 + b4 * b4 - target ** 2
        disc = bb * bb - 4 * aa * cc
        if np.any(disc < 0) or np.any(aa < 1e-12):
            raise NotAGraph("rotation too large to re-graph")
        new = (-bb + np.sqrt(disc)) / (2 * aa)
        if np.any(new <= 0):
            raise NotAGraph("rotation too large to re-graph")
        change = np.max(np.abs(new - radius))
        radius = new
        if change < 1e-15:
            break
    return g.with_values(radius - SQRT2)


def fine_tune_rotation(g: CylinderGraph, *, tol: float = 1e-11, max_iter: int = 40):
    """Rotation in the four-generator family making the truncated graph orthogonal
    to all rotation fields.  Returns the rotation and the re-graphed surface.
    """
    grid = g.grid
    chi = cutoff(grid.radius / g.rho)[:, :, None]
    fields = [rotation_field(generator(i), grid) for i in range(4)]
    gram = np.array([[gaussian_inner_product(fi, fj * chi, grid) for fj in fields] for fi in fields])

    def pairings(graph):
        return np.array([gaussian_inner_product(f, graph.values * chi, grid) for f in fields])

    coords = np.zeros(4)
    current = g
    p = pairings(current)
    for _ in range(max_iter):
        if np.max(np.abs(p)) <= tol:
            state = RotationState(tuple(float(c) for c in coords))
            return state, current
        step = np.linalg.solve(gram, p)
        damping = 1.0
        while True:
            trial = coords - damping * step
            rotated = regraph(g, RotationState(tuple(trial)).S)
            p_new = pairings(rotated)
            if np.max(np.abs(p_new)) < np.max(np.abs(p)) or damping < 1e-3:
                break
            damping *= 0.5
        coords, current, p = trial, rotated, p_new
    raise NewtonStalled(f"orthogonality defect {np.max(np.abs(p)):.3e} after {max_iter} steps")
