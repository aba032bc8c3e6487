"""Three-component comparison systems and the neutral/unstable dichotomy.

Time ``s`` runs over ``(-inf, 0]``.  A system ``(U_plus, U_zero, U_minus)``
satisfies the hypotheses when, for a coupling ``sigma(s)`` that decreases to
zero as ``s -> -inf``,

    U_plus'  >= c0 U_plus - sigma (U_zero + U_minus)
    |U_zero'| <= sigma (U_plus + U_zero + U_minus)
    U_minus' <= -c0 U_minus + sigma (U_plus + U_zero)

and then one of two behaviours wins as ``s -> -inf``: either the neutral
energy dominates the other two or the unstable energy does.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.signal import savgol_filter

from .errors import BubbleSheetError


class BlowupDetected(BubbleSheetError):
    pass


class StiffnessExceeded(BubbleSheetError):
    pass


class TooFewSamples(BubbleSheetError):
    pass


class Dominance(str, enum.Enum):
    NEUTRAL = "NeutralDominant"
    UNSTABLE = "UnstableDominant"
    INCONCLUSIVE = "Inconclusive"


def decaying_coupling(scale: float = 0.1, rate: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """``sigma(s) = scale * exp(rate * s)``, increasing in ``s`` and zero at ``-inf``."""
    return lambda s: scale * np.exp(rate * np.asarray(s, dtype=float))


@dataclass(frozen=True)
class LinearComparisonSystem:
    """``U' = diag(c_plus, 0, -c_minus) U + sigma(s) K U``."""

    c_plus: float
    c_minus: float
    coupling: tuple  # 3x3 nested tuple K
    sigma_scale: float = 0.1
    sigma_rate: float = 1.0

    def sigma(self, s):
        return self.sigma_scale * np.exp(self.sigma_rate * np.asarray(s, dtype=float))

    def __call__(self, s, U):
        K = np.asarray(self.coupling)
        base = np.array([self.c_plus * U[0], 0.0, -self.c_minus * U[2]])
        return base + self.sigma(s) * (K @ U)

    def to_dict(self) -> dict:
        return {"c_plus": self.c_plus, "c_minus": self.c_minus,
                "coupling": [list(r) for r in self.coupling],
                "sigma_scale": self.sigma_scale, "sigma_rate": self.sigma_rate}


@dataclass(frozen=True)
class MzTrajectory:
    s: np.ndarray
    U: np.ndarray  # shape (n, 3)
    c0: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        U = np.asarray(self.U, dtype=float)
        if U.shape != (len(s), 3):
            raise ValueError("U must have shape (len(s), 3)")
        if np.any(np.diff(s) <= 0):
            raise ValueError("s must increase")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "U", U)

    @property
    def U_plus(self):
        return self.U[:, 0]

    @property
    def U_zero(self):
        return self.U[:, 1]

    @property
    def U_minus(self):
        return self.U[:, 2]

    def to_csv(self) -> str:
        lines = ["s,U_plus,U_zero,U_minus"]
        lines += ["%.17g,%.17g,%.17g,%.17g" % (a, *row) for a, row in zip(self.s, self.U)]
        return "\n".join(lines) + "\n"


def integrate_comparison_system(rhs: Callable, init, horizon: float, *, s_end: float = 0.0,
                                n_samples: int = 301, rtol: float = 1e-10,
                                atol: float = 1e-40, blowup: float = 1e12) -> MzTrajectory:
    """Integrate forward from ``s_end - horizon`` to ``s_end``.

    Components that reach zero are held at zero by restarting the
    integration with the clipped state.
    """
    U0 = np.asarray(init, dtype=float)
    if U0.shape != (3,) or np.any(U0 < 0) or not np.any(U0 > 0):
        raise ValueError("initial energies must be nonnegative and not all zero")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    s0 = s_end - horizon
    grid = np.linspace(s0, s_end, n_samples)
    pinned = U0 == 0

    def projected(s, U):
        d = np.asarray(rhs(s, U), dtype=float)
        return np.where(pinned & (d < 0), 0.0, d)

    def make_events():
        evs = []
        for i in range(3):
            def hit(s, U, i=i):
                return U[i] if not pinned[i] else 1.0
            hit.terminal = True
            hit.direction = -1
            evs.append(hit)

        def big(s, U):
            return blowup - np.max(np.abs(U))
        big.terminal = True
        evs.append(big)
        return evs

    out = np.empty((n_samples, 3))
    filled = 0
    s_cur, U_cur = s0, U0.copy()
    out[0] = U0
    filled = 1
    restarts = 0
    while filled < n_samples:
        t_eval = grid[filled:]
        sol = solve_ivp(projected, (s_cur, s_end), U_cur, method="DOP853", t_eval=t_eval,
                        rtol=rtol, atol=atol, events=make_events())
        if sol.status < 0:
            raise StiffnessExceeded(sol.message)
        ys = np.asarray(sol.y, dtype=float).reshape(3, -1)
        k = ys.shape[1]
        out[filled:filled + k] = np.maximum(ys.T, 0.0)
        filled += k
        if sol.status == 1:
            if sol.t_events[3].size:
                raise BlowupDetected(f"energies exceeded {blowup:g} near s = {sol.t_events[3][0]:.3f}")
            for i in range(3):
                if sol.t_events[i].size:
                    s_cur = float(sol.t_events[i][0])
                    U_cur = np.maximum(sol.y_events[i][0], 0.0)
                    U_cur[i] = 0.0
                    pinned[i] = True
            restarts += 1
            if restarts > 50:
                raise StiffnessExceeded("too many restarts at the boundary")
            continue
        break
    return MzTrajectory(grid, out, meta={"restarts": restarts})


def random_compliant_system(seed: int, horizon: float = 30.0, *, burn_in: float = 5.0):
    """Seeded linear system and initial data satisfying the hypotheses.

    Returns ``(rhs, init, expected, start_horizon)`` where the integration is
    meant to start at ``-(horizon + burn_in)``.  Couplings are bounded by
    one half so all three inequalities hold with a margin for ``c0 = 1/2``.
    """
    rng = np.random.default_rng(seed)
    c_plus = float(rng.uniform(0.5, 1.0))
    c_minus = float(rng.uniform(0.5, 1.0))
    K = rng.uniform(-0.5, 0.5, size=(3, 3))
    # sign conventions that keep the orthant invariant and the bounds valid
    K[0, 1:] = -np.abs(K[0, 1:])
    K[0, 0] = abs(K[0, 0])
    K[2, :2] = np.abs(K[2, :2])
    K[2, 2] = -abs(K[2, 2])
    K[1] = np.abs(K[1]) * rng.choice([-1.0, 1.0])
    rate = float(rng.uniform(0.5, 1.0))
    scale = float(rng.uniform(0.02, 0.1))
    system = LinearComparisonSystem(c_plus, c_minus, tuple(map(tuple, K)), scale, rate)
    branch = Dominance.NEUTRAL if rng.random() < 0.5 else Dominance.UNSTABLE
    s_start = -(horizon + burn_in)
    amp = float(rng.uniform(0.1, 10.0))
    if branch is Dominance.NEUTRAL:
        init = np.array([amp * math.exp(c_plus * s_start), 1.0, 0.0])
    else:
        init = np.array([amp * math.exp(c_plus * s_start), 0.0, 0.0])
    return system, init, branch, horizon + burn_in


@dataclass(frozen=True)
class HypothesisReport:
    passed: bool
    worst: dict  # inequality -> (violation, s)
    c0: float

    def to_json(self) -> str:
        return json.dumps({"passed": self.passed, "c0": self.c0,
                           "worst": {k: list(v) for k, v in self.worst.items()}}, sort_keys=True)


def _derivative(traj: MzTrajectory) -> np.ndarray:
    ds = np.diff(traj.s)
    if len(traj.s) < 5:
        raise TooFewSamples("need at least 5 samples")
    if np.max(np.abs(ds - ds[0])) > 1e-9 * max(1.0, abs(ds[0])):
        return np.gradient(traj.U, traj.s, axis=0)
    return savgol_filter(traj.U, 5, 2, deriv=1, delta=float(ds[0]), axis=0, mode="interp")


def verify_mz_hypotheses(traj: MzTrajectory, c0: float, sigma: Callable, *, tol: float = 1e-3) -> HypothesisReport:
    """Check the three differential inequalities at every sample.

    Violations are measured relative to the local size
    ``|U'| + (c0 + sigma) * sum(U)`` and must stay below ``tol``.
    """
    if not c0 > 0:
        raise ValueError("c0 must be positive")
    s = traj.s
    U = traj.U
    dU = _derivative(traj)
    sig = np.broadcast_to(np.asarray(sigma(s), dtype=float), s.shape)
    total = U.sum(axis=1)
    scale = np.abs(dU).sum(axis=1) + (c0 + sig) * total + 1e-300
    checks = {
        "unstable": (c0 * U[:, 0] - sig * (U[:, 1] + U[:, 2])) - dU[:, 0],
        "neutral": np.abs(dU[:, 1]) - sig * total,
        "stable": dU[:, 2] - (-c0 * U[:, 2] + sig * (U[:, 0] + U[:, 1])),
    }
    worst = {}
    ok = True
    for name, v in checks.items():
        rel = v / scale
        i = int(np.argmax(rel))
        worst[name] = (float(rel[i]), float(s[i]))
        ok &= bool(rel[i] <= tol)
    return HypothesisReport(ok, worst, c0)


@dataclass(frozen=True)
class DominanceResult:
    label: Dominance
    ratio: float
    monotone: bool
    window: tuple

    def to_dict(self) -> dict:
        return {"label": self.label.value, "ratio": self.ratio, "monotone": self.monotone,
                "window": list(self.window)}


def classify_dominance(traj: MzTrajectory, *, early_fraction: float = 0.2,
                       threshold: float = 0.1, min_samples: int = 20,
                       min_span: float = 5.0) -> DominanceResult:
    """Decide which energy dominates as ``s -> -inf``.

    Only the earliest ``early_fraction`` of the time span is used.  A
    branch wins when its competitor ratio stays below ``threshold`` there
    and its supremum over the earlier half of the window does not exceed
    the supremum over the later half.
    """
    s, U = traj.s, traj.U
    if len(s) < min_samples:
        raise TooFewSamples(f"need at least {min_samples} samples")
    if s[-1] - s[0] < min_span:
        raise TooFewSamples(f"time span below {min_span}")
    cut = s[0] + early_fraction * (s[-1] - s[0])
    idx = s <= cut
    if idx.sum() < 3:
        idx[:3] = True
    Up, U0, Um = U[idx, 0], U[idx, 1], U[idx, 2]
    tiny = 1e-300
    ratios = {
        Dominance.NEUTRAL: (Up + Um) / np.maximum(U0, tiny),
        Dominance.UNSTABLE: (U0 + Um) / np.maximum(Up, tiny),
    }
    best = None
    for label, r in ratios.items():
        if not np.all(np.isfinite(r)) or np.any(r >= threshold):
            continue
        # the ratio may not grow toward -inf: compare sup envelopes of the
        # earlier and later halves of the window
        half = len(r) // 2
        mono = bool(np.max(r[:half]) <= (1 + 1e-6) * np.max(r[half:]) + 1e-300)
        cand = DominanceResult(label, float(np.max(r)) + 0.0, mono, (float(s[0]), float(cut)))
        if mono and (best is None or cand.ratio < best.ratio):
            best = cand
    if best is not None:
        return best
    r_all = min(float(np.max(r)) if np.all(np.isfinite(r)) else math.inf for r in ratios.values())
    return DominanceResult(Dominance.INCONCLUSIVE, r_all, False, (float(s[0]), float(cut)))
