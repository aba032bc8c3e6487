"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are printed in
the terminal summary) or directly with ``python3 tests/test_acceptance.py``.
"""
import filecmp
import math
import os
import sys

import numpy as np
import pytest

from bubblesheet import cli
from bubblesheet import convexgeom as cg
from bubblesheet import flowsim as fl
from bubblesheet import foliation as fo
from bubblesheet import merle_zaag as mz
from bubblesheet import profiles as pr
from bubblesheet import spectral as sp

RESULTS = {}
LOG10 = math.log(10.0)
Z = math.sqrt(2 * math.pi / math.e)


def record(number, title, ok, detail=""):
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}"
    if detail:
        line += f"  [{detail}]"
    RESULTS[number] = line
    print(line)
    assert ok, line


def test_01_eigenfunction_suite():
    g = sp.SpectralGrid()
    worst = 0.0
    for name, func, lam in sp.EIGENFUNCTIONS["unstable"] + sp.EIGENFUNCTIONS["neutral"]:
        f = sp.graph_from(g, func)
        r = sp.apply_linearized_operator(f).values - lam * f.values
        worst = max(worst, sp.gaussian_norm(r, g) / sp.gaussian_norm(f))
    count = len(sp.EIGENFUNCTIONS["unstable"]) + len(sp.EIGENFUNCTIONS["neutral"])
    stable = []
    for name, func, lam in sp.STABLE_WITNESSES:
        f = sp.graph_from(g, func)
        stable.append(sp.gaussian_inner_product(sp.apply_linearized_operator(f), f) / sp.gaussian_norm(f) ** 2)
    ok = count == 12 and worst <= 1e-6 and len(stable) == 3 and max(stable) <= -0.5 + 1e-6
    record(1, "eigenfunction suite", ok, f"worst rel residual {worst:.1e}, stable max {max(stable):.6f}")


def test_02_norm_oracle():
    g = sp.SpectralGrid()
    one = sp.graph_from(g, lambda a, b, t: np.ones_like(a))
    e1 = abs(sp.gaussian_inner_product(one, one) - Z)
    q = sp.graph_from(g, lambda a, b, t: b * b - 2)
    e2 = abs(sp.gaussian_norm(q) - 2 * math.sqrt(2) * Z ** 0.5)
    record(2, "norm oracle", e1 <= 1e-8 and e2 <= 1e-8, f"errors {e1:.1e}, {e2:.1e}")


def test_03_profile_certification():
    worst_res = worst_cal = 0.0
    bounds = True
    for a in (8.0, 10.0, 20.0):
        p = pr.solve_ads_profile(a)
        worst_res = max(worst_res, pr.ode_residual(p))
        worst_cal = max(worst_cal, pr.calibration_residual(p))
        x, u = p.nodes, p.values
        m = (x >= 2) & (x <= a)
        bounds &= bool(np.all(u[m] >= math.sqrt(2) * (1 - x[m] ** 2 / a ** 2)))
    ok = worst_res <= 1e-6 and worst_cal <= 1e-6 and bounds
    record(3, "profile certification", ok, f"residual {worst_res:.1e}, calibration {worst_cal:.1e}")


def test_04_barrier_signs():
    inner = [fo.barrier_sign_check(fo.lift_leaf(pr.solve_ads_profile(a)), tol=1e-8) for a in (8.0, 10.0, 20.0)]
    outer = [fo.barrier_sign_check(fo.lift_leaf(pr.solve_km_profile(b, x_max=20.0 / b)), tol=1e-8)
             for b in (0.05, 0.02)]
    ok = all(r.passed and r.worst <= 1e-8 and r.n_probes == 2048 for r in inner)
    ok &= all(r.passed and r.worst >= -1e-8 and r.n_probes == 2048 for r in outer)
    record(4, "barrier signs", ok,
           f"inner max {max(r.worst for r in inner):.2e}, outer min {min(r.worst for r in outer):.2e}")


def test_05_merle_zaag_dichotomy():
    labels = []
    for seed in range(100):
        system, init, branch, span = mz.random_compliant_system(seed, 30.0)
        assert span >= 30
        tr = mz.integrate_comparison_system(system, init, span)
        assert mz.verify_mz_hypotheses(tr, 0.5, system.sigma).passed
        labels.append(mz.classify_dominance(tr).label)
    bad = sum(lab is mz.Dominance.INCONCLUSIVE for lab in labels)
    n_u = sum(lab is mz.Dominance.UNSTABLE for lab in labels)
    record(5, "Merle-Zaag dichotomy", bad == 0, f"{n_u} unstable, {100 - n_u - bad} neutral, {bad} inconclusive")


def test_06_fixed_point_and_linear_rates():
    g = sp.SpectralGrid()
    zero = sp.graph_from(g, lambda a, b, t: 0 * a, rho=40)
    drift = max(fl.check_fixed_point(zero, steps=100, scheme=s) for s in fl.Scheme)
    eps = 1e-6
    g0 = sp.graph_from(g, lambda a, b, t: eps + 0 * a, rho=40)
    tr = fl.evolve(g0, 1.0, scheme="FullGraph")
    growth, _ = fl.fit_exponent(tr.taus, [sp.spectral_project(s).raw_unstable[0] for s in tr.snapshots])
    g1 = sp.graph_from(g, lambda a, b, t: eps * (b ** 2 - 2), rho=40)
    tr = fl.evolve(g1, 1.0, scheme="FullGraph")
    neutral = abs(sp.spectral_project(tr.snapshots[-1]).raw_neutral[5] - eps) / eps
    h0 = fl.synthesize_reference_flow("cylinder-timeshift", {"K": 1e-3}, -3.0, g, rho=40)
    tr = fl.evolve(h0, 0.0, scheme="FullGraph", record_every=0.25)
    shift, _ = fl.fit_exponent(tr.taus, [sp.spectral_project(s).U_plus for s in tr.snapshots])
    ok = drift <= 1e-12 and abs(growth - 1) <= 0.02 and neutral < 1e-4 and abs(shift - 2) <= 0.05
    record(6, "fixed point and linear rates", ok,
           f"drift {drift:.1e}, growth {growth:.5f}, neutral {neutral:.1e}/tau, timeshift {shift:.5f}")


_BOWL_RUNS = {}


def _bowl(speed=1.0, direction=(0.0, 1.0), center=fl.ORIGIN):
    key = (speed, tuple(direction), tuple(center))
    if key not in _BOWL_RUNS:
        taus = np.linspace(-30, -30 + 2 * LOG10, 9)
        tr = fl.reference_trajectory("bowl-times-R", {"speed": speed, "direction": direction}, taus,
                                     sp.SpectralGrid(), center=center)
        _BOWL_RUNS[key] = (tr, fl.extract_expansion_coefficients(tr))
    return _BOWL_RUNS[key]


def test_07_fine_expansion():
    _, base = _bowl()
    small = abs(base.abar[0]) <= 0.02 * abs(base.abar[1])
    d = np.array([math.cos(0.7), math.sin(0.7)])
    _, tilted = _bowl(direction=tuple(d))
    angle = math.degrees(math.acos(min(1.0, abs(float(np.dot(tilted.direction, d))))))
    aligned = angle <= 3.0 and float(np.dot(tilted.direction, d)) > 0
    _, fast = _bowl(speed=2.0)
    ratio = fast.abar[1] / base.abar[1]
    x3 = 0.3
    _, moved = _bowl(center=(0.0, 0.0, x3, 0.0, 0.0))
    shift = moved.abar[2] - base.abar[2]
    ok = small and aligned and abs(ratio - 0.5) <= 0.05 and abs(shift + x3) <= 0.05 * x3
    record(7, "fine expansion on bowl x R", ok,
           f"|a1|/|a2| {abs(base.abar[0]) / abs(base.abar[1]):.1e}, angle {angle:.3f} deg, "
           f"ratio {ratio:.4f}, a3 shift {shift:.4f}")


def test_08_nonvanishing_witness():
    for kw in ({}, {"speed": 2.0}, {"direction": (math.cos(0.7), math.sin(0.7))},
               {"center": (0.0, 0.0, 0.3, 0.0, 0.0)}):
        _bowl(**kw)
    worst = math.inf
    count = 0
    for tr, est in _BOWL_RUNS.values():
        dominant = all(d.U_plus > 10 * (d.U_zero + abs(d.U_minus)) for d in tr.decompositions())
        if not dominant:
            continue
        count += 1
        ci = est.confidence[0] + est.confidence[1]
        size = abs(est.abar[0]) + abs(est.abar[1])
        worst = min(worst, size / max(ci, 1e-300))
    record(8, "nonvanishing witness", count > 0 and worst > 10, f"{count} trajectories, min ratio {worst:.1e}")


def test_09_blowdown_taxonomy():
    tags = {name: cg.classify_blowdown(cg.recession_cone(cg.model_body(name))).tag for name in cg.MODEL_TABLE}
    table_ok = all(tags[n] is t for n, t in cg.MODEL_TABLE.items())
    wa = math.pi / 3
    w = cg.classify_blowdown(cg.recession_cone(cg.wedge_body(wa)))
    err = abs(w.wedge_angle - wa) if w.wedge_angle is not None else math.inf
    ok = table_ok and w.tag is cg.BlowdownTag.WEDGE and err <= 1e-3
    record(9, "blowdown taxonomy", ok, ", ".join(f"{n}={t.value}" for n, t in tags.items()) + f", wedge err {err:.1e}")


def test_10_brunn_suite():
    worst = -math.inf
    for seed in range(200):
        body = cg.random_convex_body(seed)
        rng = np.random.default_rng(1000 + seed)
        seg = (body.interior_point(rng)[:2], body.interior_point(rng)[:2])
        worst = max(worst, cg.brunn_concavity_check(body, seg, tol=1e-8).worst_second_difference)
    g = sp.SpectralGrid()
    bad = cg.brunn_concavity_check(sp.graph_from(g, lambda a, b, t: 0.3 * np.cos(5 * a)), ((-3, 0), (3, 0)))
    ok = worst <= 1e-8 and not bad.passed
    record(10, "Brunn suite", ok, f"worst second difference {worst:.1e}, perturbation flagged {not bad.passed}")


def test_11_reproducibility(tmp_path):
    outs = []
    for k in ("first", "second"):
        out = tmp_path / k
        assert cli.execute("pipeline", None, out, seed=5) == 0
        outs.append(out / "FullPipeline")
    cmp = filecmp.dircmp(outs[0], outs[1])

    def same(c):
        _, mismatch, errors = filecmp.cmpfiles(c.left, c.right, c.common_files, shallow=False)
        return not (mismatch or errors or c.left_only or c.right_only) and all(same(s) for s in c.subdirs.values())

    files = sum(len(f) for _, _, f in os.walk(outs[0]))
    record(11, "reproducibility", same(cmp), f"{files} files compared")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
