"""Command line scenario runner.

Every verb runs one scenario kind, writes its artifacts under ``--out`` and
finishes with ``manifest.json`` listing each file with its sha256.  Exit
codes: 0 when every check passes, 2 when a check fails, 3 for bad
configuration.
"""
from __future__ import annotations

import copy
import hashlib
import io
import json
import math
import os
import shutil
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from .errors import BubbleSheetError, ConfigError, InvariantFailed

SCHEMA = "bubblesheet.config/1"

TOLERANCES = {
    "profile_residual": 1e-6,
    "calibration": 1e-6,
    "barrier": 1e-8,
    "eigen": 1e-6,
    "norm": 1e-8,
    "fixed_point": 1e-12,
    "brunn": 1e-8,
    "halfplane_angle": 1e-2,
    "wedge_angle": 1e-3,
    "mz_ratio": 0.1,
    "alignment_deg": 3.0,
    "ci_factor": 10.0,
}

KINDS = {
    "profile": "ProfileSuite",
    "foliation": "FoliationVerify",
    "spectral": "SpectralSuite",
    "flow": "FlowRun",
    "mz": "MzSuite",
    "blowdown": "BlowdownSuite",
    "pipeline": "FullPipeline",
}

DEFAULTS = {
    "ProfileSuite": {"ads": [8.0, 10.0, 12.0], "km": [], "bowl": [], "tol": 1e-8},
    "FoliationVerify": {"ads": [8.0, 12.0, 16.0], "km": [0.05], "n_radial": 64, "n_angular": 32,
                        "delta": 0.1, "L1": 5.0},
    "SpectralSuite": {"order": 24, "n_theta": 32},
    "FlowRun": {"reference": "bowl-times-R", "speed": 1.0, "direction": [0.0, 1.0], "K": 0.0,
                "center": [0.0, 0.0, 0.0, 0.0, 0.0], "tau_start": -30.0, "samples": 9,
                "order": 24, "n_theta": 32},
    "MzSuite": {"systems": 100, "horizon": 30.0},
    "BlowdownSuite": {"models": ["compact", "bowl3", "line", "bowl2xR", "plane"],
                      "wedge_angle": math.pi / 3, "brunn_bodies": 200},
    "FullPipeline": {"speed": 1.0, "tau_start": -30.0, "samples": 9, "mz_systems": 10,
                     "brunn_bodies": 20, "order": 24, "n_theta": 32},
}


# ------------------------------------------------------------- config

def _check_keys(given: dict, allowed: dict, where: str):
    if not isinstance(given, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {', '.join(unknown)}")


def _coerce(value, default, where):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean")
        return value
    if isinstance(default, (int, float)) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return type(default)(value) if isinstance(default, int) and float(value).is_integer() else float(value)
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list")
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    return value


def load_config(text: str | None, kind: str) -> list:
    """Parse one config document into a list of scenario dicts."""
    if text is None:
        doc = {"schema": SCHEMA}
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
    top_keys = {"schema": 1, "name": 1, "parameters": 1, "tolerances": 1, "scenarios": 1}
    _check_keys(doc, top_keys, "config")
    if doc.get("schema") != SCHEMA:
        raise ConfigError(f"schema must be {SCHEMA!r}")
    tol = dict(TOLERANCES)
    given_tol = doc.get("tolerances", {})
    _check_keys(given_tol, TOLERANCES, "tolerances")
    for k, v in given_tol.items():
        tol[k] = float(_coerce(v, TOLERANCES[k], f"tolerances.{k}"))
    entries = doc.get("scenarios")
    if entries is None:
        entries = [{k: doc[k] for k in ("name", "parameters") if k in doc}]
    elif not isinstance(entries, list) or not entries:
        raise ConfigError("scenarios must be a nonempty list")
    out = []
    names = set()
    for i, entry in enumerate(entries):
        _check_keys(entry, {"name": 1, "parameters": 1}, f"scenarios[{i}]")
        params = copy.deepcopy(DEFAULTS[kind])
        given = entry.get("parameters", {})
        _check_keys(given, params, f"scenarios[{i}].parameters")
        for k, v in given.items():
            params[k] = _coerce(v, DEFAULTS[kind][k], f"parameters.{k}")
        name = entry.get("name", kind if len(entries) == 1 else f"{kind}-{i}")
        if not isinstance(name, str) or not name or "/" in name:
            raise ConfigError("scenario names must be nonempty strings without '/'")
        if name in names:
            raise ConfigError(f"duplicate scenario name {name!r}")
        names.add(name)
        out.append({"name": name, "kind": kind, "parameters": params, "tolerances": tol})
    return out


# ---------------------------------------------------------- artifacts

def _json_default(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(type(o).__name__)


def _clean(o):
    """Replace non-finite floats so the JSON stays standard."""
    if isinstance(o, float) or isinstance(o, np.floating):
        o = float(o)
        if math.isnan(o):
            return "nan"
        if math.isinf(o):
            return "inf" if o > 0 else "-inf"
        return o
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, default=_json_default) + "\n"


class Artifacts:
    def __init__(self, root: Path):
        self.root = root
        self.files = []

    def write(self, rel: str, text: str):
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        self.files.append(rel)

    def write_bytes(self, rel: str, data: bytes):
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        self.files.append(rel)

    def manifest(self) -> dict:
        entries = []
        for rel in sorted(set(self.files)):
            digest = hashlib.sha256((self.root / rel).read_bytes()).hexdigest()
            entries.append({"path": rel, "sha256": digest})
        return {"files": entries}


class Checks:
    def __init__(self):
        self.items = []

    def add(self, pointer: str, passed: bool, value=None, tol=None, **extra):
        self.items.append({"pointer": pointer, "passed": bool(passed), "value": value, "tol": tol, **extra})

    @property
    def failed(self):
        return [c for c in self.items if not c["passed"]]


# ------------------------------------------------------------ scenarios

def _profile_suite(p, tol, seed, art: Artifacts, checks: Checks, series: dict):
    from . import profiles as pr

    for a in p["ads"]:
        prof = pr.solve_ads_profile(float(a), p["tol"])
        art.write(f"profiles/ads_{a:g}.csv", pr.profile_to_csv(prof))
        res = pr.ode_residual(prof)
        cal = pr.calibration_residual(prof)
        x, u = prof.nodes, prof.values
        mask = (x >= 2) & (x <= a)
        lower = np.all(u[mask] >= SQRT2_ * (1 - x[mask] ** 2 / a ** 2) - 1e-12)
        checks.add(f"/profiles/ads/{a:g}/residual", res <= tol["profile_residual"], res, tol["profile_residual"])
        checks.add(f"/profiles/ads/{a:g}/calibration", cal <= tol["calibration"], cal, tol["calibration"])
        checks.add(f"/profiles/ads/{a:g}/lower_bound", bool(lower))
    for b in p["km"]:
        prof = pr.solve_km_profile(float(b), x_max=max(50.0, 20.0 / float(b)), tol=p["tol"])
        art.write(f"profiles/km_{b:g}.csv", pr.profile_to_csv(prof))
        res = pr.ode_residual(prof)
        checks.add(f"/profiles/km/{b:g}/residual", res <= tol["profile_residual"], res, tol["profile_residual"])
    for v in p["bowl"]:
        prof = pr.solve_bowl_profile(float(v))
        art.write(f"profiles/bowl_{v:g}.csv", pr.profile_to_csv(prof))
        res = pr.ode_residual(prof)
        checks.add(f"/profiles/bowl/{v:g}/residual", res <= tol["profile_residual"], res, tol["profile_residual"])


SQRT2_ = math.sqrt(2.0)


def _foliation_verify(p, tol, seed, art, checks, series):
    from . import foliation as fo
    from . import profiles as pr

    reports = {"signs": [], "order": None}
    leaves = []
    for a in p["ads"]:
        leaf = fo.lift_leaf(pr.solve_ads_profile(float(a)), L1=p["L1"], delta=p["delta"])
        leaves.append(leaf)
        rep = fo.barrier_sign_check(leaf, tol=tol["barrier"], n_radial=p["n_radial"], n_angular=p["n_angular"])
        reports["signs"].append(rep.to_dict())
        checks.add(f"/foliation/Gamma_a/{a:g}", rep.passed, rep.worst, tol["barrier"])
    for b in p["km"]:
        leaf = fo.lift_leaf(pr.solve_km_profile(float(b), x_max=max(50.0, 20.0 / float(b))),
                            L1=p["L1"], delta=p["delta"])
        rep = fo.barrier_sign_check(leaf, tol=tol["barrier"], n_radial=p["n_radial"], n_angular=p["n_angular"])
        reports["signs"].append(rep.to_dict())
        checks.add(f"/foliation/GammaTilde_b/{b:g}", rep.passed, rep.worst, tol["barrier"])
    if len(leaves) >= 2:
        order = fo.verify_foliation_order(leaves)
        reports["order"] = json.loads(order.to_json())
        checks.add("/foliation/order", order.ordered)
    art.write("foliation/report.json", dumps(reports))


def _spectral_suite(p, tol, seed, art, checks, series):
    from . import spectral as sp

    grid = sp.SpectralGrid(int(p["order"]), int(p["n_theta"]))
    rows = []
    for group in ("unstable", "neutral"):
        for name, func, lam in sp.EIGENFUNCTIONS[group]:
            f = sp.graph_from(grid, func)
            r = sp.apply_linearized_operator(f).values - lam * f.values
            rel = sp.gaussian_norm(r, grid) / sp.gaussian_norm(f)
            rows.append({"name": name, "eigenvalue": lam, "relative_residual": rel})
            checks.add(f"/spectral/eigen/{name}", rel <= tol["eigen"], rel, tol["eigen"])
    for name, func, lam in sp.STABLE_WITNESSES:
        f = sp.graph_from(grid, func)
        rayleigh = sp.gaussian_inner_product(sp.apply_linearized_operator(f), f) / sp.gaussian_norm(f) ** 2
        rows.append({"name": name, "eigenvalue": lam, "rayleigh": rayleigh})
        checks.add(f"/spectral/stable/{name}", rayleigh <= -0.5 + tol["eigen"], rayleigh, -0.5)
    one = sp.graph_from(grid, lambda a, b, t: np.ones_like(a))
    quad = sp.gaussian_inner_product(one, one)
    closed = math.sqrt(2 * math.pi / math.e)
    q2 = sp.gaussian_norm(sp.graph_from(grid, lambda a, b, t: b * b - 2))
    closed2 = 2 * math.sqrt(2) * (2 * math.pi / math.e) ** 0.25
    checks.add("/spectral/norm/one", abs(quad - closed) <= tol["norm"], quad - closed, tol["norm"])
    checks.add("/spectral/norm/x2sq", abs(q2 - closed2) <= tol["norm"], q2 - closed2, tol["norm"])
    art.write("spectral/eigen.json", dumps({"rows": rows, "norm_one": quad, "norm_x2sq": q2}))


def _reference_run(p, tol, art, checks, series, prefix="flow"):
    from . import flowsim as fl
    from . import merle_zaag as mz
    from . import spectral as sp

    grid = sp.SpectralGrid(int(p["order"]), int(p["n_theta"]))
    taus = np.linspace(p["tau_start"], p["tau_start"] + 2 * math.log(10.0), int(p["samples"]))
    ref = p.get("reference", "bowl-times-R")
    params = {"speed": p.get("speed", 1.0), "direction": tuple(p.get("direction", (0.0, 1.0))),
              "K": p.get("K", 0.0)}
    center = tuple(p.get("center", (0.0,) * 5))
    traj = fl.reference_trajectory(ref, params, taus, grid, center=center)
    art.write(f"{prefix}/mode_energies.csv", fl.mode_energy_csv(traj))
    decs = traj.decompositions()
    energies = np.array([d.energies for d in decs])
    series["energies"] = {"tau": traj.taus.tolist(), "U": energies.tolist()}
    out = {"reference": ref, "params": params, "center": list(center)}
    if ref == "bowl-times-R":
        est = fl.extract_expansion_coefficients(traj)
        out["expansion"] = est.to_dict()
        hist = np.array(est.history)
        series["convergence"] = {"tau": hist[:, 0].tolist(), "a": hist[:, 2:].tolist()}
        a1, a2 = est.abar[0], est.abar[1]
        d = np.asarray(params["direction"], dtype=float)
        d /= np.linalg.norm(d)
        perp = abs(a1 * d[1] - a2 * d[0])
        along = abs(a1 * d[0] + a2 * d[1])
        angle = math.degrees(math.atan2(perp, along))
        checks.add(f"/{prefix}/expansion/alignment_deg", angle <= tol["alignment_deg"], angle, tol["alignment_deg"])
        ci = est.confidence[0] + est.confidence[1]
        checks.add(f"/{prefix}/expansion/nonvanishing", abs(a1) + abs(a2) > tol["ci_factor"] * ci,
                   abs(a1) + abs(a2), tol["ci_factor"] * ci)
    traj_s = traj.taus - traj.taus[-1]
    if len(traj_s) >= 20:
        dom = mz.classify_dominance(mz.MzTrajectory(traj_s, energies), threshold=tol["mz_ratio"])
        out["dominance"] = dom.to_dict()
    art.write(f"{prefix}/expansion.json", dumps(out))
    return traj, out


def _flow_run(p, tol, seed, art, checks, series):
    _reference_run(p, tol, art, checks, series)


def _mz_suite(p, tol, seed, art, checks, series, prefix="mz"):
    from . import merle_zaag as mz

    lines = ["seed,expected,label,ratio,hypotheses"]
    counts = {}
    for i in range(int(p["systems"] if "systems" in p else p["mz_systems"])):
        s = seed + i
        system, init, expected, span = mz.random_compliant_system(s, p.get("horizon", 30.0))
        traj = mz.integrate_comparison_system(system, init, span)
        label = mz.classify_dominance(traj, threshold=tol["mz_ratio"])
        hyp = mz.verify_mz_hypotheses(traj, 0.5, system.sigma)
        counts[label.label.value] = counts.get(label.label.value, 0) + 1
        lines.append(f"{s},{expected.value},{label.label.value},{label.ratio:.17g},{hyp.passed}")
        checks.add(f"/{prefix}/system/{s}", label.label is not mz.Dominance.INCONCLUSIVE and hyp.passed,
                   label.label.value)
    art.write(f"{prefix}/classification.csv", "\n".join(lines) + "\n")
    art.write(f"{prefix}/summary.json", dumps({"counts": counts}))


def _brunn_bodies(n, seed, tol, checks, prefix):
    from . import convexgeom as cg

    rows = []
    for i in range(int(n)):
        s = seed + i
        body = cg.random_convex_body(s)
        rng = np.random.default_rng(10_000 + s)
        seg = (body.interior_point(rng)[:2], body.interior_point(rng)[:2])
        rep = cg.brunn_concavity_check(body, seg, tol=tol["brunn"])
        rows.append({"seed": s, **rep.to_dict()})
        checks.add(f"/{prefix}/brunn/{s}", rep.passed, rep.worst_second_difference, tol["brunn"],
                   witness=list(rep.witness))
    return rows


def _blowdown_suite(p, tol, seed, art, checks, series, prefix="blowdown"):
    from . import convexgeom as cg

    results = {}
    for name in p["models"]:
        if name not in cg.MODEL_TABLE:
            raise ConfigError(f"unknown model body {name!r}")
        cone = cg.recession_cone(cg.model_body(name, speed=p.get("speed", 1.0)))
        cls = cg.classify_blowdown(cone, angle_tol=tol["halfplane_angle"])
        results[name] = json.loads(cls.to_json())
        checks.add(f"/{prefix}/model/{name}", cls.tag is cg.MODEL_TABLE[name], cls.tag.value,
                   cg.MODEL_TABLE[name].value)
    if "wedge_angle" in p:
        wa = float(p["wedge_angle"])
        cls = cg.classify_blowdown(cg.recession_cone(cg.wedge_body(wa)), angle_tol=tol["halfplane_angle"])
        results["wedge"] = json.loads(cls.to_json())
        err = abs(cls.wedge_angle - wa) if cls.wedge_angle is not None else math.inf
        checks.add(f"/{prefix}/wedge", cls.tag is cg.BlowdownTag.WEDGE and err <= tol["wedge_angle"], err,
                   tol["wedge_angle"])
    art.write(f"{prefix}/blowdown.json", dumps(results))
    rows = _brunn_bodies(p["brunn_bodies"], seed, tol, checks, prefix)
    art.write(f"{prefix}/brunn.json", dumps(rows))
    series["brunn_witnesses"] = [r for r in rows if not r["passed"]]


def _full_pipeline(p, tol, seed, art, checks, series):
    from . import convexgeom as cg

    ref = dict(p, reference="bowl-times-R", direction=[0.0, 1.0], center=[0.0] * 5)
    traj, _ = _reference_run(ref, tol, art, checks, series, prefix="pipeline")
    last = traj.snapshots[-1]
    # sqrt(area) along a segment of the latest slice
    seg = ((-3.0, -3.0), (3.0, 3.0))
    t = np.linspace(0, 1, 41)
    pts = np.array(seg[0]) + t[:, None] * (np.array(seg[1]) - np.array(seg[0]))
    area = cg.cross_section_area(last, pts[:, 0], pts[:, 1])
    series["sqrt_area"] = {"s": t.tolist(), "value": np.sqrt(area).tolist()}
    rep = cg.brunn_concavity_check(last, seg, tol=tol["brunn"])
    checks.add("/pipeline/brunn/flow_slice", rep.passed, rep.worst_second_difference, tol["brunn"],
               witness=list(rep.witness))
    _blowdown_suite({"models": ["bowl2xR"], "brunn_bodies": p["brunn_bodies"], "speed": p["speed"]},
                    tol, seed, art, checks, series, prefix="pipeline")
    _mz_suite({"mz_systems": p["mz_systems"]}, tol, seed, art, checks, series, prefix="pipeline/mz")


RUNNERS = {
    "ProfileSuite": _profile_suite,
    "FoliationVerify": _foliation_verify,
    "SpectralSuite": _spectral_suite,
    "FlowRun": _flow_run,
    "MzSuite": _mz_suite,
    "BlowdownSuite": _blowdown_suite,
    "FullPipeline": _full_pipeline,
}


# -------------------------------------------------------------- reports

def _svg(fig) -> bytes:
    import matplotlib

    buf = io.BytesIO()
    with matplotlib.rc_context({"svg.hashsalt": "bubblesheet", "svg.fonttype": "none"}):
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    return buf.getvalue()


def emit_report(results: dict, art: Artifacts) -> str:
    """Write ``summary.txt`` and SVG charts for the series found in ``results``."""
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    checks = results.get("checks", [])
    lines = [f"scenario: {results.get('name', '?')} ({results.get('kind', '?')})"]
    if not checks:
        lines.append("no checks executed")
    else:
        failed = [c for c in checks if not c["passed"]]
        lines.append(f"checks: {len(checks)} run, {len(failed)} failed")
        for c in failed:
            w = f" witness={c['witness']}" if "witness" in c else ""
            lines.append(f"FAILED {c['pointer']} value={c['value']} tol={c['tol']}{w}")
    series = results.get("series", {})
    if "energies" in series:
        tau = np.array(series["energies"]["tau"])
        U = np.array(series["energies"]["U"])
        fig, ax = plt.subplots(figsize=(6, 4))
        for k, label in enumerate(("U_plus", "U_zero", "U_minus")):
            ax.semilogy(tau, np.maximum(np.abs(U[:, k]), 1e-300), label=label)
        ax.set_xlabel("tau")
        ax.set_ylabel("energy")
        ax.legend()
        art.write_bytes("plots/mode_energies.svg", _svg(fig))
        plt.close(fig)
    if "convergence" in series:
        tau = np.array(series["convergence"]["tau"])
        a = np.array(series["convergence"]["a"])
        fig, ax = plt.subplots(figsize=(6, 4))
        for k in range(a.shape[1]):
            ax.plot(tau, a[:, k], marker="o", label=f"a_{k + 1}")
        ax.set_xlabel("tau")
        ax.set_ylabel("exp(-tau/2) a_i")
        ax.legend()
        art.write_bytes("plots/expansion_convergence.svg", _svg(fig))
        plt.close(fig)
    if "sqrt_area" in series:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(series["sqrt_area"]["s"], series["sqrt_area"]["value"], label="sqrt(area)")
        ax.set_xlabel("segment parameter")
        ax.legend()
        art.write_bytes("plots/sqrt_area.svg", _svg(fig))
        plt.close(fig)
    text = "\n".join(lines) + "\n"
    art.write("summary.txt", text)
    return text


def run_scenario(scenario: dict, out_dir: Path, seed: int, *, report: bool = True) -> dict:
    """Run one scenario into ``out_dir/<name>`` and return its results."""
    root = Path(out_dir) / scenario["name"]
    tmp = Path(tempfile.mkdtemp(prefix=".partial-", dir=str(Path(out_dir))))
    art = Artifacts(tmp)
    checks = Checks()
    series = {}
    try:
        RUNNERS[scenario["kind"]](scenario["parameters"], scenario["tolerances"], seed, art, checks, series)
        results = {"name": scenario["name"], "kind": scenario["kind"], "seed": seed,
                   "parameters": scenario["parameters"], "tolerances": scenario["tolerances"],
                   "checks": checks.items, "series": series}
        art.write("results.json", dumps(results))
        if report:
            emit_report(results, art)
        art.write("manifest.json", dumps(art.manifest()))
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if root.exists():
        shutil.rmtree(root)
    os.replace(tmp, root)
    return results


def _run_one(args):
    scenario, out, seed = args
    return run_scenario(scenario, Path(out), seed)


def execute(kind_verb: str, config_text: str | None, out: Path, seed: int, jobs: int = 1) -> int:
    kind = KINDS[kind_verb]
    scenarios = load_config(config_text, kind)
    out.mkdir(parents=True, exist_ok=True)
    if jobs > 1 and len(scenarios) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, [(s, str(out), seed) for s in scenarios]))
    else:
        results = [run_scenario(s, out, seed) for s in scenarios]
    failed = [(r["name"], c) for r in results for c in r["checks"] if not c["passed"]]
    for name, c in failed:
        click.echo(f"FAILED {name}{c['pointer']}", err=True)
    if failed:
        raise InvariantFailed(f"{len(failed)} checks failed", failed[0][0] + failed[0][1]["pointer"])
    return 0


# ------------------------------------------------------------------ click

def _common(f):
    f = click.option("--jobs", type=int, default=1, show_default=True, help="parallel scenarios")(f)
    f = click.option("--seed", type=int, default=0, show_default=True)(f)
    f = click.option("--out", "out", type=click.Path(file_okay=False), default="bubblesheet-out",
                     show_default=True)(f)
    f = click.option("--config", "config", type=click.Path(exists=True, dir_okay=False), default=None)(f)
    return f


@click.group()
def main():
    """Numerical checks for bubble-sheet ancient flows."""


def _make_verb(verb: str):
    @main.command(name=verb, help=f"Run a {KINDS[verb]} scenario.")
    @_common
    def cmd(config, out, seed, jobs):
        text = Path(config).read_text() if config else None
        try:
            code = execute(verb, text, Path(out), seed, jobs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(3)
        except InvariantFailed as exc:
            click.echo(f"invariant failed at {exc.pointer}: {exc}", err=True)
            sys.exit(2)
        except BubbleSheetError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        sys.exit(code)

    return cmd


for _verb in KINDS:
    _make_verb(_verb)


@main.command(name="report")
@click.argument("result_dir", type=click.Path(exists=True, file_okay=False))
def report_cmd(result_dir):
    """Write summary.txt and SVG plots for a finished scenario directory."""
    root = Path(result_dir)
    path = root / "results.json"
    results = json.loads(path.read_text()) if path.exists() else {}
    art = Artifacts(root)
    prior = root / "manifest.json"
    if prior.exists():
        art.files = [e["path"] for e in json.loads(prior.read_text())["files"]]
    text = emit_report(results, art)
    art.write("manifest.json", dumps(art.manifest()))
    click.echo(text, nl=False)
    sys.exit(0)


if __name__ == "__main__":
    main()
