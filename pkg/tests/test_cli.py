import json
import math

import pytest
from click.testing import CliRunner
from hypothesis import given, settings, strategies as st

from bubblesheet import cli
from bubblesheet.errors import ConfigError


def _write(tmp_path, doc, name="config.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def _run(*args):
    return CliRunner().invoke(cli.main, list(args))


def test_unknown_parameter_key_is_config_error(tmp_path):
    cfg = _write(tmp_path, {"schema": cli.SCHEMA, "parameters": {"bogus": 1}})
    out = tmp_path / "out"
    res = _run("flow", "--config", cfg, "--out", str(out))
    assert res.exit_code == 3
    assert not out.exists()


def test_missing_schema_is_config_error(tmp_path):
    res = _run("spectral", "--config", _write(tmp_path, {"parameters": {}}), "--out", str(tmp_path / "o"))
    assert res.exit_code == 3


def test_malformed_json_is_config_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    res = _run("spectral", "--config", str(p), "--out", str(tmp_path / "o"))
    assert res.exit_code == 3
    assert not (tmp_path / "o").exists()


def test_unknown_tolerance_key_rejected():
    with pytest.raises(ConfigError):
        cli.load_config(json.dumps({"schema": cli.SCHEMA, "tolerances": {"eigen_typo": 1.0}}), "SpectralSuite")


@settings(max_examples=30, deadline=None)
@given(key=st.text(min_size=1, max_size=12).filter(lambda k: k not in cli.DEFAULTS["FlowRun"]))
def test_any_unknown_flow_key_rejected(key):
    doc = {"schema": cli.SCHEMA, "parameters": {key: 1}}
    with pytest.raises(ConfigError):
        cli.load_config(json.dumps(doc), "FlowRun")


def test_wrong_type_rejected():
    doc = {"schema": cli.SCHEMA, "parameters": {"order": "big"}}
    with pytest.raises(ConfigError):
        cli.load_config(json.dumps(doc), "SpectralSuite")


def test_duplicate_names_rejected():
    doc = {"schema": cli.SCHEMA, "scenarios": [{"name": "a"}, {"name": "a"}]}
    with pytest.raises(ConfigError):
        cli.load_config(json.dumps(doc), "SpectralSuite")


def test_tolerance_override_is_applied():
    doc = {"schema": cli.SCHEMA, "tolerances": {"eigen": 1e-3}}
    (sc,) = cli.load_config(json.dumps(doc), "SpectralSuite")
    assert sc["tolerances"]["eigen"] == 1e-3
    assert sc["tolerances"]["brunn"] == cli.TOLERANCES["brunn"]


def test_spectral_verb_writes_manifest(tmp_path):
    res = _run("spectral", "--out", str(tmp_path))
    assert res.exit_code == 0, res.output
    root = tmp_path / "SpectralSuite"
    manifest = json.loads((root / "manifest.json").read_text())
    paths = {e["path"] for e in manifest["files"]}
    assert {"spectral/eigen.json", "results.json", "summary.txt"} <= paths
    import hashlib
    for e in manifest["files"]:
        assert hashlib.sha256((root / e["path"]).read_bytes()).hexdigest() == e["sha256"]


def test_profile_suite_writes_three_csvs(tmp_path):
    res = _run("profile", "--out", str(tmp_path))
    assert res.exit_code == 0, res.output
    csvs = sorted(p.name for p in (tmp_path / "ProfileSuite" / "profiles").glob("*.csv"))
    assert csvs == ["ads_10.csv", "ads_12.csv", "ads_8.csv"]


def test_failed_check_exits_two_with_pointer(tmp_path):
    cfg = _write(tmp_path, {"schema": cli.SCHEMA, "tolerances": {"eigen": 1e-30}})
    res = _run("spectral", "--config", cfg, "--out", str(tmp_path / "o"))
    assert res.exit_code == 2
    assert "/spectral/eigen/" in res.output
    results = json.loads((tmp_path / "o" / "SpectralSuite" / "results.json").read_text())
    assert any(not c["passed"] for c in results["checks"])


def test_failed_brunn_summary_lists_witness(tmp_path):
    art = cli.Artifacts(tmp_path)
    results = {"name": "x", "kind": "BlowdownSuite",
               "checks": [{"pointer": "/brunn/3", "passed": False, "value": 0.05, "tol": 1e-8,
                           "witness": [0.25, -1.5]}]}
    text = cli.emit_report(results, art)
    assert "witness=[0.25, -1.5]" in text


def test_empty_results_report(tmp_path):
    res = _run("report", str(tmp_path))
    assert res.exit_code == 0
    assert "no checks executed" in (tmp_path / "summary.txt").read_text()


def test_mode_energy_plot_has_three_curves(tmp_path):
    art = cli.Artifacts(tmp_path)
    tau = [-3.0, -2.0, -1.0]
    results = {"name": "x", "kind": "FlowRun", "checks": [],
               "series": {"energies": {"tau": tau, "U": [[math.exp(t), 1e-3, 1e-6] for t in tau]}}}
    cli.emit_report(results, art)
    svg = (tmp_path / "plots" / "mode_energies.svg").read_text()
    for label in ("U_plus", "U_zero", "U_minus"):
        assert label in svg


def test_jobs_runs_scenarios_in_parallel(tmp_path):
    doc = {"schema": cli.SCHEMA, "scenarios": [
        {"name": "coarse", "parameters": {"order": 16}},
        {"name": "fine", "parameters": {"order": 24}}]}
    res = _run("spectral", "--config", _write(tmp_path, doc), "--out", str(tmp_path / "o"), "--jobs", "2")
    assert res.exit_code == 0, res.output
    assert (tmp_path / "o" / "coarse" / "manifest.json").exists()
    assert (tmp_path / "o" / "fine" / "manifest.json").exists()


def test_mz_suite_is_seeded(tmp_path):
    doc = {"schema": cli.SCHEMA, "parameters": {"systems": 4}}
    cfg = _write(tmp_path, doc)
    for out in ("a", "b"):
        assert _run("mz", "--config", cfg, "--out", str(tmp_path / out), "--seed", "11").exit_code == 0
    a = (tmp_path / "a" / "MzSuite" / "mz" / "classification.csv").read_text()
    b = (tmp_path / "b" / "MzSuite" / "mz" / "classification.csv").read_text()
    assert a == b
    assert a.splitlines()[1].startswith("11,")


def test_json_writer_handles_non_finite():
    assert json.loads(cli.dumps({"x": math.inf}))["x"] == "inf"
