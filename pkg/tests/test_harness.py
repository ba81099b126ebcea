"""Scenario runners, configuration, emission and the CLI."""
import csv
import json
from importlib import resources

import numpy as np
import pytest
from scipy.integrate import quad

from roughsys.cli import main
from roughsys.config import from_dict, load_config
from roughsys.errors import ConfigError, IoError
from roughsys.scenarios import ScenarioReport, emit, run

CONFIG_DIR = resources.files("roughsys") / "configs"
BUNDLED = sorted(p.name for p in CONFIG_DIR.iterdir() if p.name.endswith(".yaml"))


def _cfg(**over):
    raw = {"scenario": "dirichlet-l2", "domain": {"n": 2, "N": 1, "resolutions": [32]}}
    raw.update(over)
    return from_dict(raw)


@pytest.fixture(scope="module")
def identity_report():
    cfg = _cfg(domain={"n": 2, "N": 1, "resolutions": [64]},
               data={"f": [{"kind": "constant", "value": 1.0}, {"kind": "fourier", "k": 1}]})
    return run(cfg)


def _rows(report, table):
    t = report.tables[table]
    return [dict(zip(t["columns"], r)) for r in t["rows"]]


# scenario behaviour ---------------------------------------------------------------

def test_identity_constant_data_ratio(identity_report):
    # u = 1 - x0/h; the lowest ball sits one row up, so the ratio is 1 - O(dx0)
    row = next(r for r in _rows(identity_report, "runs") if r["data"].startswith("constant"))
    assert 1.0 - 1.5 / 64 <= row["ratio_ntilde_f"] <= 1.0 + 1e-12
    fine = run(_cfg(domain={"n": 2, "N": 1, "resolutions": [128]},
                    data={"f": [{"kind": "constant", "value": 1.0}]}))
    assert 0.99 <= fine.metrics["max_ratio_ntilde_f"] <= 1.0 + 1e-12


def test_identity_fourier_closed_forms(identity_report):
    row = next(r for r in _rows(identity_report, "runs") if r["data"].startswith("fourier"))
    k = 2 * np.pi
    # u = cos(k x) sinh(k (1 - t)) / sinh(k); |grad u|^2 averaged over x
    energy_density = lambda t: 0.5 * k * k * np.cosh(2 * k * (1 - t)) / np.sinh(k) ** 2  # noqa: E731
    we, _ = quad(lambda t: t * energy_density(t), 0.0, 1.0)
    assert row["f_l2"] == pytest.approx(np.sqrt(0.5), rel=1e-12)
    assert row["weighted_energy"] == pytest.approx(we, rel=0.03)
    assert row["fubini_ratio"] == pytest.approx(1.0, rel=0.03)


def test_zero_eps_perturbation_matches_identity():
    base = dict(data={"f": [{"kind": "fourier", "k": 1}]})
    a = run(_cfg(coeffs={"kind": "identity"}, **base))
    b = run(_cfg(coeffs={"kind": "perturbed-identity", "eps": 0.0}, **base))
    assert a.tables == b.tables
    assert a.metrics == b.metrics


def test_equivalence_skips_zero_data():
    cfg = from_dict({"scenario": "equivalence", "domain": {"n": 2, "resolutions": [24]},
                     "data": {"f": [{"kind": "zero"}, {"kind": "fourier", "k": 1}]},
                     "params": {"p_grid": [2.0]}})
    rep = run(cfg)
    rows = _rows(rep, "norms")
    zero = [r for r in rows if r["data"] == "zero()"]
    assert zero and all(r["n_over_s"] is None and r["s_over_n"] is None for r in zero)
    live = [r for r in rows if r["data"] != "zero()"]
    assert all(0.1 < r["n_over_s"] < 10 for r in live)
    assert not rep.alarms


def test_carleson_scan_scaling():
    cfg = from_dict({"scenario": "carleson-scan", "domain": {"n": 2, "resolutions": [32]},
                     "coeffs": {"kind": "perturbed-identity", "profile": "smooth"},
                     "data": {"f": [{"kind": "fourier", "k": 1}]},
                     "params": {"eps_grid": [0.0, 0.05, 0.1]}})
    rep = run(cfg)
    scan = {r["eps"]: r for r in _rows(rep, "scan")}
    assert scan[0.0]["carleson_gradient"] == 0.0
    assert rep.metrics["eps2_scaling"] == pytest.approx(4.0, rel=1e-10)
    assert rep.metrics["ratio_increase"] < 0.5
    assert not rep.alarms


def test_carleson_scan_rejects_unscannable_coefficients():
    cfg = from_dict({"scenario": "carleson-scan", "domain": {"n": 2, "resolutions": [16]}})
    with pytest.raises(ConfigError):
        run(cfg)


def test_lp_sweep_identity_and_lame():
    ident = run(from_dict({"scenario": "lp-sweep", "domain": {"n": 2, "resolutions": [32]},
                           "params": {"p_grid": [1.8, 1.9, 2.0, 2.1, 2.2]}}))
    assert ident.metrics["max_adjacent_change"] < 0.25
    lame = run(from_dict({"scenario": "lp-sweep", "domain": {"n": 2, "N": 2, "resolutions": [32]},
                          "coeffs": {"kind": "lame", "lam": 1.0, "mu": 3.0},
                          "params": {"p_grid": [2.0, 2.1]}}))
    r20, r21 = lame.metrics["sup_ratio_p2"], lame.metrics["sup_ratio_p2.1"]
    assert 0.5 <= r21 / r20 <= 2.0


def test_lp_sweep_zero_data_skipped():
    rep = run(from_dict({"scenario": "lp-sweep", "domain": {"n": 2, "resolutions": [16]},
                         "params": {"p_grid": [2.0], "battery": [{"kind": "zero"}]}}))
    assert all(r["ratio_ntilde_f"] is None for r in _rows(rep, "ratios"))
    assert "sup_ratio_p2" not in rep.metrics


def test_good_lambda_inclusion():
    rep = run(from_dict({"scenario": "good-lambda", "domain": {"n": 2, "resolutions": [32]},
                         "data": {"f": [{"kind": "random-smooth", "seed": 0}]},
                         "cones": {"a": 1.0, "b": 2.0}}))
    assert rep.metrics["inclusion_holds"] == 1
    assert all(r["left"] >= 0 and r["right"] >= 0 for r in _rows(rep, "sets"))


def test_determinism_and_provenance(tmp_path):
    cfg = _cfg(data={"f": [{"kind": "random-smooth", "seed": 3}]})
    a, b = run(cfg), run(cfg)
    pa = emit(a, "json", tmp_path / "a")[0]
    pb = emit(b, "json", tmp_path / "b")[0]
    assert pa.read_bytes() == pb.read_bytes()
    prov = json.loads(pa.read_text())["provenance"]
    assert prov["config_hash"] == cfg.hash()
    assert len(prov["grids"]) == 1
    assert "runtime_s" not in prov
    timed = json.loads(emit(a, "json", tmp_path / "c", timing=True)[0].read_text())
    assert "runtime_s" in timed["provenance"]


# emission ---------------------------------------------------------------------------

def test_json_round_trip(identity_report, tmp_path):
    path = emit(identity_report, "json", tmp_path)[0]
    back = json.loads(path.read_text())
    assert back["metrics"] == identity_report.metrics
    assert back["tables"] == identity_report.tables


def test_csv_rows(identity_report, tmp_path):
    paths = emit(identity_report, "csv", tmp_path)
    names = {p.name for p in paths}
    assert {"dirichlet_l2_runs.csv", "dirichlet_l2_metrics.csv", "dirichlet_l2_provenance.csv"} <= names
    with open(tmp_path / "dirichlet_l2_runs.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == identity_report.tables["runs"]["columns"]
    assert len(rows) - 1 == len(identity_report.tables["runs"]["rows"])
    # repr floats survive the trip exactly
    assert float(rows[1][2]) == identity_report.tables["runs"]["rows"][0][2]


def test_empty_report_header_only(tmp_path):
    rep = ScenarioReport("diagnose")
    rep.table("boundary", ["x", "f"])
    emit(rep.check(), "csv", tmp_path)
    text = (tmp_path / "diagnose_boundary.csv").read_text()
    assert text == "x,f\n"


def test_emit_errors(identity_report, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(IoError):
        emit(identity_report, "json", blocker / "sub")
    with pytest.raises(ConfigError):
        emit(identity_report, "xml", tmp_path)


# configuration -----------------------------------------------------------------------

@pytest.mark.parametrize("raw", [
    [1, 2],
    {"bogus": {}},
    {"scenario": "nope"},
    {"domain": {"n": 4}},
    {"domain": {"h": 0}},
    {"domain": {"resolutions": [2]}},
    {"domain": {"n": 2, "N": 1}, "coeffs": {"kind": "lame"}},
    {"cones": {"a": 0}},
    {"cones": {"a": 1.0, "b": 0.5}},
    {"solver": {"tol": 0}},
])
def test_config_rejects(raw):
    with pytest.raises(ConfigError):
        from_dict(raw)


def test_config_defaults_and_hash():
    cfg = from_dict({})
    assert cfg.scenario == "dirichlet-l2"
    assert cfg.b == 2 * cfg.a
    assert cfg.hash() == from_dict({}).hash()
    assert cfg.hash() != from_dict({"seed": 1}).hash()


def test_load_config_errors(tmp_path):
    with pytest.raises(IoError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("domain: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(bad)


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_configs_parse(name):
    cfg = load_config(CONFIG_DIR / name)
    assert cfg.scenario


# CLI ----------------------------------------------------------------------------------

def _write(tmp_path, text):
    p = tmp_path / "cfg.yaml"
    p.write_text(text)
    return p


def test_cli_success(tmp_path, capsys):
    cfg = _write(tmp_path, "scenario: dirichlet-l2\ndomain: {n: 2, resolutions: [16]}\n")
    code = main(["solve", str(cfg), "--out", str(tmp_path / "o"), "--format", "csv", "--threads", "1"])
    assert code == 0
    assert (tmp_path / "o" / "dirichlet_l2_runs.csv").exists()
    assert "max_ratio_ntilde_f" in capsys.readouterr().out


def test_cli_alarm_exit(tmp_path):
    # zero data leaves every good-lambda ratio undefined, so C(gamma) cannot decrease
    cfg = _write(tmp_path, "scenario: good-lambda\ndomain: {n: 2, resolutions: [16]}\n"
                           "data: {f: [{kind: zero}]}\n")
    assert main(["good-lambda", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_cli_error_exit(tmp_path, capsys):
    cfg = _write(tmp_path, "domain: {n: 7}\n")
    assert main(["solve", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "error:" in capsys.readouterr().err
    assert main(["solve", str(tmp_path / "absent.yaml")]) == 1


def test_cli_seed_override(tmp_path):
    cfg = _write(tmp_path, "domain: {n: 2, resolutions: [16]}\n"
                           "data: {f: [{kind: random-smooth}]}\n")
    main(["solve", str(cfg), "--out", str(tmp_path / "s1"), "--seed", "1"])
    main(["solve", str(cfg), "--out", str(tmp_path / "s2"), "--seed", "2"])
    a = json.loads((tmp_path / "s1" / "dirichlet_l2.json").read_text())
    b = json.loads((tmp_path / "s2" / "dirichlet_l2.json").read_text())
    assert a["tables"] != b["tables"]
