import json
import logging
import subprocess
import sys
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from reslab import physics, synth
from reslab.cli import clean, main
from reslab.spectra import write_touchstone

_CAPLOG = None
SCHEMAS = Path(__file__).resolve().parents[1] / "docs" / "schemas"


def schema(name):
    return json.loads((SCHEMAS / f"{name}.schema.json").read_text())


@pytest.fixture(autouse=True)
def _capture_log(caplog):
    caplog.set_level(logging.INFO, logger="reslab")
    global _CAPLOG
    _CAPLOG = caplog
    yield


def run(argv, capsys):
    """Run the CLI in-process; returns (exit code, stdout, stderr plus log text)."""
    _CAPLOG.clear()
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err + _CAPLOG.text


def _power_synth_config(path, **kw):
    doc = {"f_c": 6e9, "q_ext": 5e5, "attenuation_db": 70.0, "label": "nb1",
           "points_per_spectrum": 201, "axis": "power",
           "power_params": {"f_delta0": 2.55e-6, "n_sat": 2.4, "beta2": 0.525,
                            "delta_other": 1.3e-7},
           "n_ph_grid": list(np.logspace(-1, 7, 12))}
    doc.update(kw)
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture
def power_run(tmp_path, capsys):
    cfg = _power_synth_config(tmp_path / "synth.json")
    code, _, _ = run(["synth", cfg, "--out-dir", tmp_path / "camp"], capsys)
    assert code == 0
    code, out, _ = run(["power-sweep", tmp_path / "camp" / "manifest.json", "--out-dir",
                        tmp_path / "ps"], capsys)
    assert code == 0
    return tmp_path, json.loads(out)


def test_clean_rounds_and_nulls():
    assert clean(1.0 / 3.0) == 0.333333333333
    assert clean([float("nan"), float("inf"), np.float64(2.5), np.int64(3)]) == [None, None,
                                                                                 2.5, 3]
    assert clean({"a": (True, None)}) == {"a": [True, None]}


# ------------------------------------------------------------------ fit

def test_fit_clean_touchstone(tmp_path, capsys):
    cfg = synth.SynthConfig(f_c=7e9, q_ext=2e5, q_int=5e5, label="clean")
    write_touchstone(tmp_path / "clean.s2p", synth.synth_spectrum(cfg), fmt="db")
    code, out, err = run(["fit", tmp_path / "clean.s2p"], capsys)
    assert code == 0
    doc = json.loads(out)
    jsonschema.validate(doc, schema("fit_output"))
    assert len(doc["fits"]) == 1
    assert doc["fits"][0]["q_int"] == pytest.approx(5e5, rel=1e-6)
    assert doc["config"]["delay_ns"] == 0.0


def test_fit_distorted_exits_2(tmp_path, capsys):
    cfg = synth.SynthConfig(f_c=7e9, q_ext=2e5, q_int=5e5, distortion="oval_high_power",
                            n_nl=1.0, power_dbm=-90.0)
    write_touchstone(tmp_path / "hot.s2p", synth.synth_spectrum(cfg))
    code, out, err = run(["fit", tmp_path / "hot.s2p", "--out", tmp_path / "o.json"], capsys)
    assert code == 2
    assert out == ""
    rec = json.loads((tmp_path / "o.json").read_text())["fits"][0]
    assert rec["accepted"] is False
    assert "rejected" in err


def test_fit_missing_file_exits_1(tmp_path, capsys):
    code, out, err = run(["fit", tmp_path / "nope.s2p"], capsys)
    assert code == 1
    assert "nope.s2p" in err
    assert out == ""


def test_fit_output_sorted_by_label(tmp_path, capsys):
    for name, fc in (("b", 5e9), ("a", 6e9)):
        cfg = synth.SynthConfig(f_c=fc, q_ext=2e5, q_int=5e5)
        write_touchstone(tmp_path / f"{name}.s2p", synth.synth_spectrum(cfg))
    code, out, _ = run(["fit", tmp_path / "b.s2p", tmp_path / "a.s2p"], capsys)
    assert code == 0
    assert [r["label"] for r in json.loads(out)["fits"]] == ["a", "b"]


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = synth.SynthConfig(f_c=7e9, q_ext=2e5, q_int=5e5, noise_sigma=1e-3, seed=3)
    write_touchstone(tmp_path / "s.s2p", synth.synth_spectrum(cfg))
    (tmp_path / "c.json").write_text(json.dumps({"nrmse_max": 1e-12, "circ_min": 0.5}))
    code, out, _ = run(["fit", tmp_path / "s.s2p", "--config", tmp_path / "c.json"], capsys)
    assert code == 2
    assert json.loads(out)["config"]["nrmse_max"] == 1e-12
    code, out, _ = run(["fit", tmp_path / "s.s2p", "--config", tmp_path / "c.json",
                        "--nrmse-max", "0.05"], capsys)
    assert code == 0
    assert json.loads(out)["config"]["circ_min"] == 0.5
    (tmp_path / "bad.json").write_text(json.dumps({"no_such_option": 1}))
    code, _, err = run(["fit", tmp_path / "s.s2p", "--config", tmp_path / "bad.json"], capsys)
    assert code == 1 and "no_such_option" in err


def test_usage_error_exits_1(capsys):
    code, _, err = run(["fit", "--bogus"], capsys)
    assert code == 1
    code, _, _ = run(["power-sweep"], capsys)
    assert code == 1


# --------------------------------------------------------------- sweeps

def test_power_sweep_outputs(power_run):
    tmp_path, doc = power_run
    jsonschema.validate(doc, schema("power_sweep"))
    p = doc["result"]["params"]
    assert p["n_sat"] == pytest.approx(2.4, rel=1e-6)
    assert (tmp_path / "ps" / "power_sweep.csv").read_text().startswith("x,y,y_err,model_y")
    saved = json.loads((tmp_path / "ps" / "power_sweep.json").read_text())
    assert saved == doc


def test_power_sweep_constant_and_distorted(tmp_path, capsys):
    cfg = _power_synth_config(tmp_path / "c.json", power_params=None, q_int=1e6)
    run(["synth", cfg, "--out-dir", tmp_path / "c"], capsys)
    code, out, _ = run(["power-sweep", tmp_path / "c" / "manifest.json"], capsys)
    assert code == 0
    res = json.loads(out)["result"]
    assert res["flags"]["n_sat"] == "unidentifiable"
    assert res["params"]["n_sat"] is None

    cfg = _power_synth_config(tmp_path / "d.json", distortion="oval_high_power", n_nl=1e5)
    run(["synth", cfg, "--out-dir", tmp_path / "d"], capsys)
    code, out, err = run(["power-sweep", tmp_path / "d" / "manifest.json"], capsys)
    assert code == 2
    assert len(json.loads(out)["result"]["excluded"]) >= 2
    assert "excluded" in err


def test_temp_sweep_pipeline(power_run, capsys):
    tmp_path, _ = power_run
    doc = {"f_c": 6e9, "q_ext": 5e5, "label": "nb1", "points_per_spectrum": 201,
           "axis": "temperature", "grid": list(np.logspace(-2, 0, 12)),
           "temp_params": {"f_delta0": 2.55e-6, "a_floor": 0.011, "c_coeff": 0.087,
                           "beta1": 0.99, "delta_other": 1.3e-7},
           "material": {"t_c": 9.3, "rho_n": 3e-8, "thickness_d": 2.3e-7}}
    (tmp_path / "t.json").write_text(json.dumps(doc))
    assert run(["synth", tmp_path / "t.json", "--out-dir", tmp_path / "t"], capsys)[0] == 0
    man = tmp_path / "t" / "manifest.json"
    fixed = tmp_path / "ps" / "power_sweep.json"
    code, out, _ = run(["temp-sweep", man, "--fixed-from", fixed, "--material", "nb",
                        "--hold-alpha-k", "--out-dir", tmp_path / "ts"], capsys)
    assert code == 0
    res = json.loads(out)
    jsonschema.validate(res, schema("temp_sweep"))
    assert res["result"]["params"]["a_floor"] == pytest.approx(0.011, rel=1e-6)
    assert res["result"]["params"]["alpha_k"] is None
    assert (tmp_path / "ts" / "temp_sweep.csv").exists()

    (tmp_path / "mat.json").write_text(json.dumps({"t_c": 9.3, "rho_n": 3e-8,
                                                   "thickness_d": 2.3e-7}))
    code, out, _ = run(["temp-sweep", man, "--fixed-from", fixed, "--material",
                        tmp_path / "mat.json"], capsys)
    assert code == 0
    assert json.loads(out)["result"]["fixed"]["material"]["t_c"] == 9.3


def test_temp_sweep_missing_fixed_is_hard_error(power_run, capsys):
    tmp_path, _ = power_run
    (tmp_path / "empty.json").write_text(json.dumps({"result": {"params": {"f_delta0": 1e-6}}}))
    code, _, err = run(["temp-sweep", tmp_path / "camp" / "manifest.json", "--material", "nb"],
                       capsys)
    assert code == 1 and "fixed-from" in err
    code, _, err = run(["temp-sweep", tmp_path / "camp" / "manifest.json", "--material", "nb",
                        "--fixed-from", tmp_path / "empty.json"], capsys)
    assert code == 1 and "delta_other" in err


# ---------------------------------------------------------------- synth

def _tree(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_synth_is_byte_identical_on_rerun(tmp_path, capsys):
    cfg = _power_synth_config(tmp_path / "s.json", noise_sigma=1e-3, seed=11)
    a = run(["synth", cfg, "--out-dir", tmp_path / "a"], capsys)
    b = run(["synth", cfg, "--out-dir", tmp_path / "b"], capsys)
    assert a[0] == b[0] == 0 and a[1] == b[1]
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")
    jsonschema.validate(json.loads(cfg.read_text()), schema("synth_config"))
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    jsonschema.validate(man, schema("manifest"))
    c = run(["synth", cfg, "--out-dir", tmp_path / "c", "--seed", "12"], capsys)
    assert _tree(tmp_path / "a") != _tree(tmp_path / "c")
    assert c[1] != a[1]


def test_synth_invalid_config(tmp_path, capsys):
    (tmp_path / "bad.json").write_text(json.dumps({"f_c": 6e9, "q_ext": 1e5, "grid": [-90]}))
    code, _, err = run(["synth", tmp_path / "bad.json", "--out-dir", tmp_path / "o"], capsys)
    assert code == 1 and "invalid" in err
    (tmp_path / "bad2.json").write_text(json.dumps({"f_c": 6e9, "q_ext": 1e5, "q_int": 1e6}))
    code, _, _ = run(["synth", tmp_path / "bad2.json", "--out-dir", tmp_path / "o"], capsys)
    assert code == 1


# ---------------------------------------------------------------- stats

def _records(tmp_path, values, label="r1", accepted=True):
    recs = [{"label": label, "q_int": v, "accepted": accepted} for v in values]
    path = tmp_path / f"{label}.json"
    path.write_text(json.dumps({"fits": recs}))
    return path


@pytest.mark.parametrize("values,expected", [
    ([1, 2, 3, 4, 5], {"median": 3, "q1": 2, "q3": 4, "iqr": 2, "outliers": []}),
    ([1, 1, 1, 1, 100], {"outliers": [100], "whisker_hi": 1}),
    ([7], {"median": 7, "q1": 7, "q3": 7, "whisker_lo": 7, "whisker_hi": 7, "outliers": []}),
])
def test_stats_examples(tmp_path, capsys, values, expected):
    code, out, _ = run(["stats", _records(tmp_path, values), "--out-dir", tmp_path / "s"],
                       capsys)
    assert code == 0
    doc = json.loads(out)
    jsonschema.validate(doc, schema("stats"))
    summary = doc["summaries"]["r1"]
    for k, v in expected.items():
        assert summary[k] == v
    assert (tmp_path / "s" / "stats.csv").read_text().startswith("label,n,median")


def test_stats_groups_and_skips(tmp_path, capsys):
    a = _records(tmp_path, [1.0, 2.0], "b")
    b = _records(tmp_path, [5.0], "a")
    c = _records(tmp_path, [9.0], "c", accepted=False)
    code, out, _ = run(["stats", a, b, c], capsys)
    doc = json.loads(out)
    assert code == 2
    assert list(doc["summaries"]) == ["a", "b"]
    assert doc["skipped"] == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "reslab.cli", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("reslab ")
