import json

import pytest

from bmlab.cli import ExperimentConfig, load_schema, main
from bmlab.errors import InputError
from bmlab.hermite import abs_coefficient

CONFIG = {
    "model": {"kind": "fgn", "H": 0.6},
    "functional": "Z",
    "function": {"builtin": "hermite2"},
    "eps": [2.0**-6],
    "delta": 0.25,
    "times": [0.5, 1.0],
    "replicates": 40,
    "seed": 7,
}


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def write_cfg(tmp_path, **changes):
    cfg = dict(CONFIG, **changes)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return str(p)


def test_hermite_builtin_abs(capsys):
    code, out, _ = run(capsys, "hermite", "--builtin", "abs", "--qmax", "8")
    obj = json.loads(out)
    assert code == 0
    assert obj["coeffs"][2] == pytest.approx(abs_coefficient(2), abs=1e-10)
    assert obj["coeffs"][2] == pytest.approx(0.3989422804, abs=1e-9)
    assert obj["coeffs"][4] == pytest.approx(-0.0332452, abs=1e-6)


def test_hermite_printed_convention(capsys):
    code, out, _ = run(capsys, "hermite", "--builtin", "abs", "--convention", "printed")
    obj = json.loads(out)
    assert code == 0 and obj["coeffs"][2] == pytest.approx(1.0)
    assert obj["coeffs"][4] == pytest.approx(1 / 6)


def test_hermite_coeffs_rank(capsys):
    code, out, _ = run(capsys, "hermite", "--coeffs", "0,0,1")
    assert code == 0 and json.loads(out)["rank"] == 2


@pytest.mark.parametrize("argv", [["hermite", "--builtin", "nosuch"], ["hermite"],
                                  ["hermite", "--coeffs", "a,b"], ["nosuch"]])
def test_hermite_bad_input(capsys, argv):
    assert run(capsys, *argv)[0] == 2


def test_theory_central(capsys):
    code, out, _ = run(capsys, "theory", "--model", "fbm:0.6", "--f", "abs", "--d", "2")
    obj = json.loads(out)
    assert code == 0
    assert obj["regime"]["regime"] == "central"
    assert obj["sigma2"] > 0 and obj["sigma2_tail_bound"] >= 0


def test_theory_kd(capsys):
    code, out, _ = run(capsys, "theory", "--model", "fbm:0.9", "--d", "2", "--kd", "1,1")
    obj = json.loads(out)
    assert code == 0 and obj["regime"]["regime"] == "noncentral"
    assert obj["kd"][0]["K_d"] == pytest.approx(2.16, rel=1e-3)


def test_theory_missing_model(capsys):
    assert run(capsys, "theory", "--d", "2")[0] == 2
    assert run(capsys, "theory", "--model", "nosuch:1", "--d", "2")[0] == 2


def test_experiment_smoke_and_determinism(capsys, tmp_path):
    cfg = write_cfg(tmp_path)
    a, b, s = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "s.json"
    assert run(capsys, "experiment", cfg, "--csv", str(a), "--summary", str(s))[0] == 0
    assert run(capsys, "experiment", cfg, "--csv", str(b), "--workers", "3")[0] == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_bytes().split(b"\n")
    assert lines[0] == b"replicate,kind,eps,t,value" and b"\r" not in a.read_bytes()
    assert len(lines) == 1 + 40 * 2 + 1
    summary = json.loads(s.read_text())
    assert summary["schema_version"] == "1.0"
    assert "p_value" in summary["empirical"][0]["ks"]
    import jsonschema
    jsonschema.validate(summary, load_schema())


def test_bundled_config_runs(capsys, tmp_path):
    from pathlib import Path
    cfg = Path(__file__).resolve().parents[1] / "configs" / "central_fgn.json"
    code, out, _ = run(capsys, "experiment", str(cfg), "--replicates", "30",
                       "--csv", str(tmp_path / "c.csv"), "--summary", str(tmp_path / "c.json"))
    assert code == 0
    assert json.loads((tmp_path / "c.json").read_text())["empirical"][0]["ks"]["p_value"] >= 0


def test_experiment_regime_conflict(capsys, tmp_path):
    cfg = write_cfg(tmp_path, model={"kind": "fgn", "H": 0.75}, regime="central")
    code, _, err = run(capsys, "experiment", cfg)
    assert code == 3 and "regime" in err


def test_experiment_bad_configs(capsys, tmp_path):
    bad = dict(CONFIG)
    del bad["seed"]
    p = tmp_path / "noseed.json"
    p.write_text(json.dumps(bad))
    assert run(capsys, "experiment", str(p))[0] == 2
    assert run(capsys, "experiment", write_cfg(tmp_path, eps=[0.01, 0.02]))[0] == 2
    assert run(capsys, "experiment", write_cfg(tmp_path, colour="red"))[0] == 2
    assert run(capsys, "experiment", str(tmp_path / "missing.json"))[0] == 2


def test_check_bifbm_passes(capsys):
    code, out, _ = run(capsys, "check", "--model", "bifbm:0.6,0.75")
    obj = json.loads(out)
    assert code == 0 and obj["passed"]
    assert obj["alpha"] == pytest.approx(0.9) and obj["beta"] == pytest.approx(0.45)


def test_check_fbm_boundary_identity(capsys):
    code, out, _ = run(capsys, "check", "--model", "fbm:0.75")
    obj = json.loads(out)
    assert code == 0
    assert obj["H1"]["dpsi(1)"] == pytest.approx(obj["beta"] * obj["H1"]["psi(1)"], rel=1e-8)
    assert obj["H1"]["H1c_passed"]


def test_check_custom_violation(capsys):
    spec = '{"kind": "custom", "psi": "1 + x**2", "beta": 0.6, "alpha": 1.0, "lambda": 0.5}'
    code, _, err = run(capsys, "check", "--model", spec)
    assert code == 3 and "failing" in err and "H1a" in err


def test_config_delta_defaults():
    c = ExperimentConfig.from_dict(dict(CONFIG, delta=None))
    assert c.delta_for(0.01) == 0.25
    c = ExperimentConfig.from_dict(dict(CONFIG, delta=None, functional="length"))
    assert c.delta_for(0.08) == pytest.approx(0.01)
    with pytest.raises(InputError):
        ExperimentConfig.from_dict(dict(CONFIG, delta_ratio=0.1))
