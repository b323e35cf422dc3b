import json
import subprocess
import sys

import pytest

from spike_limits.cli import main
from spike_limits.model import build_equicorrelation, build_general, model_to_json


def write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture
def delta1_file(tmp_path):
    return write(tmp_path / "model.json", model_to_json(build_general(200, [(4.0, 1)], [1.0] * 199)))


def run_cli(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_limits(delta1_file, capsys):
    code, out, _ = run_cli(["limits", delta1_file, "--n", "400"], capsys)
    doc = json.loads(out)
    assert code == 0
    assert round(doc["phi"], 6) == 4.666667 and round(doc["l0"], 6) == 0.809524
    assert doc["spike_k"] == 1 and "config_hash" in doc and "version" in doc


def test_limits_below_transition(tmp_path, capsys):
    path = write(tmp_path / "weak.json", model_to_json(build_general(100, [(1.5, 1)], [1.0] * 99)))
    code, _, err = run_cli(["limits", path, "--n", "200"], capsys)
    assert code == 2 and "spike 1" in err


def test_limits_input_errors(tmp_path, capsys):
    assert run_cli(["limits", str(tmp_path / "missing.json"), "--n", "10"], capsys)[0] == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{oops")
    code, _, err = run_cli(["limits", str(bad), "--n", "10"], capsys)
    assert code == 1 and "line 1" in err


def test_variance(delta1_file, capsys):
    code, out, _ = run_cli(["variance", delta1_file, "--n", "400", "--projection", "V1"], capsys)
    assert code == 0 and round(json.loads(out)["sigma2"], 6) == 0.254012
    code, out, _ = run_cli(["variance", delta1_file, "--n", "400", "--projection", "orthogonal"], capsys)
    assert json.loads(out)["sigma2"] == 0.0


def test_variance_correlation_terms(tmp_path, capsys):
    path = write(tmp_path / "eq.json", model_to_json(build_equicorrelation(50, 0.3)))
    code, out, _ = run_cli(["variance", path, "--n", "100", "--kind", "correlation"], capsys)
    assert code == 0 and len(json.loads(out)["terms"]) == 21


def ac1_config(tmp_path, reps):
    doc = {
        "model": model_to_json(build_general(200, [(4.0, 1)], [1.0] * 199)),
        "n": 400,
        "reps": reps,
        "dist": "gaussian",
        "kinds": ["covariance_matrix"],
        "projections": ["V1"],
        "master_seed": 2024,
    }
    return write(tmp_path / "config.json", doc)


def test_verify_insufficient(tmp_path, capsys):
    cfg = ac1_config(tmp_path, 10)
    assert run_cli(["verify", cfg, "--out", str(tmp_path / "o")], capsys)[0] == 3


def test_verify_ac1_deterministic(tmp_path, capsys):
    cfg = ac1_config(tmp_path, 500)
    assert run_cli(["verify", cfg, "--out", str(tmp_path / "a")], capsys)[0] == 0
    assert run_cli(["verify", "--config", cfg, "--out", str(tmp_path / "b")], capsys)[0] == 0
    for name in ("records.csv", "report.json", "plot_data.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_overrides(tmp_path, capsys):
    cfg = ac1_config(tmp_path, 500)
    code, _, _ = run_cli(["simulate", cfg, "--reps", "3", "--seed", "9", "--out", str(tmp_path / "s")], capsys)
    rows = (tmp_path / "s" / "records.csv").read_text().splitlines()
    assert code == 0 and len(rows) == 4


def test_normalize_effect(tmp_path, capsys):
    path = write(tmp_path / "eq.json", model_to_json(build_equicorrelation(100, 0.5)))
    code, out, _ = run_cli(["normalize-effect", path], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["effective_term"] == pytest.approx(-0.7525) and doc["sign"] == "negative"
    p = 1600
    ew = build_general(p, [(5.0, 1)], [(p - 5) / (p - 1)] * (p - 1), mode="correlation",
                       structure="equal_weight_leading")
    path = write(tmp_path / "ew.json", model_to_json(ew))
    code, out, _ = run_cli(["normalize-effect", path], capsys)
    assert abs(json.loads(out)["effective_term"]) < 0.01


def test_normalize_effect_with_config(tmp_path, capsys):
    doc = {"model": model_to_json(build_equicorrelation(30, 0.5)), "n": 60, "reps": 40, "master_seed": 1}
    cfg = write(tmp_path / "c.json", doc)
    code, out, _ = run_cli(["normalize-effect", "--config", cfg], capsys)
    res = json.loads(out)
    assert code == 0 and "empirical" in res and res["full_delta"] is not None


def test_normalize_effect_rejects_covariance_model(delta1_file, capsys):
    assert run_cli(["normalize-effect", delta1_file], capsys)[0] == 2


def test_module_entry_point(delta1_file):
    proc = subprocess.run(
        [sys.executable, "-m", "spike_limits", "limits", delta1_file, "--n", "400"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0 and '"phi"' in proc.stdout
