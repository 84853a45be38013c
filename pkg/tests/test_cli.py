import csv
import json
import math

import numpy as np
import pytest

from helpers import csv_bytes, write_cli_inputs
from ldmlab import report
from ldmlab.cli import derive_seed, main
from ldmlab.info import DiscreteJoint


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def joint_file(tmp_path, pmf, name="j.json"):
    path = tmp_path / name
    path.write_text(json.dumps(DiscreteJoint.from_units(np.asarray(pmf), labels=True).to_json()))
    return path


# -- oracle -------------------------------------------------------------------
def test_oracle_product_joint(tmp_path, capsys):
    pmf = np.einsum("a,b,y->aby", [0.3, 0.7], [0.6, 0.4], [0.5, 0.5])
    code, out, _ = run(capsys, "oracle", joint_file(tmp_path, pmf))
    res = json.loads(out)
    assert code == 0
    for k in ("multivariate_mi", "conditional_mi", "d_lb"):
        assert res[k] == pytest.approx(0.0, abs=1e-12)


def test_oracle_units_equal_label(tmp_path, capsys):
    pmf = np.zeros((2, 2, 2))
    pmf[0, 0, 0] = pmf[1, 1, 1] = 0.5
    res = json.loads(run(capsys, "oracle", joint_file(tmp_path, pmf))[1])
    assert res["d_lb"] == pytest.approx(math.log(2))
    assert abs(res["decomposition_residual"]) < 1e-9
    assert res["bayes_error"] == pytest.approx(0.0, abs=1e-12)


def test_oracle_error_is_json_with_nonzero_exit(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"alphabets": [2],\n "pmf": [0.5, 0.5,]}')
    code, _, err = run(capsys, "oracle", bad)
    assert code == 2
    msg = json.loads(err.strip().splitlines()[-1])
    assert msg["error"] == "InvalidDistribution" and "line 2" in msg["message"]


# -- estimate -----------------------------------------------------------------
def write_activations(path, labels=True):
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, 200)
    h = y[:, None] + 0.1 * rng.standard_normal((200, 2))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["h1", "h2", "label"] if labels else ["h1", "h2"])
        for row, lab in zip(h, y):
            w.writerow([repr(float(row[0])), repr(float(row[1]))] + ([int(lab)] if labels else []))
    return path


def test_estimate_with_labels(tmp_path, capsys):
    path = write_activations(tmp_path / "a.csv")
    argv = ("estimate", path, "--updates", "100", "--hidden", "16", "--seed", "3")
    code, out, _ = run(capsys, *argv)
    res = json.loads(out)
    assert code == 0 and res["K"] == 200 and res["m"] == 2
    assert res["d_lb"] == pytest.approx(res["js_mi"] - res["conditional_js_mi"], abs=1e-15)
    assert run(capsys, *argv)[1] == out


def test_estimate_without_labels(tmp_path, capsys):
    res = json.loads(run(capsys, "estimate", write_activations(tmp_path / "a.csv", False),
                         "--updates", "20", "--hidden", "8")[1])
    assert "d_lb" not in res and "js_mi" in res


def test_estimate_reports_bad_line(tmp_path, capsys):
    path = tmp_path / "a.csv"
    path.write_text("h1,h2\n1,2\n3,x\n")
    code, _, err = run(capsys, "estimate", path)
    assert code == 2 and "line 3" in err


# -- boundlab -----------------------------------------------------------------
def test_boundlab_random(tmp_path, capsys):
    code, out, _ = run(capsys, "boundlab", "--random", 5, "--seed", 2, "--out-dir", tmp_path)
    res = json.loads(out)
    assert code == 0 and res["problems"] == 5
    assert res["lemma1_violations"] == 0 and res["max_theorem1_residual"] < 1e-9
    first = (tmp_path / "boundlab.csv").read_bytes()
    run(capsys, "boundlab", "--random", 5, "--seed", 2, "--out-dir", tmp_path)
    assert (tmp_path / "boundlab.csv").read_bytes() == first


def test_boundlab_needs_input(capsys):
    assert run(capsys, "boundlab")[0] == 2


# -- train / sweep / report ---------------------------------------------------
def test_seed_rule():
    assert derive_seed(0, 0) == int(np.random.SeedSequence([0, 0]).generate_state(1)[0])
    assert derive_seed(0, 1) != derive_seed(0, 0) != derive_seed(1, 0)


def test_train_is_bitwise_deterministic(tmp_path, capsys):
    syn, cfg = write_cli_inputs(tmp_path)
    outs = []
    for name in ("a", "b"):
        code, _, _ = run(capsys, "train", "--config", cfg, "--synthetic", syn, "--method", "none,ldm",
                         "--seeds", 2, "--seed", 5, "--out-dir", tmp_path / name)
        assert code == 0
        outs.append(csv_bytes(tmp_path / name))
    assert outs[0] == outs[1]
    assert len([k for k in outs[0] if "_seed" in k]) == 4


def test_parallel_jobs_match_serial(tmp_path, capsys):
    syn, cfg = write_cli_inputs(tmp_path)
    for name, jobs in (("serial", 1), ("parallel", 2)):
        run(capsys, "train", "--config", cfg, "--synthetic", syn, "--method", "udm,decov",
            "--jobs", jobs, "--out-dir", tmp_path / name)
    assert csv_bytes(tmp_path / "serial") == csv_bytes(tmp_path / "parallel")


def test_sweep_aggregates_per_lambda(tmp_path, capsys):
    syn, cfg = write_cli_inputs(tmp_path)
    out = tmp_path / "sw"
    code, _, _ = run(capsys, "sweep", "--config", cfg, "--synthetic", syn, "--lambda", "0.1,0.5,0.9",
                     "--seeds", 2, "--out-dir", out)
    assert code == 0
    with open(out / "aggregate.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["lam"]) for r in rows] == [0.1, 0.5, 0.9]
    assert all(int(r["n_runs"]) == 2 for r in rows)
    with open(out / "sweep.csv") as fh:
        trend = list(csv.DictReader(fh))
    assert trend[0]["gap_change"] == ""
    assert float(trend[1]["gap_change"]) == pytest.approx(float(trend[1]["gap"]) - float(trend[0]["gap"]))


def test_report_means_match_runs(tmp_path, capsys):
    syn, cfg = write_cli_inputs(tmp_path)
    out = tmp_path / "r"
    run(capsys, "train", "--config", cfg, "--synthetic", syn, "--seeds", 3, "--out-dir", out)
    runs = report.load_runs(out)
    code, _, _ = run(capsys, "report", out, "--out-dir", tmp_path / "rep")
    assert code == 0
    with open(tmp_path / "rep" / "aggregate.csv") as fh:
        (row,) = list(csv.DictReader(fh))
    for key in ("test_acc", "corre_gap"):
        mean = np.mean([r["rows"][-1][key] for r in runs])
        assert float(row[key]) == pytest.approx(mean, abs=1e-12)
    assert (tmp_path / "rep" / "corre_gap.svg").read_text().startswith("<svg")


def test_failed_run_is_recorded(tmp_path, capsys):
    syn, cfg = write_cli_inputs(tmp_path)
    cfg.write_text(json.dumps({"method": "ldm", "iterations": 3, "eval_every": 1, "batch_size": 1000}))
    code, _, _ = run(capsys, "train", "--config", cfg, "--synthetic", syn, "--out-dir", tmp_path / "x")
    assert code == 1
    errors = json.loads((tmp_path / "x" / "errors.json").read_text())
    assert errors[0]["error"] == "ValueError" and "batch" in errors[0]["message"]


def test_missing_data_dir_is_an_error(tmp_path, capsys):
    code, _, _ = run(capsys, "train", "--data-dir", tmp_path, "--out-dir", tmp_path / "o", "--iterations", 1)
    assert code == 1
    errors = json.loads((tmp_path / "o" / "errors.json").read_text())
    assert errors[0]["error"] == "FileNotFoundError"
