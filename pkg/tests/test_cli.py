import csv
import json

import pytest

from netcpd.cli import main

TINY = ["--iterations", "3", "--samples", "6", "--latent-dim", "2", "--rank", "2",
        "--hidden", "4", "--langevin-steps", "4", "--eps-spc", "1", "--eps-end", "1"]


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--scenario", "sbm", "--n", "10", "--T", "12",
                 "--change-points", "7", "--seed", "7", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def model_dir(sim_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = main(["detect", "--input", str(sim_dir / "graphs.json"), "--out", str(out),
                 "--lambda", "5", "--repeats", "2", "--seed", "1"] + TINY)
    assert code == 0
    return out


def test_simulate_writes_two_files(tmp_path):
    assert main(["simulate", "--scenario", "sbm", "--n", "50", "--T", "100", "--seed", "7",
                 "--out", str(tmp_path)]) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["graphs.json", "graphs_truth.json"]
    truth = json.loads((tmp_path / "graphs_truth.json").read_text())
    assert truth == {"change_points": [26, 51, 76]}


def test_simulate_generator_scenario(tmp_path):
    assert main(["simulate", "--scenario", "generator", "--n", "8", "--T", "6",
                 "--change-points", "4", "--out", str(tmp_path)]) == 0


def test_simulate_bad_flags(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--scenario", "lattice", "--out", str(tmp_path)])
    assert exc.value.code == 2
    assert main(["simulate", "--scenario", "sbm", "--T", "1", "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--scenario", "sbm", "--T", "10", "--change-points", "11",
                 "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_simulate_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("NETCPD_SEED", "7")
    main(["simulate", "--scenario", "sbm", "--n", "10", "--T", "8", "--out", str(tmp_path / "a")])
    monkeypatch.delenv("NETCPD_SEED")
    main(["simulate", "--scenario", "sbm", "--n", "10", "--T", "8", "--seed", "7",
          "--out", str(tmp_path / "b")])
    main(["simulate", "--scenario", "sbm", "--n", "10", "--T", "8", "--out", str(tmp_path / "c")])
    a, b, c = ((tmp_path / k / "graphs.json").read_bytes() for k in "abc")
    assert a == b and a != c


def test_detect_outputs(model_dir):
    names = {p.name for p in model_dir.iterdir()}
    assert {"mu.csv", "magnitudes.csv", "change_points.json", "diagnostics.csv",
            "decoder.json"} <= names
    assert "cv.csv" not in names          # --lambda skips cross-validation
    doc = json.loads((model_dir / "change_points.json").read_text())
    assert doc["T"] == 12 and doc["lambda"] == 5.0 and doc["method"] == "data_driven"
    rows = list(csv.reader(open(model_dir / "mu.csv")))
    assert len(rows) == 13 and len(rows[0]) == 3


def test_detect_runs_cv_without_lambda(sim_dir, tmp_path):
    code = main(["detect", "--input", str(sim_dir / "graphs.json"), "--out", str(tmp_path),
                 "--grid", "2,8", "--repeats", "1", "--method", "gamma", "--m", "20"] + TINY)
    assert code == 0
    rows = list(csv.DictReader(open(tmp_path / "cv.csv")))
    assert [r["lambda"] for r in rows] == ["2.0", "8.0"]
    assert json.loads((tmp_path / "change_points.json").read_text())["method"] == "gamma"


def test_detect_is_byte_deterministic(sim_dir, model_dir, tmp_path):
    main(["detect", "--input", str(sim_dir / "graphs.json"), "--out", str(tmp_path),
          "--lambda", "5", "--repeats", "2", "--seed", "1"] + TINY)
    for p in model_dir.iterdir():
        assert (tmp_path / p.name).read_bytes() == p.read_bytes(), p.name


def test_detect_config_file_and_flag_precedence(sim_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"lam": 3.0, "q": 0.8, "repeats": 1, "seed": 4}))
    out = tmp_path / "o"
    assert main(["detect", "--input", str(sim_dir / "graphs.json"), "--out", str(out),
                 "--config", str(cfg), "--lambda", "6"] + TINY) == 0
    doc = json.loads((out / "change_points.json").read_text())
    assert doc["lambda"] == 6.0 and doc["seed"] == 4
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["detect", "--input", str(sim_dir / "graphs.json"), "--out", str(out),
                 "--config", str(cfg)]) == 2


def test_detect_missing_input(tmp_path):
    assert main(["detect", "--input", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2


def test_detect_malformed_input(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"n": 3}')
    assert main(["detect", "--input", str(bad), "--out", str(tmp_path)]) == 2


def test_evaluate_metrics(tmp_path):
    (tmp_path / "truth.json").write_text(json.dumps({"change_points": [26, 51, 76]}))
    (tmp_path / "det.json").write_text(json.dumps({"change_points": [25, 53], "T": 100}))
    assert main(["evaluate", "--truth", str(tmp_path / "truth.json"), "--detected",
                 str(tmp_path / "det.json"), "--out", str(tmp_path)]) == 0
    row = next(csv.DictReader(open(tmp_path / "metrics.csv")))
    assert row["count_error"] == "1"
    assert float(row["d_det_given_truth"]) == 23 and float(row["d_truth_given_det"]) == 2


def test_evaluate_dcsbm_holdout(sim_dir, model_dir, tmp_path):
    assert main(["evaluate", "--detected", str(model_dir / "change_points.json"),
                 "--truth", str(sim_dir / "graphs_truth.json"),
                 "--graphs", str(sim_dir / "graphs.json"), "--dcsbm", "--gap", "3,6",
                 "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "holdout.csv")))
    assert [(r["gap"], r["method"]) for r in rows] == [
        ("3", "detected"), ("3", "truth"), ("3", "no_change"),
        ("6", "detected"), ("6", "truth"), ("6", "no_change")]


def test_evaluate_mismatched_T(sim_dir, tmp_path):
    (tmp_path / "det.json").write_text(json.dumps({"change_points": [5], "T": 30}))
    assert main(["evaluate", "--detected", str(tmp_path / "det.json"), "--graphs",
                 str(sim_dir / "graphs.json"), "--dcsbm", "--out", str(tmp_path)]) == 2
    (tmp_path / "truth.json").write_text(json.dumps({"change_points": [40]}))
    (tmp_path / "det2.json").write_text(json.dumps({"change_points": [5], "T": 12}))
    assert main(["evaluate", "--truth", str(tmp_path / "truth.json"), "--detected",
                 str(tmp_path / "det2.json"), "--out", str(tmp_path)]) == 2


def test_gof_writes_four_histograms(sim_dir, model_dir, tmp_path):
    assert main(["gof", "--input", str(sim_dir / "graphs.json"), "--model", str(model_dir),
                 "--times", "10,12", "--samples", "20", "--out", str(tmp_path)]) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == [
        "degree_t10.csv", "degree_t12.csv", "esp_t10.csv", "esp_t12.csv"]
    rows = list(csv.DictReader(open(tmp_path / "esp_t10.csv")))
    for r in rows:
        assert float(r["generated_q05"]) <= float(r["generated_mean"]) <= float(r["generated_q95"])
    kinds = {r["kind"] for r in csv.DictReader(open(tmp_path / "degree_t10.csv"))}
    assert kinds == {"out", "in"}
    # observed counts add up to the node count (degrees) and the edge count (shared partners)
    obs = [int(r["observed"]) for r in csv.DictReader(open(tmp_path / "degree_t10.csv"))
           if r["kind"] == "out"]
    assert sum(obs) == 10


def test_gof_single_sample_and_bad_time(sim_dir, model_dir, tmp_path):
    assert main(["gof", "--input", str(sim_dir / "graphs.json"), "--model", str(model_dir),
                 "--times", "3", "--samples", "1", "--out", str(tmp_path)]) == 0
    for r in csv.DictReader(open(tmp_path / "esp_t3.csv")):
        assert r["generated_q05"] == r["generated_mean"] == r["generated_q95"]
    assert main(["gof", "--input", str(sim_dir / "graphs.json"), "--model", str(model_dir),
                 "--times", "13", "--out", str(tmp_path)]) == 2
    assert main(["gof", "--input", str(sim_dir / "graphs.json"), "--model", str(model_dir),
                 "--times", "0", "--out", str(tmp_path)]) == 2


def test_gof_is_deterministic(sim_dir, model_dir, tmp_path):
    for sub in ("a", "b"):
        main(["gof", "--input", str(sim_dir / "graphs.json"), "--model", str(model_dir),
              "--times", "5", "--samples", "5", "--seed", "2", "--out", str(tmp_path / sub)])
    assert (tmp_path / "a/degree_t5.csv").read_bytes() == (tmp_path / "b/degree_t5.csv").read_bytes()
