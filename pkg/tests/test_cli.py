import json
import subprocess
import sys

import numpy as np
import pytest

from missdag import bench
from missdag.bench import ConfigError, ExperimentSpec
from missdag.cli import main
from missdag.files import read_data_csv, read_graph

BENCH_INI = """\
[experiment]
graphs = ER1
d = 4
n = 60
seeds = 0-1
methods = missdag, mean+solver, gaussian_em+solver
rates = 0.0, 0.2
mechanisms = MCAR

[em]
em_iters = 3
"""


@pytest.fixture
def generated(tmp_path):
    out = tmp_path / "gen"
    assert main(["generate", "--out", str(out), "--d", "4", "--n", "120", "--rate", "0.2", "--seed", "1"]) == 0
    return out


def test_generate_outputs(generated):
    manifest = json.loads((generated / "manifest.json").read_text())
    assert manifest["d"] == 4 and manifest["n"] == 120 and manifest["seed"] == 1
    clean = read_data_csv(generated / "clean.csv")
    masked = read_data_csv(generated / "masked.csv")
    assert clean.is_complete and clean.x.shape == (120, 4)
    assert masked.missing_rate == pytest.approx(manifest["missing_rate"])
    assert np.array_equal(masked.x[masked.y], clean.x[masked.y])
    assert read_graph(generated / "truth.csv").shape == (4, 4)


def test_pipeline_run_evaluate_trace(generated, tmp_path, capsys):
    run = tmp_path / "run"
    assert main(["run", "--data", str(generated / "masked.csv"), "--truth", str(generated / "truth.csv"),
                 "--out", str(run), "--em-iters", "3"]) == 0
    for name in ("graph.csv", "weights.csv", "trace.csv", "iterates.csv"):
        assert (run / name).exists()
    score = tmp_path / "score.csv"
    assert main(["evaluate", "--est", str(run / "graph.csv"), "--truth", str(generated / "truth.csv"),
                 "--out", str(score)]) == 0
    row = bench.read_rows(score)[0]
    assert set(row) >= {"shd", "extra", "missing", "reversed", "f1", "shd_cpdag"}
    assert int(row["shd"]) == int(row["extra"]) + int(row["missing"]) + int(row["reversed"])
    assert "shd=" in capsys.readouterr().out
    assert main(["trace", "--run-dir", str(run), "--out", str(tmp_path / "t.csv")]) == 0
    rows = bench.read_rows(tmp_path / "t.csv")
    assert 1 <= len(rows) <= 3
    assert "w_0_1" in rows[0] and "truth_distance" in rows[0]


def test_zero_rate_single_iteration_trace(tmp_path):
    gen = tmp_path / "g"
    assert main(["generate", "--out", str(gen), "--d", "3", "--n", "50", "--rate", "0", "--seed", "2"]) == 0
    run = tmp_path / "r"
    assert main(["run", "--data", str(gen / "masked.csv"), "--out", str(run)]) == 0
    assert main(["trace", "--run-dir", str(run), "--out", str(tmp_path / "t.csv")]) == 0
    assert len(bench.read_rows(tmp_path / "t.csv")) == 1


def test_mask_impute_and_imputed_csv(generated, tmp_path):
    masked = tmp_path / "m.csv"
    assert main(["mask", "--data", str(generated / "clean.csv"), "--out", str(masked), "--rate", "0.3"]) == 0
    data = read_data_csv(masked)
    assert data.missing_rate == pytest.approx(0.3, abs=0.06)
    for method in ("mean", "gaussian_em"):
        imp = tmp_path / f"{method}.csv"
        assert main(["impute", "--data", str(masked), "--out", str(imp), "--method", method]) == 0
        full = read_data_csv(imp)
        assert full.is_complete
        assert np.allclose(full.x[data.y], data.x[data.y])
    run = tmp_path / "imp_run"
    assert main(["run", "--imputed-csv", str(tmp_path / "mean.csv"), "--out", str(run)]) == 0
    assert (run / "graph.csv").exists()


def test_exit_codes(generated, tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[experiment]\ngraphs = ER1\nd = 4\nn = 10\nseeds = 0\nmethods = magic\n")
    assert main(["bench", "--config", str(bad), "--out", str(tmp_path / "b")]) == 1
    assert main(["bench", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path / "b")]) == 1
    assert main(["mask", "--data", str(generated / "masked.csv"), "--out", str(tmp_path / "x.csv")]) == 1
    assert main(["trace", "--run-dir", str(tmp_path), "--out", str(tmp_path / "t.csv")]) == 1
    assert main(["run", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "r")]) == 2
    # every cell fails: listwise deletion with all rows incomplete
    allfail = tmp_path / "fail.ini"
    allfail.write_text("[experiment]\ngraphs = ER1\nd = 30\nn = 5\nseeds = 0\nmethods = listwise+solver\nrates = 0.9\n")
    assert main(["bench", "--config", str(allfail), "--out", str(tmp_path / "f")]) == 2


def test_config_errors_name_fields(tmp_path):
    cases = {
        "[experiment]\ngraphs = ER1\nd = x\nn = 10\nseeds = 0\nmethods = missdag\n": "experiment.d",
        "[experiment]\ngraphs = ER1\nd = 4\nn = 10\nseeds = 0\nmethods = missdag\nbogus = 1\n": "experiment.bogus",
        "[experiment]\ngraphs = ER1\nd = 4\nn = 10\nseeds = 0\nmethods = missdag\n[solver]\nlambda9 = 1\n": "solver.lambda9",
        "[experiment]\ngraphs = ER1\nd = 4\nn = 10\nseeds = 0\nmethods = missdag\nrates = 1.5\n": "experiment.rates",
    }
    for text, field in cases.items():
        p = tmp_path / "c.ini"
        p.write_text(text)
        with pytest.raises(ConfigError, match=field):
            ExperimentSpec.from_config(bench.load_config(p))


def test_json_config_equivalent(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text(BENCH_INI.replace("n = 60", "n = 60  ; samples per seed").replace("[em]", "[em]  # EM settings"))
    js = tmp_path / "c.json"
    js.write_text(json.dumps({
        "experiment": {"graphs": "ER1", "d": 4, "n": 60, "seeds": "0-1",
                       "methods": ["missdag", "mean+solver", "gaussian_em+solver"],
                       "rates": [0.0, 0.2], "mechanisms": "MCAR"},
        "em": {"em_iters": 3},
    }))
    a = ExperimentSpec.from_config(bench.load_config(ini))
    b = ExperimentSpec.from_config(bench.load_config(js))
    assert a == b
    assert a.seeds == (0, 1) and len(a.cells()) == 12


def test_bench_deterministic_and_aggregates(tmp_path):
    cfg = tmp_path / "bench.ini"
    cfg.write_text(BENCH_INI)
    for name in ("a", "b"):
        assert main(["bench", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
    files = sorted(p.name for p in (tmp_path / "a" / "runs").glob("*.csv"))
    assert len(files) == 12
    for f in files:
        assert (tmp_path / "a" / "runs" / f).read_bytes() == (tmp_path / "b" / "runs" / f).read_bytes()
    runs = bench.collect_runs(tmp_path / "a")
    summary = bench.read_rows(tmp_path / "a" / "summary.csv")
    assert len(summary) == 6
    for agg in summary:
        members = [r for r in runs if r["method"] == agg["method"] and float(r["rate"]) == float(agg["rate"])
                   and r["status"] == "ok"]
        assert float(agg["shd_mean"]) == pytest.approx(np.mean([float(r["shd"]) for r in members]))
    # zero missingness: MissDAG and mean imputation fit the same complete data
    by = {(r["method"], r["seed"]): r["shd"] for r in runs if float(r["rate"]) == 0.0}
    for seed in ("0", "1"):
        assert by[("missdag", seed)] == by[("mean+solver", seed)]


def test_bench_threads_match_serial(tmp_path):
    cfg = tmp_path / "bench.ini"
    cfg.write_text(BENCH_INI.replace("seeds = 0-1", "seeds = 3").replace("rates = 0.0, 0.2", "rates = 0.2"))
    assert main(["bench", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 0
    assert main(["bench", "--config", str(cfg), "--out", str(tmp_path / "p"), "--threads", "2"]) == 0
    for p in (tmp_path / "s" / "runs").glob("*.csv"):
        assert p.read_bytes() == (tmp_path / "p" / "runs" / p.name).read_bytes()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "missdag", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "generate" in res.stdout and "bench" in res.stdout
