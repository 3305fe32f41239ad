import csv
import json

import pytest

from quadplan import cli
from quadplan.costing import Weights
from quadplan.query_engine import evaluate_trajectories
from quadplan.occupancy import ZeroField
from quadplan.sampler import generate_candidates
from quadplan.sim import library
from quadplan.sim.scenario import save_dir


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def smoke_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("scn")
    save_dir(library.safety_suite()[:3], d)
    return d


@pytest.fixture(scope="module")
def smoke_run(smoke_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "a"
    code = cli.main(["run", "--scenario-dir", str(smoke_dir), "--duration", "3", "--out", str(out)])
    assert code == 0
    return out


def test_run_writes_rows(smoke_run):
    assert len(rows(smoke_run / "metrics.csv")) == 3
    assert len(rows(smoke_run / "summary.csv")) == 1
    traces = sorted(p.name for p in (smoke_run / "traces").glob("*.csv"))
    assert "cut_in.csv" in traces and "cut_in_expert.csv" in traces and "cut_in_fan.csv" in traces
    cfg = json.loads((smoke_run / "run_config.json").read_text())
    assert cfg["planner"] == "quad" and cfg["duration"] == 3.0


def test_rerun_is_byte_identical(smoke_run, smoke_dir, tmp_path):
    out = tmp_path / "b"
    assert cli.main(["run", "--scenario-dir", str(smoke_dir), "--duration", "3", "--out", str(out)]) == 0
    for name in ("metrics.csv", "summary.csv", "traces/cut_in.csv", "traces/cut_in_fan.csv"):
        assert (out / name).read_bytes() == (smoke_run / name).read_bytes()


def test_open_loop_mode(smoke_dir, tmp_path):
    out = tmp_path / "open"
    assert cli.main(["run", "--scenario-dir", str(smoke_dir), "--duration", "2", "--mode", "open",
                     "--out", str(out)]) == 0
    assert all(r["replans"] == "4" for r in rows(out / "metrics.csv"))


def test_config_errors_exit_1(tmp_path, smoke_dir):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert cli.main(["run", "--scenario-dir", str(empty), "--out", str(tmp_path / "x")]) == 1
    assert cli.main(["run", "--scenario-dir", str(tmp_path / "missing")]) == 1
    assert cli.main(["run", "--suite", "safety", "--planner", "ablation:nope"]) == 1
    assert cli.main(["run", "--suite", "safety", "--quantization-res", "0"]) == 1
    assert cli.main(["run", "--suite", "safety", "--weights", str(tmp_path / "nope.json")]) == 1
    assert cli.main(["run"]) == 1
    bad = tmp_path / "cfg.json"
    bad.write_text(json.dumps({"bogus": 1}))
    assert cli.main(["run", "--config", str(bad)]) == 1
    assert cli.main(["ablate", "--scenario-dir", str(smoke_dir), "--cost", "nope"]) == 1
    assert cli.main(["bench", "--resolutions", "0.5,-1"]) == 1
    assert cli.main(["train", "--init", str(tmp_path / "nope.json")]) == 1
    assert cli.main(["plot", str(tmp_path / "missing")]) == 1
    assert cli.main(["nonsense"]) == 1


def test_runtime_errors_exit_2(tmp_path, smoke_dir, monkeypatch):
    broken = tmp_path / "broken"
    broken.mkdir()
    (broken / "metrics.csv").write_text("scenario\ncut_in\n")
    (broken / "summary.csv").write_text("planner\nquad\n")
    assert cli.main(["plot", str(broken)]) == 2

    def boom(*a, **k):
        raise RuntimeError("simulated failure")
    monkeypatch.setattr(cli, "run_scenarios", boom)
    assert cli.main(["run", "--scenario-dir", str(smoke_dir), "--out", str(tmp_path / "r")]) == 2


def test_quad_seed_env(monkeypatch):
    monkeypatch.setenv("QUAD_SEED", "7")
    assert cli.env_seed() == 7
    monkeypatch.setenv("QUAD_SEED", "x")
    with pytest.raises(cli.ConfigError):
        cli.env_seed()


def test_config_file_and_flag_override(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"suite": "safety", "sigma": 0.1, "planner": "expert"}))
    cfg = cli._build_cfg(str(p), sigma=0.3, planner=None)
    assert cfg.sigma == 0.3 and cfg.planner == "expert" and cfg.suite == "safety"


def test_plot_outputs(smoke_run):
    assert cli.main(["plot", str(smoke_run)]) == 0
    figs = sorted((smoke_run / "figures").glob("*.png"))
    assert len(figs) == 3 + 1
    first = {f.name: f.read_bytes() for f in figs}
    assert cli.main(["plot", str(smoke_run)]) == 0
    assert {f.name: f.read_bytes() for f in sorted((smoke_run / "figures").glob("*.png"))} == first


def test_ablate_none_has_zero_deltas(smoke_dir, tmp_path):
    out = tmp_path / "abl"
    assert cli.main(["ablate", "--scenario-dir", str(smoke_dir), "--duration", "2", "--cost", "none",
                     "--out", str(out)]) == 0
    (r,) = rows(out / "ablation.csv")
    assert r["dropped"] == "none"
    assert all(float(v) == 0.0 for k, v in r.items() if k.startswith("d_"))


def test_bench_counts_match_instrumentation(tmp_path):
    out = tmp_path / "bench"
    assert cli.main(["bench", "--n-actors", "50", "--resolutions", "0.5,2", "--repeats", "1",
                     "--out", str(out)]) == 0
    rs = {(r["mode"], float(r["resolution"] or 0)): r for r in rows(out / "bench.csv")}
    cont, q05, q2 = rs[("continuous", 0.0)], rs[("quantized", 0.5)], rs[("quantized", 2.0)]
    assert int(q05["unique_queries"]) < int(cont["unique_queries"])
    assert int(q2["unique_queries"]) < int(q05["unique_queries"])
    scn = library.crowded(50, 0)
    cands = generate_candidates(scn.ego_state(), scn.lane_map())
    table = evaluate_trajectories(cands, ZeroField(), 0.5)
    assert int(q05["raw_points"]) == table.stats.raw_points == int(cont["raw_points"])
    assert int(q05["unique_queries"]) == table.stats.unique_keys == int(q05["field_evaluations"])


def test_train_small(tmp_path):
    d = tmp_path / "scn"
    scn = library.empty_road(duration=1.0)
    save_dir([scn], d)
    Weights().save(tmp_path / "teacher.json")
    out = tmp_path / "train"
    assert cli.main(["train", "--scenario-dir", str(d), "--teacher", str(tmp_path / "teacher.json"),
                     "--epochs", "5", "--sigma", "0", "--out", str(out)]) == 0
    assert Weights.load(out / "weights.json")
    assert (out / "dataset.npz").is_file() and rows(out / "loss.csv")
