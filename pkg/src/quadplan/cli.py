"""Command-line entry point: run, bench, train, ablate, plot.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""
from __future__ import annotations

import dataclasses
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import click
import numpy as np

from .costing import Weights
from .planner import ABLATIONS, PlannerConfig, ablated, parse_planner
from .sampler import SamplerConfig

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
SUITES = ("safety", "training", "eval")
METRIC_COLUMNS = ("gsr", "ecr", "pcr", "tvr", "min_ttc_p10", "progress", "l2e", "p2p", "jerk")


class ConfigError(Exception):
    pass


def env_seed(default: int = 0) -> int:
    v = os.environ.get("QUAD_SEED")
    if v is None or v == "":
        return default
    try:
        return int(v)
    except ValueError:
        raise ConfigError(f"QUAD_SEED must be an integer, got {v!r}") from None


@dataclass
class RunConfig:
    planner: str = "quad"
    weights: Optional[str] = None
    sampler: dict = field(default_factory=dict)
    quantization_res: Optional[float] = 0.5
    sigma: float = 0.25
    seed: int = 0
    scenario_dir: Optional[str] = None
    suite: Optional[str] = None
    out: str = "runs/out"
    duration: Optional[float] = None
    mode: str = "closed"
    jobs: int = 1
    expert_reference: bool = True

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {path} does not exist")
        try:
            d = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path}: invalid JSON ({e})") from None
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def override(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **{k: v for k, v in kw.items() if v is not None})

    def validate(self) -> "RunConfig":
        try:
            parse_planner(self.planner)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if self.quantization_res is not None and not self.quantization_res > 0:
            raise ConfigError("quantization resolution must be > 0")
        if self.sigma < 0:
            raise ConfigError("sigma must be >= 0")
        if self.weights is not None and not Path(self.weights).is_file():
            raise ConfigError(f"weights file {self.weights} does not exist")
        if self.scenario_dir is None and self.suite is None:
            raise ConfigError("give --scenario-dir or --suite")
        if self.scenario_dir is not None and not Path(self.scenario_dir).is_dir():
            raise ConfigError(f"scenario directory {self.scenario_dir} does not exist")
        if self.suite is not None and self.suite not in SUITES:
            raise ConfigError(f"unknown suite {self.suite}; choose from {SUITES}")
        if self.mode not in ("closed", "open"):
            raise ConfigError("mode must be 'closed' or 'open'")
        if self.duration is not None and not 0 < self.duration <= 20.0:
            raise ConfigError("duration must be in (0, 20] s")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        try:
            SamplerConfig.from_dict(self.sampler)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad sampler config: {e}") from None
        return self

    def planner_config(self) -> PlannerConfig:
        return PlannerConfig(sampler=SamplerConfig.from_dict(self.sampler),
                             quantization_res=self.quantization_res)

    def load_weights(self) -> Weights:
        if self.weights is None:
            return Weights()
        try:
            return Weights.load(self.weights)
        except (ValueError, KeyError, json.JSONDecodeError) as e:
            raise ConfigError(f"bad weights file {self.weights}: {e}") from None

    def to_dict(self):
        return dataclasses.asdict(self)


# ---------------------------------------------------------------- helpers

def load_scenarios(cfg: RunConfig):
    from .sim import library
    from .sim.scenario import ScenarioError, load_dir
    if cfg.scenario_dir is not None:
        try:
            scns = load_dir(cfg.scenario_dir)
        except ScenarioError as e:
            raise ConfigError(str(e)) from None
    else:
        scns = {"safety": library.safety_suite, "training": library.training_suite,
                "eval": library.eval_variants}[cfg.suite]()
    out = []
    for s in scns:
        d = s.to_dict()
        d["seed"] = int(d["seed"]) + cfg.seed
        if cfg.duration is not None:
            d["duration"] = cfg.duration
        out.append(type(s).from_dict(d))
    return out


def make_policy(cfg: RunConfig, drop: Optional[str] = None):
    from .sim.loop import ExpertPolicy, QuadPolicy
    kind, name = parse_planner(cfg.planner)
    if kind == "expert":
        return ExpertPolicy()
    w = cfg.load_weights()
    drop = drop or name
    label = cfg.planner
    if drop and drop != "none":
        w = ablated(w, drop)
        label = f"ablation:{drop}"
    return QuadPolicy(w, cfg.planner_config(), cfg.sigma, name=label)


def _run_one(args):
    """Worker: one scenario, isolated; returns plain data only."""
    from .sim.loop import ExpertPolicy, run_closed_loop, run_open_loop
    cfg, scn, drop = args
    policy = make_policy(cfg, drop)
    expert_trace = None
    if cfg.mode == "closed" and cfg.expert_reference and not isinstance(policy, ExpertPolicy):
        expert_trace = run_closed_loop(scn, ExpertPolicy()).trace
    if cfg.mode == "open":
        res = run_open_loop(scn, policy)
    else:
        res = run_closed_loop(scn, policy, expert_trace=expert_trace)
    first = {}
    if res.plans:
        first["actors"] = res.actor_plans[0]
    return {"metrics": res.metrics, "times": res.times, "trace": res.trace,
            "expert_trace": expert_trace, "stats": res.stats, "first": first,
            "scenario": scn}


def run_scenarios(cfg: RunConfig, scenarios, drop: Optional[str] = None) -> list:
    jobs = [(cfg, s, drop) for s in scenarios]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            return list(ex.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


def _fan_and_grid(cfg: RunConfig, scn, out_dir: Path):
    """First-replan candidate fan and an occupancy grid dump for plotting."""
    from .occupancy import GridField, OracleField
    from .planner import plan
    from .sim import report
    lm = scn.lane_map()
    ego = scn.ego_state()
    tracks = [a.plan(5.0, 0.5, others=[]) for a in scn.build_actors()]
    fld = OracleField(tracks, cfg.sigma) if tracks else None
    w = cfg.load_weights() if parse_planner(cfg.planner)[0] != "expert" else Weights()
    from .occupancy import ZeroField
    res = plan(ego, lm, fld or ZeroField(), w, cfg.planner_config())
    report.write_fan(out_dir / f"{scn.name}_fan.csv", res.candidates, res.totals)
    report.write_actors(out_dir / f"{scn.name}_actors.csv", tracks)
    x, y = ego.pose.x, ego.pose.y
    region = (x - 20.0, y - 12.0, x + 140.0, y + 12.0)
    grid = GridField.build(fld or ZeroField(), region, 1.0, [0.0, 2.5, 5.0])
    grid.to_csv(out_dir / f"{scn.name}_grid.csv")


def write_run(cfg: RunConfig, results: list, out: Path, planner_label: str, artifacts: bool = True):
    from .sim import report
    from .sim.metrics import aggregate
    out.mkdir(parents=True, exist_ok=True)
    metrics = [r["metrics"] for r in results]
    report.write_metrics(out / "metrics.csv", metrics)
    summ = aggregate(metrics, planner_label)
    report.write_summary(out / "summary.csv", [summ])
    if artifacts:
        tdir = out / "traces"
        tdir.mkdir(exist_ok=True)
        for r in results:
            name = r["scenario"].name
            report.write_trace(tdir / f"{name}.csv", r["times"], r["trace"])
            if r["expert_trace"] is not None:
                et = r["expert_trace"]
                report.write_trace(tdir / f"{name}_expert.csv", np.arange(len(et)) * 0.5, et)
            _fan_and_grid(cfg, r["scenario"], tdir)
        (out / "run_config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True),
                                             encoding="utf-8")
    return summ


def _write_metadata(out: Path, command: str, extra: Optional[dict] = None):
    meta = {"command": command, "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S")}
    meta.update(extra or {})
    (out / "metadata.json").write_text(json.dumps(meta, indent=1, sort_keys=True), encoding="utf-8")


def _build_cfg(config, **kw) -> RunConfig:
    base = RunConfig.from_file(config) if config else RunConfig()
    if kw.get("seed") is None and not (config and "seed" in json.loads(Path(config).read_text())):
        kw["seed"] = env_seed(base.seed)
    if kw.get("sampler_config"):
        p = Path(kw["sampler_config"])
        if not p.is_file():
            raise ConfigError(f"sampler config {p} does not exist")
        kw["sampler"] = json.loads(p.read_text(encoding="utf-8"))
    kw.pop("sampler_config", None)
    return base.override(**kw).validate()


# ---------------------------------------------------------------- commands

@click.group()
def cli():
    """Sample-based highway planner with implicit occupancy queries."""


_common = [
    click.option("--config", type=str, default=None, help="JSON RunConfig file; flags override it."),
    click.option("--scenario-dir", type=str, default=None, help="Directory of scenario JSON files."),
    click.option("--suite", type=str, default=None, help="Built-in suite: safety | training | eval."),
    click.option("--weights", type=str, default=None, help="Weights JSON file."),
    click.option("--sampler-config", type=str, default=None, help="SamplerConfig JSON file."),
    click.option("--quantization-res", type=float, default=None, help="Query cell size in m."),
    click.option("--sigma", type=float, default=None, help="Oracle boundary softness in m."),
    click.option("--seed", type=int, default=None, help="Seed offset (falls back to QUAD_SEED)."),
    click.option("--duration", type=float, default=None, help="Override scenario duration (s)."),
    click.option("--jobs", type=int, default=None, help="Scenarios run in parallel."),
    click.option("--out", type=str, default=None, help="Output directory."),
]


def common(f):
    for opt in reversed(_common):
        f = opt(f)
    return f


@cli.command()
@common
@click.option("--planner", type=str, default=None, help="quad | expert | ablation:<cost>.")
@click.option("--mode", type=click.Choice(["closed", "open"]), default=None)
@click.option("--no-expert-reference", is_flag=True, help="Skip the expert run used for L2E.")
def run(config, planner, mode, no_expert_reference, **kw):
    """Run scenarios closed or open loop; write metrics, summary and traces."""
    cfg = _build_cfg(config, planner=planner, mode=mode,
                     expert_reference=False if no_expert_reference else None, **kw)
    scns = load_scenarios(cfg)
    out = Path(cfg.out)
    results = run_scenarios(cfg, scns)
    summ = write_run(cfg, results, out, cfg.planner)
    _write_metadata(out, "run", {"n_scenarios": len(scns)})
    click.echo(f"{len(scns)} scenarios  GSR {summ.gsr:.3f}  ECR {summ.ecr:.3f}  PCR {summ.pcr:.3f}  "
               f"TVR {summ.tvr:.3f}  MinTTC p10 {summ.min_ttc_p10:.2f}  Progr {summ.progress:.1f}")


@cli.command()
@common
@click.option("--cost", "costs", multiple=True, help="Dropped cost (repeatable); 'all' or 'none'.")
def ablate(config, costs, **kw):
    """Run the baseline and each single-cost ablation; write a delta table."""
    from .sim import report
    cfg = _build_cfg(config, planner="quad", **kw)
    costs = list(costs) or ["all"]
    if "all" in costs:
        costs = sorted(ABLATIONS)
    for c in costs:
        if c != "none" and c not in ABLATIONS:
            raise ConfigError(f"unknown cost '{c}'; choose from {sorted(ABLATIONS)} or none")
    scns = load_scenarios(cfg)
    out = Path(cfg.out)
    base_res = run_scenarios(cfg, scns)
    base = write_run(cfg, base_res, out / "baseline", "quad", artifacts=False)
    rows = []
    goal_idx = [i for i, s in enumerate(scns) if s.goal is not None]
    base_goal = sum(base_res[i]["metrics"].success for i in goal_idx)
    for c in costs:
        res = base_res if c == "none" else run_scenarios(cfg, scns, drop=c)
        s = write_run(cfg, res, out / f"no_{c}", f"ablation:{c}", artifacts=False)
        row = {"dropped": c}
        for m in METRIC_COLUMNS:
            row[m] = getattr(s, m)
            row[f"d_{m}"] = getattr(s, m) - getattr(base, m)
        row["collisions"] = s.collisions
        row["d_collisions"] = s.collisions - base.collisions
        g = sum(res[i]["metrics"].success for i in goal_idx)
        row["goal_successes"] = g
        row["d_goal_successes"] = g - base_goal
        rows.append(row)
        click.echo(f"{c:12s} dECR {row['d_ecr']:+.3f}  dProgr {row['d_progress']:+.1f}  "
                   f"dGSR {row['d_gsr']:+.3f}  dGoal {row['d_goal_successes']:+d}")
    cols = ["dropped"] + [x for m in METRIC_COLUMNS for x in (m, f"d_{m}")] + \
        ["collisions", "d_collisions", "goal_successes", "d_goal_successes"]
    report.write_rows(out / "ablation.csv", rows, cols)
    _write_metadata(out, "ablate", {"costs": costs})


@cli.command()
@click.option("--n-actors", type=int, default=60, show_default=True)
@click.option("--resolutions", type=str, default="0.1,0.25,0.5,1,2", show_default=True)
@click.option("--repeats", type=int, default=3, show_default=True)
@click.option("--sigma", type=float, default=0.25, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=str, default="runs/bench", show_default=True)
def bench(n_actors, resolutions, repeats, sigma, seed, out):
    """Profile one crowded planning step across query modes."""
    from .sim import report
    from .sim.library import crowded
    try:
        res_list = [float(r) for r in resolutions.split(",") if r.strip()]
    except ValueError:
        raise ConfigError("resolutions must be comma-separated numbers") from None
    if not res_list or any(r <= 0 for r in res_list):
        raise ConfigError("resolutions must be > 0")
    if n_actors < 1 or repeats < 1:
        raise ConfigError("n-actors and repeats must be >= 1")
    seed = env_seed(0) if seed is None else seed
    rows = bench_rows(crowded(n_actors, seed), res_list, repeats, sigma)
    outp = Path(out)
    outp.mkdir(parents=True, exist_ok=True)
    report.write_rows(outp / "bench.csv", rows)
    _write_metadata(outp, "bench", {"n_actors": n_actors})
    for r in rows:
        click.echo(f"{r['mode']:10s} res={r['resolution']!s:6s} raw={r['raw_points']:8d} "
                   f"unique={r['unique_queries']:8d} total={1000 * r['t_total']:8.1f} ms")


def bench_rows(scn, resolutions, repeats: int = 3, sigma: float = 0.25) -> list:
    """Best-of-``repeats`` stage timings for one planning step in each query mode."""
    from .costing import compute_features
    from .occupancy import CountingField, GridField, OracleField
    from .planner import plan
    from .query_engine import evaluate_trajectories
    lm = scn.lane_map()
    ego = scn.ego_state()
    actors = scn.build_actors()
    tracks = [a.plan(5.0, 0.5, others=actors) for a in actors]
    w = Weights()
    rows = []

    def timed(res):
        best = None
        for _ in range(repeats):
            fld = CountingField(OracleField(tracks, sigma))
            r = plan(ego, lm, fld, w, PlannerConfig(quantization_res=res))
            cand = (r.timings, r.stats, fld.evaluations)
            if best is None or cand[0]["total"] < best[0]["total"]:
                best = cand
        t, st, ev = best
        return {"mode": "continuous" if res is None else "quantized", "resolution": res if res else "",
                "raw_points": st.raw_points, "unique_queries": st.unique_keys,
                "field_evaluations": ev, "t_sample": t["sample"], "t_query": t["query"],
                "t_cost": t["cost"], "t_build": 0.0, "t_total": t["total"]}

    rows.append(timed(None))
    for res in resolutions:
        rows.append(timed(res))
    # dense-grid baseline: rasterise the whole candidate envelope, then look up
    from .sampler import generate_candidates
    cands = generate_candidates(ego, lm)
    xy = np.concatenate([c.states[:, :2] for c in cands])
    region = (xy[:, 0].min() - 6.0, xy[:, 1].min() - 6.0, xy[:, 0].max() + 6.0, xy[:, 1].max() + 6.0)
    best = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        grid = GridField.build(OracleField(tracks, sigma), region, 0.5, np.arange(11) * 0.5)
        t1 = time.perf_counter()
        table = evaluate_trajectories(cands, grid, 0.5)
        t2 = time.perf_counter()
        compute_features(cands, lm, table)
        t3 = time.perf_counter()
        cand = (t1 - t0, t2 - t1, t3 - t2, table.stats, grid.values.size)
        if best is None or sum(cand[:3]) < sum(best[:3]):
            best = cand
    tb, tq, tc, st, cells = best
    rows.append({"mode": "dense_grid", "resolution": 0.5, "raw_points": st.raw_points,
                 "unique_queries": st.unique_keys, "field_evaluations": cells, "t_sample": 0.0,
                 "t_query": tq, "t_cost": tc, "t_build": tb, "t_total": tb + tq + tc})
    return rows


@cli.command()
@click.option("--suite", type=str, default="training", show_default=True)
@click.option("--scenario-dir", type=str, default=None)
@click.option("--init", "init_path", type=str, default=None, help="Initial weights JSON.")
@click.option("--teacher", type=str, default=None,
              help="Weights JSON of a demonstrator planner; default is the rule-based expert.")
@click.option("--iterations", type=int, default=1, show_default=True)
@click.option("--epochs", type=int, default=300, show_default=True)
@click.option("--lr", type=float, default=10.0, show_default=True)
@click.option("--sigma", type=float, default=0.25, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=str, default="runs/train", show_default=True)
def train(suite, scenario_dir, init_path, teacher, iterations, epochs, lr, sigma, seed, out):
    """Fit cost weights by max-margin imitation with dataset aggregation."""
    from . import learn
    from .sim.loop import ExpertPolicy
    if iterations < 0 or epochs < 0 or lr <= 0:
        raise ConfigError("iterations/epochs must be >= 0 and lr > 0")
    for p in (init_path, teacher):
        if p is not None and not Path(p).is_file():
            raise ConfigError(f"weights file {p} does not exist")
    cfg = RunConfig(suite=None if scenario_dir else suite, scenario_dir=scenario_dir, sigma=sigma,
                    seed=env_seed(0) if seed is None else seed).validate()
    scns = load_scenarios(cfg)
    init = Weights.load(init_path) if init_path else Weights()
    pcfg = PlannerConfig()
    if teacher:
        w_star = Weights.load(teacher)
        labeler = learn.TeacherLabeler(w_star, pcfg, sigma)
        driver = labeler.policy
    else:
        labeler = learn.ExpertLabeler()
        driver = ExpertPolicy()
    outp = Path(out)
    outp.mkdir(parents=True, exist_ok=True)

    def log(it, n, fit):
        click.echo(f"iteration {it}: {n} examples, best train loss {fit.best_train_loss[-1]:.6f}")

    w, ds, fits = learn.train(scns, init, labeler, driver,
                              learn.TrainConfig(iterations, learn.FitConfig(epochs, lr), sigma),
                              pcfg, log=log)
    w.save(outp / "weights.json")
    ds.save(outp / "dataset.npz")
    from .sim import report
    rows = [{"iteration": i, "epoch": k, "train_loss": l, "best_train_loss": b}
            for i, f in enumerate(fits) for k, (l, b) in enumerate(zip(f.train_loss, f.best_train_loss))]
    report.write_rows(outp / "loss.csv", rows, ("iteration", "epoch", "train_loss", "best_train_loss"))
    rate = learn.match_rate(ds.examples, w)
    _write_metadata(outp, "train", {"examples": len(ds), "match_rate": rate})
    click.echo(f"wrote {outp / 'weights.json'}  (train match rate {rate:.3f})")


@cli.command()
@click.argument("run_dir", type=str)
def plot(run_dir):
    """Render trace/fan figures per scenario plus a metric summary chart."""
    from . import plots
    p = Path(run_dir)
    if not p.is_dir() or not (p / "metrics.csv").is_file():
        raise ConfigError(f"{run_dir} is not a run directory (no metrics.csv)")
    files = plots.render_run(p)
    click.echo(f"wrote {len(files)} images to {p / 'figures'}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="quadplan", standalone_mode=False)
        return EXIT_OK
    except click.exceptions.Exit as e:
        return int(e.exit_code or 0)
    except (ConfigError, click.UsageError, click.BadParameter) as e:
        click.echo(f"error: {e.format_message() if hasattr(e, 'format_message') else e}", err=True)
        return EXIT_CONFIG
    except click.Abort:
        return EXIT_RUNTIME
    except Exception as e:  # runtime failure
        click.echo(f"runtime error: {e!r}", err=True)
        return EXIT_RUNTIME


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
