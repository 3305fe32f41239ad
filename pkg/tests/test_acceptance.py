"""Acceptance suite: one PASS/FAIL line per criterion (see the terminal summary).

The closed-loop criteria share one cache of suite runs; the whole file takes
several minutes on a single core.
"""
import math
import time

import numpy as np
import pytest

from helpers import ego_at, verdict
from oracles import agnostic_oracle, aware_oracle, dense_signed_distance
from quadplan import cli, learn
from quadplan.costing import F, FEATURES, Weights, compute_features
from quadplan.occupancy import ActorTrack, OracleField
from quadplan.planner import PlannerConfig
from quadplan.query_engine import evaluate_trajectories
from quadplan.sampler import generate_candidates
from quadplan.sim import library
from quadplan.sim.metrics import TTC_CAP
from quadplan.world import (Polyline, bicycle_step, curved_highway, highway_with_ramp,
                            project_to_polyline, straight_highway)

pytestmark = pytest.mark.acceptance

_RUNS = {}


def suite_run(planner="quad", res=0.5, drop=None):
    """Metrics of the 10-scenario safety suite, cached per configuration."""
    key = (planner, res, drop)
    if key not in _RUNS:
        cfg = cli.RunConfig(planner=planner, suite="safety", quantization_res=res,
                            expert_reference=False).validate()
        scns = cli.load_scenarios(cfg)
        _RUNS[key] = (scns, [r["metrics"] for r in cli.run_scenarios(cfg, scns, drop)])
    return _RUNS[key]


# ---------------------------------------------------------------- 1

def test_c1_quantization_reduction():
    lm = straight_highway(3)
    ego = ego_at(y=3.5, speed=20.0)
    cands = generate_candidates(ego, lm)
    tracks = [ActorTrack([0, 5], [[30, 3.5], [100, 3.5]], [0, 0]), ActorTrack.static(60, 0.0)]
    t0 = time.perf_counter()
    table = evaluate_trajectories(cands, OracleField(tracks))
    dt = time.perf_counter() - t0
    st = table.stats
    ratio = st.unique_keys / st.raw_points
    ok = len(cands) >= 200 and st.raw_points >= 5e5 and ratio <= 0.05 and dt < 10.0
    verdict(1, ok, f"{len(cands)} candidates, raw {st.raw_points}, unique {st.unique_keys}, "
                   f"ratio {ratio:.4f} (<= 0.05), {dt:.2f} s (< 10 s)")


# ---------------------------------------------------------------- 2

def test_c2_runtime_ordering():
    scn = library.crowded(60, 0)
    assert len(scn.actors) >= 50
    rows = {r["mode"]: r for r in cli.bench_rows(scn, [0.5], repeats=3)}
    cont, quant, dense = rows["continuous"], rows["quantized"], rows["dense_grid"]
    dense_bq = dense["t_build"] + dense["t_query"]
    ok = quant["t_total"] <= cont["t_total"] / 1.5 and dense_bq >= quant["t_total"]
    verdict(2, ok, f"quantized {1000 * quant['t_total']:.0f} ms vs continuous "
                   f"{1000 * cont['t_total']:.0f} ms ({cont['t_total'] / quant['t_total']:.1f}x, >= 1.5x); "
                   f"dense build+query {1000 * dense_bq:.0f} ms (>= quantized)")


# ---------------------------------------------------------------- 3

def test_c3_resolution_vs_safety():
    ecr = {r: sum(m.collided for m in suite_run(res=r)[1]) for r in (0.1, 0.5, 2.0)}
    ok = ecr[0.5] <= ecr[2.0] and ecr[0.1] <= ecr[0.5] + 1
    verdict(3, ok, f"collisions at 0.1/0.5/2 m: {ecr[0.1]}/{ecr[0.5]}/{ecr[2.0]} of 10")


# ---------------------------------------------------------------- 4

def test_c4_subcost_ablations():
    scns, base = suite_run()
    _, no_col = suite_run(drop="collision")
    _, no_prog = suite_run(drop="progress")
    _, no_route = suite_run(drop="route")
    d_col = sum(m.collided for m in no_col) - sum(m.collided for m in base)
    p0 = np.mean([m.progress for m in base])
    p1 = np.mean([m.progress for m in no_prog])
    goal = [i for i, s in enumerate(scns) if s.goal is not None]
    g0 = sum(base[i].success for i in goal)
    g1 = sum(no_route[i].success for i in goal)
    ok = d_col >= 1 and p1 <= 0.8 * p0 and g0 - g1 >= 2
    verdict(4, ok, f"drop collision +{d_col} collisions (>= 1); drop progress "
                   f"{100 * (p1 / p0 - 1):+.0f}% progress (<= -20%); drop route "
                   f"{g1 - g0:+d} goals of {len(goal)} (<= -2)")


# ---------------------------------------------------------------- 5

def _random_trajectories(rng, n=100):
    maps = [straight_highway(3).with_route(["L1"]), curved_highway(3),
            highway_with_ramp(2).with_route(["L0a", "L0b", "L1"])]
    pool = []
    while len(pool) < 6 * n:
        k = int(rng.integers(len(maps)))
        lm = maps[k]
        lid = lm.ids[int(rng.integers(len(lm.ids)))]
        c = lm.lanes[lid].centerline
        s = rng.uniform(0.05, 0.4) * c.length
        x, y, h, _ = c.frenet_to_xy(np.array([s]), np.array([rng.uniform(-1.0, 1.0)]))
        ego = ego_at(float(x[0]), float(y[0]), float(h[0]), speed=rng.uniform(0, 30),
                     accel=rng.uniform(-2, 2), curvature=0.0)
        try:
            cands = generate_candidates(ego, lm)
        except ValueError:
            continue
        for i in rng.choice(len(cands), min(6, len(cands)), replace=False):
            pool.append((k, lm, cands[i], ego))
    return [pool[i] for i in rng.choice(len(pool), n, replace=False)]


def _random_tracks(rng, ego, n=4):
    out = []
    for _ in range(n):
        x0 = ego.pose.x + rng.uniform(-10, 60) * math.cos(ego.pose.heading)
        y0 = ego.pose.y + rng.uniform(-10, 60) * math.sin(ego.pose.heading) + rng.uniform(-5, 5)
        v = rng.uniform(-5, 25)
        h = ego.pose.heading + rng.uniform(-0.3, 0.3)
        end = [x0 + 5 * v * math.cos(h), y0 + 5 * v * math.sin(h)]
        out.append(ActorTrack([0, 5], [[x0, y0], end], [h, h + rng.uniform(-0.2, 0.2)],
                              rng.uniform(3, 6), rng.uniform(1.5, 2.5)))
    return out


def test_c5_cost_oracle_equivalence():
    rng = np.random.default_rng(2024)
    picks = _random_trajectories(rng)
    agn_err = 0.0
    for _, lm, traj, _ in picks:
        got = compute_features([traj], lm, evaluate_trajectories([traj], OracleField([], 0.25))).features[0]
        want = agnostic_oracle(traj.states, lm, traj.base_lane)
        agn_err = max(agn_err, max(abs(got[F[k]] - v) for k, v in want.items()))
    aware_err, hits = 0.0, 0
    for _, lm, traj, ego in picks:
        tracks = _random_tracks(rng, ego)
        table = evaluate_trajectories([traj], OracleField(tracks, 0.25), 0.5, grid_res=0.05)
        got = compute_features([traj], lm, table).features[0]
        col, bl, bt, _ = aware_oracle(traj.states, tracks, 0.25, grid=0.05, q=0.5)
        aware_err = max(aware_err, abs(got[F["col"]] - col), abs(got[F["buf_long"]] - bl),
                        abs(got[F["buf_lat"]] - bt))
        hits += col > 1.0
    ok = agn_err <= 1e-9 and aware_err <= 1e-6
    verdict(5, ok, f"{len(picks)} trajectories: agnostic max error {agn_err:.2e} (<= 1e-9), "
                   f"agent-aware max error {aware_err:.2e} (<= 1e-6, {hits} with collision cost > 1)")


# ---------------------------------------------------------------- 6

def test_c6_max_margin_correctness():
    from test_learn import _pattern, random_example
    NF = len(FEATURES)
    f = np.zeros((2, NF))
    f[1, F["prog"]] = -1.0
    ex = learn.TrainingExample(f, np.zeros((2, 10)), np.array([0.0, 0.5]), np.zeros((2, 10)), 0)
    hand = learn.max_margin_loss(ex, np.eye(NF)[F["prog"]])[0]
    rng = np.random.default_rng(11)
    neg, chord, fd, checked = 0, 0.0, 0.0, 0
    for _ in range(300):
        ex = random_example(rng)
        a, b = rng.normal(size=NF) * 3, rng.normal(size=NF) * 3
        la, lb = learn.max_margin_loss(ex, a)[0], learn.max_margin_loss(ex, b)[0]
        neg += la < 0
        lam = rng.random()
        chord = max(chord, learn.max_margin_loss(ex, lam * a + (1 - lam) * b)[0] - (lam * la + (1 - lam) * lb))
        g = learn.max_margin_loss(ex, a)[1]
        h = 1e-6
        for i in range(NF):
            e = np.eye(NF)[i] * h
            if _pattern(ex, a + e) != _pattern(ex, a) or _pattern(ex, a - e) != _pattern(ex, a):
                continue
            num = (learn.max_margin_loss(ex, a + e)[0] - learn.max_margin_loss(ex, a - e)[0]) / (2 * h)
            fd = max(fd, abs(num - g[i]))
            checked += 1
    ok = hand == pytest.approx(1.5, abs=1e-12) and neg == 0 and chord <= 1e-9 and fd <= 1e-6
    verdict(6, ok, f"hand example {hand:.6f} (1.5); negatives {neg}; chord excess {chord:.1e} "
                   f"(<= 1e-9); subgradient vs finite difference {fd:.1e} over {checked} slopes (<= 1e-6)")


# ---------------------------------------------------------------- 7

def test_c7_learning_closes_the_loop():
    w_star = Weights()
    pcfg = PlannerConfig()
    teacher = learn.TeacherLabeler(w_star, pcfg, sigma=0.0)
    train_scns = library.training_suite()
    train_all = learn.collect(train_scns, teacher.policy, teacher, w_star, 0, pcfg, 0.0)
    held_out = learn.collect(library.safety_suite(), teacher.policy, teacher, w_star, 0, pcfg, 0.0)
    train = learn.realizable_subset(train_all, w_star)
    rng = np.random.default_rng(0)
    init = Weights.from_array(w_star.as_array() * rng.uniform(0.5, 2.0, len(FEATURES)))
    fit = learn.fit_weights(train, init, learn.FitConfig())
    w1 = fit.weights
    loss = learn.dataset_loss(train, w1)[0]
    m1 = learn.match_rate(held_out, w1)
    new = learn.aggregate(learn.AggregatedDataset(), w1, train_scns, 1, teacher, pcfg, 0.0)
    assert all(ex.iteration == 1 for ex in new)
    combined = learn.AggregatedDataset(train + learn.realizable_subset(new.examples, w_star))
    w2 = learn.fit_weights(combined.examples, w1, learn.FitConfig()).weights
    m2 = learn.match_rate(held_out, w2)
    ok = len(train_scns) == 20 and loss <= 1e-6 and m1 >= 0.9 and m2 >= m1 - 0.05
    verdict(7, ok, f"{len(train)}/{len(train_all)} realizable states from {len(train_scns)} scenarios; "
                   f"train loss {loss:.1e} (<= 1e-6); held-out match {100 * m1:.1f}% (>= 90%) "
                   f"-> {100 * m2:.1f}% after one aggregation round (drop <= 5 points)")


# ---------------------------------------------------------------- 8

def test_c8_closed_loop_safety():
    _, quad = suite_run()
    _, expert = suite_run(planner="expert")
    q_col = sum(m.collided for m in quad)
    e_col = sum(m.collided for m in expert)
    p10 = float(np.percentile([m.min_ttc for m in quad], 10))
    clean = [m for m in quad + expert if not m.collided and not m.plan_collided]
    capped = all(m.min_ttc == TTC_CAP for m in clean)
    ok = q_col == 0 and p10 >= 1.0 and e_col == 0 and capped and clean
    verdict(8, ok, f"QuAD collisions {q_col}, MinTTC p10 {p10:.2f} s (>= 1.0); expert collisions "
                   f"{e_col}; {len(clean)} collision-free runs all report {TTC_CAP}")


# ---------------------------------------------------------------- 9

def test_c9_determinism(tmp_path):
    from quadplan.sim.scenario import save_dir
    d = tmp_path / "scn"
    save_dir(library.safety_suite()[::3], d)
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert cli.main(["run", "--scenario-dir", str(d), "--duration", "6", "--seed", "3",
                         "--out", str(out)]) == 0
        outs.append(out)
    same = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
               for f in ("metrics.csv", "summary.csv"))
    verdict(9, same, "repeated run with seed 3: metrics.csv and summary.csv byte-identical")


# ---------------------------------------------------------------- 10

def test_c10_geometry_and_dynamics():
    kappa, v = 0.05, 10.0
    s = ego_at(speed=v, curvature=kappa)
    for _ in range(int(round(2 * math.pi / (v * kappa) / 0.01))):
        s = bicycle_step(s, (0.0, 0.0), 0.01)
    closure = math.hypot(s.pose.x, s.pose.y)

    ang = np.linspace(0.0, 1.0, 600)
    pl = Polyline(np.stack([200 * np.sin(ang), 200 - 200 * np.cos(ang)], axis=1))
    rng = np.random.default_rng(5)
    ss = rng.uniform(1.0, pl.length - 1.0, 400)
    dd = rng.uniform(-1.75, 1.75, 400)
    turn = np.abs(np.diff(pl.headings)).max()
    keep = np.abs(ss[:, None] - pl.arc[None, 1:-1]).min(axis=1) > 2.0 * np.abs(dd) * turn
    x, y, _, _ = pl.frenet_to_xy(ss[keep], dd[keep])
    proj = pl.project(np.stack([x, y], axis=1))
    frenet = max(np.abs(proj.s - ss[keep]).max(), np.abs(proj.d - dd[keep]).max())

    bend = Polyline([[0.0, 0.0], [10.0, 0.0], [15.0, 6.0], [25.0, 8.0], [30.0, 2.0]])
    sd = 0.0
    for p in rng.uniform([-5, -8], [35, 14], size=(100, 2)):
        d = project_to_polyline(p, bend)[1]
        sd = max(sd, abs(d - dense_signed_distance(p, bend.points)[0]))
    ok = closure <= 0.05 and frenet <= 1e-6 and sd <= 1e-3
    verdict(10, ok, f"circle closure {closure:.4f} m (<= 0.05); Frenet round trip {frenet:.1e} "
                    f"on {keep.sum()} points (<= 1e-6); signed distance vs dense {sd:.1e} m (<= 1e-3)")
