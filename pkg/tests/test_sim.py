import math

import numpy as np
import pytest

from helpers import straight_states
from quadplan.costing import Weights
from quadplan.occupancy import ActorTrack
from quadplan.sim import library
from quadplan.sim.actors import SIM_DT, IDMParams, ScriptedActor, idm_accel
from quadplan.sim.loop import (ExpertPolicy, HardBrakePolicy, QuadPolicy, RunResult, compute_metrics,
                               run_closed_loop, run_open_loop)
from quadplan.sim.metrics import (TTC_CAP, RunMetrics, aggregate, boundary_crossings, jerk_rms,
                                  min_ttc, p2p_distance, trace_l2)
from quadplan.sim.scenario import Scenario, ScenarioError, load_dir, save_dir
from quadplan.world import straight_highway


# ---------------------------------------------------------------- actors

def test_idm_equilibrium_and_braking():
    p = IDMParams()
    assert idm_accel(p.v0, math.inf, 0.0, p) == pytest.approx(0.0)
    assert idm_accel(0.0, math.inf, 0.0, p) == pytest.approx(p.a_max)
    assert idm_accel(10.0, p.s0, 10.0, p) < -p.b / 2
    assert idm_accel(30.0, 0.0, 30.0, p) == p.min_accel


def test_idm_params_positive():
    with pytest.raises(ValueError):
        IDMParams(T_h=0.0)


def test_scripted_actor_follows_its_plan():
    lm = straight_highway(3)
    path = lm.base_path("L1").extended(back=500.0, ahead=500.0)
    ev = [{"t": 0.0, "type": "speed", "a": -3.0, "v_target": 5.0}]
    a = ScriptedActor("a", path, 520.0, 0.0, 20.0, ev, lane_map=lm, t_end=20.0)
    plan = a.plan(5.0, 0.5)
    for k in range(1, 11):
        for _ in range(5):
            a.step(SIM_DT)
        x, y, h = a.pose()
        px, py, ph = (float(v) for v in plan.pose_at(k * 0.5))
        assert (x, y, h) == pytest.approx((px, py, ph), abs=1e-9)
    assert a.v == pytest.approx(5.0)


def test_actors_never_teleport():
    scn = library.crowded(n_actors=30, seed=3)
    actors = scn.build_actors(20.0)
    prev = [a.pose()[:2] for a in actors]
    for _ in range(30):
        for a in actors:
            a.step(SIM_DT, actors)
        cur = [a.pose()[:2] for a in actors]
        for p, c, a in zip(prev, cur, actors):
            vmax = max(a.v, 40.0)
            assert math.hypot(c[0] - p[0], c[1] - p[1]) <= vmax * SIM_DT + 1e-6
        prev = cur


# ---------------------------------------------------------------- metrics

def _mover(x0, v, heading=0.0, horizon=5.0):
    t = np.arange(0, horizon + 1e-9, 0.5)
    c = np.stack([x0 + v * t * math.cos(heading), v * t * math.sin(heading)], axis=1)
    return ActorTrack(t, c, np.full(len(t), heading))


def test_min_ttc_head_on():
    ego = straight_states(v=10.0)
    ttc = min_ttc(ego, [_mover(15.0, 10.0, math.pi)])
    assert ttc == pytest.approx(0.5, abs=0.1)


def test_min_ttc_overlap_now_and_never():
    ego = straight_states(v=10.0)
    assert min_ttc(ego, [_mover(1.0, 10.0)]) == 0.0
    assert min_ttc(ego, [ActorTrack.static(0.0, 20.0)]) == TTC_CAP
    assert min_ttc(ego, []) == TTC_CAP


def test_boundary_crossing():
    lm = straight_highway(3)
    assert boundary_crossings(np.array([[0.0, 7.0], [10.0, 9.5]]), lm) == 1
    assert boundary_crossings(np.array([[0.0, 0.0], [10.0, 3.5]]), lm) == 0


def test_p2p_hand_computation():
    p = straight_states(v=10.0)
    # the same plan repeated while the ego advances one 5 m step each time
    assert p2p_distance([p, p, p]) == pytest.approx(5.0)
    shifted = [p, p + np.array([5.0, 0, 0, 0, 0, 0])]
    assert p2p_distance(shifted) == pytest.approx(0.0)


def test_jerk_and_l2():
    assert jerk_rms(np.array([0.0, 1.0, 0.0, 1.0])) == pytest.approx(2.0)
    a = straight_states(v=10.0)
    assert trace_l2(a, a + np.array([0, 1.0, 0, 0, 0, 0])) == pytest.approx(1.0)


def _synthetic_run(xy_fine, trace):
    n = len(trace)
    return RunResult("s", "p", np.arange(n) * 0.5, trace, xy_fine, [], [], [], [])


def test_boundary_violation_counts_for_tvr():
    scn = library.empty_road(goal=False)
    trace = straight_states(v=10.0, y=0.0)
    fine = trace[:, :2].copy()
    fine[5:, 1] = -2.5
    m = compute_metrics(_synthetic_run(fine, trace), scn)
    assert m.boundary_violation and m.violation and not m.success
    clean = compute_metrics(_synthetic_run(trace[:, :2], trace), scn)
    assert not clean.violation and clean.success


def test_speeding_tolerance():
    scn = library.empty_road(goal=False)
    lim = scn.lane_map().lanes["L0"].speed_limit
    for v, bad in ((lim + 0.4, False), (lim + 0.6, True)):
        trace = straight_states(v=v)
        assert compute_metrics(_synthetic_run(trace[:, :2], trace), scn).speeding == bad


def test_aggregate_rates_and_buckets():
    runs = [RunMetrics("a", "p", collided=True, violation=True, min_ttc=0.5),
            RunMetrics("b", "p", violation=True, min_ttc=1.5),
            RunMetrics("c", "p", success=True, min_ttc=4.0),
            RunMetrics("d", "p", success=True, min_ttc=10.0)]
    s = aggregate(runs)
    assert (s.ecr, s.tvr, s.gsr) == (0.25, 0.5, 0.5)
    assert s.ecr <= s.tvr and s.gsr <= 1 - s.tvr
    assert (s.ttc_lt1, s.ttc_lt2, s.ttc_lt5) == (0.25, 0.5, 0.75)


# ---------------------------------------------------------------- loops

def test_empty_road_expert():
    res = run_closed_loop(library.empty_road(), ExpertPolicy())
    m = res.metrics
    assert res.goal_reached and res.termination == "goal"
    assert m.success and not m.collided and not m.violation
    assert m.min_ttc == TTC_CAP


def test_open_loop_self_consistency():
    scn = library.empty_road(duration=5.0)
    res = run_open_loop(scn, ExpertPolicy())
    assert res.metrics.l2e == 0.0
    assert len(res.plans) == int(scn.duration / 0.5)


def test_open_loop_hard_brake_never_collides():
    res = run_open_loop(library.empty_road(duration=5.0), HardBrakePolicy())
    assert not res.metrics.plan_collided
    assert len(res.plans) == 10


def test_closed_loop_is_reproducible():
    scn = library.cut_in("cut_in")
    scn.duration = 4.0
    a = run_closed_loop(scn, QuadPolicy(Weights()))
    b = run_closed_loop(scn, QuadPolicy(Weights()))
    assert np.array_equal(a.trace, b.trace)
    assert a.metrics.to_row() == b.metrics.to_row()


# ---------------------------------------------------------------- scenarios

def test_scenario_round_trip(tmp_path):
    suite = library.safety_suite()
    save_dir(suite, tmp_path)
    back = load_dir(tmp_path)
    assert sorted(s.name for s in back) == sorted(s.name for s in suite)
    by = {s.name: s for s in back}
    for s in suite:
        assert by[s.name].to_dict() == s.to_dict()


def test_scenario_validation():
    d = library.empty_road().to_dict()
    with pytest.raises(ScenarioError):
        Scenario.from_dict({**d, "duration": 25.0})
    with pytest.raises(ScenarioError):
        Scenario.from_dict({**d, "family": "roundabout"})
    with pytest.raises(ScenarioError):
        Scenario.from_dict({**d, "schema_version": 99})
    bad = dict(d)
    del bad["ego"]
    with pytest.raises(ScenarioError, match="missing"):
        Scenario.from_dict(bad)
