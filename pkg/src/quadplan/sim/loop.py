"""Closed-loop and open-loop scenario execution."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..costing import Weights
from ..occupancy import OracleField
from ..planner import (ExpertConfig, ExpertWorldView, PlannerConfig, expert_plan_full, plan)
from ..query_engine import EGO_LENGTH, EGO_WIDTH
from ..sampler import Trajectory, hard_brake
from ..world.boxes import boxes_overlap
from ..world.dynamics import EgoState, bicycle_step
from .metrics import (SPEED_TOLERANCE, TTC_CAP, RunMetrics, boundary_crossings, jerk_rms,
                      min_ttc, p2p_distance, trace_l2)
from .scenario import Scenario


@dataclass
class SimConfig:
    dt: float = 0.5
    substep: float = 0.1
    horizon: float = 5.0
    sigma: float = 0.25
    noise_std: float = 0.0
    ego_length: float = EGO_LENGTH
    ego_width: float = EGO_WIDTH


@dataclass
class PolicyOutput:
    traj: Trajectory
    error: bool = False
    info: dict = field(default_factory=dict)


class QuadPolicy:
    """Learned-cost planner querying an oracle field built from the actor plans."""

    def __init__(self, weights: Weights, cfg: PlannerConfig = None, sigma: float = 0.25,
                 noise_std: float = 0.0, name: str = "quad"):
        self.weights = weights
        self.cfg = cfg or PlannerConfig()
        self.sigma = sigma
        self.noise_std = noise_std
        self.name = name

    def field_for(self, view: ExpertWorldView, seed: int = 0):
        return OracleField(view.actors, self.sigma, noise_std=self.noise_std, seed=seed)

    def __call__(self, ego, view, t, seed=0) -> PolicyOutput:
        res = plan(ego, view.lane_map, self.field_for(view, seed), self.weights, self.cfg)
        return PolicyOutput(res.chosen, res.error, {"result": res, "stats": res.stats,
                                                    "timings": res.timings})


class ExpertPolicy:
    def __init__(self, cfg: ExpertConfig = None, name: str = "expert"):
        self.cfg = cfg or ExpertConfig()
        self.name = name

    def __call__(self, ego, view, t, seed=0) -> PolicyOutput:
        res = expert_plan_full(view, ego, self.cfg)
        return PolicyOutput(res.chosen, res.error, {"result": res})


class HardBrakePolicy:
    name = "hard_brake"

    def __call__(self, ego, view, t, seed=0) -> PolicyOutput:
        return PolicyOutput(hard_brake(ego, view.lane_map))


class _EgoProxy:
    """Ego as seen by car-following actors."""

    def __init__(self, ego: EgoState, length: float, width: float):
        self.ego, self.length, self.width, self.id = ego, length, width, "ego"

    @property
    def v(self):
        return self.ego.speed

    def pose(self):
        p = self.ego.pose
        return p.x, p.y, p.heading

    def velocity(self):
        p = self.ego.pose
        return self.ego.speed * math.cos(p.heading), self.ego.speed * math.sin(p.heading)


@dataclass
class RunResult:
    scenario: str
    planner: str
    times: np.ndarray
    trace: np.ndarray            # (K, 6) ego states at control instants
    fine_xy: np.ndarray          # ego centres every sub-step
    plans: list                  # executed (closed loop) or proposed (open loop) plan states
    driven_plans: list           # plans actually executed
    actor_plans: list            # actor plans visible at each replan
    controls: list
    collided: bool = False
    collision_time: float = float("nan")
    goal_reached: bool = False
    termination: str = "duration"
    errors: int = 0
    stats: list = field(default_factory=list)
    metrics: Optional[RunMetrics] = None


def _execute(policy, ego, view, t, seed):
    try:
        out = policy(ego, view, t, seed)
    except Exception as exc:  # planner failure: fall back to braking in lane
        out = PolicyOutput(hard_brake(ego, view.lane_map), True, {"exception": repr(exc)})
    return out


def run_closed_loop(scn: Scenario, policy, cfg: SimConfig = SimConfig(), shadow=None,
                    expert_trace: Optional[np.ndarray] = None,
                    on_step: Optional[Callable] = None, stop_at_goal: bool = True) -> RunResult:
    """Drive ``scn`` with ``policy``; ``shadow`` (open loop) only proposes plans."""
    lm = scn.lane_map()
    ego = scn.ego_state()
    actors = scn.build_actors(scn.duration + cfg.horizon + 5.0)
    n_steps = int(round(scn.duration / cfg.dt))
    sub = int(round(cfg.dt / cfg.substep))
    times, trace, fine = [0.0], [ego.as_array()], [ego.pose.xy]
    plans, driven, actor_plans, controls, stats = [], [], [], [], []
    collided, coll_t, goal, reason, errors = False, float("nan"), False, "duration", 0
    t = 0.0
    for k in range(n_steps):
        proxy = _EgoProxy(ego, cfg.ego_length, cfg.ego_width)
        world = list(actors) + [proxy]
        aplans = [a.plan(cfg.horizon, cfg.dt, others=world) for a in actors]
        view = ExpertWorldView(aplans, lm)
        out = _execute(policy, ego, view, t, scn.seed + k)
        proposal = _execute(shadow, ego, view, t, scn.seed + k) if shadow is not None else out
        errors += int(proposal.error)
        if on_step is not None:
            on_step(ego, view, t, out)
        traj = out.traj
        plans.append(proposal.traj.states.copy())
        driven.append(traj.states.copy())
        actor_plans.append(aplans)
        if "stats" in proposal.info:
            stats.append(proposal.info["stats"].to_dict())
        accel = float(traj.controls[0])
        curv_rate = (float(traj.states[1, 5]) - ego.curvature) / cfg.dt
        controls.append((accel, curv_rate))
        for _ in range(sub):
            ego = bicycle_step(ego, (accel, curv_rate), cfg.substep)
            proxy.ego = ego
            for a in actors:
                a.step(cfg.substep, world)
            fine.append(ego.pose.xy)
            ebox = (ego.pose.x, ego.pose.y, ego.pose.heading, cfg.ego_length, cfg.ego_width)
            if any(bool(boxes_overlap(ebox, a.box())) for a in actors):
                collided = True
                break
        t = round((k + 1) * cfg.dt, 9)
        times.append(t)
        trace.append(ego.as_array())
        if collided:
            reason = "collision"
            coll_t = round((len(fine) - 1) * cfg.substep, 6)
            break
        if scn.goal is not None and scn.goal_reached(ego.pose.xy):
            goal = True
            if stop_at_goal:
                reason = "goal"
                break
    res = RunResult(scn.name, getattr(shadow or policy, "name", "policy"), np.array(times),
                    np.array(trace), np.array(fine), plans, driven, actor_plans, controls,
                    collided, coll_t, goal, reason, errors, stats)
    res.metrics = compute_metrics(res, scn, cfg, expert_trace, open_loop=shadow is not None)
    return res


def run_open_loop(scn: Scenario, policy, expert=None, cfg: SimConfig = SimConfig()) -> RunResult:
    """Expert drives; ``policy`` proposes at every step without executing."""
    return run_closed_loop(scn, expert or ExpertPolicy(), cfg, shadow=policy, stop_at_goal=False)


def compute_metrics(res: RunResult, scn: Scenario, cfg: SimConfig = SimConfig(),
                    expert_trace: Optional[np.ndarray] = None, open_loop: bool = False) -> RunMetrics:
    lm = scn.lane_map()
    m = RunMetrics(scn.name, res.planner)
    m.collided = res.collided
    ttcs = [min_ttc(p, ap, cfg.dt, cfg.ego_length, cfg.ego_width)
            for p, ap in zip(res.plans, res.actor_plans)]
    m.min_ttc = float(min(ttcs)) if ttcs else TTC_CAP
    m.plan_collided = bool(any(x < TTC_CAP for x in ttcs))
    m.plan_collision_fraction = float(np.mean([x < TTC_CAP for x in ttcs])) if ttcs else 0.0
    fine = res.fine_xy
    q = lm.query(fine)
    on = q.containing >= 0
    seg = np.hypot(*np.diff(fine, axis=0).T) if len(fine) > 1 else np.zeros(0)
    m.progress = float(seg[on[:-1] & on[1:]].sum())
    m.offroad = bool((~on).any())
    m.boundary_violation = boundary_crossings(fine, lm) > 0
    qs = lm.query(res.trace[:, :2])
    lim = lm.speed_limits[qs.nearest]
    m.speeding = bool((res.trace[:, 3] > lim + SPEED_TOLERANCE).any())
    m.violation = bool(m.collided or m.offroad or m.boundary_violation or m.speeding)
    if open_loop:
        m.jerk = float(np.mean([jerk_rms(p[:, 4], cfg.dt) for p in res.plans])) if res.plans else 0.0
        # proposal vs the executed expert plan from the same state
        m.l2e = float(np.mean([np.hypot(*(p[1:, :2] - d[1:, :2]).T).mean()
                               for p, d in zip(res.plans, res.driven_plans)])) if res.plans else 0.0
    else:
        m.jerk = jerk_rms(res.trace[1:, 4], cfg.dt)
        if expert_trace is not None:
            m.l2e = trace_l2(res.trace, expert_trace)
    m.p2p = p2p_distance(res.plans, cfg.dt)
    m.has_goal = scn.goal is not None
    m.goal_reached = res.goal_reached
    if m.has_goal:
        m.success = bool(res.goal_reached and not m.violation)
    else:
        m.success = bool(res.termination == "duration" and not m.violation)
    m.duration = float(res.times[-1])
    m.replans = len(res.plans)
    m.planner_errors = res.errors
    m.termination = res.termination
    return m
