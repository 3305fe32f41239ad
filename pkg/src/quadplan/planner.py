"""Argmin planner over sampled candidates and the privileged expert."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .costing import F, FEATURES, CostConfig, FeatureBatch, Weights, agnostic_features, compute_features
from .occupancy import ActorTrack
from .query_engine import EGO_LENGTH, EGO_WIDTH, QueryStats, evaluate_trajectories
from .sampler import SamplerConfig, Trajectory, generate_candidates, hard_brake, stack_states
from .world.boxes import boxes_overlap
from .world.dynamics import EgoState
from .world.lanemap import LaneMap

# ablation name -> dropped features
ABLATIONS = {
    "collision": ("col",),
    "buffer": ("buf_long", "buf_lat"),
    "comfort": ("acc_lat", "acc_long", "jerk", "curv"),
    "corridor": ("corr",),
    "boundary": ("bound",),
    "speed_limit": ("speed",),
    "progress": ("prog",),
    "route": ("route",),
}


@dataclass
class PlannerConfig:
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    cost: CostConfig = field(default_factory=CostConfig)
    # None means continuous (unquantised) querying
    quantization_res: Optional[float] = 0.5
    # spacing of the region point grids, independent of the quantisation cell
    grid_res: float = 0.5
    ego_length: float = EGO_LENGTH
    ego_width: float = EGO_WIDTH


@dataclass
class PlanResult:
    chosen: Trajectory
    index: int
    candidates: list
    features: Optional[FeatureBatch]
    totals: np.ndarray
    error: bool = False
    stats: QueryStats = field(default_factory=QueryStats)
    timings: dict = field(default_factory=dict)

    def breakdown(self, i: Optional[int] = None, w=None):
        i = self.index if i is None else i
        return self.features.breakdown(i, self.features.extras["weights"] if w is None else w)


def select(totals: np.ndarray) -> int:
    """Lowest index among the minimal totals."""
    return int(np.argmin(totals))


def plan(ego: EgoState, lane_map: LaneMap, occ_field, w: Weights,
         cfg: PlannerConfig = PlannerConfig()) -> PlanResult:
    t0 = time.perf_counter()
    cands = generate_candidates(ego, lane_map, cfg.sampler)
    t1 = time.perf_counter()
    if not cands:
        hb = hard_brake(ego, lane_map, cfg.sampler)
        return PlanResult(hb, 0, [hb], None, np.zeros(1), error=True)
    table = evaluate_trajectories(cands, occ_field, cfg.quantization_res, cfg.grid_res,
                                  cfg.sampler.dt, cfg.ego_length, cfg.ego_width)
    t2 = time.perf_counter()
    fb = compute_features(cands, lane_map, table, cfg=cfg.cost)
    fb.extras["weights"] = w.as_array()
    totals = fb.totals(w)
    idx = select(totals)
    t3 = time.perf_counter()
    return PlanResult(cands[idx], idx, cands, fb, totals, False, table.stats,
                      {"sample": t1 - t0, "query": t2 - t1, "cost": t3 - t2, "total": t3 - t0})


# ---------------------------------------------------------------- expert

@dataclass
class ExpertWeights:
    collision: float = 1000.0
    contingency: float = 300.0
    headway: float = 30.0
    acc_lat: float = 0.5
    acc_long: float = 0.2
    jerk: float = 0.1
    curv: float = 100.0
    crosstrack: float = 1.0
    route: float = 2.0
    progress: float = 1.0
    speed_limit: float = 5.0
    corridor: float = 50.0
    offroad: float = 100.0

    def to_dict(self):
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: float(v) for k, v in d.items()})


EXPERT_TERMS = tuple(ExpertWeights().to_dict())


@dataclass
class ExpertWorldView:
    """Ground-truth actor plans (relative time, covering the horizon) and the map."""
    actors: Sequence[ActorTrack]
    lane_map: LaneMap


@dataclass
class ExpertConfig:
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    weights: ExpertWeights = field(default_factory=ExpertWeights)
    max_decel: float = 6.0
    headway_time: float = 1.5
    safety_margin: float = 0.3
    substeps: int = 2
    ego_length: float = EGO_LENGTH
    ego_width: float = EGO_WIDTH


def _actor_pose(actor: ActorTrack, t: np.ndarray):
    """Pose at times ``t``; constant-velocity extrapolation past the plan end."""
    x, y, h = actor.pose_at(np.minimum(t, actor.end_time))
    if len(actor.times) > 1:
        dtl = actor.times[-1] - actor.times[-2]
        vel = (actor.centers[-1] - actor.centers[-2]) / dtl
        extra = np.maximum(t - actor.end_time, 0.0)
        x = x + vel[0] * extra
        y = y + vel[1] * extra
    return x, y, h


def _interp_states(st: np.ndarray, sub: int):
    """Positions and headings at ``sub`` points per step, times (k + j/sub)."""
    n, T1, _ = st.shape
    fr = np.arange(1, (T1 - 1) * sub + 1) / sub
    k0 = np.floor(fr).astype(int) - (fr == np.floor(fr)).astype(int)
    k0 = np.clip(k0, 0, T1 - 2)
    a = (fr - k0)[None, :]
    p = st[:, k0, :2] * (1 - a[..., None]) + st[:, k0 + 1, :2] * a[..., None]
    h0, h1 = st[:, k0, 2], st[:, k0 + 1, 2]
    dh = np.angle(np.exp(1j * (h1 - h0)))
    return fr, p, h0 + a * dh


def overlap_matrix(st: np.ndarray, actors, dt: float, sub: int, margin: float,
                   ego_length: float, ego_width: float):
    """(n, len(fr)) boolean ego/actor footprint overlap at sub-step times."""
    fr, p, h = _interp_states(st, sub)
    hit = np.zeros(p.shape[:2], dtype=bool)
    t = fr * dt
    for actor in actors:
        ax, ay, ah = _actor_pose(actor, t)
        ego_box = (p[..., 0], p[..., 1], h, ego_length + 2 * margin, ego_width + 2 * margin)
        act_box = (ax[None], ay[None], ah[None], actor.length, actor.width)
        hit |= boxes_overlap(ego_box, act_box)
    return fr, hit


def contingency_check(trajs, view: ExpertWorldView, max_decel: float = 6.0, dt: float = 0.5,
                      ego_length: float = EGO_LENGTH, ego_width: float = EGO_WIDTH,
                      step: float = 0.25) -> np.ndarray:
    """True where braking at ``max_decel`` from the end state along its lane hits an actor."""
    single = hasattr(trajs, "states")
    st = stack_states([trajs]) if single else (trajs if isinstance(trajs, np.ndarray)
                                              else stack_states(trajs))
    end = st[:, -1]
    t_end = (st.shape[1] - 1) * dt
    lm = view.lane_map
    q = lm.query(end[:, :2])
    v = end[:, 3]
    t_stop = v / max_decel
    n_tau = int(np.ceil(t_stop.max() / step)) + 1 if len(v) else 1
    tau = np.arange(n_tau + 1) * step
    tau_c = np.minimum(tau[None, :], t_stop[:, None])
    dist = v[:, None] * tau_c - 0.5 * max_decel * tau_c ** 2
    x = np.empty_like(dist)
    y = np.empty_like(dist)
    h = np.empty_like(dist)
    for li in np.unique(q.nearest):
        sel = q.nearest == li
        path = lm.base_path(lm.ids[li]).extended(back=10.0, ahead=200.0)
        proj = path.project(end[sel, :2])
        xs, ys, hs, _ = path.frenet_to_xy(proj.s[:, None] + dist[sel], np.repeat(
            proj.d[:, None], dist.shape[1], axis=1))
        x[sel], y[sel], h[sel] = xs, ys, hs
    hit = np.zeros(len(st), dtype=bool)
    times = t_end + tau
    for actor in view.actors:
        ax, ay, ah = _actor_pose(actor, times)
        ov = boxes_overlap((x, y, h, ego_length, ego_width),
                           (ax[None], ay[None], ah[None], actor.length, actor.width))
        hit |= ov.any(axis=1)
    return bool(hit[0]) if single else hit


def headway_penalty(st: np.ndarray, view: ExpertWorldView, dt: float, headway_time: float,
                    ego_length: float, ego_width: float) -> np.ndarray:
    """Sum over future steps of squared time-gap shortfall to the in-path lead actor."""
    n, T1, _ = st.shape
    lm = view.lane_map
    fut = st[:, 1:]
    pts = fut[..., :2].reshape(-1, 2)
    qe = lm.query(pts)
    lane = qe.nearest
    cols = np.arange(len(pts))
    s_e = qe.s_ext[lane, cols].reshape(n, T1 - 1)
    d_e = qe.d_center[lane, cols].reshape(n, T1 - 1)
    lane = lane.reshape(n, T1 - 1)
    v = np.maximum(fut[..., 3], 0.5)
    gap_min = np.full((n, T1 - 1), np.inf)
    times = np.arange(1, T1) * dt
    for actor in view.actors:
        ax, ay, _ = _actor_pose(actor, times)
        qa = lm.query(np.stack([ax, ay], axis=1))
        s_a = qa.s_ext[lane, np.arange(T1 - 1)[None, :]]
        d_a = qa.d_center[lane, np.arange(T1 - 1)[None, :]]
        in_path = np.abs(d_a - d_e) < 0.5 * (ego_width + actor.width) + 0.3
        gap = s_a - s_e - 0.5 * (ego_length + actor.length)
        ahead = in_path & (s_a > s_e)
        gap_min = np.where(ahead, np.minimum(gap_min, gap), gap_min)
    tg = np.maximum(gap_min, 0.0) / v
    short = np.where(np.isfinite(gap_min), np.maximum(headway_time - tg, 0.0), 0.0)
    return (short ** 2).sum(axis=1)


def expert_costs(cands, view: ExpertWorldView, cfg: ExpertConfig = ExpertConfig()):
    """Per-candidate expert cost terms as a dict of arrays plus the weighted total."""
    st = stack_states(cands)
    dt = cfg.sampler.dt
    lm = view.lane_map
    base = [c.base_lane for c in cands]
    agn = agnostic_features(st, lm, base)
    fr, hit = overlap_matrix(st, view.actors, dt, cfg.substeps, cfg.safety_margin,
                             cfg.ego_length, cfg.ego_width)
    T = st.shape[1] - 1
    col = (hit * (T + 1 - fr)[None, :]).sum(axis=1) / cfg.substeps
    cont = contingency_check(st, view, cfg.max_decel, dt, cfg.ego_length, cfg.ego_width)
    head = headway_penalty(st, view, dt, cfg.headway_time, cfg.ego_length, cfg.ego_width)
    q = lm.query(st[:, 1:, :2].reshape(-1, 2))
    offroad = (q.containing < 0).reshape(len(st), -1).sum(axis=1).astype(float)
    terms = {
        "collision": col, "contingency": cont.astype(float), "headway": head,
        "acc_lat": agn[:, F["acc_lat"]], "acc_long": agn[:, F["acc_long"]],
        "jerk": agn[:, F["jerk"]], "curv": agn[:, F["curv"]],
        "crosstrack": agn[:, F["corr"]], "route": agn[:, F["route"]],
        "progress": agn[:, F["prog"]], "speed_limit": agn[:, F["speed"]],
        "corridor": agn[:, F["bound"]], "offroad": offroad,
    }
    w = cfg.weights.to_dict()
    total = sum(w[k] * terms[k] for k in EXPERT_TERMS)
    return terms, total


@dataclass
class ExpertResult:
    chosen: Trajectory
    index: int
    candidates: list
    terms: dict
    totals: np.ndarray
    error: bool = False


def expert_plan_full(view: ExpertWorldView, ego: EgoState,
                     cfg: ExpertConfig = ExpertConfig()) -> ExpertResult:
    cands = generate_candidates(ego, view.lane_map, cfg.sampler)
    if not cands:
        hb = hard_brake(ego, view.lane_map, cfg.sampler)
        return ExpertResult(hb, 0, [hb], {}, np.zeros(1), True)
    terms, totals = expert_costs(cands, view, cfg)
    idx = select(totals)
    return ExpertResult(cands[idx], idx, cands, terms, totals)


def expert_plan(view: ExpertWorldView, ego: EgoState, cfg: ExpertConfig = ExpertConfig()) -> Trajectory:
    return expert_plan_full(view, ego, cfg).chosen


def parse_planner(spec: str):
    """'quad' | 'expert' | 'ablation:<cost>' -> (kind, dropped cost or None)."""
    if spec in ("quad", "expert"):
        return spec, None
    if spec.startswith("ablation:"):
        name = spec.split(":", 1)[1]
        if name not in ABLATIONS:
            raise ValueError(f"unknown ablation '{name}'; choose from {sorted(ABLATIONS)}")
        return "ablation", name
    raise ValueError(f"unknown planner '{spec}'")


def ablated(w: Weights, name: str) -> Weights:
    return w.without(*ABLATIONS[name])


__all__ = ["ABLATIONS", "ExpertConfig", "ExpertResult", "ExpertWeights", "ExpertWorldView",
           "FEATURES", "PlanResult", "PlannerConfig", "ablated", "contingency_check",
           "expert_costs", "expert_plan", "expert_plan_full", "parse_planner", "plan", "select"]
