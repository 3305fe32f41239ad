"""Lane-aligned trajectory sampler working in the Frenet frame of the current lane."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .world.dynamics import (ACCEL, CURV, HEADING, KAPPA_MAX, SPEED, EgoState, rollout_knots,
                             travel)
from .world.geometry import wrap_angle
from .world.lanemap import LaneMap

N_FINE = 256


class OffMapError(ValueError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    accels: tuple = (0.0, 1.0, -1.0, 2.0, -2.0, -4.0, -6.0)
    offsets: tuple = (0.0, -0.75, 0.75, -1.5, 1.5)
    lane_change_durations: tuple = (3.0, 4.0, 5.0)
    nudge_duration: float = 3.0
    max_candidates: int = 300
    dt: float = 0.5
    steps: int = 10
    speed_margin: float = 0.0
    kappa_max: float = KAPPA_MAX
    hard_brake_decel: float = -6.0
    # shortest distance over which any lateral transition is spread
    min_transition: float = 15.0
    # lane changes spread each metre of lateral motion over at least this many metres
    lateral_ratio: float = 8.0
    max_lane_distance: float = 10.0
    # candidates whose bicycle rollout strays further than this from the Frenet path are dropped
    track_tolerance: float = 0.2

    def __post_init__(self):
        if 0.0 not in self.accels:
            raise ValueError("accels must include 0")
        if self.hard_brake_decel not in self.accels:
            raise ValueError("accels must include the hard-brake profile")
        if 0.0 not in self.offsets:
            raise ValueError("offsets must include 0")

    @property
    def horizon(self) -> float:
        return self.dt * self.steps

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d):
        kw = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()}
        return cls(**kw)


@dataclass
class Trajectory:
    """States (x, y, heading, speed, accel, curvature) at a fixed time step."""
    states: np.ndarray
    base_lane: str
    maneuver: str = "keep"
    accel: float = 0.0
    target_offset: float = 0.0
    target_lane: Optional[str] = None
    duration: float = 0.0
    dt: float = 0.5
    # accel commanded during each step; states[0] carries the ego's own accel
    controls: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.controls is None:
            self.controls = self.states[:-1, ACCEL].copy()

    @property
    def xy(self) -> np.ndarray:
        return self.states[:, :2]

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.states)) * self.dt

    @property
    def steps(self) -> int:
        return len(self.states) - 1

    def ego_state(self, k: int) -> EgoState:
        return EgoState.from_array(self.states[k])

    def to_rows(self, index: int = 0):
        for k, st in enumerate(self.states):
            yield [index, self.maneuver, self.base_lane, round(k * self.dt, 6), *map(float, st)]


def longitudinal_profile(v0: float, a: float, cap: float, dt: float, steps: int):
    """Per-step speed, applied accel and cumulative distance.

    Hitting the speed cap is handled by lowering that step's accel, so every
    step is exactly a constant-accel bicycle step; stopping keeps the
    commanded decel and clamps speed at zero.
    """
    v = np.empty(steps + 1)
    acc = np.zeros(steps + 1)
    dist = np.zeros(steps + 1)
    v[0] = v0
    for k in range(steps):
        ak = a
        if v[k] + a * dt > cap:
            ak = max(0.0, (cap - v[k]) / dt)
        if v[k] <= 0.0 and ak <= 0.0:
            ak = 0.0
        ds, v[k + 1] = travel(v[k], ak, dt)
        acc[k] = ak
        dist[k + 1] = dist[k] + ds
    acc[steps] = acc[steps - 1] if v[steps] > 0 else 0.0
    return v, acc, dist


def distance_after(v0: float, a: float, cap: float, t: float, dt: float) -> float:
    steps = max(1, int(round(t / dt)))
    return float(longitudinal_profile(v0, a, cap, dt, steps)[2][-1])


def quintic_lateral(u, d0, p0, a0, d1):
    """Quintic in normalised progress u in [0, 1] from (d0, p0, a0) to (d1, 0, 0).

    p0 and a0 are the first and second derivatives w.r.t. u.
    """
    c0, c1, c2 = d0, p0, 0.5 * a0
    A = d1 - c0 - c1 - c2
    B = -c1 - 2.0 * c2
    C = -2.0 * c2
    c3 = 10 * A - 4 * B + 0.5 * C
    c4 = -15 * A + 7 * B - C
    c5 = 6 * A - 3 * B + 0.5 * C
    u = np.clip(u, 0.0, 1.0)
    return c0 + u * (c1 + u * (c2 + u * (c3 + u * (c4 + u * c5))))


def _locate_ego(ego: EgoState, lane_map: LaneMap, cfg: SamplerConfig) -> str:
    q = lane_map.query(ego.pose.xy[None])
    lane_idx = int(q.nearest[0])
    if q.containing[0] < 0 and abs(q.d_center[lane_idx, 0]) > cfg.max_lane_distance:
        raise OffMapError("off-map ego")
    return lane_map.ids[lane_idx]


@dataclass
class _Spec:
    maneuver: str
    accel: float
    target: float
    length: float
    target_lane: Optional[str] = None
    offset: float = 0.0
    duration: float = 0.0
    profile: tuple = field(default=(), repr=False)


def _path_curvature(base, s0: float) -> float:
    h0 = base.heading_at(max(s0 - 2.5, 0.0))
    h1 = base.heading_at(min(s0 + 2.5, base.length))
    return float(wrap_angle(h1 - h0)) / 5.0


def _specs(ego, lane_map, lane_id, base, s0, d0, cfg, hard_brake_only=False):
    lane = lane_map.lane(lane_id)
    cap = max(lane.speed_limit + cfg.speed_margin, ego.speed)
    profiles = {a: longitudinal_profile(ego.speed, a, cap, cfg.dt, cfg.steps) for a in cfg.accels}
    accels = (cfg.hard_brake_decel,) if hard_brake_only else cfg.accels
    offsets = (0.0,) if hard_brake_only else cfg.offsets
    nudge_steps = int(round(cfg.nudge_duration / cfg.dt))
    specs = []
    for off in offsets:
        for a in accels:
            prof = profiles[a]
            L = max(prof[2][min(nudge_steps, cfg.steps)], cfg.min_transition)
            if off == 0.0:
                m = "brake" if a == cfg.hard_brake_decel else "keep"
            else:
                m = "nudge"
            specs.append(_Spec(m, a, off, L, lane_id, off, cfg.nudge_duration, prof))
    if hard_brake_only:
        return specs
    ego_xy = ego.pose.xy[None]
    for side, nb in (("left", lane.left_neighbor), ("right", lane.right_neighbor)):
        if nb is None:
            continue
        nb_path = lane_map.base_path(nb)
        foot = nb_path.project(ego_xy)
        fx, fy, _, _ = nb_path.frenet_to_xy(foot.s, np.zeros(1))
        d_nb = float(base.project(np.stack([fx, fy], axis=1)).d[0])
        for dur in cfg.lane_change_durations:
            k = min(int(round(dur / cfg.dt)), cfg.steps)
            for off in offsets:
                for a in accels:
                    prof = profiles[a]
                    target = d_nb + off
                    L = max(prof[2][k], cfg.lateral_ratio * abs(target - d0), cfg.min_transition)
                    # a lane change must be completed inside the horizon
                    if L > prof[2][-1]:
                        continue
                    specs.append(_Spec(side, a, target, L, nb, off, dur, prof))
    return specs


def _central(f, w: int = 4):
    """Windowed central difference along axis 1 (one-sided at the ends).

    The window smooths over the vertices of piecewise-linear maps.
    """
    n = f.shape[1]
    idx = np.arange(n)
    hi = np.minimum(idx + w, n - 1)
    lo = np.maximum(idx - w, 0)
    return f[:, hi] - f[:, lo]


def _rollout(ego: EgoState, base, s0: float, d0: float, slope0: float, curv0: float,
             specs, cfg: SamplerConfig):
    """Turn Frenet specs into Cartesian state arrays; returns (states, feasible)."""
    n = len(specs)
    steps = cfg.steps
    dist = np.stack([sp.profile[2] for sp in specs])          # (n, steps+1)
    speed = np.stack([sp.profile[0] for sp in specs])
    acc = np.stack([sp.profile[1] for sp in specs])
    total = dist[:, -1]
    # keep the fine grid no denser than ~0.25 m so map vertices do not show up as curvature spikes
    span = np.maximum(total + 2.0, 64.0)
    u_fine = np.linspace(0.0, 1.0, N_FINE)
    s_rel = span[:, None] * u_fine[None, :]                   # (n, N)
    L = np.array([sp.length for sp in specs])[:, None]
    target = np.array([sp.target for sp in specs])[:, None]
    d = quintic_lateral(s_rel / L, d0, slope0 * L, curv0 * L * L, target)
    x, y, _, _ = base.frenet_to_xy(s0 + s_rel, d)
    dx = np.diff(x, axis=1)
    dy = np.diff(y, axis=1)
    lam = np.concatenate([np.zeros((n, 1)), np.cumsum(np.hypot(dx, dy), axis=1)], axis=1)
    theta = np.unwrap(np.arctan2(_central(y), _central(x)), axis=1)
    # anchor the unwrapped branch to the ego heading
    theta += np.round((ego.pose.heading - theta[:, :1]) / (2 * np.pi)) * 2 * np.pi
    kappa = _central(theta) / np.maximum(_central(lam), 1e-12)
    states = np.empty((n, steps + 1, 6))
    for i in range(n):
        if total[i] <= 1e-9:
            states[i, :, :3] = ego.as_array()[:3]
            states[i, :, CURV] = ego.curvature
            continue
        li = lam[i]
        states[i, :, 0] = np.interp(dist[i], li, x[i])
        states[i, :, 1] = np.interp(dist[i], li, y[i])
        states[i, :, HEADING] = np.interp(dist[i], li, theta[i])
        states[i, :, CURV] = np.interp(dist[i], li, kappa[i])
    states[:, :, SPEED] = speed
    states[:, :, ACCEL] = acc
    states[:, :, HEADING] = wrap_angle(states[:, :, HEADING])
    # curvature is only meaningful where the path is actually traversed
    moving = s_rel <= (total[:, None] + 1e-9)
    feasible = np.all((np.abs(kappa) <= cfg.kappa_max) | ~moving, axis=1)
    states[:, 0, :] = ego.as_array()
    states, dev = _track(states, acc[:, :-1], cfg)
    feasible &= dev <= cfg.track_tolerance
    return states, feasible


_TRACK_ITERS = 2
_TRACK_REG = 0.1
_TRACK_EPS = 1e-6


def _track(path_states: np.ndarray, acc: np.ndarray, cfg: SamplerConfig):
    """Replace sampled path states by a bicycle rollout that follows them.

    The curvature at each step is fitted by damped Gauss-Newton so that the
    rollout positions match the path; the result satisfies the dynamics
    exactly. Returns (states, max position deviation from the path).
    """
    n, T1, _ = path_states.shape
    T = T1 - 1
    target = path_states[:, 1:, :2]
    prior = np.clip(path_states[:, 1:, CURV], -cfg.kappa_max, cfg.kappa_max)
    knots = prior.copy()
    s0 = path_states[:, 0]
    eye = np.eye(T)

    def residual(roll, kn):
        pos = (roll[..., 1:, :2] - target).reshape(*roll.shape[:-2], 2 * T)
        return np.concatenate([pos, _TRACK_REG * (kn - prior)], axis=-1)

    for _ in range(_TRACK_ITERS):
        # base rollout plus one perturbed rollout per knot, in a single batch
        kb = np.concatenate([knots[None], knots[None] + _TRACK_EPS * eye[:, None, :]], axis=0)
        rolls = rollout_knots(np.tile(s0, (T + 1, 1)), np.tile(acc, (T + 1, 1)),
                              kb.reshape(-1, T), cfg.dt).reshape(T + 1, n, T1, 6)
        r = residual(rolls, kb)
        J = ((r[1:] - r[0]) / _TRACK_EPS).transpose(1, 2, 0)           # (n, m, T)
        JtJ = J.transpose(0, 2, 1) @ J + 1e-9 * eye
        step = np.linalg.solve(JtJ, -(J.transpose(0, 2, 1) @ r[0][..., None]))[..., 0]
        knots = np.clip(knots + step, -cfg.kappa_max, cfg.kappa_max)
    out = rollout_knots(np.ascontiguousarray(s0), np.ascontiguousarray(acc), knots, cfg.dt)
    dev = np.hypot(*(out[:, :, :2] - path_states[:, :, :2]).transpose(2, 0, 1)).max(axis=1)
    out[:, :, SPEED] = path_states[:, :, SPEED]
    out[:, :, ACCEL] = path_states[:, :, ACCEL]
    out[:, 0] = path_states[:, 0]
    return out, dev


def _frenet_start(ego: EgoState, base):
    proj = base.project(ego.pose.xy[None])
    s0, d0 = float(proj.s[0]), float(proj.d[0])
    dth = float(wrap_angle(ego.pose.heading - base.headings[proj.segment[0]]))
    dth = max(min(dth, 1.2), -1.2)
    slope0 = math.tan(dth)
    curv0 = ego.curvature * (1.0 + slope0 * slope0) ** 1.5 - _path_curvature(base, s0)
    return s0, d0, slope0, curv0


def _build(ego, lane_map, cfg, hard_brake_only=False):
    lane_id = _locate_ego(ego, lane_map, cfg)
    base = lane_map.base_path(lane_id).extended(back=50.0, ahead=400.0)
    s0, d0, slope0, curv0 = _frenet_start(ego, base)
    specs = _specs(ego, lane_map, lane_id, base, s0, d0, cfg, hard_brake_only)
    states, feasible = _rollout(ego, base, s0, d0, slope0, curv0, specs, cfg)
    out, seen = [], set()
    for sp, st, ok in zip(specs, states, feasible):
        if not ok:
            continue
        key = np.round(st, 6).tobytes() + np.round(sp.profile[1][:-1], 6).tobytes()
        if key in seen:
            continue
        seen.add(key)
        out.append(Trajectory(st, lane_id, sp.maneuver, sp.accel, sp.offset,
                              sp.target_lane, sp.duration, cfg.dt, sp.profile[1][:-1].copy()))
        if len(out) >= cfg.max_candidates:
            break
    return out


def generate_candidates(ego: EgoState, lane_map: LaneMap, cfg: SamplerConfig = SamplerConfig()):
    """Cartesian product of longitudinal and lateral profiles, deduplicated.

    Order: keep-lane profiles, nudges, left lane changes, right lane changes.
    Raises OffMapError when the ego is not near any lane.
    """
    return _build(ego, lane_map, cfg)


def hard_brake(ego: EgoState, lane_map: LaneMap, cfg: SamplerConfig = SamplerConfig()) -> Trajectory:
    """Maximum-deceleration profile along the current lane."""
    out = _build(ego, lane_map, cfg, hard_brake_only=True)
    if out:
        return out[0]
    # infeasible lateral recovery: brake straight along the current heading
    lane_id = _locate_ego(ego, lane_map, cfg)
    v, acc, dist = longitudinal_profile(ego.speed, cfg.hard_brake_decel, max(ego.speed, 1.0),
                                        cfg.dt, cfg.steps)
    st = np.tile(ego.as_array(), (cfg.steps + 1, 1))
    st[:, 0] += dist * math.cos(ego.pose.heading)
    st[:, 1] += dist * math.sin(ego.pose.heading)
    st[:, SPEED], st[:, ACCEL] = v, acc
    st[0] = ego.as_array()
    return Trajectory(st, lane_id, "brake", cfg.hard_brake_decel, 0.0, lane_id, 0.0, cfg.dt,
                      acc[:-1].copy())


def stack_states(trajs) -> np.ndarray:
    return np.stack([t.states for t in trajs])
