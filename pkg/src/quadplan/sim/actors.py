"""Simulated traffic: scripted actors and intelligent-driver car followers.

Actors move in the Frenet frame (s, d) of their lane's base path. Their
published plans extrapolate the *current* behaviour only: maneuvers that have
not started yet are not visible to anyone, planners included.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..occupancy import ActorTrack
from ..world.geometry import Polyline
from ..world.lanemap import LaneMap

SIM_DT = 0.1


@dataclass
class IDMParams:
    v0: float = 25.0
    s0: float = 2.0
    T_h: float = 1.5
    a_max: float = 1.5
    b: float = 2.0
    delta: float = 4.0
    min_accel: float = -8.0

    def __post_init__(self):
        for k in ("v0", "s0", "T_h", "a_max", "b", "delta"):
            if getattr(self, k) <= 0:
                raise ValueError(f"IDM parameter {k} must be positive")

    def to_dict(self):
        return dict(self.__dict__)


def idm_accel(v: float, gap: float, dv: float, p: IDMParams) -> float:
    """Intelligent-driver acceleration; ``dv`` is own speed minus leader speed."""
    free = 1.0 - (max(v, 0.0) / p.v0) ** p.delta
    if not math.isfinite(gap):
        a = p.a_max * free
    else:
        s_star = p.s0 + max(0.0, v * p.T_h + v * dv / (2.0 * math.sqrt(p.a_max * p.b)))
        a = p.a_max * (free - (s_star / max(gap, 0.1)) ** 2)
    return min(max(a, p.min_accel), p.a_max)


def smoothstep5(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * u * (10 - 15 * u + 6 * u * u)


@dataclass
class LateralMove:
    t0: float
    d_from: float
    d_to: float
    duration: float

    def d_at(self, t):
        return self.d_from + (self.d_to - self.d_from) * smoothstep5((np.asarray(t) - self.t0) / self.duration)

    def rate_at(self, t):
        u = np.clip((np.asarray(t) - self.t0) / self.duration, 0.0, 1.0)
        return (self.d_to - self.d_from) * 30 * u * u * (1 - u) ** 2 / self.duration


def lane_offset(lane_map: LaneMap, path: Polyline, lane_id: str, s: float) -> float:
    """Lateral offset of ``lane_id``'s centerline from ``path`` at arc length ``s``."""
    x, y, _, _ = path.frenet_to_xy(np.array([s]), np.zeros(1))
    target = lane_map.base_path(lane_id).extended(back=500.0, ahead=500.0)
    proj = target.project(np.array([[x[0], y[0]]]))
    tx, ty, _, _ = target.frenet_to_xy(proj.s, np.zeros(1))
    return float(path.project(np.stack([tx, ty], axis=1)).d[0])


class Actor:
    """Common state and geometry for lane-bound actors."""

    def __init__(self, actor_id: str, path: Polyline, s: float, d: float, v: float,
                 length: float = 5.0, width: float = 2.0):
        if length <= 0 or width <= 0:
            raise ValueError("actor footprint must be positive")
        self.id = actor_id
        self.path = path
        self.s, self.d, self.v, self.a = float(s), float(d), float(v), 0.0
        self.length, self.width = float(length), float(width)
        self.moves: list = []

    # lateral profile from the lane-change history
    def d_at(self, t, moves=None):
        moves = self.moves if moves is None else moves
        d = np.full(np.shape(t), self._d_init, dtype=float)
        for m in moves:
            d = np.where(np.asarray(t) >= m.t0, m.d_at(t), d)
        return d

    def d_rate_at(self, t, moves=None):
        moves = self.moves if moves is None else moves
        r = np.zeros(np.shape(t))
        for m in moves:
            r = np.where(np.asarray(t) >= m.t0, m.rate_at(t), r)
        return r

    def frenet_pose(self, s, d, d_rate, v):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        d = np.broadcast_to(np.asarray(d, dtype=float), s.shape)
        x, y, h, _ = self.path.frenet_to_xy(s, d)
        slip = np.arctan2(np.asarray(d_rate, dtype=float), np.maximum(np.asarray(v, dtype=float), 1.0))
        return x, y, h + slip

    def box(self):
        x, y, h = self.pose()
        return (x, y, h, self.length, self.width)

    def velocity(self):
        _, _, h = self.pose()
        return self.v * math.cos(h), self.v * math.sin(h)


class ScriptedActor(Actor):
    """Follows a scripted list of speed and lane-change events exactly.

    Events: ``{"t", "type": "speed", "a", "v_target"}`` accelerates at ``a``
    until ``v_target``; ``{"t", "type": "lane_change", "lane" | "d", "duration"}``
    moves laterally with a quintic blend.
    """

    def __init__(self, actor_id, path, s, d, v, events=(), length=5.0, width=2.0,
                 lane_map: Optional[LaneMap] = None, t_end: float = 40.0):
        super().__init__(actor_id, path, s, d, v, length, width)
        self._d_init = float(d)
        self.events = sorted(events, key=lambda e: e["t"])
        self.lane_map = lane_map
        self.t_end = t_end
        self._tracks = [self._integrate(k) for k in range(len(self.events) + 1)]
        self.t = 0.0
        self._sync()

    def _integrate(self, k: int):
        """Script track using only the first ``k`` events."""
        evs = self.events[:k]
        n = int(round(self.t_end / SIM_DT)) + 1
        t = np.arange(n) * SIM_DT
        s = np.empty(n)
        v = np.empty(n)
        a_arr = np.zeros(n)
        moves = []
        s[0], v[0] = self.s, self.v
        accel, v_target = 0.0, None
        ev_i = 0
        d_cur = self._d_init
        for i in range(n):
            while ev_i < len(evs) and evs[ev_i]["t"] <= t[i] + 1e-9:
                e = evs[ev_i]
                if e["type"] == "speed":
                    accel, v_target = float(e["a"]), float(e.get("v_target", 0.0 if e["a"] < 0 else 1e9))
                elif e["type"] == "lane_change":
                    d_cur = float(self.d_at(t[i], moves)) if moves else self._d_init
                    if "lane" in e:
                        d_to = lane_offset(self.lane_map, self.path, e["lane"], s[i])
                    else:
                        d_to = float(e["d"])
                    moves.append(LateralMove(t[i], d_cur, d_to, float(e.get("duration", 3.0))))
                else:
                    raise ValueError(f"unknown event type {e['type']}")
                ev_i += 1
            if i == n - 1:
                break
            a = accel
            if v_target is not None:
                if (accel > 0 and v[i] >= v_target) or (accel < 0 and v[i] <= v_target):
                    a = 0.0
            v_next = v[i] + a * SIM_DT
            if v_target is not None and accel != 0 and (v_next - v_target) * np.sign(accel) > 0:
                v_next = v_target
            v_next = max(v_next, 0.0)
            s[i + 1] = s[i] + 0.5 * (v[i] + v_next) * SIM_DT
            v[i + 1] = v_next
            a_arr[i] = (v_next - v[i]) / SIM_DT
        d = self.d_at(t, moves)
        dr = self.d_rate_at(t, moves)
        return t, s, d, dr, v, a_arr, moves

    def _active(self, t: float) -> int:
        return sum(1 for e in self.events if e["t"] <= t + 1e-9)

    def _sync(self):
        t, s, d, dr, v, a, _ = self._tracks[-1]
        self.s = float(np.interp(self.t, t, s))
        self.d = float(np.interp(self.t, t, d))
        self.v = float(np.interp(self.t, t, v))
        self.a = float(np.interp(self.t, t, a))
        self._dr = float(np.interp(self.t, t, dr))

    def pose(self):
        x, y, h = self.frenet_pose(self.s, self.d, self._dr, self.v)
        return float(x[0]), float(y[0]), float(h[0])

    def step(self, dt: float, world=None):
        self.t += dt
        self._sync()

    def plan(self, horizon: float = 5.0, dt: float = 0.5, others=None) -> ActorTrack:
        t, s, d, dr, v, _, _ = self._tracks[self._active(self.t)]
        tq = self.t + np.arange(int(round(horizon / dt)) + 1) * dt
        x, y, h = self.frenet_pose(np.interp(tq, t, s), np.interp(tq, t, d),
                                   np.interp(tq, t, dr), np.interp(tq, t, v))
        return ActorTrack(tq - self.t, np.stack([x, y], axis=1), h, self.length, self.width, self.id)


class IDMActor(Actor):
    """Car follower along its path; the leader is the closest in-path vehicle ahead, ego included.

    An optional ``lane_change`` dict (``t``, ``lane`` or ``d``, ``duration``)
    triggers one scripted lateral move.
    """

    def __init__(self, actor_id, path, s, d, v, params: IDMParams = None, length=5.0, width=2.0,
                 lane_change: Optional[dict] = None, lane_map: Optional[LaneMap] = None):
        super().__init__(actor_id, path, s, d, v, length, width)
        self._d_init = float(d)
        self.params = params or IDMParams()
        self.lane_change = lane_change
        self.lane_map = lane_map
        self.t = 0.0
        self._dr = 0.0

    def pose(self):
        x, y, h = self.frenet_pose(self.s, self.d, self._dr, self.v)
        return float(x[0]), float(y[0]), float(h[0])

    def _leader(self, others):
        """(gap, leader speed) of the nearest in-path vehicle ahead."""
        best_gap, best_v = math.inf, 0.0
        for o in others:
            if o is self:
                continue
            ox, oy, oh = o.pose()
            proj = self.path.project(np.array([[ox, oy]]))
            ds = float(proj.s_ext[0]) - self.s
            if ds <= 0:
                continue
            if abs(float(proj.d[0]) - self.d) > 0.5 * (self.width + o.width) + 0.2:
                continue
            gap = ds - 0.5 * (self.length + o.length)
            if gap < best_gap:
                best_gap = gap
                vx, vy = o.velocity()
                best_v = vx * math.cos(oh) + vy * math.sin(oh) if o.v > 0 else 0.0
        return best_gap, best_v

    def step(self, dt: float, world=None):
        others = world or []
        if self.lane_change and not self.moves and self.t + 1e-9 >= self.lane_change["t"]:
            lc = self.lane_change
            d_to = lane_offset(self.lane_map, self.path, lc["lane"], self.s) if "lane" in lc else float(lc["d"])
            self.moves.append(LateralMove(self.t, self.d, d_to, float(lc.get("duration", 3.0))))
        gap, v_lead = self._leader(others)
        a = idm_accel(self.v, gap, self.v - v_lead, self.params)
        v_next = max(self.v + a * dt, 0.0)
        self.s += 0.5 * (self.v + v_next) * dt
        self.a = (v_next - self.v) / dt
        self.v = v_next
        self.t += dt
        self.d = float(self.d_at(self.t))
        self._dr = float(self.d_rate_at(self.t))

    def plan(self, horizon: float = 5.0, dt: float = 0.5, others=None) -> ActorTrack:
        """Roll the car-following model forward with others at constant velocity."""
        n = int(round(horizon / dt))
        sub = max(1, int(round(dt / SIM_DT)))
        h = dt / sub
        s, v = self.s, self.v
        gap0, v_lead = self._leader(others or [])
        ss, vv = [s], [v]
        lead_s = s + gap0 if math.isfinite(gap0) else math.inf
        for _ in range(n):
            for _ in range(sub):
                gap = lead_s - s if math.isfinite(lead_s) else math.inf
                a = idm_accel(v, gap, v - v_lead, self.params)
                v_next = max(v + a * h, 0.0)
                s += 0.5 * (v + v_next) * h
                v = v_next
                if math.isfinite(lead_s):
                    lead_s += v_lead * h
            ss.append(s)
            vv.append(v)
        tq = self.t + np.arange(n + 1) * dt
        x, y, hh = self.frenet_pose(np.array(ss), self.d_at(tq), self.d_rate_at(tq), np.array(vv))
        return ActorTrack(tq - self.t, np.stack([x, y], axis=1), hh, self.length, self.width, self.id)


@dataclass
class StaticActor:
    """Parked obstacle (e.g. a barrier at the end of a ramp)."""
    id: str
    x: float
    y: float
    heading: float = 0.0
    length: float = 5.0
    width: float = 2.0
    v: float = 0.0
    a: float = 0.0
    extra: dict = field(default_factory=dict)

    def pose(self):
        return self.x, self.y, self.heading

    def box(self):
        return (self.x, self.y, self.heading, self.length, self.width)

    def velocity(self):
        return 0.0, 0.0

    def step(self, dt, world=None):
        pass

    def plan(self, horizon: float = 5.0, dt: float = 0.5, others=None) -> ActorTrack:
        n = int(round(horizon / dt)) + 1
        return ActorTrack(np.arange(n) * dt, np.tile([self.x, self.y], (n, 1)),
                          np.full(n, self.heading), self.length, self.width, self.id)
