"""Scenario documents: map, ego start, goal, actors, duration."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..world import maps
from ..world.dynamics import EgoState
from ..world.geometry import Pose2D
from ..world.lanemap import LaneMap
from .actors import IDMActor, IDMParams, ScriptedActor, StaticActor

SCENARIO_SCHEMA_VERSION = 1
MAX_DURATION = 20.0
FAMILIES = ("lane_change", "lane_follow", "lane_merge", "canonical")
MAP_BUILDERS = {
    "straight_highway": maps.straight_highway,
    "curved_highway": maps.curved_highway,
    "highway_with_ramp": maps.highway_with_ramp,
}


class ScenarioError(ValueError):
    pass


@dataclass
class Goal:
    lane: str
    s_min: float
    s_max: float

    def to_dict(self):
        return {"lane": self.lane, "s_min": self.s_min, "s_max": self.s_max}


@dataclass
class Scenario:
    name: str
    map_spec: dict
    ego: dict
    actors: list = field(default_factory=list)
    goal: Optional[Goal] = None
    route: Optional[list] = None
    duration: float = 15.0
    seed: int = 0
    family: str = "canonical"
    split: str = "eval"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.duration <= MAX_DURATION:
            raise ScenarioError(f"duration must be in (0, {MAX_DURATION}] s")
        if self.family not in FAMILIES:
            raise ScenarioError(f"unknown family {self.family}")
        lm = self.lane_map()
        if self.goal is not None:
            if self.goal.lane not in lm.lanes:
                raise ScenarioError(f"goal lane {self.goal.lane} not in map")
            if self.goal.lane not in lm.route:
                raise ScenarioError("goal lane must be on the route")
        for a in self.actors:
            if a.get("length", 5.0) <= 0 or a.get("width", 2.0) <= 0:
                raise ScenarioError("actor footprint must be positive")

    # -------------------------------------------------------------- building
    def lane_map(self) -> LaneMap:
        if "_map" not in self.__dict__:
            spec = self.map_spec
            if "builder" in spec:
                lm = MAP_BUILDERS[spec["builder"]](**spec.get("params", {}))
            else:
                lm = LaneMap.from_dict(spec)
            if self.route:
                lm = lm.with_route(self.route)
            self.__dict__["_map"] = lm
        return self.__dict__["_map"]

    def _frenet_xy(self, lane_id, s, d):
        path = self.lane_map().base_path(lane_id).extended(back=500.0, ahead=500.0)
        x, y, h, _ = path.frenet_to_xy(np.array([s + 500.0]), np.array([d]))
        return path, float(x[0]), float(y[0]), float(h[0])

    def ego_state(self) -> EgoState:
        e = self.ego
        if "lane" in e:
            _, x, y, h = self._frenet_xy(e["lane"], e.get("s", 0.0), e.get("d", 0.0))
            h = e.get("heading", h)
        else:
            x, y, h = e["x"], e["y"], e.get("heading", 0.0)
        return EgoState(Pose2D(x, y, h), e.get("speed", 0.0), e.get("accel", 0.0), e.get("curvature", 0.0))

    def build_actors(self, t_end: Optional[float] = None):
        lm = self.lane_map()
        t_end = t_end or self.duration + 10.0
        out = []
        for i, a in enumerate(self.actors):
            aid = a.get("id", f"a{i}")
            kind = a.get("kind", "scripted")
            L, W = a.get("length", 5.0), a.get("width", 2.0)
            if kind == "static":
                if "lane" in a:
                    _, x, y, h = self._frenet_xy(a["lane"], a.get("s", 0.0), a.get("d", 0.0))
                else:
                    x, y, h = a["x"], a["y"], a.get("heading", 0.0)
                out.append(StaticActor(aid, x, y, h, L, W))
                continue
            path = lm.base_path(a["lane"]).extended(back=500.0, ahead=500.0)
            s = a.get("s", 0.0) + 500.0
            if kind == "scripted":
                out.append(ScriptedActor(aid, path, s, a.get("d", 0.0), a.get("speed", 0.0),
                                         a.get("events", []), L, W, lm, t_end))
            elif kind == "idm":
                params = IDMParams(**a.get("idm", {}))
                out.append(IDMActor(aid, path, s, a.get("d", 0.0), a.get("speed", 0.0), params,
                                    L, W, a.get("lane_change"), lm))
            else:
                raise ScenarioError(f"unknown actor kind {kind}")
        return out

    def goal_reached(self, xy) -> bool:
        if self.goal is None:
            return False
        lm = self.lane_map()
        q = lm.query(np.asarray(xy, dtype=float)[None])
        if q.containing[0] < 0 or lm.ids[int(q.containing[0])] != self.goal.lane:
            return False
        s = float(q.s_ext[lm.index[self.goal.lane], 0])
        return self.goal.s_min <= s <= self.goal.s_max

    # -------------------------------------------------------------- io
    def to_dict(self):
        return {
            "schema_version": SCENARIO_SCHEMA_VERSION,
            "name": self.name, "family": self.family, "split": self.split,
            "duration": self.duration, "seed": self.seed,
            "map": self.map_spec, "route": self.route, "ego": self.ego,
            "goal": self.goal.to_dict() if self.goal else None,
            "actors": self.actors, "params": self.params,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("schema_version", SCENARIO_SCHEMA_VERSION) != SCENARIO_SCHEMA_VERSION:
            raise ScenarioError("unsupported scenario schema version")
        try:
            goal = Goal(**d["goal"]) if d.get("goal") else None
            return cls(name=d["name"], map_spec=d["map"], ego=d["ego"],
                       actors=copy.deepcopy(d.get("actors", [])), goal=goal, route=d.get("route"),
                       duration=float(d.get("duration", 15.0)), seed=int(d.get("seed", 0)),
                       family=d.get("family", "canonical"), split=d.get("split", "eval"),
                       params=d.get("params", {}))
        except KeyError as e:
            raise ScenarioError(f"scenario missing field {e}") from None

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Scenario":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except json.JSONDecodeError as e:
            raise ScenarioError(f"{path}: invalid JSON ({e})") from None


def load_dir(path) -> list:
    p = Path(path)
    if not p.is_dir():
        raise ScenarioError(f"scenario directory {path} does not exist")
    files = sorted(p.glob("*.json"))
    if not files:
        raise ScenarioError(f"no scenario files in {path}")
    return [Scenario.load(f) for f in files]


def save_dir(scenarios, path):
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    for s in scenarios:
        s.save(p / f"{s.name}.json")
