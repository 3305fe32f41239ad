"""Scripted safety scenarios with disjoint train/eval knob values."""
from __future__ import annotations

import numpy as np

from .scenario import Goal, Scenario

EGO_SPEED = 20.0
DURATION = 15.0
# lane-follow scenarios treat every lane as on-route
ALL_LANES = ["L0", "L1", "L2"]

# knob values per split; train and eval never share a value
KNOBS = {
    "train": {"ttc": (1.6, 2.2, 2.8, 3.4), "arrival": (1.5, 2.5, 3.5), "speed": (16.0, 24.0)},
    "eval": {"ttc": (1.9, 2.5, 3.1), "arrival": (1.0, 2.0, 3.0), "speed": (18.0, 22.0)},
}


def _straight(n_lanes=3):
    return {"builder": "straight_highway", "params": {"n_lanes": n_lanes}}


def _ego(lane="L1", s=0.0, speed=EGO_SPEED):
    return {"lane": lane, "s": s, "speed": speed}


def cut_in(name, ttc=2.5, arrival=2.0, speed=EGO_SPEED, split="eval", seed=0, side="L2",
           brake=False):
    """Slower actor in the adjacent lane cuts in ahead of the ego."""
    v_act = speed - 5.0
    # centre gap at mid-manoeuvre closes in ``ttc`` seconds at the current speeds
    t_mid = arrival + 1.25
    s0 = 5.0 + (speed - v_act) * (ttc + t_mid)
    events = [{"t": arrival, "type": "lane_change", "lane": "L1", "duration": 2.5}]
    if brake:
        events.append({"t": arrival + 2.5, "type": "speed", "a": -4.0, "v_target": 2.0})
    actors = [{"id": "cutter", "kind": "scripted", "lane": side, "s": s0,
               "speed": v_act, "events": events}]
    return Scenario(name, _straight(), _ego(speed=speed), actors, route=ALL_LANES, duration=DURATION, seed=seed,
                    family="lane_follow", split=split,
                    params={"ttc": ttc, "arrival": arrival, "speed": speed, "side": side})


def hard_brake_lead(name, ttc=2.5, arrival=2.0, speed=EGO_SPEED, split="eval", seed=0):
    """Lead vehicle in the ego lane brakes hard to a stop."""
    gap = 10.0 + speed * ttc * 0.5
    actors = [{"id": "lead", "kind": "scripted", "lane": "L1", "s": gap + 5.0, "speed": speed,
               "events": [{"t": arrival, "type": "speed", "a": -6.0, "v_target": 0.0}]},
              {"id": "left", "kind": "idm", "lane": "L2", "s": 5.0, "speed": speed,
               "idm": {"v0": speed}}]
    return Scenario(name, _straight(), _ego(speed=speed), actors, route=ALL_LANES, duration=DURATION, seed=seed,
                    family="lane_follow", split=split,
                    params={"ttc": ttc, "arrival": arrival, "speed": speed})


def blocked_lane(name, ttc=2.5, arrival=2.0, speed=EGO_SPEED, split="eval", seed=0):
    """Stalled vehicle in the ego lane with moving traffic to the left."""
    dist = speed * (2.0 * ttc + arrival)
    actors = [{"id": "stalled", "kind": "static", "lane": "L1", "s": dist},
              {"id": "left", "kind": "idm", "lane": "L2", "s": -15.0 - 5.0 * arrival,
               "speed": speed, "idm": {"v0": speed + 2.0}}]
    return Scenario(name, _straight(), _ego(speed=speed), actors, route=ALL_LANES, duration=DURATION, seed=seed,
                    family="lane_follow", split=split,
                    params={"ttc": ttc, "arrival": arrival, "speed": speed})


def lane_change(name, side="left", ttc=2.5, arrival=2.0, speed=EGO_SPEED, split="eval", seed=0):
    """Reach a goal in the adjacent lane while a vehicle there is alongside."""
    target = "L2" if side == "left" else "L0"
    actors = [{"id": "adjacent", "kind": "idm", "lane": target, "s": 2.0 * arrival - 3.0,
               "speed": speed, "idm": {"v0": speed}},
              {"id": "lead", "kind": "idm", "lane": "L1", "s": 10.0 + speed * ttc, "speed": speed - 2.0,
               "idm": {"v0": speed - 2.0}}]
    return Scenario(name, _straight(), _ego(speed=speed), actors, Goal(target, 120.0, 1000.0),
                    route=[target], duration=DURATION, seed=seed, family="lane_change",
                    split=split, params={"ttc": ttc, "arrival": arrival, "speed": speed, "side": side})


def merge_in(name, ttc=2.5, arrival=2.0, speed=EGO_SPEED, split="eval", seed=0):
    """Ego on the acceleration lane merges into highway traffic before a barrier."""
    mp = {"builder": "highway_with_ramp", "params": {"n_lanes": 2, "ramp_end": 200.0}}
    actors = [{"id": "barrier", "kind": "static", "lane": "R", "s": 297.0, "length": 4.0,
               "width": 3.0},
              {"id": "main0", "kind": "idm", "lane": "L0a", "s": 10.0 - 4.0 * arrival,
               "speed": speed, "idm": {"v0": speed}},
              {"id": "main1", "kind": "idm", "lane": "L0a", "s": 10.0 - 4.0 * arrival - speed * ttc - 8.0,
               "speed": speed, "idm": {"v0": speed}}]
    return Scenario(name, mp, _ego("R", 0.0, speed), actors, Goal("L0b", 0.0, 1000.0),
                    duration=DURATION, seed=seed, family="lane_merge", split=split,
                    params={"ttc": ttc, "arrival": arrival, "speed": speed})


def actor_merge(name, ttc=2.5, arrival=2.0, speed=EGO_SPEED, split="eval", seed=0):
    """Actor on the acceleration lane merges in front of the ego."""
    mp = {"builder": "highway_with_ramp", "params": {"n_lanes": 2, "ramp_end": 200.0}}
    v_act = speed - 4.0
    s_act = 10.0 + 4.0 * ttc - (speed - v_act) * arrival + 100.0
    actors = [{"id": "merger", "kind": "scripted", "lane": "R", "s": s_act, "speed": v_act,
               "events": [{"t": arrival, "type": "lane_change", "lane": "L0a", "duration": 3.0}]}]
    return Scenario(name, mp, _ego("L0a", 0.0, speed), actors, route=["L0a", "L0b", "L1"], duration=DURATION, seed=seed,
                    family="lane_merge", split=split,
                    params={"ttc": ttc, "arrival": arrival, "speed": speed})


def aggressor(name, fast=False, ttc=2.5, arrival=2.0, speed=EGO_SPEED, split="eval", seed=0):
    """Slow vehicle pulls in far ahead, or a fast one overtakes and squeezes in close."""
    if fast:
        v_act = speed + 8.0
        s0 = -20.0 - 2.0 * ttc
        ev = [{"t": arrival, "type": "lane_change", "lane": "L1", "duration": 2.0},
              {"t": arrival + 2.0, "type": "speed", "a": -3.0, "v_target": speed - 6.0}]
        lane = "L2"
    else:
        v_act = speed * 0.4
        s0 = 30.0 + speed * ttc
        ev = [{"t": arrival, "type": "lane_change", "lane": "L1", "duration": 3.0}]
        lane = "L0"
    actors = [{"id": "aggressor", "kind": "scripted", "lane": lane, "s": s0, "speed": v_act,
               "events": ev}]
    return Scenario(name, _straight(), _ego(speed=speed), actors, route=ALL_LANES, duration=DURATION, seed=seed,
                    family="lane_follow", split=split,
                    params={"ttc": ttc, "arrival": arrival, "speed": speed, "fast": fast})


def _suite(split: str, ttc, arrival, speed, tag: str = "", seed: int = 0):
    t = tag
    return [
        cut_in(f"cut_in{t}", ttc, arrival, speed, split, seed),
        hard_brake_lead(f"hard_brake_lead{t}", ttc, arrival, speed, split, seed),
        blocked_lane(f"blocked_lane{t}", ttc, arrival, speed, split, seed),
        lane_change(f"lane_change_left{t}", "left", ttc, arrival, speed, split, seed),
        lane_change(f"lane_change_right{t}", "right", ttc, arrival, speed, split, seed),
        merge_in(f"merge_in{t}", ttc, arrival, speed, split, seed),
        actor_merge(f"actor_merge{t}", ttc, arrival, speed, split, seed),
        aggressor(f"slow_aggressor{t}", False, ttc, arrival, speed, split, seed),
        aggressor(f"fast_aggressor{t}", True, ttc, arrival, speed, split, seed),
        cut_in(f"cut_in_brake{t}", ttc, arrival, speed, split, seed, side="L0", brake=True),
    ]


def safety_suite(seed: int = 0):
    """The 10-scenario evaluation suite."""
    k = KNOBS["eval"]
    return _suite("eval", k["ttc"][1], k["arrival"][1], EGO_SPEED, "", seed)


def training_suite(seed: int = 0):
    """20 training scenarios drawn from the train knob values."""
    k = KNOBS["train"]
    out = []
    combos = [(k["ttc"][0], k["arrival"][0], k["speed"][0]),
              (k["ttc"][2], k["arrival"][2], k["speed"][1])]
    for j, (ttc, arr, v) in enumerate(combos):
        out.extend(_suite("train", ttc, arr, v, f"_train{j}", seed + j))
    return out


def eval_variants(seed: int = 0):
    """Extra held-out scenarios across the eval knob grid."""
    k = KNOBS["eval"]
    out = []
    for j, (ttc, arr, v) in enumerate([(k["ttc"][0], k["arrival"][0], k["speed"][0]),
                                       (k["ttc"][2], k["arrival"][2], k["speed"][1])]):
        out.extend(_suite("eval", ttc, arr, v, f"_eval{j}", seed + j))
    return out


def crowded(n_actors: int = 60, seed: int = 0, n_lanes: int = 4) -> Scenario:
    """Dense car-following traffic around the ego for runtime profiling."""
    rng = np.random.default_rng(seed)
    per_lane = int(np.ceil(n_actors / n_lanes))
    actors = []
    for i in range(n_lanes):
        s_vals = np.arange(per_lane) * 18.0 - 9.0 * per_lane + rng.uniform(-3.0, 3.0, per_lane)
        for j, s in enumerate(s_vals):
            if len(actors) >= n_actors:
                break
            if i == 1 and abs(s) < 12.0:
                continue
            v = float(rng.uniform(15.0, 25.0))
            actors.append({"id": f"c{i}_{j}", "kind": "idm", "lane": f"L{i}", "s": float(s),
                           "speed": v, "idm": {"v0": v}})
    k = 0
    while len(actors) < n_actors:
        actors.append({"id": f"x{k}", "kind": "idm", "lane": f"L{k % n_lanes}",
                       "s": 200.0 + 15.0 * k, "speed": 18.0, "idm": {"v0": 18.0}})
        k += 1
    mp = {"builder": "straight_highway", "params": {"n_lanes": n_lanes, "x0": -800.0, "length": 2500.0}}
    return Scenario("crowded", mp, _ego("L1"), actors, route=[f"L{i}" for i in range(n_lanes)], duration=10.0, seed=seed,
                    family="canonical", split="eval", params={"n_actors": n_actors})


def empty_road(name="empty", duration=10.0, goal=True, seed=0) -> Scenario:
    g = Goal("L0", 100.0, 1000.0) if goal else None
    return Scenario(name, _straight(), _ego("L0"), [], g, duration=duration, seed=seed,
                    family="canonical")
