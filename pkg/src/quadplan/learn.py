"""Max-margin fitting of cost weights against expert demonstrations, with dataset aggregation."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .costing import FEATURES, F, Weights
from .occupancy import OracleField
from .planner import ExpertWorldView, PlannerConfig, plan
from .query_engine import EGO_LENGTH, EGO_WIDTH
from .world.boxes import boxes_overlap

DATASET_SCHEMA_VERSION = 1
SAFETY_MARGIN = 1.0
COL = F["col"]
REGULAR = np.array([i for i in range(len(FEATURES)) if i != COL])


def imitation_margin(traj, expert) -> np.ndarray:
    """Mean distance over the future waypoints (rows 1..T) of ``traj`` and ``expert``.

    Accepts state arrays of shape (..., T+1, >=2); leading axes broadcast.
    """
    a = np.asarray(traj, dtype=float)[..., 1:, :2]
    b = np.asarray(expert, dtype=float)[..., 1:, :2]
    return np.sqrt(((a - b) ** 2).sum(axis=-1)).mean(axis=-1)


def safety_margin(traj, actors, dt: float = 0.5, ego_length: float = EGO_LENGTH,
                  ego_width: float = EGO_WIDTH, margin: float = SAFETY_MARGIN) -> np.ndarray:
    """Per-step (t = 1..T) indicator of footprint overlap with any actor, times ``margin``."""
    st = np.asarray(traj, dtype=float)
    T = len(st) - 1
    t = np.arange(1, T + 1) * dt
    hit = np.zeros(T, dtype=bool)
    for a in actors:
        ok = t <= a.end_time + 1e-9
        if not ok.any():
            continue
        ax, ay, ah = a.pose_at(t[ok])
        e = st[1:][ok]
        hit[ok] |= np.asarray(boxes_overlap((e[:, 0], e[:, 1], e[:, 2], ego_length, ego_width),
                                            (ax, ay, ah, a.length, a.width)), dtype=bool)
    return hit * float(margin)


@dataclass
class TrainingExample:
    features: np.ndarray         # (n, n_features)
    col_terms: np.ndarray        # (n, T) per-step collision features; rows sum to the col column
    l_im: np.ndarray             # (n,)
    l_c: np.ndarray              # (n, T)
    expert_index: int
    ego: np.ndarray = field(default_factory=lambda: np.zeros(6))
    expert_states: Optional[np.ndarray] = None
    scenario: str = ""
    t: float = 0.0
    iteration: int = 0

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.col_terms = np.asarray(self.col_terms, dtype=float)
        self.l_im = np.asarray(self.l_im, dtype=float)
        self.l_c = np.asarray(self.l_c, dtype=float)
        n = len(self.features)
        if self.features.ndim != 2 or self.features.shape[1] != len(FEATURES):
            raise ValueError("features must be (n, n_features)")
        if self.col_terms.shape[0] != n or self.l_im.shape != (n,) or self.l_c.shape != self.col_terms.shape:
            raise ValueError("inconsistent example shapes")
        if not (np.isfinite(self.features).all() and np.isfinite(self.col_terms).all()):
            raise ValueError("features must be finite")
        if not 0 <= self.expert_index < n:
            raise ValueError("expert index out of range")

    @property
    def n(self) -> int:
        return len(self.features)


def max_margin_loss(ex: TrainingExample, w) -> tuple:
    """Hinge loss forcing the expert below every candidate by the margins; returns (loss, subgradient)."""
    w = w.as_array() if isinstance(w, Weights) else np.asarray(w, dtype=float)
    e = ex.expert_index
    f = ex.features
    d_reg = (f[e, REGULAR] - f[:, REGULAR]) @ w[REGULAR]
    d_col = w[COL] * (ex.col_terms[e] - ex.col_terms)
    inner_t = d_col + ex.l_c
    active = inner_t > 0
    inner = d_reg + ex.l_im + np.where(active, inner_t, 0.0).sum(axis=1)
    k = int(np.argmax(inner))  # first maximiser on ties
    g = np.zeros(len(FEATURES))
    if inner[k] <= 0:
        return 0.0, g
    g[REGULAR] = f[e, REGULAR] - f[k, REGULAR]
    g[COL] = ((ex.col_terms[e] - ex.col_terms[k]) * active[k]).sum()
    return float(inner[k]), g


def dataset_loss(examples: Sequence[TrainingExample], w) -> tuple:
    if not examples:
        return 0.0, np.zeros(len(FEATURES))
    tot, g = 0.0, np.zeros(len(FEATURES))
    for ex in examples:
        l, gi = max_margin_loss(ex, w)
        tot += l
        g += gi
    return tot / len(examples), g / len(examples)


def match_rate(examples: Sequence[TrainingExample], w) -> float:
    """Fraction of examples whose argmin candidate under ``w`` is the expert's."""
    if not examples:
        return float("nan")
    w = w.as_array() if isinstance(w, Weights) else np.asarray(w, dtype=float)
    return float(np.mean([int(np.argmin(ex.features @ w)) == ex.expert_index for ex in examples]))


@dataclass
class FitConfig:
    epochs: int = 300
    lr: float = 10.0
    # indices clamped at zero after each step; None clamps every weight
    nonneg: Optional[tuple] = None
    # per-example steps in a seeded shuffled order; False uses the full-batch subgradient
    stochastic: bool = True
    normalise_step: bool = False
    seed: int = 0

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class FitResult:
    weights: Weights
    train_loss: list
    best_train_loss: list
    val_loss: list
    best_epoch: int


def fit_weights(train: Sequence[TrainingExample], init: Weights, cfg: FitConfig = FitConfig(),
                val: Optional[Sequence[TrainingExample]] = None) -> FitResult:
    """Projected subgradient descent with step lr/sqrt(k) at epoch k; keeps the best weights on validation.

    Without a validation set the training loss selects the best iterate.
    """
    w = init.as_array().copy()
    if not train:
        return FitResult(init, [], [], [], 0)
    nonneg = np.arange(len(w)) if cfg.nonneg is None else np.asarray(cfg.nonneg, dtype=int)
    rng = np.random.default_rng(cfg.seed)
    sel = val if val else train
    best_w, best_sel, best_epoch = w.copy(), math.inf, 0
    hist, best_hist, val_hist = [], [], []
    best_train = math.inf

    def project(v):
        v = v.copy()
        v[nonneg] = np.maximum(v[nonneg], 0.0)
        return v

    def direction(g):
        gn = np.linalg.norm(g)
        return g / gn if cfg.normalise_step and gn > 0 else g

    for k in range(cfg.epochs + 1):
        loss, g = dataset_loss(train, w)
        sel_loss = loss if sel is train else dataset_loss(sel, w)[0]
        hist.append(loss)
        val_hist.append(sel_loss)
        best_train = min(best_train, loss)
        best_hist.append(best_train)
        if sel_loss < best_sel:
            best_sel, best_w, best_epoch = sel_loss, w.copy(), k
        if loss == 0.0 or k == cfg.epochs:
            break
        step = cfg.lr / math.sqrt(k + 1)
        if cfg.stochastic:
            for i in rng.permutation(len(train)):
                li, gi = max_margin_loss(train[i], w)
                if li > 0:
                    w = project(w - step * direction(gi))
        else:
            w = project(w - step * direction(g))
    return FitResult(Weights.from_array(best_w), hist, best_hist, val_hist, best_epoch)


# ---------------------------------------------------------------- data collection

def make_example(ego, view: ExpertWorldView, expert_states: np.ndarray, w: Weights,
                 cfg: PlannerConfig = PlannerConfig(), sigma: float = 0.25,
                 margin: float = SAFETY_MARGIN, scenario: str = "", t: float = 0.0,
                 iteration: int = 0, result=None) -> TrainingExample:
    """Candidate features at ``ego`` with the expert plan snapped to its nearest candidate."""
    if result is None:
        result = plan(ego, view.lane_map, OracleField(view.actors, sigma), w, cfg)
    fb = result.features
    if fb is None:
        raise ValueError("no candidates at this state")
    st = np.stack([c.states for c in result.candidates])
    l_im = imitation_margin(st, expert_states)
    e = int(np.argmin(l_im))
    l_im = imitation_margin(st, st[e])
    l_c = np.stack([safety_margin(s, view.actors, cfg.sampler.dt, cfg.ego_length, cfg.ego_width, margin)
                    for s in st])
    return TrainingExample(fb.features.copy(), fb.col_terms.copy(), l_im, l_c, e,
                           np.asarray(ego.as_array()), np.asarray(expert_states).copy(),
                           scenario, float(t), iteration)


class AggregatedDataset:
    """Examples tagged by aggregation iteration; tags never decrease."""

    def __init__(self, examples: Optional[list] = None):
        self.examples: list = []
        for ex in examples or []:
            self.append(ex)

    def append(self, ex: TrainingExample):
        if self.examples and ex.iteration < self.examples[-1].iteration:
            raise ValueError("iteration tags must be monotone")
        self.examples.append(ex)

    def extend(self, exs):
        for ex in exs:
            self.append(ex)

    @property
    def iterations(self) -> list:
        return sorted({ex.iteration for ex in self.examples})

    @property
    def last_iteration(self) -> int:
        return self.examples[-1].iteration if self.examples else -1

    def __len__(self):
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    # ------------------------------------------------------------ io
    def save(self, path):
        """Single ``.npz`` file: per-example arrays stacked with offsets plus a JSON header."""
        p = Path(path)
        exs = self.examples
        n = np.array([ex.n for ex in exs], dtype=np.int64)
        header = {"schema_version": DATASET_SCHEMA_VERSION, "features": list(FEATURES),
                  "meta": [{"scenario": ex.scenario, "t": ex.t, "iteration": ex.iteration,
                            "expert_index": ex.expert_index} for ex in exs]}
        cat = (lambda key: np.concatenate([getattr(ex, key) for ex in exs]) if exs else np.zeros(0))
        np.savez_compressed(
            p, header=np.array(json.dumps(header)), counts=n,
            features=cat("features"), col_terms=cat("col_terms"), l_im=cat("l_im"), l_c=cat("l_c"),
            ego=np.stack([ex.ego for ex in exs]) if exs else np.zeros((0, 6)),
            expert_states=np.stack([ex.expert_states for ex in exs]) if exs else np.zeros((0, 11, 6)))

    @classmethod
    def load(cls, path) -> "AggregatedDataset":
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(str(z["header"]))
            if header.get("schema_version") != DATASET_SCHEMA_VERSION:
                raise ValueError("unsupported dataset schema version")
            if header.get("features") != list(FEATURES):
                raise ValueError("dataset feature order mismatch")
            arr = {k: z[k] for k in ("counts", "features", "col_terms", "l_im", "l_c", "ego",
                                     "expert_states")}
        offs = np.concatenate([[0], np.cumsum(arr["counts"])])
        exs = []
        for i, m in enumerate(header["meta"]):
            a, b = offs[i], offs[i + 1]
            exs.append(TrainingExample(arr["features"][a:b], arr["col_terms"][a:b], arr["l_im"][a:b],
                                       arr["l_c"][a:b], m["expert_index"], arr["ego"][i],
                                       arr["expert_states"][i], m["scenario"], m["t"], m["iteration"]))
        return cls(exs)


def collect(scenarios, driver, labeler: Callable, w: Weights, iteration: int,
            cfg: PlannerConfig = PlannerConfig(), sigma: float = 0.25, sim_cfg=None) -> list:
    """Run ``driver`` closed loop; at every visited state label with ``labeler(ego, view)``."""
    from .sim.loop import SimConfig, run_closed_loop
    sim_cfg = sim_cfg or SimConfig()
    reuse_label = getattr(labeler, "policy", None) is driver
    reuse_features = _same_pipeline(driver, cfg, sigma)
    out: list = []
    for scn in scenarios:
        def on_step(ego, view, t, step_out, scn=scn):
            expert_states = step_out.traj.states if reuse_label else labeler(ego, view).states
            res = step_out.info.get("result") if reuse_features else None
            try:
                out.append(make_example(ego, view, expert_states, w, cfg, sigma, scenario=scn.name,
                                        t=t, iteration=iteration, result=res))
            except ValueError:
                pass
        run_closed_loop(scn, driver, sim_cfg, on_step=on_step)
    return out


def _same_pipeline(driver, cfg, sigma) -> bool:
    """True when the driver's own plan result already holds the features we need."""
    return (getattr(driver, "weights", None) is not None and driver.cfg == cfg
            and driver.sigma == sigma and getattr(driver, "noise_std", 0.0) == 0.0)


def aggregate(dataset: AggregatedDataset, w: Weights, scenarios, iteration: int, labeler: Callable,
              cfg: PlannerConfig = PlannerConfig(), sigma: float = 0.25, sim_cfg=None,
              expert_driver=None) -> AggregatedDataset:
    """Append examples from states visited by the learner (or the expert at iteration 0)."""
    from .sim.loop import QuadPolicy
    if iteration == 0:
        if expert_driver is None:
            raise ValueError("iteration 0 needs the expert driver")
        driver = expert_driver
    else:
        driver = QuadPolicy(w, cfg, sigma)
    dataset.extend(collect(scenarios, driver, labeler, w, iteration, cfg, sigma, sim_cfg))
    return dataset


class ExpertLabeler:
    """Rule-based expert plan from the visited state."""

    def __init__(self, expert_cfg=None):
        from .planner import ExpertConfig
        self.cfg = expert_cfg or ExpertConfig()

    def __call__(self, ego, view):
        from .planner import expert_plan
        return expert_plan(view, ego, self.cfg)


class TeacherLabeler:
    """A planner with fixed weights acting as the demonstrator.

    ``policy`` drives the same planner, so a collection run driven by it
    reuses the driven plan as the label.
    """

    def __init__(self, w_star: Weights, cfg: PlannerConfig = PlannerConfig(), sigma: float = 0.0):
        from .sim.loop import QuadPolicy
        self.w_star, self.cfg, self.sigma = w_star, cfg, sigma
        self.policy = QuadPolicy(w_star, cfg, sigma, name="teacher")

    def __call__(self, ego, view):
        return plan(ego, view.lane_map, OracleField(view.actors, self.sigma), self.w_star, self.cfg).chosen


def realizable_subset(examples: Sequence[TrainingExample], w, scale: float = 100.0) -> list:
    """Examples with zero loss at ``scale * w``, a set on which zero training loss is attainable."""
    w = (w.as_array() if isinstance(w, Weights) else np.asarray(w, dtype=float)) * scale
    return [ex for ex in examples if max_margin_loss(ex, w)[0] == 0.0]


@dataclass
class TrainConfig:
    iterations: int = 1
    fit: FitConfig = field(default_factory=FitConfig)
    sigma: float = 0.25


def train(scenarios, init: Weights, labeler: Callable, expert_driver, cfg: TrainConfig = TrainConfig(),
          planner_cfg: PlannerConfig = PlannerConfig(), val: Optional[Sequence[TrainingExample]] = None,
          log: Optional[Callable] = None):
    """Expert-state fit followed by ``cfg.iterations`` aggregation rounds; returns (weights, dataset, fits)."""
    ds = aggregate(AggregatedDataset(), init, scenarios, 0, labeler, planner_cfg, cfg.sigma,
                   expert_driver=expert_driver)
    fits = [fit_weights(ds.examples, init, cfg.fit, val)]
    w = fits[-1].weights
    if log:
        log(0, len(ds), fits[-1])
    for it in range(1, cfg.iterations + 1):
        aggregate(ds, w, scenarios, it, labeler, planner_cfg, cfg.sigma)
        fits.append(fit_weights(ds.examples, w, cfg.fit, val))
        w = fits[-1].weights
        if log:
            log(it, len(ds), fits[-1])
    return w, ds, fits
