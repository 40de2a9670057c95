"""Retraining dynamics: train, recommend, creators respond, relabel, repeat."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .graph import RecGraph
from .groundtruth import World, label_edges
from .learning import ModelState, TrainConfig, hard_ndcg, init_state, make_batches, train, tune_lambda, TuneError
from .ranking import div_batch, mmr_rerank, ndcg_batch, topk_batch
from .strategic import best_response_all

__all__ = [
    "METHOD_KINDS",
    "Method",
    "DynamicsConfig",
    "RoundRecord",
    "RoundOutput",
    "Snapshot",
    "Trajectory",
    "run_round",
    "run_trajectory",
    "pareto_sweep",
    "parallel_map",
    "record_key",
]

METHOD_KINDS = ("baseline", "nonstrategic", "strategic", "mmr", "hybrid", "random")
TUNED = ("nonstrategic", "strategic", "hybrid")


@dataclass(frozen=True)
class Method:
    """A recommendation policy.

    Tuned kinds take either a fixed ``lam`` or a ``target``: a float NDCG
    target beta, or ``"base"`` for the lambda = 0 NDCG of the same round.
    """

    kind: str
    lam: float | None = None
    target: float | str | None = None
    switch_round: int | None = None
    theta: float = 0.5

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise ValueError(f"unknown method kind {self.kind!r}; expected one of {METHOD_KINDS}")
        if self.kind in TUNED:
            if (self.lam is None) == (self.target is None):
                raise ValueError(f"{self.kind} needs exactly one of lam or target")
            if self.lam is not None and self.lam < 0:
                raise ValueError("lambda must be non-negative")
            if isinstance(self.target, str) and self.target != "base":
                raise ValueError(f"target must be a number or 'base', got {self.target!r}")
        elif self.lam is not None or self.target is not None:
            raise ValueError(f"{self.kind} takes no lambda or target")
        if self.kind == "hybrid":
            if self.switch_round is None or self.switch_round < 1:
                raise ValueError("hybrid needs switch_round >= 1")
        elif self.switch_round is not None:
            raise ValueError("switch_round only applies to hybrid")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")

    @property
    def name(self) -> str:
        return f"hybrid@{self.switch_round}" if self.kind == "hybrid" else self.kind

    @property
    def target_label(self) -> str:
        if self.kind not in TUNED:
            return "none"
        if self.lam is not None:
            return "fixed"
        return self.target if isinstance(self.target, str) else f"{self.target:g}"

    def objective_at(self, t: int) -> tuple[str, bool]:
        """(objective, regularised) used in round t (1-based)."""
        if self.kind == "strategic" or (self.kind == "hybrid" and t <= self.switch_round):
            return "strategic", True
        if self.kind == "nonstrategic":
            return "nonstrategic", True
        return "nonstrategic", False


@dataclass(frozen=True)
class DynamicsConfig:
    """Round-level settings; ``train.alpha`` is the creators' cost scale.

    In ``semi`` mode each round shows the learner a random ``visible``
    fraction of every list, of which ``train_share`` trains and the rest
    validates (held-out NDCG drives lambda tuning and early stopping); tests
    always use whole lists. ``synthetic`` mode trains, validates and tests on
    whole lists and stops early on the training objective.
    """

    train: TrainConfig = field(default_factory=TrainConfig)
    mode: str = "synthetic"
    visible: float = 0.75
    train_share: float = 2.0 / 3.0
    tolerance: float = 0.01
    tune_budget: int = 12
    lam_lo: float = 1e-3
    lam_hi: float = 1e3

    def __post_init__(self):
        if self.mode not in ("synthetic", "semi"):
            raise ValueError(f"mode must be 'synthetic' or 'semi', got {self.mode!r}")
        if not 0.0 < self.visible <= 1.0 or not 0.0 < self.train_share < 1.0:
            raise ValueError("visible must lie in (0, 1] and train_share in (0, 1)")
        if self.tolerance < 0 or self.tune_budget < 2:
            raise ValueError("tolerance must be non-negative and tune_budget at least 2")
        if not 0 < self.lam_lo < self.lam_hi:
            raise ValueError("need 0 < lam_lo < lam_hi")


@dataclass(frozen=True)
class RoundRecord:
    method: str
    alpha: float
    target: str
    lam: float
    seed: int
    round: int
    ndcg_test: float
    div_pre: float
    div_post: float


def record_key(r: RoundRecord):
    """Merge order; tuned lambdas vary by round, so the target label stands in for lambda."""
    return (r.method, r.alpha, r.target, r.seed, r.round)


@dataclass
class RoundOutput:
    state: ModelState
    X_next: np.ndarray
    y_next: list[np.ndarray]
    record: RoundRecord


@dataclass
class Snapshot:
    """Everything needed to continue a trajectory after ``round``."""

    round: int
    state: ModelState
    X: np.ndarray
    y: list[np.ndarray]
    records: list[RoundRecord]


@dataclass
class Trajectory:
    records: list[RoundRecord]
    snapshots: dict[int, Snapshot]


# --------------------------------------------------------------------------


def _splits(G: RecGraph, y, cfg: DynamicsConfig, rng):
    """(train lists, train labels, val lists, val labels) for one round."""
    if cfg.mode == "synthetic":
        return G.lists, y, G.lists, y
    tr_l, tr_y, va_l, va_y = [], [], [], []
    for items, lab in zip(G.lists, y):
        K = len(items)
        vis = max(2, int(round(cfg.visible * K)))
        ntr = min(vis - 1, max(1, int(round(cfg.train_share * vis))))
        pick = rng.permutation(K)[:vis]
        tr, va = np.sort(pick[:ntr]), np.sort(pick[ntr:])
        tr_l.append(tuple(items[p] for p in tr))
        tr_y.append(lab[tr])
        va_l.append(tuple(items[p] for p in va))
        va_y.append(lab[va])
    return tr_l, tr_y, va_l, va_y


def _list_tensors(U, X, G: RecGraph):
    items = np.array(G.lists)
    Xl = X[items]
    return items, Xl, np.einsum("id,ikd->ik", U, Xl)


def _selection(method: Method, S, Xl, k, rng):
    """Top-k positions per user under the method's presentation rule."""
    if method.kind == "mmr":
        return np.array([mmr_rerank(s, x, k, method.theta).order[:k] for s, x in zip(S, Xl)])
    if method.kind == "random":
        return np.array([rng.permutation(S.shape[1])[:k] for _ in range(S.shape[0])])
    return topk_batch(S, k)


def run_round(
    state: ModelState,
    X: np.ndarray,
    y: Sequence[np.ndarray],
    world: World,
    G: RecGraph,
    method: Method,
    cfg: DynamicsConfig,
    t: int,
    seed: int,
) -> RoundOutput:
    """One round of the retraining loop (rounds are 1-based).

    The fitted model is evaluated on whole lists of ``X``; creators respond to
    it, ``div_post`` re-ranks the responded items with the same model, and
    the new items are relabelled by the world's oracle.
    """
    if len(set(G.list_sizes)) != 1:
        raise ValueError("dynamics need equal list sizes")
    rng = np.random.default_rng([seed, t])
    tc = cfg.train
    k = tc.k
    tr_l, tr_y, va_l, va_y = _splits(G, y, cfg, rng)
    train_b = make_batches(tr_l, tr_y)
    val_b = make_batches(va_l, va_y)
    k_train = min(k, min(b.size[1] for b in train_b))
    k_val = min(k, min(b.size[1] for b in val_b))
    objective, regularised = method.objective_at(t)

    def fit(lam):
        c = replace(tc, lam=lam, k=k_train, seed=tc.seed)
        # semi mode stops on held-out NDCG; synthetic mode has no held-out edges
        res = train(state, X, train_b, G, c, objective, val_b if cfg.mode == "semi" else None)
        return res.state, hard_ndcg(res.state.U, X, val_b, k_val)

    if not regularised:
        lam = 0.0
        new_state, _ = fit(0.0)
    elif method.lam is not None:
        lam = float(method.lam)
        new_state, _ = fit(lam)
    else:
        beta = None if method.target == "base" else float(method.target)
        try:
            tuned = tune_lambda(beta, cfg.tolerance, fit, cfg.lam_lo, cfg.lam_hi, cfg.tune_budget)
            lam, new_state = tuned.lam, tuned.state
        except TuneError:
            # the target is out of reach even without regularisation
            lam = 0.0
            new_state, _ = fit(0.0)

    U = new_state.U
    items, Xl, S = _list_tensors(U, X, G)
    Y = np.array([np.asarray(v, dtype=np.float64) for v in y])
    order = _selection(method, S, Xl, k, rng)
    ndcg = float(ndcg_batch(Y, S, k, order).mean())
    div_pre = float(div_batch(Xl, S, k, order).mean())

    X_next = best_response_all(X, U, G, tc.alpha, allow_isolated=True)
    Xl_next = X_next[items]
    S_next = np.einsum("id,ikd->ik", U, Xl_next)
    if method.kind == "random":
        order_next = order
    else:
        order_next = _selection(method, S_next, Xl_next, k, rng)
    div_post = float(div_batch(Xl_next, S_next, k, order_next).mean())
    y_next = label_edges(X_next, world, G)

    rec = RoundRecord(method.name, float(tc.alpha), method.target_label, float(lam), int(seed), int(t), ndcg, div_pre, div_post)
    return RoundOutput(new_state, X_next, y_next, rec)


def run_trajectory(
    world: World,
    G: RecGraph,
    method: Method,
    T: int,
    cfg: DynamicsConfig,
    seed: int,
    resume: Snapshot | None = None,
    snapshot_at: Iterable[int] = (),
) -> Trajectory:
    """Thread the model, items and labels through rounds 1..T.

    ``resume`` continues from a snapshot taken by another trajectory (records
    up to its round are relabelled with this method's name); ``snapshot_at``
    lists rounds after which to keep a snapshot.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    if method.kind == "hybrid" and method.switch_round > T:
        raise ValueError(f"switch_round {method.switch_round} exceeds T={T}")
    keep = set(snapshot_at)
    if resume is None:
        start = 0
        state = init_state(G.m, world.X0.shape[1], seed)
        X = world.X0.copy()
        y = label_edges(X, world, G)
        records: list[RoundRecord] = []
    else:
        start = resume.round
        state, X, y = resume.state, resume.X.copy(), list(resume.y)
        records = [replace(r, method=method.name, target=method.target_label) for r in resume.records]
    snaps: dict[int, Snapshot] = {}
    for t in range(start + 1, T + 1):
        out = run_round(state, X, y, world, G, method, cfg, t, seed)
        state, X, y = out.state, out.X_next, out.y_next
        records.append(out.record)
        if t in keep:
            snaps[t] = Snapshot(t, state, X.copy(), list(y), list(records))
    return Trajectory(records, snaps)


def pareto_sweep(world: World, G: RecGraph, lams: Sequence[float], T: int, cfg: DynamicsConfig, seed: int) -> list[tuple[float, int, float, float]]:
    """(lambda, round, ndcg, div_post) for one fixed-lambda strategic trajectory per grid value."""
    if not len(lams):
        raise ValueError("lambda grid is empty")
    rows = []
    for lam in lams:
        traj = run_trajectory(world, G, Method("strategic", lam=float(lam)), T, cfg, seed)
        rows.extend((float(lam), r.round, r.ndcg_test, r.div_post) for r in traj.records)
    return rows


# --------------------------------------------------------------------------


def parallel_map(fn: Callable, items: Sequence, jobs: int = 1) -> list:
    """Map ``fn`` over ``items`` in input order, optionally over processes."""
    items = list(items)
    jobs = max(1, min(int(jobs), len(items) or 1, os.cpu_count() or 1))
    if jobs == 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))
