"""Training objectives, sphere-constrained Adam ascent and lambda tuning."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .adcore import NonFiniteError, Node, Tape
from .graph import RecGraph
from .ranking import list_scores, ndcg_batch, soft_div, soft_ndcg, soft_permutation, soft_rank
from .strategic import best_response_tape

__all__ = [
    "TrainConfig",
    "ModelState",
    "ListBatch",
    "make_batches",
    "init_state",
    "ObjectiveParts",
    "build_objective",
    "objective_nonstrategic",
    "objective_strategic",
    "hard_ndcg",
    "TrainResult",
    "TrainingError",
    "train",
    "TuneResult",
    "TuneError",
    "tune_lambda",
]

OBJECTIVES = ("nonstrategic", "strategic")


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters.

    ``tau_ndcg`` is the relaxed-permutation temperature of the accuracy term
    and ``tau_perm`` that of the diversity term; ``tau_topk`` is the sigmoid
    temperature (in rank units) of the soft top-k cut used by both terms.
    ``sinkhorn_iters`` balancing steps are applied to the accuracy term's
    permutation.
    """

    lam: float = 0.0
    alpha: float = 1.0
    k: int = 10
    tau_ndcg: float = 0.1
    sinkhorn_iters: int = 5
    tau_perm: float = 1.0
    tau_topk: float = 5.0
    lr: float = 0.1
    epochs: int = 200
    patience: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.k < 2:
            raise ValueError("k must be at least 2")
        for name in ("tau_ndcg", "tau_perm", "tau_topk"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.sinkhorn_iters < 0:
            raise ValueError("sinkhorn_iters must be non-negative")
        if self.lr < 0 or self.epochs < 0 or self.patience < 1:
            raise ValueError("lr, epochs must be non-negative and patience positive")

    def with_lam(self, lam: float) -> "TrainConfig":
        return replace(self, lam=lam)


@dataclass(frozen=True)
class ModelState:
    W: np.ndarray

    @property
    def U(self) -> np.ndarray:
        return self.W / np.linalg.norm(self.W, axis=1, keepdims=True)


def init_state(m: int, d: int, seed: int) -> ModelState:
    """Rows uniform on the unit sphere."""
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((m, d))
    return ModelState(W / np.linalg.norm(W, axis=1, keepdims=True))


@dataclass
class ListBatch:
    """Users whose lists share one length K."""

    users: np.ndarray  # (mb,)
    items: np.ndarray  # (mb, K)
    y: np.ndarray  # (mb, K)
    _item_sel: np.ndarray | None = field(default=None, repr=False)
    _user_sel: np.ndarray | None = field(default=None, repr=False)

    @property
    def size(self) -> tuple[int, int]:
        return self.items.shape

    def item_selector(self, n: int) -> np.ndarray:
        if self._item_sel is None or self._item_sel.shape[1] != n:
            flat = self.items.reshape(-1)
            sel = np.zeros((flat.size, n))
            sel[np.arange(flat.size), flat] = 1.0
            self._item_sel = sel
        return self._item_sel

    def user_selector(self, m: int) -> np.ndarray | None:
        if len(self.users) == m and (self.users == np.arange(m)).all():
            return None
        if self._user_sel is None:
            sel = np.zeros((len(self.users), m))
            sel[np.arange(len(self.users)), self.users] = 1.0
            self._user_sel = sel
        return self._user_sel


def make_batches(lists: Sequence[Sequence[int]], labels: Sequence[np.ndarray], users: Sequence[int] | None = None) -> list[ListBatch]:
    """Group user lists (and their labels) by length."""
    if users is None:
        users = range(len(lists))
    groups: dict[int, list[int]] = {}
    for pos, items in enumerate(lists):
        groups.setdefault(len(items), []).append(pos)
    out = []
    for K in sorted(groups):
        idx = groups[K]
        out.append(
            ListBatch(
                users=np.array([users[p] for p in idx]),
                items=np.array([list(lists[p]) for p in idx], dtype=int).reshape(len(idx), K),
                y=np.array([np.asarray(labels[p], dtype=np.float64) for p in idx]).reshape(len(idx), K),
            )
        )
    return out


@dataclass
class ObjectiveParts:
    total: Node
    ndcg: Node
    div: Node | None


def build_objective(
    tape: Tape,
    W: Node,
    X: np.ndarray,
    batches: Sequence[ListBatch],
    G: RecGraph,
    cfg: TrainConfig,
    strategic: bool,
    with_div: bool | None = None,
) -> ObjectiveParts:
    """Mean soft NDCG plus lambda times mean soft diversity.

    The diversity term is only recorded when lambda > 0 unless ``with_div``
    forces it, so lambda = 0 runs are identical across objectives.
    """
    X = np.asarray(X, dtype=np.float64)
    m, d = W.shape
    n = X.shape[0]
    if with_div is None:
        with_div = cfg.lam > 0
    U = tape.op("row_l2_normalize", W)
    Xf = best_response_tape(X, U, G, cfg.alpha) if (strategic and with_div) else None
    count = sum(len(b.users) for b in batches)

    ndcg_terms, div_terms = [], []
    for b in batches:
        mb, K = b.size
        if K < cfg.k:
            raise ValueError(f"users {b.users.tolist()} have {K} candidates, fewer than k={cfg.k}")
        sel = b.user_selector(m)
        Ub = U if sel is None else tape.const(sel) @ U
        Xl = tape.const(X[b.items.reshape(-1)])
        S = list_scores(Ub, Xl, mb, K)
        ndcg_terms.append(tape.op("total_sum", soft_ndcg(b.y, S, cfg.k, cfg.tau_ndcg, cfg.tau_topk, cfg.sinkhorn_iters)))
        if not with_div:
            continue
        if strategic:
            Xl = tape.const(b.item_selector(n)) @ Xf
            S = list_scores(Ub, Xl, mb, K)
        R = soft_rank(soft_permutation(S, cfg.tau_perm), mb)
        div_terms.append(tape.op("total_sum", soft_div(Xl, R, cfg.k, cfg.tau_topk)))

    ndcg = _sum(ndcg_terms) * (1.0 / count)
    if not with_div:
        return ObjectiveParts(ndcg, ndcg, None)
    div = _sum(div_terms) * (1.0 / count)
    total = ndcg + div * cfg.lam if cfg.lam > 0 else ndcg
    return ObjectiveParts(total, ndcg, div)


def _sum(nodes):
    out = nodes[0]
    for n in nodes[1:]:
        out = out + n
    return out


def objective_nonstrategic(tape, W, X, batches, G, cfg, with_div=None) -> ObjectiveParts:
    return build_objective(tape, W, X, batches, G, cfg, strategic=False, with_div=with_div)


def objective_strategic(tape, W, X, batches, G, cfg, with_div=None) -> ObjectiveParts:
    return build_objective(tape, W, X, batches, G, cfg, strategic=True, with_div=with_div)


def hard_ndcg(U: np.ndarray, X: np.ndarray, batches: Sequence[ListBatch], k: int) -> float:
    """Mean hard NDCG@k over all users in ``batches``."""
    total, count = 0.0, 0
    for b in batches:
        S = np.einsum("id,ikd->ik", U[b.users], X[b.items])
        total += ndcg_batch(b.y, S, k).sum()
        count += len(b.users)
    return total / count


# --------------------------------------------------------------------------


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainResult:
    state: ModelState
    curve: list[float]
    best_epoch: int
    criterion: float


def train(
    state: ModelState,
    X: np.ndarray,
    batches: Sequence[ListBatch],
    G: RecGraph,
    cfg: TrainConfig,
    objective: str = "nonstrategic",
    val_batches: Sequence[ListBatch] | None = None,
) -> TrainResult:
    """Adam ascent on W with U = normalize(W) inside the forward pass.

    Early stopping watches hard validation NDCG when ``val_batches`` is given
    and the training objective otherwise; the best state seen is returned.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}")
    strategic = objective == "strategic"
    X = np.asarray(X, dtype=np.float64)
    W = state.W.astype(np.float64, copy=True)
    b1, b2, eps = 0.9, 0.999, 1e-8
    m1 = np.zeros_like(W)
    m2 = np.zeros_like(W)
    curve: list[float] = []
    if val_batches is not None:
        k_val = min(cfg.k, min(b.size[1] for b in val_batches))
    best_W, best_crit, best_epoch, stale = W.copy(), -np.inf, 0, 0

    for epoch in range(cfg.epochs + 1):
        tape = Tape()
        Wn = tape.leaf(W)
        try:
            parts = build_objective(tape, Wn, X, batches, G, cfg, strategic)
        except NonFiniteError as exc:
            raise TrainingError(f"non-finite objective at epoch {epoch}: {exc}") from exc
        value = float(parts.total.value[0, 0])
        if not np.isfinite(value):
            raise TrainingError(f"non-finite objective at epoch {epoch}")
        curve.append(value)
        if val_batches is not None:
            crit = hard_ndcg(W / np.linalg.norm(W, axis=1, keepdims=True), X, val_batches, k_val)
        else:
            crit = value
        if crit > best_crit:
            best_W, best_crit, best_epoch, stale = W.copy(), crit, epoch, 0
        else:
            stale += 1
        if stale >= cfg.patience or epoch == cfg.epochs:
            break
        g = tape.backward(parts.total)[Wn.id]
        t = epoch + 1
        m1 = b1 * m1 + (1 - b1) * g
        m2 = b2 * m2 + (1 - b2) * g * g
        W = W + cfg.lr * (m1 / (1 - b1**t)) / (np.sqrt(m2 / (1 - b2**t)) + eps)

    return TrainResult(ModelState(best_W), curve, best_epoch, best_crit)


# --------------------------------------------------------------------------


class TuneError(RuntimeError):
    def __init__(self, message, best_ndcg):
        super().__init__(message)
        self.best_ndcg = best_ndcg


@dataclass
class TuneResult:
    lam: float
    ndcg: float
    state: ModelState
    probes: list[tuple[float, float]]
    target: float


Fit = Callable[[float], tuple[ModelState, float]]


def tune_lambda(
    target: float | None,
    tolerance: float,
    fit: Fit,
    lo: float = 1e-3,
    hi: float = 1e3,
    budget: int = 12,
) -> TuneResult:
    """Largest lambda whose validation NDCG stays >= target - tolerance.

    ``fit(lam)`` trains a model and returns it with its validation NDCG.
    ``target=None`` tunes against the lambda = 0 NDCG itself. Bisection runs
    on log-lambda inside [lo, hi] and spends at most ``budget`` fits.
    """
    probes: list[tuple[float, float]] = []

    def run(lam):
        state, score = fit(lam)
        probes.append((lam, score))
        return state, score

    state0, ndcg0 = run(0.0)
    if target is None:
        target = ndcg0
    floor = target - tolerance
    if ndcg0 < floor:
        raise TuneError(f"target NDCG {target:.4f} unreachable; lambda=0 gives {ndcg0:.4f}", ndcg0)
    best = (0.0, ndcg0, state0)

    state_hi, nd_hi = run(hi)
    if nd_hi >= floor:
        return TuneResult(hi, nd_hi, state_hi, probes, target)

    # lower bracket: expand downwards until a passing lambda is found
    lo_ok = None
    while len(probes) < budget:
        state_lo, nd_lo = run(lo)
        if nd_lo >= floor:
            lo_ok = lo
            best = (lo, nd_lo, state_lo)
            break
        hi = lo
        lo /= 10.0
        if lo < 1e-8:
            break
    if lo_ok is None:
        return TuneResult(best[0], best[1], best[2], probes, target)

    a, b = np.log(lo), np.log(hi)
    while len(probes) < budget:
        mid = float(np.exp(0.5 * (a + b)))
        st, nd = run(mid)
        if nd >= floor:
            a = np.log(mid)
            if mid > best[0]:
                best = (mid, nd, st)
        else:
            b = np.log(mid)
    return TuneResult(best[0], best[1], best[2], probes, target)
