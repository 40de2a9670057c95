"""Hard and differentiable ranking metrics.

Hard metrics work on plain numpy arrays. The soft operators record onto an
:class:`~perfrec.adcore.Tape` and are batched: a score node of shape m x K holds
one length-K list per row, and the single-list case is simply m = 1.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .adcore import Node, Tape

__all__ = [
    "Ranking",
    "hard_rank",
    "dcg_at_k",
    "ndcg_at_k",
    "div_at_k",
    "mmr_rerank",
    "ndcg_batch",
    "div_batch",
    "topk_batch",
    "soft_permutation",
    "soft_rank",
    "soft_discount",
    "soft_topk",
    "soft_ndcg",
    "soft_div",
    "list_scores",
    "UNIT_TOL",
]

UNIT_TOL = 1e-9


@dataclass(frozen=True)
class Ranking:
    """``order[l]`` is the item at position l (0-based); ``rank_of[j]`` is item j's 1-based rank."""

    order: np.ndarray
    rank_of: np.ndarray

    @classmethod
    def from_order(cls, order) -> "Ranking":
        order = np.asarray(order, dtype=int)
        rank_of = np.empty_like(order)
        rank_of[order] = np.arange(1, len(order) + 1)
        return cls(order, rank_of)

    def __len__(self):
        return len(self.order)


def hard_rank(scores) -> Ranking:
    """Descending order, ties broken by ascending index."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("cannot rank an empty score vector")
    if not np.isfinite(scores).all():
        raise ValueError("scores must be finite")
    return Ranking.from_order(np.argsort(-scores, kind="stable"))


def _discounts(k: int) -> np.ndarray:
    return 1.0 / np.log2(np.arange(2, k + 2))


def dcg_at_k(y, r: Ranking, k: int) -> float:
    y = np.asarray(y, dtype=np.float64)
    if not 1 <= k <= len(y):
        raise ValueError(f"k={k} outside [1, {len(y)}]")
    gains = np.exp2(y[r.order[:k]]) - 1.0
    return float(gains @ _discounts(k))


def ndcg_at_k(y, r: Ranking, k: int, with_flag: bool = False):
    """NDCG@k; returns 1.0 when the ideal DCG is zero (``with_flag`` also reports that case)."""
    ideal = dcg_at_k(y, hard_rank(y), k)
    if ideal == 0.0:
        return (1.0, True) if with_flag else 1.0
    value = dcg_at_k(y, r, k) / ideal
    return (value, False) if with_flag else value


def _check_unit(X):
    norms = np.linalg.norm(X, axis=-1)
    if np.abs(norms - 1.0).max(initial=0.0) > UNIT_TOL:
        raise ValueError("diversity requires unit-norm item rows")


def div_at_k(X, r: Ranking, k: int) -> float:
    """Mean of (1 - cos)/2 over ordered pairs of distinct top-k items."""
    X = np.asarray(X, dtype=np.float64)
    if not 2 <= k <= len(X):
        raise ValueError(f"k={k} outside [2, {len(X)}]")
    _check_unit(X)
    top = X[r.order[:k]]
    sim = top @ top.T
    off = (1.0 - sim) / 2.0
    np.fill_diagonal(off, 0.0)
    return float(off.sum() / (k * (k - 1)))


def mmr_rerank(scores, X, k: int, theta: float = 0.5) -> Ranking:
    """Maximal marginal relevance re-ranking of the top k; the rest follow in score order."""
    scores = np.asarray(scores, dtype=np.float64)
    K = len(scores)
    if not 1 <= k <= K:
        raise ValueError(f"k={k} outside [1, {K}]")
    X = np.asarray(X, dtype=np.float64)
    Xn = X / np.linalg.norm(X, axis=1, keepdims=True)
    sim = Xn @ Xn.T
    base = hard_rank(scores).order
    picked = [int(base[0])]
    max_sim = sim[picked[0]].copy()
    available = np.ones(K, dtype=bool)
    available[picked[0]] = False
    while len(picked) < k:
        mmr = theta * scores - (1.0 - theta) * max_sim
        mmr[~available] = -np.inf
        # argmax returns the lowest index among ties
        j = int(np.argmax(mmr))
        picked.append(j)
        available[j] = False
        max_sim = np.maximum(max_sim, sim[j])
    rest = [int(j) for j in base if available[j]]
    return Ranking.from_order(picked + rest)


# --------------------------------------------------------------------------
# vectorised hard metrics over m lists of equal length


def topk_batch(S: np.ndarray, k: int) -> np.ndarray:
    """Column indices of each row's top k by score (stable ties)."""
    return np.argsort(-S, axis=1, kind="stable")[:, :k]


def ndcg_batch(Y: np.ndarray, S: np.ndarray, k: int, order: np.ndarray | None = None) -> np.ndarray:
    """Per-row NDCG@k of the ranking induced by S (or an explicit ``order``)."""
    k = min(k, Y.shape[1])
    disc = _discounts(k)
    if order is None:
        order = topk_batch(S, k)
    gains = np.exp2(np.take_along_axis(Y, order[:, :k], axis=1)) - 1.0
    ideal = np.exp2(-np.sort(-Y, axis=1)[:, :k]) - 1.0
    idcg = ideal @ disc
    dcg = gains @ disc
    out = np.ones(len(Y))
    ok = idcg > 0
    out[ok] = dcg[ok] / idcg[ok]
    return out


def div_batch(Xl: np.ndarray, S: np.ndarray, k: int, order: np.ndarray | None = None) -> np.ndarray:
    """Per-row div@k; ``Xl`` is m x K x d with unit rows."""
    if order is None:
        order = topk_batch(S, k)
    top = np.take_along_axis(Xl, order[:, :k, None], axis=1)
    s = top.sum(axis=1)
    # sum over ordered pairs j != l of (1 - x_j.x_l)/2 for unit vectors
    total = 0.5 * (k * k - (s * s).sum(axis=1))
    # the identity cancels to ~1e-17 below zero for coincident items
    return np.clip(total / (k * (k - 1)), 0.0, 1.0)


# --------------------------------------------------------------------------
# soft operators


@lru_cache(maxsize=64)
def _selectors(m: int, K: int):
    pos = np.tile(np.arange(1, K + 1, dtype=np.float64), m)[:, None]  # (mK x 1)
    scale = np.repeat(K + 1 - 2 * pos, K, axis=1)  # (mK x K)
    Q = np.repeat(pos, K, axis=1)  # (mK x K): Q[(i, p), q] = p
    D = 1.0 / np.log2(1.0 + Q)  # position discounts, same layout as Q
    for a in (scale, Q, D):
        a.setflags(write=False)
    return scale, Q, D


def soft_permutation(S: Node, tau: float) -> Node:
    """Row-stochastic relaxed permutation matrices, stacked: (mK) x K.

    Block i, row p is softmax over items q of ((K + 1 - 2p) s_q - sum_r |s_q - s_r|) / tau.
    """
    if tau <= 0:
        raise ValueError("tau_perm must be positive")
    tape = S.tape
    m, K = S.shape
    scale = _selectors(m, K)[0]
    rows = tape.op("repeat_rows", S, times=K)  # (mK x K): row (i, r) = s_i
    col = tape.op("reshape", S, shape=(m * K, 1)) @ tape.const(np.ones((1, K)))
    A = tape.op("abs", rows - col)  # A[(i, r), q] = |s_iq - s_ir|
    # per-list column sums broadcast back to every row of the block
    spread = tape.op("repeat_rows", tape.op("block_sum", A, size=K), times=K)
    logits = tape.const(scale) * rows - spread
    return tape.op("row_softmax", logits * (1.0 / tau))


_MASS_FLOOR = 1e-12


def sinkhorn_balance(P: Node, m: int, iters: int) -> Node:
    """Alternate column and row normalisation of each stacked block."""
    tape = P.tape
    mK, K = P.shape
    ones = tape.const(np.ones((K, 1)))
    ones_row = tape.const(np.ones((1, K)))
    for _ in range(iters):
        P = P / tape.op("repeat_rows", tape.op("block_sum", P, size=K), times=K)
        P = P / ((P @ ones) @ ones_row)
    return P


def _column_mean(P: Node, m: int, values: np.ndarray) -> Node:
    """Per item j, the P-column-weighted mean of a per-position quantity: m x K.

    The relaxed permutation is only row-stochastic, so each column is
    renormalised by its mass. For doubly stochastic P (in particular a hard
    permutation) the mass is 1.
    """
    tape = P.tape
    mK, K = P.shape
    if mK != m * K:
        raise ValueError(f"{P.shape} is not {m} stacked {K}x{K} blocks")
    fill = float(values[:K, 0].mean())  # value of a massless column
    num = tape.op("block_sum", P * tape.const(values), size=K) + _MASS_FLOOR * fill
    mass = tape.op("block_sum", P, size=K) + _MASS_FLOOR
    return num / mass


def soft_rank(P: Node, m: int) -> Node:
    """Soft ranks r_j = sum_p p * P[p, j] / sum_p P[p, j] per stacked block: m x K.

    Without the column normaliser an item that no row claims would get a
    rank near 0, which the rank-based discount then rewards.
    """
    return _column_mean(P, m, _selectors(m, P.shape[1])[1])


def soft_discount(P: Node, m: int) -> Node:
    """Expected position discount E[1/log2(1 + rank_j)] under column j of P: m x K.

    Unlike 1/log2(1 + r_j) this carries no penalty for near-ties: two
    equally relevant items that share positions 1 and 2 keep the full
    discount mass of those positions.
    """
    return _column_mean(P, m, _selectors(m, P.shape[1])[2])


def soft_topk(R: Node, k: float, tau: float) -> Node:
    """Sigmoid relaxation sigma((k - r)/tau) of the indicator r <= k."""
    return R.tape.op("sigmoid", k - R, tau=tau)


def list_scores(U_rows: Node, Xl: Node, m: int, K: int) -> Node:
    """Linear scores u_i . x for every (user, listed item): m x K.

    ``U_rows`` is m x d, ``Xl`` is (mK) x d with list i occupying rows iK..iK+K-1.
    """
    tape = U_rows.tape
    flat = tape.op("row_sum", tape.op("repeat_rows", U_rows, times=K) * Xl)
    return tape.op("reshape", flat, shape=(m, K))


def soft_ndcg(Y: np.ndarray, S: Node, k: int, tau_perm: float, tau_topk: float, sinkhorn_iters: int = 0) -> Node:
    """Per-list soft NDCG@k: m x 1.

    sum_j sigma((k + 1/2 - r_j)/tau_topk) * (2^y_j - 1) * disc_j over the hard
    ideal DCG, where r_j is the soft rank and disc_j the expected position
    discount of item j. The cut sits at k + 1/2 so integer ranks 1..k fall
    inside it and k+1.. outside. ``sinkhorn_iters`` > 0 balances the relaxed
    permutation towards doubly stochastic first, which removes the bias that
    uneven column masses put on near-tied scores.
    """
    tape = S.tape
    m, K = S.shape
    Y = np.asarray(Y, dtype=np.float64).reshape(m, K)
    kk = min(k, K)
    P = soft_permutation(S, tau_perm)
    if sinkhorn_iters:
        P = sinkhorn_balance(P, m, sinkhorn_iters)
    w = soft_topk(soft_rank(P, m), kk + 0.5, tau_topk)
    gains = tape.const(np.exp2(Y) - 1.0)
    per_item = w * gains * soft_discount(P, m)
    ideal = (np.exp2(-np.sort(-Y, axis=1)[:, :kk]) - 1.0) @ _discounts(kk)
    inv = np.where(ideal > 0, 1.0 / np.where(ideal > 0, ideal, 1.0), 0.0)[:, None]
    offset = (ideal == 0).astype(np.float64)[:, None]
    return tape.op("row_sum", per_item) * tape.const(inv) + tape.const(offset)


def soft_div(Xl: Node, R: Node, k: int, tau_topk: float) -> Node:
    """Per-list soft diversity: m x 1.

    Computes sum_{j != j'} w_j w_j' (1 - x_j.x_j')/2 / (k(k-1)) through the
    identity (sum w)^2 - ||sum w x||^2, exact for unit rows.
    """
    tape = Xl.tape
    m, K = R.shape
    d = Xl.shape[1]
    Xu = tape.op("row_l2_normalize", Xl)
    w = soft_topk(R, k + 0.5, tau_topk)
    wcol = tape.op("reshape", w, shape=(m * K, 1)) @ tape.const(np.ones((1, d)))
    z = tape.op("block_sum", wcol * Xu, size=K)  # m x d
    wsum = tape.op("row_sum", w)
    return (wsum * wsum - tape.op("row_sum", z * z)) * (0.5 / (k * (k - 1)))
