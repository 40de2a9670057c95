"""Content-creator incentives and best responses on the unit sphere.

Creator j maximises  v_j . x' - alpha * ||x' - x_j||^2  over unit x', where
v_j is the normalised mean of the embeddings of the users that see item j.
The maximiser is (v_j + 2 alpha x_j) / ||v_j + 2 alpha x_j||.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .adcore import Node, Tape
from .graph import RecGraph

__all__ = [
    "CreatorTargets",
    "creator_targets",
    "item_score",
    "creator_utility",
    "best_response",
    "best_response_rows",
    "best_response_all",
    "best_response_tape",
    "best_response_oracle",
    "DEGENERATE_TOL",
]

DEGENERATE_TOL = 1e-9


@dataclass(frozen=True)
class CreatorTargets:
    v_tilde: np.ndarray  # n x d, zero rows where degenerate
    degenerate: np.ndarray  # n bools


def creator_targets(U, G: RecGraph, allow_isolated: bool = False) -> CreatorTargets:
    """Spherical user averages per item.

    Items nobody sees have no target; they raise unless ``allow_isolated``,
    in which case they are flagged degenerate (and so never move).
    """
    U = np.asarray(U, dtype=np.float64)
    empty = [j for j, users in enumerate(G.user_sets) if not users]
    if empty and not allow_isolated:
        raise ValueError(f"items {empty} have no users; their targets are undefined")
    V = G.averaging_matrix() @ U
    norms = np.linalg.norm(V, axis=1)
    degenerate = norms < DEGENERATE_TOL
    safe = np.where(degenerate, 1.0, norms)
    v_tilde = np.where(degenerate[:, None], 0.0, V / safe[:, None])
    return CreatorTargets(v_tilde, degenerate)


def item_score(x, v_tilde) -> float:
    return float(np.dot(x, v_tilde))


def creator_utility(x_new, x, v_tilde, alpha: float) -> float:
    diff = np.asarray(x_new) - np.asarray(x)
    return float(np.dot(v_tilde, x_new) - alpha * np.dot(diff, diff))


def best_response(x, v_tilde, alpha: float, degenerate: bool = False) -> np.ndarray:
    """Closed-form best response; stays at ``x`` when the target is degenerate or cancels 2*alpha*x."""
    x = np.asarray(x, dtype=np.float64)
    if degenerate:
        return x.copy()
    z = np.asarray(v_tilde, dtype=np.float64) + 2.0 * alpha * x
    norm = np.linalg.norm(z)
    if norm < DEGENERATE_TOL:
        return x.copy()
    return z / norm


def best_response_rows(X, v_tilde, alpha: float, degenerate=None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    Z = v_tilde + 2.0 * alpha * X
    norms = np.linalg.norm(Z, axis=1)
    stay = norms < DEGENERATE_TOL
    if degenerate is not None:
        stay |= np.asarray(degenerate, dtype=bool)
    out = Z / np.where(stay, 1.0, norms)[:, None]
    out[stay] = X[stay]
    return out


def best_response_all(X, U, G: RecGraph, alpha: float, allow_isolated: bool = False) -> np.ndarray:
    targets = creator_targets(U, G, allow_isolated)
    return best_response_rows(X, targets.v_tilde, alpha, targets.degenerate)


def best_response_tape(X, U: Node, G: RecGraph, alpha: float) -> Node:
    """Best responses of all n items as a differentiable function of U.

    Items whose target or response direction is degenerate at the current U
    (including items nobody sees) are pinned to their current features (a
    constant row), so gradients stay finite.
    """
    tape: Tape = U.tape
    X = np.asarray(X, dtype=np.float64)
    M = tape.const(_averaging(G))
    V = M @ U
    v = V.value
    deg = np.linalg.norm(v, axis=1) < DEGENERATE_TOL
    if deg.any():
        keep = tape.const(np.repeat((~deg)[:, None].astype(float), X.shape[1], axis=1))
        V = V * keep + tape.const(np.where(deg[:, None], X, 0.0))
    Vt = tape.op("row_l2_normalize", V)
    Z = Vt + tape.const(2.0 * alpha * X)
    z = Z.value
    stay = np.linalg.norm(z, axis=1) < DEGENERATE_TOL
    if stay.any():
        keep = tape.const(np.repeat((~stay)[:, None].astype(float), X.shape[1], axis=1))
        Z = Z * keep + tape.const(np.where(stay[:, None], X, 0.0))
    return tape.op("row_l2_normalize", Z)


def _averaging(G: RecGraph) -> np.ndarray:
    return _averaging_cached(G.m, G.n, G.lists)


@lru_cache(maxsize=32)
def _averaging_cached(m, n, lists):
    M = RecGraph(m, n, lists).averaging_matrix()
    M.setflags(write=False)
    return M


# --------------------------------------------------------------------------
# numeric oracle


@lru_cache(maxsize=4)
def _circle(resolution: int) -> np.ndarray:
    theta = np.arange(resolution) * (2.0 * np.pi / resolution)
    pts = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    pts.setflags(write=False)
    return pts


def best_response_oracle(x, v_tilde, alpha: float, resolution: int = 2_000_000, starts: int = 32, seed: int = 0):
    """Maximise the creator utility numerically, without the closed form.

    In 2-D the unit circle is searched exhaustively on ``resolution`` angles.
    In higher dimensions projected gradient ascent runs from ``starts`` random
    points and the best end point is returned.
    """
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v_tilde, dtype=np.float64)
    d = len(x)
    if d == 2:
        pts = _circle(resolution)
        diff = pts - x
        util = pts @ v - alpha * np.einsum("ij,ij->i", diff, diff)
        return pts[int(np.argmax(util))].copy()

    rng = np.random.default_rng(seed)
    step = 0.5 / (1.0 + 2.0 * alpha)
    best, best_u = None, -np.inf
    for _ in range(starts):
        p = rng.standard_normal(d)
        p /= np.linalg.norm(p)
        for _ in range(20_000):
            grad = v - 2.0 * alpha * (p - x)
            q = p + step * grad
            q /= np.linalg.norm(q)
            if np.abs(q - p).max() < 1e-15:
                p = q
                break
            p = q
        u = creator_utility(p, x, v, alpha)
        if u > best_u:
            best, best_u = p, u
    return best
