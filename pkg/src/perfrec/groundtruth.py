"""Synthetic worlds and the counterfactual relevance oracle."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .graph import RecGraph

__all__ = ["World", "sample_world", "relevance", "label_edges", "unit_rows"]

RelevanceFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class World:
    X0: np.ndarray
    U_star: np.ndarray
    sigma_x: float
    sigma_u_star: float
    seed: int


def unit_rows(A: np.ndarray) -> np.ndarray:
    return A / np.linalg.norm(A, axis=1, keepdims=True)


def _sample_unit(rng, count, d, sigma):
    center = np.zeros(d)
    center[:2] = 1.0 / np.sqrt(2.0)
    out = center + sigma * rng.standard_normal((count, d))
    zero = np.linalg.norm(out, axis=1) == 0
    while zero.any():
        out[zero] = center + sigma * rng.standard_normal((int(zero.sum()), d))
        zero = np.linalg.norm(out, axis=1) == 0
    return unit_rows(out)


def sample_world(m: int, n: int, d: int, sigma_x: float = 1.0, sigma_u_star: float = 0.1, seed: int = 0) -> World:
    """Items and true preferences scattered around (1/sqrt2, 1/sqrt2, 0, ...), then normalised."""
    if d < 2:
        raise ValueError("d must be at least 2")
    if sigma_x < 0 or sigma_u_star < 0:
        raise ValueError("dispersions must be non-negative")
    rng = np.random.default_rng(seed)
    X0 = _sample_unit(rng, n, d, sigma_x)
    U_star = _sample_unit(rng, m, d, sigma_u_star)
    return World(X0, U_star, sigma_x, sigma_u_star, seed)


def relevance(x, u_star):
    """2 ** (u* . x); works row-wise on stacked inputs."""
    return np.exp2(np.sum(np.asarray(x) * np.asarray(u_star), axis=-1))


def label_edges(X, world: World, G: RecGraph, fn: RelevanceFn = relevance) -> list[np.ndarray]:
    """Labels for every edge, one array per user in list order."""
    X = np.asarray(X, dtype=np.float64)
    return [fn(X[list(items)], world.U_star[i]) for i, items in enumerate(G.lists)]
