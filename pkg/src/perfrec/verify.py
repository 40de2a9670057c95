"""Numerical verifiers for the structural results and the numeric machinery.

Each verifier returns ``Check`` rows; ``run_suite`` gathers them for the CLI.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .adcore import CORE_OPS, Tape, grad_check
from .graph import gen_ring, gen_two_item, gen_uniform
from .groundtruth import label_edges, sample_world, unit_rows
from .learning import TrainConfig, build_objective, make_batches
from .ranking import (
    div_batch,
    ndcg_batch,
    soft_div,
    soft_ndcg,
    soft_permutation,
    soft_rank,
)
from .strategic import best_response, best_response_all, best_response_oracle, creator_utility

__all__ = [
    "Check",
    "lemma_decomposition",
    "lemma_vectors",
    "collapse_exact",
    "collapse_dynamic",
    "max_diversity_construct",
    "ring_diversity",
    "ring_bound",
    "oracle_gaps",
    "op_grad_errors",
    "objective_grad_errors",
    "tau_consistency",
    "run_suite",
]


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    threshold: str
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.value:.6g} ({self.threshold}) [{self.seconds:.1f}s]"


# --------------------------------------------------------------------------
# zero-sum user sets


def lemma_decomposition(n: int) -> tuple[int, int]:
    """(a, b) with n = 2a + 3b; b is 1 for odd n and 0 otherwise."""
    if n < 2:
        raise ValueError("need at least two vectors")
    b = n % 2
    return (n - 3 * b) // 2, b


_PAIR = np.array([[-1.0, 0.0], [1.0, 0.0]])
_TRIPLE = np.array([[0.5, np.sqrt(3.0) / 2.0], [0.5, -np.sqrt(3.0) / 2.0], [-1.0, 0.0]])


def lemma_vectors(n: int, d: int = 2) -> np.ndarray:
    """n unit vectors summing to zero: a antipodal pairs and b 120-degree triples."""
    if d < 2:
        raise ValueError("d must be at least 2")
    a, b = lemma_decomposition(n)
    V = np.vstack([_PAIR] * a + [_TRIPLE] * b)
    out = np.zeros((n, d))
    out[:, :2] = V
    return out


# --------------------------------------------------------------------------
# structural results


def _pair_div(x1, x2) -> float:
    return float(max(0.0, (1.0 - np.dot(x1, x2)) / 2.0))


def collapse_exact(trials: int = 100, seed: int = 0, d: int = 2) -> float:
    """Largest post-response div@2 over random models on full-overlap two-item graphs (alpha = 0)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        users = int(rng.integers(1, 6))
        G = gen_two_item(users, distinct=False)
        U = unit_rows(rng.standard_normal((users, d)))
        X = unit_rows(rng.standard_normal((2, d)))
        Xf = best_response_all(X, U, G, 0.0)
        worst = max(worst, _pair_div(Xf[0], Xf[1]))
    return worst


def collapse_dynamic(alpha: float, rounds: int = 30, seed: int = 0) -> np.ndarray:
    """div@2 after each of ``rounds`` responses to a fixed random target, from (1,0) and (-1,0)."""
    rng = np.random.default_rng(seed)
    v = unit_rows(rng.standard_normal((1, 2)))[0]
    x1, x2 = np.array([1.0, 0.0]), np.array([-1.0, 0.0])
    out = np.empty(rounds)
    for t in range(rounds):
        x1 = best_response(x1, v, alpha)
        x2 = best_response(x2, v, alpha)
        out[t] = _pair_div(x1, x2)
    return out


def max_diversity_construct(shared: int, seed: int = 0, d: int = 2) -> float:
    """div@2 for the shared users' list when the two audiences differ by one user each.

    Shared users take the zero-sum lemma vectors and the two private users
    take u and -u, so each target equals its private user.
    """
    rng = np.random.default_rng(seed)
    G = gen_two_item(shared, distinct=True)
    u = unit_rows(rng.standard_normal((1, d)))[0]
    U = np.vstack([lemma_vectors(shared, d), u, -u])
    X = unit_rows(rng.standard_normal((2, d)))
    Xf = best_response_all(X, U, G, 0.0)
    return _pair_div(Xf[0], Xf[1])


def ring_bound(N: int, eps: float) -> float:
    return (1.0 - eps) * (1.0 - 3.0 / N)


def ring_diversity(N: int, eps: float, seed: int = 0) -> float:
    """Average div@2 over the ring graph under the alternating-angle embedding.

    With delta = arccos(1 - 2 eps), odd users (1-based) sit at 90 - i delta,
    even users at 270 - i delta and the last user at 270 + delta degrees.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    delta = np.degrees(np.arccos(1.0 - 2.0 * eps))
    deg = np.empty(N)
    for i in range(1, N):
        deg[i - 1] = (90.0 if i % 2 else 270.0) - i * delta
    deg[N - 1] = 270.0 + delta
    rad = np.radians(deg)
    U = np.stack([np.cos(rad), np.sin(rad)], axis=1)
    G = gen_ring(N)
    rng = np.random.default_rng(seed)
    X = unit_rows(rng.standard_normal((N, 2)))
    Xf = best_response_all(X, U, G, 0.0)
    return float(np.mean([_pair_div(Xf[a], Xf[b]) for a, b in G.lists]))


# --------------------------------------------------------------------------
# best responses against the numeric oracle


def oracle_gaps(draws: int, d: int, seed: int = 0, alpha_max: float = 4.0) -> np.ndarray:
    """|utility(closed form) - utility(oracle)| for random (x, v, alpha)."""
    rng = np.random.default_rng(seed)
    gaps = np.empty(draws)
    for t in range(draws):
        x = unit_rows(rng.standard_normal((1, d)))[0]
        v = unit_rows(rng.standard_normal((1, d)))[0]
        alpha = float(rng.uniform(0.0, alpha_max))
        closed = best_response(x, v, alpha)
        oracle = best_response_oracle(x, v, alpha, seed=t)
        gaps[t] = abs(creator_utility(closed, x, v, alpha) - creator_utility(oracle, x, v, alpha))
    return gaps


# --------------------------------------------------------------------------
# gradients


def _op_cases(rng):
    """(name, builder, point) triples covering every op; builders end in a 1x1 node."""
    r, c = int(rng.integers(2, 5)), int(rng.integers(2, 5))
    A = rng.standard_normal((r, c))
    B = rng.standard_normal((r, c))
    Bpos = rng.uniform(0.5, 2.0, (r, c))
    M = rng.standard_normal((c, int(rng.integers(2, 4))))
    wts = {}

    def weighted(t, node):
        key = node.shape
        if key not in wts:
            wts[key] = rng.standard_normal(key)
        return t.op("total_sum", node * t.const(wts[key]))

    cases = {
        "matmul": [(lambda t, x: weighted(t, x @ t.const(M)), A), (lambda t, x: weighted(t, t.const(A) @ x), M)],
        "add": [(lambda t, x: weighted(t, x + t.const(B)), A)],
        "sub": [(lambda t, x: weighted(t, t.const(B) - x), A)],
        "mul": [(lambda t, x: weighted(t, x * x), A)],
        "div": [(lambda t, x: weighted(t, t.const(A) / x), Bpos), (lambda t, x: weighted(t, x / t.const(Bpos)), A)],
        "scalar_mul": [(lambda t, x: weighted(t, x * 1.7), A)],
        "transpose": [(lambda t, x: weighted(t, x.T), A)],
        "row_sum": [(lambda t, x: weighted(t, t.op("row_sum", x)), A)],
        "total_sum": [(lambda t, x: t.op("total_sum", x * x), A)],
        "sigmoid": [(lambda t, x: weighted(t, t.op("sigmoid", x, tau=0.7)), A)],
        "row_softmax": [(lambda t, x: weighted(t, t.op("row_softmax", x)), A)],
        "row_l2_normalize": [(lambda t, x: weighted(t, t.op("row_l2_normalize", x)), A)],
        "abs": [(lambda t, x: weighted(t, t.op("abs", x)), A)],
        "exp2": [(lambda t, x: weighted(t, t.op("exp2", x)), A)],
        "log2_1p": [(lambda t, x: weighted(t, t.op("log2_1p", x)), Bpos)],
        "broadcast_row": [(lambda t, x: weighted(t, t.op("broadcast_row", x, rows=3)), A[:1])],
        "reshape": [(lambda t, x: weighted(t, t.op("reshape", x, shape=(c, r))), A)],
        "repeat_rows": [(lambda t, x: weighted(t, t.op("repeat_rows", x, times=3)), A)],
        "block_sum": [(lambda t, x: weighted(t, t.op("block_sum", x, size=r)), np.vstack([A, B]))],
    }
    missing = set(CORE_OPS) - set(cases)
    if missing:
        raise RuntimeError(f"no gradient case for ops {sorted(missing)}")
    for name, items in cases.items():
        for builder, point in items:
            yield name, builder, point


def op_grad_errors(instances: int = 20, seed: int = 0) -> dict[str, float]:
    """Worst relative gradient error per op over random instances."""
    rng = np.random.default_rng(seed)
    worst: dict[str, float] = {}
    for _ in range(instances):
        for name, builder, point in _op_cases(rng):
            rep = grad_check(builder, point)
            worst[name] = max(worst.get(name, 0.0), rep.max_rel_error)
    return worst


def objective_grad_errors(instances: int = 20, seed: int = 0) -> dict[str, float]:
    """Worst relative gradient error of both training objectives on small random instances."""
    rng = np.random.default_rng(seed)
    worst = {"nonstrategic": 0.0, "strategic": 0.0}
    for t in range(instances):
        m = int(rng.integers(2, 7))
        n = int(rng.integers(5, 11))
        K = int(rng.integers(3, min(n, 6) + 1))
        d = int(rng.integers(2, 5))
        k = int(rng.integers(2, K + 1))
        G = gen_uniform(m, n, K, seed=seed * 1000 + t)
        world = sample_world(m, n, d, seed=seed * 1000 + t)
        B = make_batches(G.lists, label_edges(world.X0, world, G))
        cfg = TrainConfig(lam=float(rng.uniform(0.1, 2.0)), alpha=float(rng.uniform(0.0, 2.0)), k=k)
        W = rng.standard_normal((m, d))
        for name in worst:
            strat = name == "strategic"
            rep = grad_check(lambda tape, x: build_objective(tape, x, world.X0, B, G, cfg, strat).total, W)
            worst[name] = max(worst[name], rep.max_rel_error)
    return worst


# --------------------------------------------------------------------------
# soft vs hard


def separated_scores(rng, m: int, K: int, gap: float) -> np.ndarray:
    """m rows of K distinct scores whose sorted neighbours differ by at least ``gap``."""
    steps = gap * (1.0 + rng.uniform(0.0, 1.0, (m, K)))
    S = np.cumsum(steps, axis=1) - steps.sum(axis=1, keepdims=True) / 2.0
    return np.array([rng.permutation(row) for row in S])


def tau_consistency(instances: int = 50, K: int = 20, k: int = 5, tau: float = 0.01, gap: float = 0.1, seed: int = 0):
    """Max |soft - hard| for NDCG and diversity with every temperature set to ``tau``.

    Score gaps of at least ``gap`` keep the relaxed permutation resolvable.
    """
    rng = np.random.default_rng(seed)
    worst_ndcg = worst_div = 0.0
    for _ in range(instances):
        S = separated_scores(rng, 1, K, gap)
        Y = rng.uniform(0.0, 2.0, (1, K))
        Xl = unit_rows(rng.standard_normal((K, 3)))
        tape = Tape()
        s = tape.const(S)
        soft_n = soft_ndcg(Y, s, k, tau, tau).value[0, 0]
        R = soft_rank(soft_permutation(s, tau), 1)
        soft_d = soft_div(tape.const(Xl), R, k, tau).value[0, 0]
        hard_n = ndcg_batch(Y, S, k)[0]
        hard_d = div_batch(Xl[None], S, k)[0]
        worst_ndcg = max(worst_ndcg, abs(soft_n - hard_n))
        worst_div = max(worst_div, abs(soft_d - hard_d))
    return worst_ndcg, worst_div


# --------------------------------------------------------------------------


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def run_suite(level: str = "fast", seed: int = 0) -> list[Check]:
    """All verifiers; ``full`` draws more instances than ``fast``."""
    if level not in ("fast", "full"):
        raise ValueError("level must be 'fast' or 'full'")
    scale = 1 if level == "fast" else 5
    checks: list[Check] = []

    for n, expect in ((2, (1, 0)), (3, (0, 1)), (7, (2, 1)), (10, (5, 0))):
        V = lemma_vectors(n)
        ok = lemma_decomposition(n) == expect and np.abs(V.sum(axis=0)).max() < 1e-12
        checks.append(Check(f"lemma n={n}", bool(ok), float(np.abs(V.sum(axis=0)).max()), "zero sum, n = 2a + 3b"))

    worst, dt = _timed(lambda: collapse_exact(100 * scale, seed))
    checks.append(Check("collapse exact", worst <= 1e-9, worst, "<= 1e-9", dt))
    for alpha in (0.5, 1.0, 2.0):
        traj, dt = _timed(lambda: collapse_dynamic(alpha, 30, seed))
        checks.append(Check(f"collapse dynamic alpha={alpha:g}", traj[-1] < 1e-3, float(traj[-1]), "< 1e-3 at round 30", dt))

    for shared in (2, 3, 4, 5, 7):
        val, dt = _timed(lambda: max_diversity_construct(shared, seed))
        checks.append(Check(f"max diversity shared={shared}", abs(val - 1.0) <= 1e-9, val, "1 +/- 1e-9", dt))

    for N in (6, 12, 24):
        for eps in (0.05, 0.2):
            val, dt = _timed(lambda: ring_diversity(N, eps, seed))
            bound = ring_bound(N, eps)
            checks.append(Check(f"ring N={N} eps={eps:g}", val >= bound, val, f">= {bound:.4f}", dt))

    for d, tol in ((2, 1e-6), (5, 1e-5)):
        gaps, dt = _timed(lambda: oracle_gaps(200 * scale, d, seed))
        checks.append(Check(f"best response oracle d={d}", float(gaps.max()) <= tol, float(gaps.max()), f"<= {tol:g}", dt))

    ops, dt = _timed(lambda: op_grad_errors(20 * scale, seed))
    for name, err in sorted(ops.items()):
        checks.append(Check(f"grad op {name}", err <= 1e-4, err, "<= 1e-4", dt / len(ops)))
    objs, dt = _timed(lambda: objective_grad_errors(20 * scale, seed))
    for name, err in objs.items():
        checks.append(Check(f"grad objective {name}", err <= 1e-4, err, "<= 1e-4", dt / 2))

    (wn, wd), dt = _timed(lambda: tau_consistency(50 * scale, seed=seed))
    checks.append(Check("tau consistency ndcg", wn <= 1e-3, wn, "<= 1e-3", dt / 2))
    checks.append(Check("tau consistency div", wd <= 1e-3, wd, "<= 1e-3", dt / 2))
    return checks
