"""User-item recommendation graphs and their generators.

All indices are 0-based. ``RecGraph.lists[i]`` is user i's candidate list and
``RecGraph.user_sets[j]`` the audience of item j.
"""
from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "RecGraph",
    "DatasetTable",
    "gen_block_shuffled",
    "gen_uniform",
    "gen_ring",
    "gen_two_item",
    "build_lists_greedy",
    "ingest_items",
    "ingest_interactions",
    "IngestError",
]


@dataclass(frozen=True)
class RecGraph:
    m: int
    n: int
    lists: tuple[tuple[int, ...], ...]
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.lists) != self.m:
            raise ValueError(f"expected {self.m} user lists, got {len(self.lists)}")
        sets: list[list[int]] = [[] for _ in range(self.n)]
        for i, items in enumerate(self.lists):
            if len(items) < 1:
                raise ValueError(f"user {i} has an empty list")
            if len(set(items)) != len(items):
                raise ValueError(f"user {i} has duplicate items")
            for j in items:
                if not 0 <= j < self.n:
                    raise ValueError(f"user {i} references item {j} outside [0, {self.n})")
                sets[j].append(i)
        object.__setattr__(self, "user_sets", tuple(tuple(s) for s in sets))

    @property
    def item_degrees(self) -> np.ndarray:
        return np.array([len(s) for s in self.user_sets])

    @property
    def list_sizes(self) -> np.ndarray:
        return np.array([len(l) for l in self.lists])

    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i, items in enumerate(self.lists) for j in items]

    def averaging_matrix(self) -> np.ndarray:
        """n x m matrix whose row j averages the users in U_j."""
        M = np.zeros((self.n, self.m))
        for j, users in enumerate(self.user_sets):
            if users:
                M[j, list(users)] = 1.0 / len(users)
        return M

    def is_consistent(self) -> bool:
        fwd = {(i, j) for i, items in enumerate(self.lists) for j in items}
        back = {(i, j) for j, users in enumerate(self.user_sets) for i in users}
        return fwd == back


# --------------------------------------------------------------------------
# generators


def gen_uniform(m: int, n: int, K: int, seed: int) -> RecGraph:
    """Each user gets a uniformly random K-subset of the n items."""
    if not 1 <= K <= n:
        raise ValueError(f"need 1 <= K <= n, got K={K}, n={n}")
    rng = np.random.default_rng(seed)
    lists = tuple(tuple(sorted(int(j) for j in rng.choice(n, size=K, replace=False))) for _ in range(m))
    return RecGraph(m, n, lists)


def gen_block_shuffled(m: int, n: int, K: int, blocks: int, swaps: int, seed: int) -> RecGraph:
    """Disjoint user/item blocks followed by ``swaps`` degree-preserving double-edge swaps.

    A swap takes edges (i, j), (i', j') with i != i', j != j', j not in X_i' and
    j' not in X_i, and rewires them to (i, j'), (i', j). Only accepted swaps
    count; after ``100 * swaps`` attempts the generator gives up and records the
    achieved count in ``meta["swaps_done"]``.
    """
    if blocks < 1 or m % blocks or n % blocks:
        raise ValueError(f"blocks={blocks} must divide m={m} and n={n}")
    mb, nb = m // blocks, n // blocks
    if not 1 <= K <= nb:
        raise ValueError(f"K={K} exceeds block item count {nb}")
    rng = np.random.default_rng(seed)
    lists = []
    for i in range(m):
        g = i // mb
        lists.append(set(int(j) for j in g * nb + rng.choice(nb, size=K, replace=False)))

    edges = [(i, j) for i in range(m) for j in sorted(lists[i])]
    done = attempts = 0
    max_attempts = 100 * swaps
    while done < swaps and attempts < max_attempts:
        attempts += 1
        a, b = rng.integers(len(edges), size=2)
        (i, j), (i2, j2) = edges[a], edges[b]
        if i == i2 or j == j2 or j in lists[i2] or j2 in lists[i]:
            continue
        lists[i].remove(j)
        lists[i].add(j2)
        lists[i2].remove(j2)
        lists[i2].add(j)
        edges[a] = (i, j2)
        edges[b] = (i2, j)
        done += 1
    meta = {"swaps_requested": swaps, "swaps_done": done, "blocks": blocks}
    return RecGraph(m, n, tuple(tuple(sorted(l)) for l in lists), meta)


def gen_ring(N: int) -> RecGraph:
    """Ring of N users and N items; user i sees items i and i+1 (mod N)."""
    if N < 3:
        raise ValueError("ring needs N >= 3")
    lists = tuple((i, i + 1) if i < N - 1 else (N - 1, 0) for i in range(N))
    return RecGraph(N, N, lists)


def gen_two_item(shared_users: int, distinct: bool) -> RecGraph:
    """Two items whose audiences either coincide or differ by one user each.

    With ``distinct`` the shared users come first, followed by the user only
    seeing item 0 and then the user only seeing item 1.
    """
    if distinct:
        if shared_users < 2:
            raise ValueError("distinct two-item graph needs at least 2 shared users")
        lists = tuple([(0, 1)] * shared_users + [(0,), (1,)])
        return RecGraph(shared_users + 2, 2, lists)
    if shared_users < 1:
        raise ValueError("need at least one user")
    return RecGraph(shared_users, 2, tuple([(0, 1)] * shared_users))


# --------------------------------------------------------------------------
# tabular data


class IngestError(ValueError):
    pass


@dataclass
class DatasetTable:
    features: np.ndarray
    feature_names: list[str]
    interactions: list[tuple[str, int]] | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be an n x d table")
        if np.isnan(self.features).any():
            raise ValueError("features contain NaN")

    def unit_features(self) -> np.ndarray:
        norms = np.linalg.norm(self.features, axis=1, keepdims=True)
        bad = np.flatnonzero(norms[:, 0] == 0)
        if bad.size:
            raise ValueError(f"items {bad.tolist()} have all-zero features and cannot be normalized")
        return self.features / norms


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def ingest_items(path) -> DatasetTable:
    """Read a comma-delimited item-feature file with a header row."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and not r[0].startswith("#")]
    if not rows:
        raise IngestError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if all(_is_number(h) for h in header):
        raise IngestError(f"{path}: line 1: missing header row of feature names")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise IngestError(f"{path}: line {lineno}: expected {len(header)} cells, got {len(row)}")
        try:
            data.append([float(c) for c in row])
        except ValueError:
            raise IngestError(f"{path}: line {lineno}: non-numeric cell in {row}") from None
    return DatasetTable(np.array(data, dtype=np.float64).reshape(len(data), len(header)), header)


def ingest_interactions(path) -> list[tuple[str, int]]:
    """Read ``user_id,item_id`` records; item ids are row indices into the item table."""
    path = Path(path)
    out = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["user_id", "item_id"]:
            raise IngestError(f"{path}: line 1: expected header 'user_id,item_id'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise IngestError(f"{path}: line {lineno}: expected 2 cells, got {len(row)}")
            try:
                out.append((row[0].strip(), int(row[1])))
            except ValueError:
                raise IngestError(f"{path}: line {lineno}: item_id must be an integer") from None
    return out


def build_lists_greedy(table: DatasetTable, min_reviews: int, list_size: int) -> RecGraph:
    """Greedy popularity-first list construction over an interaction table.

    Users with at least ``min_reviews`` interactions are kept. Repeatedly, the
    item with the most still-unfilled interacting users is appended to all of
    their lists; users whose list reaches ``list_size`` drop out. Ties go to
    the lower item index. ``meta`` maps graph indices back to user/item ids.
    """
    if table.interactions is None:
        raise ValueError("table has no interaction records")
    reviewed: dict[str, set[int]] = defaultdict(set)
    for user, item in table.interactions:
        reviewed[user].add(int(item))
    users = sorted(u for u, items in reviewed.items() if len(items) >= min_reviews)
    if not users:
        raise ValueError(f"no user has at least {min_reviews} interactions")

    audience: dict[int, set[str]] = defaultdict(set)
    for u in users:
        for r in reviewed[u]:
            audience[r].add(u)
    lists: dict[str, list[int]] = {u: [] for u in users}
    remaining = set(audience)
    open_users = set(users)

    while open_users:
        best = max(remaining, key=lambda r: (len(audience[r]), -r), default=None)
        if best is None or not audience[best]:
            deficient = sorted(u for u in open_users)
            raise ValueError(f"insufficient interactions to fill lists for users {deficient}")
        remaining.discard(best)
        for u in sorted(audience[best]):
            lists[u].append(best)
            if len(lists[u]) == list_size:
                open_users.discard(u)
                for r in reviewed[u]:
                    audience[r].discard(u)

    item_ids = sorted({r for u in users for r in lists[u]})
    index = {r: k for k, r in enumerate(item_ids)}
    graph_lists = tuple(tuple(index[r] for r in lists[u]) for u in users)
    return RecGraph(len(users), len(item_ids), graph_lists, {"user_ids": users, "item_ids": item_ids})
