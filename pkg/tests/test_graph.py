import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from perfrec.graph import (
    DatasetTable,
    IngestError,
    RecGraph,
    build_lists_greedy,
    gen_block_shuffled,
    gen_ring,
    gen_two_item,
    gen_uniform,
    ingest_interactions,
    ingest_items,
)


def test_graph_validation():
    with pytest.raises(ValueError):
        RecGraph(2, 3, ((0, 1),))
    with pytest.raises(ValueError):
        RecGraph(1, 3, ((),))
    with pytest.raises(ValueError):
        RecGraph(1, 3, ((0, 0),))
    with pytest.raises(ValueError):
        RecGraph(1, 3, ((3,),))


@settings(max_examples=40, deadline=None)
@given(m=st.integers(1, 12), n=st.integers(1, 15), seed=st.integers(0, 10_000), data=st.data())
def test_uniform_invariants(m, n, seed, data):
    K = data.draw(st.integers(1, n))
    G = gen_uniform(m, n, K, seed)
    assert G.is_consistent()
    assert (G.list_sizes == K).all()
    assert G.item_degrees.sum() == m * K


def test_uniform_complete_when_k_equals_n():
    G = gen_uniform(4, 5, 5, 0)
    assert all(set(u) == set(range(4)) for u in G.user_sets)


def test_uniform_marginal_frequency():
    # each edge appears with probability K/n
    hits = sum(0 in gen_uniform(1, 10, 3, s).lists[0] for s in range(2000))
    assert abs(hits / 2000 - 0.3) <= 0.03


def test_block_full_overlap_at_zero_swaps():
    G = gen_block_shuffled(20, 80, 8, 10, 0, seed=1)
    for j, users in enumerate(G.user_sets):
        block = j // 8
        assert set(users) == set(range(2 * block, 2 * block + 2))


@settings(max_examples=25, deadline=None)
@given(swaps=st.integers(0, 300), seed=st.integers(0, 1000))
def test_block_swaps_preserve_degrees(swaps, seed):
    base = gen_block_shuffled(20, 40, 4, 5, 0, seed)
    G = gen_block_shuffled(20, 40, 4, 5, swaps, seed)
    assert G.is_consistent()
    assert (G.list_sizes == 4).all()
    assert np.array_equal(G.item_degrees, base.item_degrees)
    assert G.meta["swaps_done"] <= swaps


def test_block_mixing_with_many_swaps():
    G = gen_block_shuffled(50, 200, 10, 5, 1000, seed=0)
    cross = sum(i // 10 != j // 40 for i, j in G.edges())
    assert cross / len(G.edges()) >= 0.5


def test_block_infeasible_swaps_report_count():
    # one block and complete lists leave no legal swap
    G = gen_block_shuffled(3, 3, 3, 1, 5, seed=0)
    assert G.meta["swaps_done"] == 0


def test_block_argument_errors():
    with pytest.raises(ValueError):
        gen_block_shuffled(10, 30, 2, 4, 0, 0)
    with pytest.raises(ValueError):
        gen_block_shuffled(10, 20, 5, 5, 0, 0)


def test_ring():
    assert gen_ring(3).lists == ((0, 1), (1, 2), (2, 0))
    G = gen_ring(12)
    assert G.m == G.n == 12 and (G.list_sizes == 2).all() and (G.item_degrees == 2).all()
    with pytest.raises(ValueError):
        gen_ring(2)


def test_two_item():
    G = gen_two_item(5, distinct=False)
    assert G.user_sets[0] == G.user_sets[1] and len(G.user_sets[0]) == 5
    G = gen_two_item(3, distinct=True)
    a, b = map(set, G.user_sets)
    assert len(a) == len(b) == 4 and len(a & b) == 3
    with pytest.raises(ValueError):
        gen_two_item(1, distinct=True)


def test_ingest_items(tmp_path):
    p = tmp_path / "items.csv"
    p.write_text("f1,f2\n1,0\n0,1\n0,0\n")
    t = ingest_items(p)
    assert t.features.shape == (3, 2) and t.feature_names == ["f1", "f2"]
    with pytest.raises(ValueError, match="all-zero"):
        t.unit_features()

    p.write_text("1,0\n0,1\n")
    with pytest.raises(IngestError, match="header"):
        ingest_items(p)
    p.write_text("a,b\n1,2\n3\n")
    with pytest.raises(IngestError, match="line 3"):
        ingest_items(p)
    p.write_text("a,b\n1,x\n")
    with pytest.raises(IngestError, match="line 2"):
        ingest_items(p)


def test_ingest_interactions(tmp_path):
    p = tmp_path / "inter.csv"
    p.write_text("user_id,item_id\nu1,0\nu2,3\n")
    assert ingest_interactions(p) == [("u1", 0), ("u2", 3)]
    p.write_text("user_id,item_id\nu1,zero\n")
    with pytest.raises(IngestError, match="line 2"):
        ingest_interactions(p)


def table(records, n=20):
    return DatasetTable(np.eye(n, 3) + 0.1, ["a", "b", "c"], records)


def test_greedy_popular_item_first():
    recs = [(f"u{i}", 7) for i in range(4)] + [(f"u{i}", i) for i in range(4)] + [(f"u{i}", 10 + i) for i in range(4)]
    G = build_lists_greedy(table(recs), min_reviews=3, list_size=2)
    first = G.meta["item_ids"][G.lists[0][0]]
    assert first == 7
    assert all(G.meta["item_ids"][l[0]] == 7 for l in G.lists)


def test_greedy_postconditions():
    rng = np.random.default_rng(0)
    recs = [(f"u{i}", int(j)) for i in range(6) for j in rng.choice(20, size=8, replace=False)]
    G = build_lists_greedy(table(recs), min_reviews=5, list_size=4)
    assert (G.list_sizes == 4).all()
    reviewed = {}
    for u, j in recs:
        reviewed.setdefault(u, set()).add(j)
    for u, items in zip(G.meta["user_ids"], G.lists):
        assert {G.meta["item_ids"][k] for k in items} <= reviewed[u]


def test_greedy_errors():
    recs = [("u0", 1), ("u1", 2)]
    with pytest.raises(ValueError, match="at least"):
        build_lists_greedy(table(recs), min_reviews=2, list_size=1)
    recs = [("u0", 1), ("u0", 2), ("u1", 1), ("u1", 3)]
    with pytest.raises(ValueError, match="insufficient"):
        build_lists_greedy(table(recs), min_reviews=2, list_size=3)
