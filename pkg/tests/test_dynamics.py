from dataclasses import replace

import numpy as np
import pytest

from perfrec.dynamics import (
    DynamicsConfig,
    Method,
    parallel_map,
    pareto_sweep,
    record_key,
    run_round,
    run_trajectory,
)
from perfrec.graph import RecGraph, gen_block_shuffled, gen_uniform
from perfrec.groundtruth import label_edges, sample_world
from perfrec.learning import TrainConfig, init_state

M, N, K, k = 10, 40, 8, 4


def small(alpha=0.5, epochs=15, **kw):
    return DynamicsConfig(train=TrainConfig(k=k, alpha=alpha, epochs=epochs, patience=5), tune_budget=4, **kw)


@pytest.fixture(scope="module")
def env():
    return sample_world(M, N, 2, seed=0), gen_uniform(M, N, K, 0)


def metrics(traj):
    return [(r.round, r.ndcg_test, r.div_pre, r.div_post) for r in traj.records]


def test_method_validation():
    with pytest.raises(ValueError):
        Method("greedy")
    with pytest.raises(ValueError):
        Method("strategic")
    with pytest.raises(ValueError):
        Method("strategic", lam=1.0, target=0.9)
    with pytest.raises(ValueError):
        Method("baseline", lam=1.0)
    with pytest.raises(ValueError):
        Method("hybrid", lam=1.0)
    with pytest.raises(ValueError):
        Method("nonstrategic", target="best")
    assert Method("hybrid", target=0.9, switch_round=3).name == "hybrid@3"
    assert Method("strategic", target=0.9).target_label == "0.9"
    assert Method("strategic", lam=1.0).target_label == "fixed"
    assert Method("mmr").target_label == "none"


def test_hybrid_objective_schedule():
    h = Method("hybrid", lam=1.0, switch_round=2)
    assert [h.objective_at(t) for t in (1, 2, 3)] == [("strategic", True), ("strategic", True), ("nonstrategic", False)]


def test_config_validation():
    with pytest.raises(ValueError):
        DynamicsConfig(mode="real")
    with pytest.raises(ValueError):
        DynamicsConfig(lam_lo=10.0, lam_hi=1.0)


def test_lambda_zero_methods_coincide(env):
    world, G = env
    cfg = small()
    runs = [run_trajectory(world, G, m, 3, cfg, seed=1) for m in (Method("baseline"), Method("nonstrategic", lam=0.0), Method("strategic", lam=0.0))]
    assert metrics(runs[0]) == metrics(runs[1]) == metrics(runs[2])


def test_huge_cost_freezes_items(env):
    world, G = env
    traj = run_trajectory(world, G, Method("baseline"), 2, small(alpha=1e9), seed=0)
    for r in traj.records:
        assert r.div_post == pytest.approx(r.div_pre, abs=1e-8)


def test_full_overlap_without_cost_kills_diversity():
    world = sample_world(8, 32, 2, seed=0)
    G = gen_block_shuffled(8, 32, 8, 4, 0, seed=0)
    traj = run_trajectory(world, G, Method("strategic", lam=1.0), 2, small(alpha=0.0), seed=0)
    assert all(r.div_post == pytest.approx(0.0, abs=1e-12) for r in traj.records)


def test_single_round_trajectory_equals_run_round(env):
    world, G = env
    cfg = small()
    method = Method("strategic", lam=0.5)
    traj = run_trajectory(world, G, method, 1, cfg, seed=4)
    out = run_round(init_state(M, 2, 4), world.X0, label_edges(world.X0, world, G), world, G, method, cfg, 1, 4)
    assert traj.records == [out.record]


def test_random_presentation_costs_ndcg():
    cfg = small(epochs=10)
    gaps = []
    for s in range(200):
        world, G = sample_world(6, 12, 2, seed=s), gen_uniform(6, 12, 6, s)
        base = run_trajectory(world, G, Method("baseline"), 1, cfg, s).records[0]
        rnd = run_trajectory(world, G, Method("random"), 1, cfg, s).records[0]
        gaps.append(base.ndcg_test - rnd.ndcg_test)
    assert np.mean(gaps) > 0


def test_mmr_only_changes_presentation(env):
    world, G = env
    cfg = small()
    base = run_trajectory(world, G, Method("baseline"), 2, cfg, seed=2)
    mmr = run_trajectory(world, G, Method("mmr", theta=1.0), 2, cfg, seed=2)
    assert metrics(base) == metrics(mmr)


def test_tuned_records_respect_target(env):
    world, G = env
    cfg = small()
    traj = run_trajectory(world, G, Method("strategic", target="base"), 2, cfg, seed=0)
    assert all(r.lam >= 0 and r.target == "base" for r in traj.records)
    # an unreachable target falls back to lambda = 0
    traj = run_trajectory(world, G, Method("strategic", target=1.5), 1, cfg, seed=0)
    assert traj.records[0].lam == 0.0


def test_hybrid_resumes_from_strategic_snapshot(env):
    world, G = env
    cfg = small()
    strat = run_trajectory(world, G, Method("strategic", lam=0.5), 3, cfg, seed=3, snapshot_at=[2])
    hyb_m = Method("hybrid", lam=0.5, switch_round=2)
    full = run_trajectory(world, G, hyb_m, 3, cfg, seed=3)
    resumed = run_trajectory(world, G, hyb_m, 3, cfg, seed=3, resume=strat.snapshots[2])
    assert metrics(full) == metrics(resumed)
    assert metrics(full)[:2] == metrics(strat)[:2]
    assert all(r.method == "hybrid@2" for r in resumed.records)
    assert full.records[2].lam == 0.0


def test_switch_round_beyond_horizon(env):
    world, G = env
    with pytest.raises(ValueError):
        run_trajectory(world, G, Method("hybrid", lam=1.0, switch_round=4), 3, small(), 0)


def test_semi_mode_runs_and_clamps_k(env):
    world, G = env
    cfg = replace(small(mode="semi"), train=TrainConfig(k=6, alpha=0.5, epochs=5))
    traj = run_trajectory(world, G, Method("nonstrategic", lam=0.2), 2, cfg, seed=0)
    assert len(traj.records) == 2
    assert all(0 <= r.ndcg_test <= 1 for r in traj.records)


def test_unequal_lists_rejected():
    world = sample_world(2, 4, 2, seed=0)
    G = RecGraph(2, 4, ((0, 1, 2), (1, 3)))
    with pytest.raises(ValueError, match="equal list sizes"):
        run_trajectory(world, G, Method("baseline"), 1, small(), 0)


def test_pareto_rows(env):
    world, G = env
    rows = pareto_sweep(world, G, [0.0, 1.0], 2, small(epochs=5), 0)
    assert len(rows) == 4
    assert [r[:2] for r in rows] == [(0.0, 1), (0.0, 2), (1.0, 1), (1.0, 2)]
    assert len(pareto_sweep(world, G, [0.0], 1, small(epochs=5), 0)) == 1
    with pytest.raises(ValueError):
        pareto_sweep(world, G, [], 1, small(), 0)


def test_determinism_and_merge_order(env):
    world, G = env
    cfg = small()
    a = run_trajectory(world, G, Method("strategic", target=0.9), 2, cfg, seed=5)
    b = run_trajectory(world, G, Method("strategic", target=0.9), 2, cfg, seed=5)
    assert a.records == b.records
    assert sorted(a.records, key=record_key) == a.records


def _square(x):
    return x * x


def test_parallel_map_preserves_order():
    assert parallel_map(_square, range(6), jobs=2) == [0, 1, 4, 9, 16, 25]
    assert parallel_map(_square, [], jobs=3) == []
