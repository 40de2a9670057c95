import math

import pytest
from hypothesis import given, settings, strategies as st

from perfrec.config import parse_config
from perfrec.experiments import SCHEMAS, SchemaError, Table, read_table, run_dynamics, run_pareto, run_synth, summarize, table_text, write_table

# blocks of 2 users and 4 items: K = 4 makes every block fully overlapping
TINY = {"world": {"m": 10, "n": 20}, "graph": {"K": 4, "blocks": 5}, "train": {"epochs": 10, "k": 3}, "repetitions": 2}


def tiny(kind, **over):
    raw = {"experiment": kind, **TINY}
    for key, val in over.items():
        raw[key] = {**raw.get(key, {}), **val} if isinstance(val, dict) else val
    return parse_config(raw)


def test_table_rejects_bad_rows():
    with pytest.raises(SchemaError):
        Table("nope", [])
    with pytest.raises(SchemaError):
        Table("pareto", [(1.0, 2.0)])


row_floats = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=40, deadline=None)
@given(rows=st.lists(st.tuples(row_floats, row_floats, st.integers(0, 99), st.integers(1, 10), row_floats, row_floats), max_size=6))
def test_table_round_trip(tmp_path_factory, rows):
    p = tmp_path_factory.mktemp("t") / "p.csv"
    write_table(p, Table("pareto", rows))
    back = read_table(p)
    assert back.schema == "pareto"
    assert [tuple(float(v) for v in r) for r in back.rows] == [tuple(float(v) for v in r) for r in rows]


def test_schema_header(tmp_path):
    text = table_text(Table("verify", [("x", True, 1.0, 0.5)]))
    assert text.splitlines()[0] == "#schema=verify/v1"
    assert text.splitlines()[1] == ",".join(SCHEMAS["verify"])


def test_read_rejects_unknown_schema(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("#schema=other/v1\na,b\n1,2\n")
    with pytest.raises(SchemaError, match="expected columns"):
        read_table(p)
    p.write_text("#schema=pareto/v1\na,b\n1,2\n")
    with pytest.raises(SchemaError):
        read_table(p)


def test_overlap_rows_and_zero_swap_collapse():
    cfg = tiny("overlap", sweep={"swaps": [0, 8], "lambdas": [0.0, 1.0]})
    t = run_synth(cfg)
    assert len(t) == 2 * 2 * 2
    for r in t.rows:
        if r[2] == 0:
            assert r[-1] < 1e-6


def test_cost_time_rows():
    cfg = tiny("cost-time", T=3, sweep={"alphas": [0.5, 2.0]}, repetitions=1)
    t = run_synth(cfg)
    assert len(t) == 2 * 3
    assert {r[6] for r in t.rows} == {1, 2, 3}


def test_dynamics_and_pareto_tables():
    cfg = tiny("dynamics", T=2, graph={"kind": "uniform"}, dynamics={"methods": ["baseline", "mmr", "hybrid@1"], "tune_budget": 3}, repetitions=1)
    t = run_dynamics(cfg)
    assert t.columns == SCHEMAS["dynamics"]
    assert len(t) == 3 * 2
    cfg = tiny("pareto", T=2, graph={"kind": "uniform"}, sweep={"lambdas": [0.0, 1.0]}, repetitions=1)
    t = run_pareto(cfg)
    assert len(t) == 2 * 2
    means = summarize(t, ["lambda"], "ndcg")
    assert set(means) == {(0.0,), (1.0,)} and all(0 <= v <= 1 for v in means.values())


def test_runs_are_deterministic_and_jobs_invariant():
    cfg = tiny("overlap", sweep={"swaps": [4], "lambdas": [0.5]})
    a, b = table_text(run_synth(cfg)), table_text(run_synth(cfg, jobs=2))
    assert a == b
