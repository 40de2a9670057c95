import pytest

from perfrec.experiments import SchemaError, Table, write_table
from perfrec.plotting import plot_csv, plot_table, series_ids


def dyn_rows():
    return [(m, 0.1, "0.9", 0.5, s, t, 0.9, 0.5 - 0.01 * t, 0.4) for m in ("baseline", "strategic") for s in (0, 1) for t in (1, 2, 3)]


def test_dynamics_svg(tmp_path):
    p = write_table(tmp_path / "d.csv", Table("dynamics", dyn_rows()))
    svg = plot_csv(p)
    assert svg.suffix == ".svg"
    ids = series_ids(svg)
    assert {i.split("-")[1] for i in ids} == {"div_post", "ndcg_test"}
    assert len(ids) == 4


def test_pareto_paths(tmp_path):
    rows = [(lam, 0.1, 0, t, 0.9 - lam / 10, 0.3 + lam / 10) for lam in (0.0, 0.3, 1.0) for t in (1, 2)]
    svg = plot_table(Table("pareto", rows), tmp_path / "p.svg")
    assert sorted(series_ids(svg)) == ["path-lambda-0.0", "path-lambda-0.3", "path-lambda-1.0"]


def test_synth_sweep_and_rounds(tmp_path):
    rows = [("overlap", "swaps", n, lam, 0.0, 0, 1, 0.9, 0.5, 0.2) for n in (0, 8) for lam in (0.0, 1.0)]
    assert len(series_ids(plot_table(Table("synth", rows), tmp_path / "s.svg"))) == 4
    rows = [("cost-time", "alpha", a, 100.0, a, 0, t, 0.9, 0.5, 0.2) for a in (0.5, 2.0) for t in (1, 2)]
    assert len(series_ids(plot_table(Table("synth", rows), tmp_path / "c.svg"))) == 4


def test_svg_is_deterministic(tmp_path):
    t = Table("dynamics", dyn_rows())
    a = plot_table(t, tmp_path / "a.svg").read_bytes()
    b = plot_table(t, tmp_path / "b.svg").read_bytes()
    assert a == b


def test_errors(tmp_path):
    with pytest.raises(SchemaError):
        plot_table(Table("dynamics", []), tmp_path / "e.svg")
    with pytest.raises(SchemaError):
        plot_table(Table("verify", [("x", True, 1.0, 1.0)]), tmp_path / "v.svg")
    with pytest.raises(SchemaError):
        plot_table(Table("dynamics", dyn_rows()), tmp_path / "x.svg", figure="pareto")
