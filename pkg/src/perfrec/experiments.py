"""Sweep drivers and versioned CSV tables."""
from __future__ import annotations

import csv
import io
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ExperimentConfig, _method_kind
from .dynamics import DynamicsConfig, Method, RoundRecord, parallel_map, pareto_sweep, record_key, run_trajectory
from .graph import RecGraph, gen_block_shuffled, gen_uniform
from .groundtruth import sample_world

__all__ = [
    "SCHEMAS",
    "SchemaError",
    "Table",
    "write_table",
    "read_table",
    "make_graph",
    "run_synth",
    "run_dynamics",
    "run_pareto",
]

SCHEMAS: dict[str, tuple[str, ...]] = {
    "synth": ("experiment", "setting", "value", "lambda", "alpha", "seed", "round", "ndcg", "div_pre", "div_post"),
    "dynamics": ("method", "alpha", "target", "lambda", "seed", "round", "ndcg_test", "div_pre", "div_post"),
    "pareto": ("lambda", "alpha", "seed", "round", "ndcg", "div"),
    "verify": ("check", "passed", "value", "threshold"),
}

_SETTING = {"overlap": "swaps", "dispersion": "sigma_u_star", "cost-time": "alpha"}


class SchemaError(ValueError):
    pass


class Table:
    def __init__(self, schema: str, rows: list[tuple]):
        if schema not in SCHEMAS:
            raise SchemaError(f"unknown schema {schema!r}; known: {sorted(SCHEMAS)}")
        self.schema = schema
        self.columns = SCHEMAS[schema]
        for i, r in enumerate(rows):
            if len(r) != len(self.columns):
                raise SchemaError(f"row {i} has {len(r)} cells; {schema} expects columns {', '.join(self.columns)}")
        self.rows = rows

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def __len__(self):
        return len(self.rows)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def table_text(table: Table) -> str:
    buf = io.StringIO()
    buf.write(f"#schema={table.schema}/v1\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_table(path, table: Table) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(table_text(table), encoding="utf-8")
    return path


def _coerce(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def read_table(path) -> Table:
    """Parse a CSV written by ``write_table``; the schema comment must match the header."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise SchemaError(f"{path}: empty file")
    first = lines[0].strip()
    if not first.startswith("#schema="):
        raise SchemaError(f"{path}: line 1: missing '#schema=<name>/v1' comment")
    name, _, version = first[len("#schema="):].partition("/")
    if name not in SCHEMAS:
        expected = "; ".join(f"{k}: {','.join(v)}" for k, v in SCHEMAS.items())
        raise SchemaError(f"{path}: unknown schema {name!r}; expected columns for one of {expected}")
    if version != "v1":
        raise SchemaError(f"{path}: unsupported schema version {version!r}")
    reader = csv.reader(lines[1:])
    header = next(reader, None)
    if header is None or tuple(header) != SCHEMAS[name]:
        raise SchemaError(f"{path}: line 2: expected columns {','.join(SCHEMAS[name])}, got {header}")
    rows = [tuple(_coerce(v) for v in row) for row in reader if row]
    for i, row in enumerate(rows, start=3):
        if len(row) != len(header):
            raise SchemaError(f"{path}: line {i}: expected {len(header)} cells, got {len(row)}")
    return Table(name, rows)


# --------------------------------------------------------------------------


def make_graph(cfg: ExperimentConfig, seed: int, swaps: int | None = None) -> RecGraph:
    w, g = cfg.world, cfg.graph
    if g["kind"] == "uniform":
        return gen_uniform(w["m"], w["n"], g["K"], seed)
    return gen_block_shuffled(w["m"], w["n"], g["K"], g["blocks"], g["swaps"] if swaps is None else swaps, seed)


def _dyn_config(cfg: ExperimentConfig, alpha: float, lam: float | None = None) -> DynamicsConfig:
    train = replace(cfg.train, alpha=float(alpha), seed=cfg.seed)
    if lam is not None:
        train = replace(train, lam=float(lam))
    dy = cfg.dynamics
    return DynamicsConfig(
        train=train,
        mode=dy["mode"],
        visible=dy["visible"],
        train_share=dy["train_share"],
        tolerance=dy["tolerance"],
        tune_budget=dy["tune_budget"],
    )


def _synth_cell(args):
    cfg, value, lam, alpha, rep = args
    seed = cfg.seed + rep
    w = cfg.world
    sigma_u = value if cfg.experiment == "dispersion" else w["sigma_u_star"]
    swaps = int(value) if cfg.experiment == "overlap" else None
    G = make_graph(cfg, seed, swaps)
    world = sample_world(w["m"], w["n"], w["d"], w["sigma_x"], sigma_u, seed)
    traj = run_trajectory(world, G, Method("strategic", lam=float(lam)), cfg.T, _dyn_config(cfg, alpha, lam), seed)
    setting = _SETTING[cfg.experiment]
    return [
        (cfg.experiment, setting, value, float(lam), float(alpha), seed, r.round, r.ndcg_test, r.div_pre, r.div_post)
        for r in traj.records
    ]


def run_synth(cfg: ExperimentConfig, jobs: int = 1) -> Table:
    """Strategic training with fixed lambda over the experiment's sweep variable.

    ``overlap`` sweeps edge swaps of the block graph, ``dispersion`` the
    spread of true preferences and ``cost-time`` the cost scale over rounds.
    """
    if cfg.experiment not in _SETTING:
        raise ValueError(f"synth runs overlap, dispersion or cost-time, not {cfg.experiment!r}")
    s = cfg.sweep
    if cfg.experiment == "overlap":
        values, alphas = [int(v) for v in s["swaps"]], s["alphas"]
    elif cfg.experiment == "dispersion":
        values, alphas = [float(v) for v in s["sigma_u_stars"]], s["alphas"]
    else:
        values, alphas = [float(v) for v in s["alphas"]], None
    cells = []
    for value in values:
        for lam in s["lambdas"]:
            for alpha in (alphas if alphas is not None else [value]):
                for rep in range(cfg.repetitions):
                    cells.append((cfg, value, lam, alpha, rep))
    rows = [row for part in parallel_map(_synth_cell, cells, jobs) for row in part]
    return Table("synth", rows)


# --------------------------------------------------------------------------


def _methods(cfg: ExperimentConfig) -> list[Method]:
    out = []
    theta = cfg.dynamics["theta"]
    for name in cfg.dynamics["methods"]:
        kind, switch = _method_kind(name, cfg.T)
        if kind in ("nonstrategic", "strategic", "hybrid"):
            for target in cfg.sweep["targets"]:
                out.append(Method(kind, target=target, switch_round=switch))
        elif kind == "mmr":
            out.append(Method("mmr", theta=theta))
        else:
            out.append(Method(kind))
    return out


def _dynamics_cell(args) -> list[RoundRecord]:
    cfg, alpha, rep = args
    seed = cfg.seed + rep
    w = cfg.world
    G = make_graph(cfg, seed)
    world = sample_world(w["m"], w["n"], w["d"], w["sigma_x"], w["sigma_u_star"], seed)
    dcfg = _dyn_config(cfg, alpha)
    methods = _methods(cfg)
    switches = {m.switch_round for m in methods if m.kind == "hybrid"}
    snaps: dict = {}
    records: list[RoundRecord] = []
    for m in methods:
        if m.kind == "hybrid":
            continue
        traj = run_trajectory(world, G, m, cfg.T, dcfg, seed, snapshot_at=switches if m.kind == "strategic" else ())
        if m.kind == "strategic":
            snaps[m.target] = traj.snapshots
        records.extend(traj.records)
    for m in methods:
        if m.kind != "hybrid":
            continue
        # the first switch_round rounds coincide with the strategic trajectory
        snap = snaps.get(m.target, {}).get(m.switch_round)
        records.extend(run_trajectory(world, G, m, cfg.T, dcfg, seed, resume=snap).records)
    return records


def run_dynamics(cfg: ExperimentConfig, jobs: int = 1) -> Table:
    """All methods over the cost and target grids; one trajectory per seed."""
    cells = [(cfg, float(a), rep) for a in cfg.sweep["alphas"] for rep in range(cfg.repetitions)]
    records = [r for part in parallel_map(_dynamics_cell, cells, jobs) for r in part]
    records.sort(key=record_key)
    rows = [(r.method, r.alpha, r.target, r.lam, r.seed, r.round, r.ndcg_test, r.div_pre, r.div_post) for r in records]
    return Table("dynamics", rows)


def _pareto_cell(args):
    cfg, alpha, rep = args
    seed = cfg.seed + rep
    w = cfg.world
    G = make_graph(cfg, seed)
    world = sample_world(w["m"], w["n"], w["d"], w["sigma_x"], w["sigma_u_star"], seed)
    rows = pareto_sweep(world, G, cfg.sweep["lambdas"], cfg.T, _dyn_config(cfg, alpha), seed)
    return [(lam, float(alpha), seed, t, nd, dv) for lam, t, nd, dv in rows]


def run_pareto(cfg: ExperimentConfig, jobs: int = 1) -> Table:
    cells = [(cfg, float(a), rep) for a in cfg.sweep["alphas"] for rep in range(cfg.repetitions)]
    rows = [row for part in parallel_map(_pareto_cell, cells, jobs) for row in part]
    rows.sort(key=lambda r: (r[0], r[1], r[2], r[3]))
    return Table("pareto", rows)


def summarize(table: Table, by: Sequence[str], metric: str) -> dict[tuple, float]:
    """Mean of ``metric`` per distinct value of the ``by`` columns."""
    idx = [table.columns.index(c) for c in by]
    j = table.columns.index(metric)
    acc: dict[tuple, list[float]] = {}
    for row in table.rows:
        acc.setdefault(tuple(row[i] for i in idx), []).append(float(row[j]))
    return {k: float(np.mean(v)) for k, v in sorted(acc.items(), key=lambda kv: tuple(map(str, kv[0])))}
