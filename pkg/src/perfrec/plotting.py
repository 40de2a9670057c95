"""Static SVG figures for the CSV tables; every series carries a ``gid``."""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("svg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiments import SchemaError, Table, read_table  # noqa: E402

__all__ = ["FIGURES", "plot_table", "plot_csv", "series_ids"]

FIGURES = ("auto", "sweep", "rounds", "pareto")

plt.rcParams["svg.hashsalt"] = "perfrec"
plt.rcParams["svg.fonttype"] = "none"


def _mean_by(table: Table, keys, x, y):
    acc = defaultdict(list)
    ki = [table.columns.index(k) for k in keys]
    xi, yi = table.columns.index(x), table.columns.index(y)
    for row in table.rows:
        acc[(tuple(row[i] for i in ki), row[xi])].append(float(row[yi]))
    series = defaultdict(list)
    for (key, xv), vals in acc.items():
        series[key].append((xv, float(np.mean(vals))))
    return {k: sorted(v) for k, v in sorted(series.items(), key=lambda kv: tuple(map(str, kv[0])))}


def _slug(parts) -> str:
    return "-".join(str(p).replace(" ", "") for p in parts)


def _panels(table: Table, x: str, keys, metrics, title: str):
    fig, axes = plt.subplots(1, len(metrics), figsize=(5 * len(metrics), 3.6))
    axes = np.atleast_1d(axes)
    for ax, metric in zip(axes, metrics):
        for key, pts in _mean_by(table, keys, x, metric).items():
            xs, ys = zip(*pts)
            label = ", ".join(f"{k}={v}" for k, v in zip(keys, key))
            (line,) = ax.plot(xs, ys, marker="o", ms=3, label=label)
            line.set_gid(f"series-{metric}-{_slug(key)}")
        ax.set_xlabel(x)
        ax.set_ylabel(metric)
        ax.set_ylim(-0.02, 1.02)
        ax.grid(alpha=0.3)
    axes[0].legend(fontsize=7)
    fig.suptitle(title)
    fig.tight_layout()
    return fig


def _pareto(table: Table):
    fig, ax = plt.subplots(figsize=(5, 4))
    for key, pts in _mean_by(table, ["lambda"], "round", "ndcg").items():
        divs = dict(_mean_by(table, ["lambda"], "round", "div")[key])
        xs = [divs[t] for t, _ in pts]
        ys = [nd for _, nd in pts]
        (line,) = ax.plot(xs, ys, marker="o", ms=3, label=f"lambda={key[0]}")
        line.set_gid(f"path-lambda-{_slug(key)}")
    ax.set_xlabel("div")
    ax.set_ylabel("ndcg")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    return fig


def plot_table(table: Table, out, figure: str = "auto") -> Path:
    """Render ``table`` to an SVG at ``out``."""
    if figure not in FIGURES:
        raise ValueError(f"figure must be one of {FIGURES}")
    if not table.rows:
        raise SchemaError("table has no data rows")
    if figure == "auto":
        figure = {"synth": "sweep", "dynamics": "rounds", "pareto": "pareto"}.get(table.schema)
        if figure is None:
            raise SchemaError(f"no figure for schema {table.schema!r}")
        if table.schema == "synth" and table.rows[0][0] == "cost-time":
            figure = "rounds"

    if figure == "pareto":
        if table.schema != "pareto":
            raise SchemaError("pareto figures need a pareto table")
        fig = _pareto(table)
    elif table.schema == "dynamics":
        fig = _panels(table, "round", ["method", "target", "alpha"], ["div_post", "ndcg_test"], "dynamics")
    elif table.schema == "synth":
        exp = table.rows[0][0]
        if figure == "rounds":
            fig = _panels(table, "round", ["value", "lambda"], ["div_post", "ndcg"], exp)
        else:
            fig = _panels(table, "value", ["lambda"], ["div_post", "ndcg"], f"{exp}: {table.rows[0][1]}")
    else:
        raise SchemaError(f"cannot draw {figure!r} from schema {table.schema!r}")

    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out


def plot_csv(path, out=None, figure: str = "auto") -> Path:
    path = Path(path)
    out = Path(out) if out is not None else path.with_suffix(".svg")
    return plot_table(read_table(path), out, figure)


def series_ids(svg_path) -> list[str]:
    """gids of plotted series in an SVG written by this module."""
    import xml.etree.ElementTree as ET

    root = ET.parse(svg_path).getroot()
    ids = []
    for el in root.iter():
        gid = el.get("id", "")
        if gid.startswith(("series-", "path-")):
            ids.append(gid)
    return ids
