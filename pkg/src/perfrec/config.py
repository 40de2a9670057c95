"""Experiment configuration: JSON files with nested sections.

Unknown keys are rejected and missing ones filled from per-experiment
defaults. The dynamics world (m=40, n=160, K=20, k=10, d=8) is sized to run
on a laptop; the synthetic sweeps use the smallest worlds that still show
their effects.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .learning import TrainConfig

__all__ = [
    "EXPERIMENTS",
    "ConfigError",
    "ExperimentConfig",
    "defaults_for",
    "load_config",
    "parse_config",
    "dump_config",
]

EXPERIMENTS = ("overlap", "dispersion", "cost-time", "dynamics", "pareto", "verify")
GRAPH_KINDS = ("block", "uniform")


class ConfigError(ValueError):
    pass


_TRAIN_KEYS = {
    "lambda": "lam",
    "alpha": "alpha",
    "k": "k",
    "tau_ndcg": "tau_ndcg",
    "tau_perm": "tau_perm",
    "tau_topk": "tau_topk",
    "sinkhorn_iters": "sinkhorn_iters",
    "lr": "lr",
    "epochs": "epochs",
    "patience": "patience",
}

_BASE: dict[str, Any] = {
    "world": {"m": 20, "n": 80, "d": 2, "sigma_x": 1.0, "sigma_u_star": 0.1},
    "graph": {"kind": "block", "K": 8, "blocks": 10, "swaps": 0},
    "train": {
        "lambda": 0.0,
        "alpha": 0.0,
        "k": 4,
        "tau_ndcg": 0.1,
        "tau_perm": 1.0,
        "tau_topk": 5.0,
        "sinkhorn_iters": 5,
        "lr": 0.1,
        "epochs": 200,
        "patience": 20,
    },
    "sweep": {"lambdas": [0.0], "alphas": [0.0], "swaps": [0], "sigma_u_stars": [0.1], "targets": [0.9]},
    "dynamics": {
        "methods": ["baseline", "nonstrategic", "strategic", "hybrid@5"],
        "mode": "synthetic",
        "visible": 0.75,
        "train_share": 2.0 / 3.0,
        "tolerance": 0.01,
        "tune_budget": 8,
        "theta": 0.5,
    },
    "T": 1,
    "repetitions": 20,
    "seed": 0,
    "level": "fast",
    "out": "results",
}

# per-experiment overrides of _BASE
_KIND_DEFAULTS: dict[str, dict[str, Any]] = {
    "overlap": {
        "sweep": {"lambdas": [0.0, 0.1, 1.0], "swaps": [0, 16, 32, 64, 128, 256]},
    },
    "dispersion": {
        "world": {"m": 60, "n": 20},
        "graph": {"kind": "uniform", "K": 10},
        "train": {"k": 10},
        "sweep": {"lambdas": [0.0, 0.1, 1.0], "sigma_u_stars": [0.1, 0.5, 1.0]},
    },
    "cost-time": {
        "train": {"lambda": 100.0},
        "sweep": {"lambdas": [100.0], "alphas": [0.25, 0.5, 1.0, 2.0, 4.0]},
        "T": 10,
        "repetitions": 10,
    },
    "dynamics": {
        "world": {"m": 40, "n": 160, "d": 8},
        "graph": {"kind": "uniform", "K": 20},
        "train": {"k": 10, "alpha": 0.1},
        "sweep": {"alphas": [0.1], "targets": [0.9]},
        "T": 10,
        "repetitions": 10,
    },
    "pareto": {
        "world": {"m": 40, "n": 160, "d": 8},
        "graph": {"kind": "uniform", "K": 20},
        "train": {"k": 10, "alpha": 0.1},
        "sweep": {"lambdas": [0.0, 0.1, 0.3, 1.0, 3.0], "alphas": [0.1]},
        "T": 10,
        "repetitions": 3,
    },
    "verify": {},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def defaults_for(experiment: str) -> dict:
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment: unknown kind {experiment!r}; expected one of {EXPERIMENTS}")
    return _merge(_BASE, {"experiment": experiment, **_KIND_DEFAULTS[experiment]})


def _check_keys(raw: dict, allowed: dict, where: str):
    for key in raw:
        if key not in allowed:
            path = f"{where}.{key}" if where else key
            raise ConfigError(f"{path}: unknown key")
        if isinstance(allowed[key], dict):
            if not isinstance(raw[key], dict):
                raise ConfigError(f"{where + '.' if where else ''}{key}: expected an object")
            _check_keys(raw[key], allowed[key], f"{where}.{key}" if where else key)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    world: dict
    graph: dict
    train: TrainConfig
    sweep: dict
    dynamics: dict
    T: int
    repetitions: int
    seed: int
    level: str
    out: str
    raw: dict = field(compare=False, repr=False, default_factory=dict)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        raw = self.to_dict()
        raw["seed"] = int(seed)
        return parse_config(raw)


def _num(x, path, integer=False, lo=None, lo_open=False, hi=None):
    ok = isinstance(x, int) if integer else isinstance(x, (int, float))
    if isinstance(x, bool) or not ok:
        raise ConfigError(f"{path}: expected {'an integer' if integer else 'a number'}, got {x!r}")
    if lo is not None and (x <= lo if lo_open else x < lo):
        raise ConfigError(f"{path}: must be {'>' if lo_open else '>='} {lo}, got {x!r}")
    if hi is not None and x > hi:
        raise ConfigError(f"{path}: must be <= {hi}, got {x!r}")
    return x


def _grid(vals, path, **kw):
    if not isinstance(vals, list):
        raise ConfigError(f"{path}: expected a list")
    return [_num(v, f"{path}[{i}]", **kw) for i, v in enumerate(vals)]


def _validate(cfg: dict) -> None:
    kind = cfg["experiment"]
    w, g, s, dy = cfg["world"], cfg["graph"], cfg["sweep"], cfg["dynamics"]
    for key in ("m", "n", "d"):
        _num(w[key], f"world.{key}", integer=True, lo=1)
    if w["d"] < 2:
        raise ConfigError("world.d: must be >= 2")
    _num(w["sigma_x"], "world.sigma_x", lo=0)
    _num(w["sigma_u_star"], "world.sigma_u_star", lo=0)
    if g["kind"] not in GRAPH_KINDS:
        raise ConfigError(f"graph.kind: expected one of {GRAPH_KINDS}, got {g['kind']!r}")
    _num(g["K"], "graph.K", integer=True, lo=1, hi=w["n"])
    _num(g["blocks"], "graph.blocks", integer=True, lo=1)
    _num(g["swaps"], "graph.swaps", integer=True, lo=0)
    if g["kind"] == "block" and (w["m"] % g["blocks"] or w["n"] % g["blocks"]):
        raise ConfigError("graph.blocks: must divide world.m and world.n")

    t = cfg["train"]
    _num(t["lambda"], "train.lambda", lo=0)
    _num(t["alpha"], "train.alpha", lo=0)
    _num(t["k"], "train.k", integer=True, lo=2, hi=g["K"])
    for key in ("tau_ndcg", "tau_perm", "tau_topk", "lr"):
        _num(t[key], f"train.{key}", lo=0, lo_open=True)
    _num(t["sinkhorn_iters"], "train.sinkhorn_iters", integer=True, lo=0)
    _num(t["epochs"], "train.epochs", integer=True, lo=0)
    _num(t["patience"], "train.patience", integer=True, lo=1)

    lams = _grid(s["lambdas"], "sweep.lambdas")
    for i, lam in enumerate(lams):
        if lam < 0:
            raise ConfigError(f"sweep.lambdas[{i}]: lambda must be >= 0, got {lam!r}")
    _grid(s["alphas"], "sweep.alphas", lo=0)
    _grid(s["swaps"], "sweep.swaps", integer=True, lo=0)
    _grid(s["sigma_u_stars"], "sweep.sigma_u_stars", lo=0)
    if not isinstance(s["targets"], list):
        raise ConfigError("sweep.targets: expected a list")
    for i, b in enumerate(s["targets"]):
        if b != "base":
            _num(b, f"sweep.targets[{i}]", lo=0, hi=1)

    need = {
        "overlap": ("lambdas", "swaps"),
        "dispersion": ("lambdas", "sigma_u_stars"),
        "cost-time": ("lambdas", "alphas"),
        "dynamics": ("alphas", "targets"),
        "pareto": ("lambdas", "alphas"),
        "verify": (),
    }[kind]
    for key in need:
        if not s[key]:
            raise ConfigError(f"sweep.{key}: must be nonempty for {kind}")

    if not isinstance(dy["methods"], list) or (kind == "dynamics" and not dy["methods"]):
        raise ConfigError("dynamics.methods: must be a nonempty list")
    for i, name in enumerate(dy["methods"] if kind == "dynamics" else []):
        try:
            _method_kind(name, cfg["T"])
        except ValueError as exc:
            raise ConfigError(f"dynamics.methods[{i}]: {exc}") from None
    if dy["mode"] not in ("synthetic", "semi"):
        raise ConfigError(f"dynamics.mode: expected 'synthetic' or 'semi', got {dy['mode']!r}")
    _num(dy["visible"], "dynamics.visible", lo=0, lo_open=True, hi=1)
    _num(dy["train_share"], "dynamics.train_share", lo=0, lo_open=True, hi=1)
    _num(dy["tolerance"], "dynamics.tolerance", lo=0)
    _num(dy["tune_budget"], "dynamics.tune_budget", integer=True, lo=2)
    _num(dy["theta"], "dynamics.theta", lo=0, hi=1)

    _num(cfg["T"], "T", integer=True, lo=1)
    _num(cfg["repetitions"], "repetitions", integer=True, lo=1)
    _num(cfg["seed"], "seed", integer=True, lo=0)
    if cfg["level"] not in ("fast", "full"):
        raise ConfigError(f"level: expected 'fast' or 'full', got {cfg['level']!r}")
    if not isinstance(cfg["out"], str):
        raise ConfigError("out: expected a string")


def _method_kind(name: str, T: int) -> tuple[str, int | None]:
    """Split a method name like ``hybrid@5`` into kind and switch round."""
    if not isinstance(name, str):
        raise ValueError(f"expected a method name, got {name!r}")
    if name.startswith("hybrid@"):
        try:
            s = int(name.split("@", 1)[1])
        except ValueError:
            raise ValueError(f"bad switch round in {name!r}") from None
        if not 1 <= s <= T:
            raise ValueError(f"switch round {s} outside [1, T={T}]")
        return "hybrid", s
    if name in ("baseline", "nonstrategic", "strategic", "mmr", "random"):
        return name, None
    raise ValueError(f"unknown method {name!r}")


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a decoded config object and fill its defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object at top level")
    if "experiment" not in raw:
        raise ConfigError("experiment: missing required key")
    full = defaults_for(raw["experiment"])
    _check_keys(raw, {"experiment": None, **full}, "")
    cfg = _merge(full, raw)
    _validate(cfg)
    t = cfg["train"]
    try:
        train = TrainConfig(**{_TRAIN_KEYS[k]: v for k, v in t.items()})
    except ValueError as exc:
        raise ConfigError(f"train: {exc}") from None
    return ExperimentConfig(
        experiment=cfg["experiment"],
        world=cfg["world"],
        graph=cfg["graph"],
        train=train,
        sweep=cfg["sweep"],
        dynamics=cfg["dynamics"],
        T=cfg["T"],
        repetitions=cfg["repetitions"],
        seed=cfg["seed"],
        level=cfg["level"],
        out=cfg["out"],
        raw=cfg,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_config(raw)


def dump_config(cfg: ExperimentConfig) -> str:
    """Canonical JSON text: all defaults present, keys sorted."""
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
