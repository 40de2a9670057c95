"""Command-line entry point: perfrec synth|dynamics|pareto|verify|plot."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, dump_config, load_config, parse_config
from .experiments import SchemaError, Table, run_dynamics, run_pareto, run_synth, write_table

log = logging.getLogger("perfrec")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
_KINDS = {
    "synth": ("overlap", "dispersion", "cost-time"),
    "dynamics": ("dynamics",),
    "pareto": ("pareto",),
    "verify": ("verify",),
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="perfrec", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in _KINDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, required=name != "verify")
        s.add_argument("--out", type=Path)
        s.add_argument("--seed", type=int)
        s.add_argument("--jobs", type=int, default=1)
        if name == "verify":
            s.add_argument("--level", choices=("fast", "full"))
    s = sub.add_parser("plot")
    s.add_argument("csv", type=Path)
    s.add_argument("--figure", default="auto", choices=("auto", "sweep", "rounds", "pareto"))
    s.add_argument("--out", type=Path)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _jobs(flag: int) -> int:
    env = os.environ.get("PERFREC_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"PERFREC_JOBS: expected an integer, got {env!r}") from None
    return max(1, flag)


def _load(args):
    cfg = load_config(args.config) if args.config else parse_config({"experiment": "verify"})
    if cfg.experiment not in _KINDS[args.command]:
        raise ConfigError(f"experiment: {args.command} runs {_KINDS[args.command]}, config has {cfg.experiment!r}")
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2**64:
            raise ConfigError("seed: must be an unsigned 64-bit integer")
        cfg = cfg.with_seed(args.seed)
    return cfg


def _emit(table: Table, cfg, out_dir: Path, name: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{name}.config.json").write_text(dump_config(cfg), encoding="utf-8")
    path = write_table(out_dir / f"{name}.csv", table)
    log.info("wrote %s (%d rows)", path, len(table))
    return path


def _verify(cfg, args, out_dir: Path) -> int:
    from .verify import run_suite

    level = args.level or cfg.level
    checks = run_suite(level, seed=cfg.seed)
    for c in checks:
        print(c.line())
    rows = [(c.name, c.passed, c.value, c.threshold) for c in checks]
    _emit(Table("verify", rows), cfg, out_dir, "verify")
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_FAIL if failed else EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "plot":
            from .plotting import plot_csv

            out = plot_csv(args.csv, args.out, args.figure)
            print(out)
            return EXIT_OK
        cfg = _load(args)
        jobs = _jobs(args.jobs)
        out_dir = args.out if args.out is not None else Path(cfg.out)
        if args.command == "verify":
            return _verify(cfg, args, out_dir)
        runner = {"synth": run_synth, "dynamics": run_dynamics, "pareto": run_pareto}[args.command]
        print(_emit(runner(cfg, jobs), cfg, out_dir, cfg.experiment))
        return EXIT_OK
    except (ConfigError, SchemaError, FileNotFoundError) as exc:
        print(f"perfrec: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
