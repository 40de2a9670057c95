"""Run every config in configs/ through the CLI and draw its figure.

    python3 scripts/run_experiments.py [--only overlap dynamics] [--jobs 4] [--out results]
"""
import argparse
import sys
import time
from pathlib import Path

from perfrec.cli import main
from perfrec.config import load_config

ROOT = Path(__file__).resolve().parent.parent
COMMAND = {"overlap": "synth", "dispersion": "synth", "cost-time": "synth", "dynamics": "dynamics", "pareto": "pareto", "verify": "verify"}


def run(path: Path, out: Path | None, jobs: int) -> int:
    cfg = load_config(path)
    cmd = COMMAND[cfg.experiment]
    dest = out if out is not None else ROOT / cfg.out
    t0 = time.perf_counter()
    argv = [cmd, "--config", str(path), "--out", str(dest), "--jobs", str(jobs)]
    code = main(argv)
    print(f"{path.name}: exit {code} in {time.perf_counter() - t0:.0f}s", file=sys.stderr)
    if code == 0 and cmd != "verify":
        main(["plot", str(dest / f"{cfg.experiment}.csv")])
    return code


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--only", nargs="*", help="config stems to run, e.g. overlap dynamics")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()
    paths = sorted((ROOT / "configs").glob("*.json"))
    if args.only:
        paths = [p for p in paths if p.stem in args.only]
    codes = [run(p, args.out, args.jobs) for p in paths]
    sys.exit(max(codes, default=0))
