"""Print per-setting means from a result CSV.

    python3 scripts/summarize.py results/dynamics.csv --by method round --metric div_post
"""
import argparse

from perfrec.experiments import read_table, summarize

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("csv")
    ap.add_argument("--by", nargs="+", required=True)
    ap.add_argument("--metric", required=True)
    args = ap.parse_args()
    table = read_table(args.csv)
    for key, val in summarize(table, args.by, args.metric).items():
        print(" ".join(str(k) for k in key), f"{val:.4f}")
