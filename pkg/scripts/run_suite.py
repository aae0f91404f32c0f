#!/usr/bin/env python3
"""Run criteria 1-9 into one directory, optionally twice to check byte-identical CSVs."""

import argparse
import sys
from pathlib import Path

from vec2vec.experiments import compare_outputs, run_all


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("results/suite"))
    ap.add_argument("--twice", action="store_true", help="re-run into OUT/rerun and diff the CSVs")
    args = ap.parse_args()
    results = run_all(args.out / "first", log=print)
    ok = all(r.passed for r in results)
    if args.twice:
        run_all(args.out / "rerun", log=print)
        same, diff = compare_outputs(args.out / "first", args.out / "rerun")
        print(f"[{'PASS' if not diff else 'FAIL'}] 10 determinism: {len(same)} identical CSVs, differing {diff}")
        ok = ok and not diff
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
