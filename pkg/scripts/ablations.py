#!/usr/bin/env python3
"""Full loss vs. no cycle-consistency vs. no VSP, plus the 500-vector data-scaling run."""

import argparse
from pathlib import Path

from vec2vec.experiments import Suite, SuiteConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("results/ablations"))
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--skip-scaling", action="store_true")
    args = ap.parse_args()
    suite = Suite(SuiteConfig(seeds=tuple(args.seeds)), args.out, log=print)
    print(suite.ablation().line())
    if not args.skip_scaling:
        print(suite.data_scaling().line())


if __name__ == "__main__":
    main()
