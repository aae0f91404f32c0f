#!/usr/bin/env python3
"""Train the full-loss translator on the synthetic world for several seeds and compare with the identity map."""

import argparse
from pathlib import Path

from vec2vec.experiments import Suite, SuiteConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("results/reproduction"))
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    args = ap.parse_args()
    suite = Suite(SuiteConfig(seeds=tuple(args.seeds)), args.out, log=print)
    print(suite.reproduction().line())


if __name__ == "__main__":
    main()
