#!/usr/bin/env python3
"""Zero-shot cluster-attribute inference through a trained translator vs. the identity map."""

import argparse
from pathlib import Path

from vec2vec.experiments import Suite, SuiteConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("results/attributes"))
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    args = ap.parse_args()
    suite = Suite(SuiteConfig(attr_seeds=tuple(args.seeds)), args.out, log=print)
    print(suite.attributes().line())


if __name__ == "__main__":
    main()
