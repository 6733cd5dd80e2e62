#!/usr/bin/env python3
"""Train the reference circles experiment and plot it.

Writes runs/fig1 (override with --out).  Use --n3000 for the full-size
dataset; the bang-bang structure is the same, it just takes longer.
"""
import argparse
import sys

from l1ode.cli import cmd_plot, cmd_train


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/fig1")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--n3000", action="store_true", help="train on 3000 points instead of 200")
    args = ap.parse_args()
    out = cmd_train("fig1", out=args.out, seed=args.seed,
                    dataset_n=3000 if args.n3000 else None)
    cmd_plot(str(out))
    return 0


if __name__ == "__main__":
    sys.exit(main())
