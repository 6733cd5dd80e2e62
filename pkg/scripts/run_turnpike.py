#!/usr/bin/env python3
"""Train the single-integrator turnpike demo and sweep the horizon.

The optimal control rides the constraint until the state parks at the
target, then switches off exactly; the parking deviation shrinks like 1/T.
"""
import argparse
import sys

from l1ode.cli import cmd_plot, cmd_sweep, cmd_train


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/turnpike1d")
    args = ap.parse_args()
    out = cmd_train("turnpike1d", out=args.out)
    cmd_plot(str(out))
    cmd_sweep("turnpike1d", "T=2,4,8", out=f"{args.out}_sweep_T")
    return 0


if __name__ == "__main__":
    sys.exit(main())
