#!/usr/bin/env python3
"""Reproduce the horizon and constraint sweeps on the 1-d decay problem.

T sweep (fixed M): the products E(x(T*)) * T should sit near a constant,
the C/T decay.  M sweep (fixed T): the stopping time T* should shrink
roughly like 1/M.
"""
import argparse
import sys

from l1ode.cli import cmd_plot, cmd_sweep


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/lsq1d")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    t_dir = cmd_sweep("lsq1d", "T=1,2,4,8", out=f"{args.out}_sweep_T", jobs=args.jobs)
    cmd_plot(str(t_dir))
    cmd_sweep("lsq1d", "M=2,4,8,16", out=f"{args.out}_sweep_M", jobs=args.jobs)
    return 0


if __name__ == "__main__":
    sys.exit(main())
