"""Run-directory artifacts: CSV time series and deterministic JSON reports.

A run directory is self-describing: config.json (fully resolved), history.csv
(iter, J, running, penalty), controls.csv, trajectory.csv, metrics.csv
(t, E, u_l1) and report.json.  Floats are serialized via repr, so identical
runs produce byte-identical files.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .integrator import ControlTrajectory, StateTrajectory
from .objective import ObjectiveSpec, error_sequence

__all__ = [
    "dump_json",
    "load_history_csv",
    "load_metrics_csv",
    "write_history_csv",
    "write_metrics_csv",
]


def _fmt(x) -> str:
    return repr(float(x))


def dump_json(path, obj: dict) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def write_history_csv(path, history: np.ndarray) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "J", "running", "penalty"])
        for i, (J, run, pen) in enumerate(history):
            w.writerow([i, _fmt(J), _fmt(run), _fmt(pen)])


def load_history_csv(path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return np.asarray([[float(v) for v in row[1:]] for row in rows[1:]], dtype=float)


def write_metrics_csv(path, traj: StateTrajectory, ctrl: ControlTrajectory, objective: ObjectiveSpec) -> None:
    """Node-indexed metrics: E at each node, ||u_k||_1 for the step starting
    there (blank on the final node, which starts no step)."""
    E = error_sequence(traj, objective)
    norms = ctrl.l1_norms()
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "E", "u_l1"])
        for k, (t, e) in enumerate(zip(traj.grid.nodes(), E)):
            tail = [_fmt(norms[k])] if k < len(norms) else [""]
            w.writerow([_fmt(t), _fmt(e)] + tail)


def load_metrics_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (node times, E values, per-step l1 norms)."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:]
    ts = np.asarray([float(r[0]) for r in body])
    Es = np.asarray([float(r[1]) for r in body])
    norms = np.asarray([float(r[2]) for r in body if r[2] != ""])
    return ts, Es, norms
