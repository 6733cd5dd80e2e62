"""Losses, the empirical error E, the running-cost functional and margin bounds.

The trained functional is

    J(u) = integral_0^T E(x(t)) dt + penalty_weight * integral_0^T ||u(t)||_1 dt

with E the mean per-sample loss of the affine readout P x_i + q.  The time
integrals are evaluated by a left-Riemann rule by default (pairs naturally
with piecewise-constant controls and forward Euler); a trapezoid rule is
available for midpoint runs.

Also here: the classification margin and the asymptotic-interpolation
envelope h(t) = log(1 + (m-1) exp(-gamma e^t)) with its closed-form inverse,
used to sanity-check stopping-time estimates under cross-entropy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .integrator import ControlTrajectory, StateTrajectory, _grids_compatible

__all__ = [
    "LOSSES",
    "QUADRATURES",
    "ObjectiveSpec",
    "OutputMap",
    "error_E",
    "error_sequence",
    "functional_J",
    "h_bound",
    "h_inverse",
    "loss_eval",
    "margin",
    "output_from_dict",
    "output_to_dict",
    "running_cost",
]

LOSSES = ("least_squares", "cross_entropy")
QUADRATURES = ("left", "trapezoid")


@dataclass(frozen=True, eq=False)
class OutputMap:
    """Fixed affine readout x -> P @ x + q matching states to label space."""

    P: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        if q.shape != (P.shape[0],):
            raise ValueError(f"offset shape {q.shape} does not match P {P.shape}")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "q", q)

    @property
    def m(self) -> int:
        return self.P.shape[0]

    @property
    def d(self) -> int:
        return self.P.shape[1]

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.P.T + self.q


@dataclass(eq=False)
class ObjectiveSpec:
    """Loss kind, readout, per-sample labels, constraint level and quadrature.

    For cross_entropy the labels are class indices in [0, m); for
    least_squares they are target vectors of shape (n, m).
    """

    loss: str
    output: OutputMap
    labels: np.ndarray = field(repr=False)
    M: float = 1.0
    quadrature: str = "left"
    penalty_weight: float = 1.0

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.quadrature not in QUADRATURES:
            raise ValueError(f"unknown quadrature {self.quadrature!r}")
        if not self.M > 0.0:
            raise ValueError(f"constraint level M must be positive, got {self.M}")
        if self.penalty_weight < 0.0:
            raise ValueError(f"penalty weight must be >= 0, got {self.penalty_weight}")
        if self.loss == "cross_entropy":
            y = np.atleast_1d(np.asarray(self.labels))
            if y.ndim != 1:
                raise ValueError("cross_entropy labels must be a 1-d array of class indices")
            if not np.issubdtype(y.dtype, np.integer):
                if not np.all(y == np.round(y)):
                    raise ValueError("cross_entropy labels must be integer class indices")
                y = y.astype(int)
            if y.size and (y.min() < 0 or y.max() >= self.output.m):
                raise ValueError(
                    f"class indices must lie in [0, {self.output.m}), got range "
                    f"[{y.min()}, {y.max()}]"
                )
            self.labels = y.astype(int)
        else:
            Y = np.atleast_2d(np.asarray(self.labels, dtype=float))
            if Y.shape[1] != self.output.m:
                raise ValueError(
                    f"least_squares targets must have {self.output.m} columns, got {Y.shape}"
                )
            self.labels = Y

    @property
    def n(self) -> int:
        return self.labels.shape[0]


def loss_eval(kind: str, z, y) -> float:
    """Single-sample loss of the readout value z against label y.

    cross_entropy is evaluated through a max-shifted log-sum-exp, so large
    logits cannot overflow; least_squares is the squared Euclidean distance.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if kind == "least_squares":
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if y.shape != z.shape:
            raise ValueError(f"target shape {y.shape} does not match output {z.shape}")
        r = z - y
        return float(r @ r)
    if kind == "cross_entropy":
        yi = int(y)
        if not 0 <= yi < z.size:
            raise ValueError(f"class index {yi} outside [0, {z.size})")
        if z[yi] >= z.max():
            # true class on top: log1p keeps the loss strictly positive down
            # to the underflow of exp(z_j - z_y) itself
            others = np.delete(z, yi) - z[yi]
            return float(np.log1p(np.exp(others).sum()))
        zs = z - z.max()
        return float(np.log(np.exp(zs).sum()) - zs[yi])
    raise ValueError(f"unknown loss {kind!r}")


def _readout_losses(x, objective: ObjectiveSpec) -> np.ndarray:
    """Per-sample losses at one node, vectorized over the stacked state."""
    X = np.asarray(x, dtype=float)
    if X.ndim == 1:
        X = X.reshape(objective.n, -1)
    Z = objective.output(X)
    if objective.loss == "least_squares":
        R = Z - objective.labels
        return np.einsum("ij,ij->i", R, R)
    zs = Z - Z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(zs).sum(axis=1))
    return lse - zs[np.arange(Z.shape[0]), objective.labels]


def error_E(x, objective: ObjectiveSpec) -> float:
    """Empirical error at one node: mean per-sample loss of the readout."""
    return float(_readout_losses(x, objective).mean())


def error_sequence(traj: StateTrajectory, objective: ObjectiveSpec) -> np.ndarray:
    """E evaluated at every grid node (vectorized over nodes)."""
    K, n, d = traj.states.shape
    Z = (traj.states.reshape(K * n, d) @ objective.output.P.T + objective.output.q).reshape(
        K, n, objective.output.m
    )
    if objective.loss == "least_squares":
        R = Z - objective.labels
        return np.einsum("kij,kij->k", R, R) / n
    zs = Z - Z.max(axis=2, keepdims=True)
    lse = np.log(np.exp(zs).sum(axis=2))
    true = zs[:, np.arange(n), objective.labels]
    return (lse - true).mean(axis=1)


def running_cost(traj: StateTrajectory, objective: ObjectiveSpec) -> float:
    """Quadrature of t -> E(x(t)) over [0, T]."""
    E = error_sequence(traj, objective)
    dt = traj.grid.dt
    if objective.quadrature == "left":
        return float(dt * E[:-1].sum())
    return float(dt * (0.5 * E[0] + E[1:-1].sum() + 0.5 * E[-1]))


def functional_J(
    traj: StateTrajectory, ctrl: ControlTrajectory, objective: ObjectiveSpec
) -> tuple[float, float, float]:
    """Full objective split as (J, running, penalty); J = running + penalty."""
    if not _grids_compatible(traj.grid, ctrl.grid):
        raise ValueError(
            f"state grid (T={traj.grid.T}, n_t={traj.grid.n_t}) does not match "
            f"control grid (T={ctrl.grid.T}, n_t={ctrl.grid.n_t})"
        )
    running = running_cost(traj, objective)
    penalty = objective.penalty_weight * ctrl.control_cost()
    return running + penalty, running, penalty


def margin(x, output: OutputMap, labels) -> float:
    """Worst-case classification margin at one node.

    min over samples of (true-class score) - (best wrong-class score);
    positive iff every sample is classified correctly with room to spare.
    """
    if output.m < 2:
        raise ValueError("margins need at least two classes")
    X = np.asarray(x, dtype=float)
    y = np.atleast_1d(np.asarray(labels, dtype=int))
    if X.ndim == 1:
        X = X.reshape(y.size, -1)
    Z = output(X)
    idx = np.arange(Z.shape[0])
    true_scores = Z[idx, y]
    Zm = Z.copy()
    Zm[idx, y] = -np.inf
    return float((true_scores - Zm.max(axis=1)).min())


def h_bound(gamma: float, m: int, t) -> float | np.ndarray:
    """Envelope h(t) = log(1 + (m-1) exp(-gamma e^t)); decreasing, h -> 0.

    Requires an established margin gamma > 0.  As gamma*e^t -> 0+ the value
    tends to log m, the trivial cross-entropy level.
    """
    if not gamma > 0.0:
        raise ValueError(f"the margin gamma must be positive, got {gamma}")
    if m < 2:
        raise ValueError(f"need at least two classes, got m={m}")
    t = np.asarray(t, dtype=float)
    val = np.log1p((m - 1) * np.exp(-gamma * np.exp(t)))
    return float(val) if val.ndim == 0 else val


def h_inverse(gamma: float, m: int, v: float) -> float:
    """Closed-form inverse of :func:`h_bound` on its range (0, log m).

    t = log( -log( (e^v - 1) / (m - 1) ) / gamma ), so h(h_inverse(v)) = v.
    """
    if not gamma > 0.0:
        raise ValueError(f"the margin gamma must be positive, got {gamma}")
    if m < 2:
        raise ValueError(f"need at least two classes, got m={m}")
    v = float(v)
    if not 0.0 < v < math.log(m):
        raise ValueError(f"v={v} outside the range (0, log m) = (0, {math.log(m):.6g})")
    r = math.expm1(v) / (m - 1)
    if r >= 1.0:
        raise ValueError(f"v={v} too close to log m for the inverse to be defined")
    return math.log(-math.log(r) / gamma)


def output_to_dict(output: OutputMap) -> dict:
    return {"P": output.P.tolist(), "q": output.q.tolist()}


def output_from_dict(data: dict) -> OutputMap:
    return OutputMap(np.asarray(data["P"], dtype=float), np.asarray(data["q"], dtype=float))
