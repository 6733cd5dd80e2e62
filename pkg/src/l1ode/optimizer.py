"""Projected proximal Adam for the composite objective.

The discretized problem is

    min_u  sum_k dt * E(x^k)  +  penalty_weight * sum_k dt * ||u_k||_1
    s.t.   ||u_k||_1 <= M  for every step k,

a smooth term plus a separable nonsmooth one under a per-step l1-ball
constraint.  Each iteration takes an Adam step on the smooth gradient,
applies the l1 proximal map in the same diagonal metric (the soft threshold
for coordinate c is tau / (sqrt(vhat_c) + eps), matching the step's
preconditioning -- a constant threshold after Adam's normalization would
penalize proportionally to the gradient scale and never hold small
coordinates at zero), and finally projects every step onto the l1 ball so
the iterate is always admissible.

Everything is deterministic given the seed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import DynamicsSpec, _as_states
from .integrator import SCHEMES, ControlTrajectory, DivergenceError, StateTrajectory, TimeGrid, integrate
from .objective import QUADRATURES, ObjectiveSpec, functional_J
from .adjoint import grad_running

__all__ = [
    "AdamState",
    "TrainConfig",
    "TrainResult",
    "adam_step",
    "checkpoint_control",
    "checkpoint_dict",
    "project_l1",
    "prox_l1",
    "train",
]

INITS = ("zeros", "uniform_small")


@dataclass
class TrainConfig:
    """Hyperparameters of one training run; fully determines it with the seed."""

    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    iters: int = 1000
    seed: int = 0
    M: float = 1.0
    penalty_weight: float = 1.0
    init: str = "uniform_small"
    init_scale: float | None = None  # default 0.1 / sqrt(d_u)
    scheme: str = "euler"
    quadrature: str = "left"

    def __post_init__(self):
        if not self.lr > 0.0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError(f"Adam betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.iters < 0:
            raise ValueError(f"iteration count must be >= 0, got {self.iters}")
        if not self.M > 0.0:
            raise ValueError(f"constraint level M must be positive, got {self.M}")
        if self.penalty_weight < 0.0:
            raise ValueError(f"penalty weight must be >= 0, got {self.penalty_weight}")
        if self.init not in INITS:
            raise ValueError(f"unknown init {self.init!r}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.quadrature not in QUADRATURES:
            raise ValueError(f"unknown quadrature {self.quadrature!r}")


@dataclass
class AdamState:
    """First/second moment estimates and the step counter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def fresh(cls, shape) -> "AdamState":
        return cls(m=np.zeros(shape), v=np.zeros(shape), t=0)


@dataclass
class TrainResult:
    """Final control, per-iteration (J, running, penalty) rows and final states.

    ``history`` has iters + 1 rows: row j is the objective of iterate j, the
    last row belongs to the returned control.
    """

    ctrl: ControlTrajectory
    history: np.ndarray
    traj: StateTrajectory


def adam_step(u, g, state: AdamState, config: TrainConfig) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update on the smooth gradient only."""
    t = state.t + 1
    m = config.beta1 * state.m + (1.0 - config.beta1) * g
    v = config.beta2 * state.v + (1.0 - config.beta2) * (g * g)
    mhat = m / (1.0 - config.beta1**t)
    vhat = v / (1.0 - config.beta2**t)
    u_new = u - config.lr * mhat / (np.sqrt(vhat) + config.eps)
    return u_new, AdamState(m=m, v=v, t=t)


def prox_l1(v, tau) -> np.ndarray:
    """Soft threshold sign(v) * (|v| - tau)_+, the proximal map of tau*||.||_1.

    ``tau`` may be a scalar or an array broadcastable against v (per-coordinate
    thresholds for preconditioned steps).
    """
    v = np.asarray(v, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0.0):
        raise ValueError("soft-threshold level must be >= 0")
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


def project_l1(v, M: float) -> np.ndarray:
    """Euclidean projection onto the l1 ball {||.||_1 <= M}.

    Inside the ball the vector is returned unchanged; otherwise the unique
    theta > 0 with sum_i (|v_i| - theta)_+ = M is found by sorting |v| and
    scanning, and the result is the soft threshold at theta (signs kept).
    """
    if not M > 0.0:
        raise ValueError(f"l1-ball radius must be positive, got {M}")
    v = np.asarray(v, dtype=float)
    a = np.abs(v)
    if a.sum() <= M:
        return v.copy()
    mu = np.sort(a)[::-1]
    css = np.cumsum(mu)
    j = np.arange(1, a.size + 1)
    rho = int(np.nonzero(mu - (css - M) / j > 0.0)[0][-1])
    theta = (css[rho] - M) / (rho + 1.0)
    return np.sign(v) * np.maximum(a - theta, 0.0)


def _project_rows(U: np.ndarray, M: float) -> np.ndarray:
    out = U.copy()
    norms = np.abs(out).sum(axis=1)
    for k in np.nonzero(norms > M)[0]:
        out[k] = project_l1(out[k], M)
    return out


def _init_points(config: TrainConfig, n_t: int, d_u: int) -> np.ndarray:
    if config.init == "zeros":
        return np.zeros((n_t, d_u))
    scale = config.init_scale if config.init_scale is not None else 0.1 / np.sqrt(d_u)
    rng = np.random.default_rng(config.seed)
    return rng.uniform(-scale, scale, size=(n_t, d_u))


def checkpoint_dict(ctrl: ControlTrajectory) -> dict:
    """JSON-ready snapshot of a control; inverse of :func:`checkpoint_control`."""
    return {
        "grid": {"T": ctrl.grid.T, "n_t": ctrl.grid.n_t},
        "points": ctrl.points.tolist(),
    }


def checkpoint_control(data: dict) -> ControlTrajectory:
    grid = TimeGrid(float(data["grid"]["T"]), int(data["grid"]["n_t"]))
    return ControlTrajectory(grid=grid, points=np.asarray(data["points"], dtype=float))


def train(
    spec: DynamicsSpec,
    x0,
    grid: TimeGrid,
    objective: ObjectiveSpec,
    config: TrainConfig,
    checkpoint_every: int = 0,
    checkpoint_dir=None,
) -> TrainResult:
    """Minimize the discretized functional over piecewise-constant controls.

    Fixed iteration budget, no early stopping; aborts with the iteration
    index on a diverging forward pass or a non-finite gradient.  The returned
    control is admissible: ||u_k||_1 <= M at every step.  With
    ``checkpoint_every`` > 0, the control is snapshotted as JSON into
    ``checkpoint_dir`` every that many iterations.
    """
    X0, _ = _as_states(spec, x0)
    U = _project_rows(_init_points(config, grid.n_t, spec.d_u), config.M)
    state = AdamState.fresh(U.shape)
    tau0 = config.lr * config.penalty_weight * grid.dt
    history = np.empty((config.iters + 1, 3))

    for j in range(config.iters + 1):
        ctrl = ControlTrajectory(grid=grid, points=U)
        try:
            traj = integrate(spec, X0, ctrl, config.scheme)
        except DivergenceError as err:
            raise DivergenceError(
                f"forward pass diverged at iteration {j} (step {err.step})", step=err.step
            ) from err
        history[j] = functional_J(traj, ctrl, objective)
        if checkpoint_every > 0 and checkpoint_dir is not None and j % checkpoint_every == 0:
            path = Path(checkpoint_dir) / f"ctrl_iter{j}.json"
            path.write_text(json.dumps(checkpoint_dict(ctrl), sort_keys=True) + "\n")
        if j == config.iters:
            return TrainResult(ctrl=ctrl, history=history, traj=traj)
        g = grad_running(spec, X0, ctrl, objective, config.scheme, traj=traj)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient at iteration {j}")
        U, state = adam_step(U, g, state, config)
        # threshold in the same metric as the step (see module docstring)
        vhat = state.v / (1.0 - config.beta2**state.t)
        U = prox_l1(U, tau0 / (np.sqrt(vhat) + config.eps))
        U = _project_rows(U, config.M)
    raise AssertionError("unreachable")
