"""Exact gradients of the discretized running cost via the discrete adjoint.

The reverse sweep backpropagates through the chosen time-stepping scheme, so
the gradient is exact for the *discretized* functional (not an approximation
of a continuous adjoint ODE).  Only the smooth running cost is
differentiated; the l1 penalty is left to the optimizer's proximal /
subgradient logic.

A central finite-difference implementation of the same gradient is kept as
an independent test oracle.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .dynamics import DynamicsSpec, _as_states, _field_kernel, _vjp_kernel, eval_field
from .integrator import ControlTrajectory, StateTrajectory, integrate
from .objective import ObjectiveSpec, running_cost

__all__ = ["grad_fd", "grad_running", "l1_subgradient", "preactivation_margin"]


def _error_grad(x, objective: ObjectiveSpec) -> np.ndarray:
    """dE/dx at one node, shaped (n, d)."""
    X = np.asarray(x, dtype=float)
    n = objective.n
    if X.ndim == 1:
        X = X.reshape(n, -1)
    Z = objective.output(X)
    if objective.loss == "least_squares":
        G = 2.0 * (Z - objective.labels) / n
    else:
        zs = Z - Z.max(axis=1, keepdims=True)
        S = np.exp(zs)
        S /= S.sum(axis=1, keepdims=True)
        S[np.arange(n), objective.labels] -= 1.0
        G = S / n
    return G @ objective.output.P


def _error_grad_nodes(states: np.ndarray, objective: ObjectiveSpec) -> np.ndarray:
    """dE/dx at every node at once, shaped (n_t+1, n, d)."""
    K, n, d = states.shape
    Z = (states.reshape(K * n, d) @ objective.output.P.T + objective.output.q).reshape(
        K, n, objective.output.m
    )
    if objective.loss == "least_squares":
        G = 2.0 * (Z - objective.labels) / n
    else:
        zs = Z - Z.max(axis=2, keepdims=True)
        S = np.exp(zs)
        S /= S.sum(axis=2, keepdims=True)
        S[:, np.arange(n), objective.labels] -= 1.0
        G = S / n
    return G @ objective.output.P


def _quad_weights(n_t: int, quadrature: str) -> np.ndarray:
    """Node weights so that running cost = dt * sum_k w_k E(x^k)."""
    if quadrature == "left":
        w = np.ones(n_t + 1)
        w[-1] = 0.0
    else:
        w = np.ones(n_t + 1)
        w[0] = w[-1] = 0.5
    return w


def grad_running(
    spec: DynamicsSpec,
    x0,
    ctrl: ControlTrajectory,
    objective: ObjectiveSpec,
    scheme: str = "euler",
    traj: StateTrajectory | None = None,
    norms_csv=None,
) -> np.ndarray:
    """Gradient of the discrete running cost w.r.t. every control point.

    Passes the adjoint state backwards through the scheme's update map,
    accumulating df/du contributions per step; the midpoint scheme is
    chained through its half-step with the same u_k at both stages.
    Returns an (n_t, d_u) array mirroring ``ctrl.points``.  ``norms_csv``
    is a debug hook: when set, the per-step gradient l2 norms are dumped
    to that path.
    """
    if traj is None:
        traj = integrate(spec, x0, ctrl, scheme)
    n_t, dt = ctrl.grid.n_t, ctrl.grid.dt
    w = _quad_weights(n_t, objective.quadrature)
    states = traj.states
    node_grads = _error_grad_nodes(states, objective)
    g = np.empty_like(ctrl.points)
    lam = dt * w[n_t] * node_grads[n_t]
    for k in range(n_t - 1, -1, -1):
        X = states[k]
        u = ctrl.points[k]
        if scheme == "euler":
            xbar, ubar = _vjp_kernel(spec, X, u, lam)
            g[k] = dt * ubar
            lam = lam + dt * xbar + dt * w[k] * node_grads[k]
        else:
            f1 = _field_kernel(spec, X, u)
            Xh = X + 0.5 * dt * f1
            xh_bar, u_bar1 = _vjp_kernel(spec, Xh, u, dt * lam)
            x_bar2, u_bar2 = _vjp_kernel(spec, X, u, xh_bar)
            g[k] = u_bar1 + 0.5 * dt * u_bar2
            lam = lam + xh_bar + 0.5 * dt * x_bar2 + dt * w[k] * node_grads[k]
        if not np.all(np.isfinite(lam)):
            raise FloatingPointError(f"adjoint state became non-finite at step {k}")
    if norms_csv is not None:
        lines = ["step,grad_l2"] + [
            f"{k},{repr(float(np.linalg.norm(g[k])))}" for k in range(n_t)
        ]
        Path(norms_csv).write_text("\n".join(lines) + "\n")
    return g


def grad_fd(
    spec: DynamicsSpec,
    x0,
    ctrl: ControlTrajectory,
    objective: ObjectiveSpec,
    scheme: str = "euler",
    h: float = 1e-5,
) -> np.ndarray:
    """Central finite differences of the running cost, coordinate by coordinate.

    Test oracle: O(n_t * d_u) integrations, second-order accurate in h.
    The default h = 1e-5 suits unit-scaled problems.
    """
    if not h > 0.0:
        raise ValueError(f"finite-difference step must be positive, got {h}")

    def cost(points: np.ndarray) -> float:
        c = ControlTrajectory(grid=ctrl.grid, points=points)
        return running_cost(integrate(spec, x0, c, scheme), objective)

    g = np.empty_like(ctrl.points)
    for k in range(ctrl.points.shape[0]):
        for j in range(ctrl.points.shape[1]):
            up = ctrl.points.copy()
            up[k, j] += h
            dn = ctrl.points.copy()
            dn[k, j] -= h
            g[k, j] = (cost(up) - cost(dn)) / (2.0 * h)
    return g


def l1_subgradient(u) -> np.ndarray:
    """Componentwise sign with 0 at 0: the canonical selection for ||.||_1."""
    return np.sign(np.asarray(u, dtype=float))


def preactivation_margin(
    spec: DynamicsSpec, x0, ctrl: ControlTrajectory, scheme: str = "euler"
) -> float:
    """Smallest |argument| fed to sigma anywhere along the forward pass.

    Finite-difference checks near a relu/leaky kink are meaningless; callers
    filter instances whose margin is below their FD step.  Driftless dynamics
    have no activation, so the margin is +inf there.
    """
    if spec.form == "driftless":
        return float("inf")
    X, _ = _as_states(spec, x0)
    dt = ctrl.grid.dt
    margin = float("inf")

    def visit(states: np.ndarray, u: np.ndarray) -> float:
        if spec.form == "inside":
            args = states
        else:
            d = spec.d
            w = u[: d * d].reshape(d, d)
            args = states @ w.T + u[d * d :]
        return float(np.min(np.abs(args)))

    for k in range(ctrl.grid.n_t):
        u = ctrl.points[k]
        margin = min(margin, visit(X, u))
        f1 = eval_field(spec, X, u)
        if scheme == "euler":
            X = X + dt * f1
        else:
            Xh = X + 0.5 * dt * f1
            margin = min(margin, visit(Xh, u))
            X = X + dt * eval_field(spec, Xh, u)
    return margin
