"""Fixed-step time discretization and the exact control-rescaling operator.

Controls are piecewise constant on a uniform grid: one control point per
step, held on [t_k, t_{k+1}).  Two explicit schemes are provided (forward
Euler, explicit midpoint); both reuse the step's control at every stage.

Because the dynamics are 1-homogeneous in the control, rescaling the horizon
while keeping the number of steps fixed (dt scales, control scales
reciprocally) reproduces the original node states exactly, not just up to
discretization error: dt' * u'_k = dt * u_k makes each discrete update
identical.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .dynamics import DynamicsSpec, _as_states, _field_kernel

__all__ = [
    "SCHEMES",
    "ControlTrajectory",
    "DivergenceError",
    "StateTrajectory",
    "TimeGrid",
    "integrate",
    "rescale_control",
    "zero_extend",
]

SCHEMES = ("euler", "midpoint")


class DivergenceError(ArithmeticError):
    """State left the finite range; carries the offending step index."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, T] with n_t steps of length dt = T / n_t."""

    T: float
    n_t: int

    def __post_init__(self):
        if not np.isfinite(self.T) or self.T <= 0.0:
            raise ValueError(f"horizon must be positive, got T={self.T}")
        if self.n_t < 1:
            raise ValueError(f"need at least one step, got n_t={self.n_t}")

    @property
    def dt(self) -> float:
        return self.T / self.n_t

    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_t + 1)

    def step_starts(self) -> np.ndarray:
        return self.nodes()[:-1]


def _grids_compatible(a: TimeGrid, b: TimeGrid) -> bool:
    return a.n_t == b.n_t and abs(a.T - b.T) <= 1e-9 * max(1.0, abs(a.T))


@dataclass(eq=False)
class ControlTrajectory:
    """Piecewise-constant control: points[k] is held on [t_k, t_{k+1})."""

    grid: TimeGrid
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        P = np.asarray(self.points, dtype=float)
        if P.ndim != 2 or P.shape[0] != self.grid.n_t:
            raise ValueError(
                f"control points must be (n_t, d_u) = ({self.grid.n_t}, ...), got {P.shape}"
            )
        self.points = P

    @property
    def d_u(self) -> int:
        return self.points.shape[1]

    def l1_norms(self) -> np.ndarray:
        """Per-step l1 norm over all control entries (1-Frobenius on (w, b))."""
        return np.abs(self.points).sum(axis=1)

    def control_cost(self) -> float:
        """Discrete L1(0,T) norm: sum_k dt * ||u_k||_1."""
        return float(self.grid.dt * self.l1_norms().sum())

    def is_admissible(self, M: float, tol: float = 1e-9) -> bool:
        return bool(np.all(self.l1_norms() <= M + tol))

    def to_csv(self, path) -> None:
        write_control_csv(path, self)

    @classmethod
    def from_csv(cls, path, grid: TimeGrid | None = None) -> "ControlTrajectory":
        return read_control_csv(path, grid)


@dataclass(eq=False)
class StateTrajectory:
    """Stacked states at every node: states[k] is the (n, d) state at t_k."""

    grid: TimeGrid
    states: np.ndarray = field(repr=False)
    scheme: str = "euler"

    def __post_init__(self):
        S = np.asarray(self.states, dtype=float)
        if S.ndim != 3 or S.shape[0] != self.grid.n_t + 1:
            raise ValueError(
                f"states must be (n_t+1, n, d) = ({self.grid.n_t + 1}, ...), got {S.shape}"
            )
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        self.states = S

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def d(self) -> int:
        return self.states.shape[2]

    def to_csv(self, path) -> None:
        write_state_csv(path, self)


def integrate(spec: DynamicsSpec, x0, ctrl: ControlTrajectory, scheme: str = "euler") -> StateTrajectory:
    """March the stacked system through the grid with the chosen scheme.

    euler:    x^{k+1} = x^k + dt f(x^k, u_k)
    midpoint: x^{k+1} = x^k + dt f(x^k + (dt/2) f(x^k, u_k), u_k)

    Raises :class:`DivergenceError` naming the step if the state overflows.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if ctrl.d_u != spec.d_u:
        raise ValueError(f"control dimension {ctrl.d_u} does not match spec d_u={spec.d_u}")
    X0, _ = _as_states(spec, x0)
    n_t, dt = ctrl.grid.n_t, ctrl.grid.dt
    states = np.empty((n_t + 1, spec.n, spec.d))
    states[0] = X0
    X = X0
    for k in range(n_t):
        u = ctrl.points[k]
        f1 = _field_kernel(spec, X, u)
        if scheme == "euler":
            X = X + dt * f1
        else:
            X = X + dt * _field_kernel(spec, X + 0.5 * dt * f1, u)
        if not np.all(np.isfinite(X)):
            raise DivergenceError(f"state became non-finite at step {k}", step=k)
        states[k + 1] = X
    return StateTrajectory(grid=ctrl.grid, states=states, scheme=scheme)


def rescale_control(ctrl: ControlTrajectory, T: float) -> ControlTrajectory:
    """Move a control from [0, T0] to [0, T]: u'_k = (T0/T) u_k on a stretched grid.

    The step count is kept, so step k maps to step k and the product
    dt * u_k is preserved exactly; under Euler (and midpoint, since both
    stages reuse u_k) the node states are reproduced bit-for-bit up to
    rounding.  The discrete control cost sum_k dt ||u_k||_1 is invariant.
    """
    if not np.isfinite(T) or T <= 0.0:
        raise ValueError(f"new horizon must be positive, got T={T}")
    factor = ctrl.grid.T / T
    return ControlTrajectory(grid=TimeGrid(T, ctrl.grid.n_t), points=factor * ctrl.points)


def zero_extend(ctrl: ControlTrajectory, T: float) -> ControlTrajectory:
    """Extend a control on [0, T1] by zero up to T >= T1, keeping dt.

    T must land on the existing grid (n_t * T / T1 integral); otherwise the
    extension could not reuse the same piecewise-constant structure and the
    call is rejected with a usable n_t suggestion.  Since f(., 0) = 0 the
    extended trajectory is frozen after T1.
    """
    T1, n_t = ctrl.grid.T, ctrl.grid.n_t
    if T < T1 - 1e-12 * max(1.0, T1):
        raise ValueError(f"extension horizon T={T} is shorter than the current T1={T1}")
    n_new_f = n_t * T / T1
    n_new = int(round(n_new_f))
    if abs(n_new_f - n_new) > 1e-9 or n_new < n_t:
        q = Fraction(T / T1).limit_denominator(10**6).denominator
        suggestion = q * max(1, -(-n_t // q))  # smallest multiple of q >= n_t
        raise ValueError(
            f"T={T} does not align with the grid (n_t*T/T1 = {n_new_f:.6g} is not an "
            f"integer); choose n_t so that n_t*T/T1 is integral, e.g. n_t={suggestion}"
        )
    padded = np.vstack([ctrl.points, np.zeros((n_new - n_t, ctrl.d_u))])
    return ControlTrajectory(grid=TimeGrid(T, n_new), points=padded)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_control_csv(path, ctrl: ControlTrajectory) -> None:
    path = Path(path)
    header = ["t"] + [f"u_{j}" for j in range(ctrl.d_u)]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t, row in zip(ctrl.grid.step_starts(), ctrl.points):
            w.writerow([_fmt(t)] + [_fmt(v) for v in row])


def read_control_csv(path, grid: TimeGrid | None = None) -> ControlTrajectory:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    data = np.asarray([[float(v) for v in row] for row in rows[1:]], dtype=float)
    ts, points = data[:, 0], data[:, 1:]
    if grid is None:
        if len(ts) < 2:
            raise ValueError("cannot infer the grid from a single step; pass grid=")
        dt = ts[1] - ts[0]
        grid = TimeGrid(float(ts[-1] + dt), len(ts))
    return ControlTrajectory(grid=grid, points=points)


def write_state_csv(path, traj: StateTrajectory) -> None:
    path = Path(path)
    n_cols = traj.n * traj.d
    header = ["t"] + [f"x_{j}" for j in range(n_cols)]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t, X in zip(traj.grid.nodes(), traj.states):
            w.writerow([_fmt(t)] + [_fmt(v) for v in X.reshape(-1)])


def read_state_csv(path, grid: TimeGrid, n: int, d: int, scheme: str = "euler") -> StateTrajectory:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    data = np.asarray([[float(v) for v in row] for row in rows[1:]], dtype=float)
    states = data[:, 1:].reshape(len(data), n, d)
    return StateTrajectory(grid=grid, states=states, scheme=scheme)
