"""Post-hoc verification of the sparsity and turnpike predictions.

Everything here inspects finished runs: detect the stopping time T* (first
node where the error attains its minimum over the horizon), classify each
step as saturated / zero / intermediate, fit the predicted bound constants
from sweeps, and run the single-interval improvement operator -- an
executable certificate that a control under-saturating the constraint
before T* cannot be optimal.

Constants in the bounds T* <= c (1/M + 1/M^2) and E(x(T*)) <= c/T (1/M + 1)
are *fitted* from runs, never assumed: the theory proves existence of the
constants, not values.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .dynamics import DynamicsSpec, _as_states
from .integrator import ControlTrajectory, StateTrajectory, TimeGrid, integrate
from .objective import ObjectiveSpec, error_sequence, functional_J

__all__ = [
    "SparsityReport",
    "TurnpikeReport",
    "check_theorem_bounds",
    "detect_Tstar",
    "improve_control",
    "saturation_profile",
    "sparsity_report",
    "turnpike_check",
    "zero_tail_delta",
]

SAT, ZERO, MID = "saturated", "zero", "intermediate"


def detect_Tstar(traj: StateTrajectory, objective: ObjectiveSpec) -> tuple[float, int]:
    """First node attaining min_t E(x(t)); ties broken by the smallest index."""
    E = error_sequence(traj, objective)
    idx = int(np.argmin(E))
    return float(traj.grid.nodes()[idx]), idx


def saturation_profile(
    ctrl: ControlTrajectory, M: float, eps_sat: float = 0.05, eps_zero: float = 1e-3
) -> list[str]:
    """Classify each step: saturated if ||u_k||_1 >= (1-eps_sat) M, zero if
    <= eps_zero * M, else intermediate.  Optimization is inexact, so the
    thresholds are relative rather than equality tests."""
    if not (eps_sat > 0.0 and eps_zero > 0.0):
        raise ValueError("classification thresholds must be positive")
    out = []
    for norm in ctrl.l1_norms():
        if norm >= (1.0 - eps_sat) * M:
            out.append(SAT)
        elif norm <= eps_zero * M:
            out.append(ZERO)
        else:
            out.append(MID)
    return out


def zero_tail_delta(
    spec: DynamicsSpec,
    x0,
    ctrl: ControlTrajectory,
    objective: ObjectiveSpec,
    idx: int,
    scheme: str = "euler",
) -> float:
    """J(control with steps >= idx zeroed) - J(control).

    For a control that is genuinely sparse past T* this is <= 0 up to
    quadrature slack; a positive value beyond the slack refutes sparsity.
    """
    base = functional_J(integrate(spec, x0, ctrl, scheme), ctrl, objective)[0]
    zeroed = ctrl.points.copy()
    zeroed[idx:] = 0.0
    tail = ControlTrajectory(grid=ctrl.grid, points=zeroed)
    cut = functional_J(integrate(spec, x0, tail, scheme), tail, objective)[0]
    return float(cut - base)


@dataclass
class SparsityReport:
    """Per-run sparsity diagnostics plus the run's implied bound constants.

    ``bound_Tstar``/``bound_E`` are the smallest constants making this run
    satisfy T* <= c (1/M + 1/M^2) and E(x(T*)) <= c/T (1/M + 1).  The
    boundary flag marks T* detected at t = 0, which the theory excludes
    (T* is in (0, T]), so such runs are reported but kept out of bound fits.
    Empty index ranges make the corresponding fraction vacuously 1.
    """

    Tstar: float
    idx: int
    boundary: bool
    E_at_Tstar: float
    sat_mask: list[str] = field(repr=False)
    frac_saturated_before: float = 0.0
    frac_zero_after: float = 0.0
    frac_nonintermediate: float = 0.0
    intermediate_steps: list[int] = field(default_factory=list)
    bound_Tstar: float = 0.0
    bound_E: float = 0.0
    T: float = 0.0
    M: float = 0.0
    zero_ext_delta: float = 0.0
    tol_quad: float = 0.0
    zero_ext_ok: bool = True

    def to_dict(self) -> dict:
        return {
            "Tstar": self.Tstar,
            "idx": self.idx,
            "boundary": self.boundary,
            "E_at_Tstar": self.E_at_Tstar,
            "sat_mask": list(self.sat_mask),
            "frac_saturated_before": self.frac_saturated_before,
            "frac_zero_after": self.frac_zero_after,
            "frac_nonintermediate": self.frac_nonintermediate,
            "intermediate_steps": list(self.intermediate_steps),
            "bounds": {
                "bound_Tstar": self.bound_Tstar,
                "bound_E": self.bound_E,
                "T": self.T,
                "M": self.M,
            },
            "zero_ext_delta": self.zero_ext_delta,
            "tol_quad": self.tol_quad,
            "zero_ext_ok": self.zero_ext_ok,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SparsityReport":
        b = data.get("bounds", {})
        return cls(
            Tstar=float(data["Tstar"]),
            idx=int(data["idx"]),
            boundary=bool(data["boundary"]),
            E_at_Tstar=float(data["E_at_Tstar"]),
            sat_mask=list(data["sat_mask"]),
            frac_saturated_before=float(data["frac_saturated_before"]),
            frac_zero_after=float(data["frac_zero_after"]),
            frac_nonintermediate=float(data["frac_nonintermediate"]),
            intermediate_steps=[int(i) for i in data["intermediate_steps"]],
            bound_Tstar=float(b.get("bound_Tstar", 0.0)),
            bound_E=float(b.get("bound_E", 0.0)),
            T=float(b.get("T", 0.0)),
            M=float(b.get("M", 0.0)),
            zero_ext_delta=float(data.get("zero_ext_delta", 0.0)),
            tol_quad=float(data.get("tol_quad", 0.0)),
            zero_ext_ok=bool(data.get("zero_ext_ok", True)),
        )


def sparsity_report(
    spec: DynamicsSpec,
    x0,
    traj: StateTrajectory,
    ctrl: ControlTrajectory,
    objective: ObjectiveSpec,
    scheme: str = "euler",
    eps_sat: float = 0.05,
    eps_zero: float = 1e-3,
) -> SparsityReport:
    """Assemble the full per-run sparsity diagnostics."""
    E = error_sequence(traj, objective)
    idx = int(np.argmin(E))
    Tstar = float(traj.grid.nodes()[idx])
    mask = saturation_profile(ctrl, objective.M, eps_sat, eps_zero)
    n_t = ctrl.grid.n_t
    before = mask[:idx]
    after = mask[idx:]
    frac_sat_before = (
        sum(1 for s in before if s == SAT) / len(before) if before else 1.0
    )
    frac_zero_after = sum(1 for s in after if s == ZERO) / len(after) if after else 1.0
    frac_noninter = sum(1 for s in mask if s != MID) / n_t
    M, T = objective.M, traj.grid.T
    inv = 1.0 / M + 1.0 / (M * M)
    E_star = float(E[idx])
    tol_quad = 5.0 * traj.grid.dt * float(E.max() - E.min())
    delta = zero_tail_delta(spec, x0, ctrl, objective, idx, scheme)
    return SparsityReport(
        Tstar=Tstar,
        idx=idx,
        boundary=idx == 0,
        E_at_Tstar=E_star,
        sat_mask=mask,
        frac_saturated_before=frac_sat_before,
        frac_zero_after=frac_zero_after,
        frac_nonintermediate=frac_noninter,
        intermediate_steps=[k for k, s in enumerate(mask) if s == MID],
        bound_Tstar=Tstar / inv,
        bound_E=E_star * T / (1.0 / M + 1.0),
        T=T,
        M=M,
        zero_ext_delta=delta,
        tol_quad=tol_quad,
        zero_ext_ok=delta <= tol_quad,
    )


def _node_index(grid: TimeGrid, t: float, what: str) -> int:
    k = int(round(t / grid.dt))
    if abs(k * grid.dt - t) > 1e-9 * max(1.0, grid.T):
        raise ValueError(f"{what}={t} is not a grid node (dt={grid.dt})")
    return k


def improve_control(
    spec: DynamicsSpec,
    x0,
    ctrl: ControlTrajectory,
    objective: ObjectiveSpec,
    interval: tuple[float, float],
    theta: float,
    scheme: str = "euler",
) -> tuple[ControlTrajectory, float]:
    """Single-interval improvement: compress an under-saturated stretch in time.

    Given theta in (0, 1) and a node-aligned interval (a, b) inside (0, T*)
    where both

      1. ||u_k||_1 <= (1 - theta) M, and
      2. E(x(t)) - E(x(T*)) >= theta

    hold, build the control that keeps [0, a), plays [a, b) sped up by
    1/(1-theta) with amplitudes scaled by the same factor (homogeneity makes
    the state trace identical, and saturation is restored when the norm was
    exactly (1-theta) M), shifts the rest left by tau = theta (b - a), and is
    zero on [T* - tau, T).  The functional drops by at least
    theta * tau = theta^2 (b - a), which is returned as the certificate.

    Both preconditions are checked numerically and a violation is rejected by
    name.  theta is snapped to a nearby small-denominator rational p/q and
    the construction lives on the grid refined q-fold, so every affine time
    map lands on nodes exactly.
    """
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    frac = Fraction(theta).limit_denominator(128)
    if frac <= 0 or frac >= 1:
        raise ValueError(f"theta={theta} has no usable rational approximation in (0, 1)")
    theta_r = float(frac)
    p, q = frac.numerator, frac.denominator

    traj = integrate(spec, x0, ctrl, scheme)
    E = error_sequence(traj, objective)
    idx_star = int(np.argmin(E))
    Tstar = float(traj.grid.nodes()[idx_star])
    grid = ctrl.grid

    a, b = interval
    k_a = _node_index(grid, a, "a")
    k_b = _node_index(grid, b, "b")
    if not 0 <= k_a < k_b <= idx_star:
        raise ValueError(
            f"interval ({a}, {b}) must be nonempty and contained in (0, T*) with T*={Tstar}"
        )

    M = objective.M
    norms = ctrl.l1_norms()
    cap = (1.0 - theta_r) * M
    worst = float(norms[k_a:k_b].max())
    if worst > cap + 1e-9:
        raise ValueError(
            f"assumption 1 violated: max ||u_k||_1 = {worst:.6g} on the interval "
            f"exceeds (1 - theta) M = {cap:.6g}"
        )
    gaps = E[k_a : k_b + 1] - E[idx_star]
    if float(gaps.min()) < theta_r - 1e-9:
        raise ValueError(
            f"assumption 2 violated: min E(x(t)) - E(x(T*)) = {float(gaps.min()):.6g} "
            f"on the interval is below theta = {theta_r:.6g}"
        )

    # refined grid: q cells per original step; the compressed image of each
    # original step inside [a, b) spans exactly (q - p) refined cells
    n_ab = k_b - k_a
    n_ref = grid.n_t * q
    A = k_a * q
    C = A + n_ab * (q - p)
    tau_ref = n_ab * p
    star_ref = idx_star * q
    scale = q / (q - p)  # = 1 / (1 - theta)

    points = np.zeros((n_ref, ctrl.d_u))
    points[:A] = np.repeat(ctrl.points[:k_a], q, axis=0)
    points[A:C] = scale * np.repeat(ctrl.points[k_a:k_b], q - p, axis=0)
    shifted = (np.arange(C, star_ref - tau_ref) + tau_ref) // q
    points[C : star_ref - tau_ref] = ctrl.points[shifted]
    # [T* - tau, T) stays zero

    improved = ControlTrajectory(grid=TimeGrid(grid.T, n_ref), points=points)
    if not improved.is_admissible(M):
        raise AssertionError("improvement construction produced an inadmissible control")
    return improved, theta_r * theta_r * (n_ab * grid.dt)


def check_theorem_bounds(runs: list[tuple[float, float, SparsityReport]], slack: float = 2.0) -> dict:
    """Fit the sparsity-bound constants across a sweep and report the spread.

    For each run the implied constants are T* / (1/M + 1/M^2) and
    E(x(T*)) * T / (1/M + 1).  The covering constant is the max (the
    tightest run forces it); the slack factor max/median says how far the
    family is from a single constant; ``satisfied_*`` compares it to
    ``slack``.  Needs at least two runs; boundary runs (T* = 0) are still
    tabulated.
    """
    if len(runs) < 2:
        raise ValueError(f"bound fitting needs at least 2 runs, got {len(runs)}")
    rows = []
    for T, M, rep in runs:
        inv = 1.0 / M + 1.0 / (M * M)
        rows.append(
            {
                "T": float(T),
                "M": float(M),
                "Tstar": rep.Tstar,
                "E_at_Tstar": rep.E_at_Tstar,
                "ratio_Tstar": rep.Tstar / inv,
                "ratio_E": rep.E_at_Tstar * T / (1.0 / M + 1.0),
                "product_ET": rep.E_at_Tstar * T,
            }
        )

    def fit(key: str) -> tuple[float, float, float]:
        vals = np.array([r[key] for r in rows])
        c_max = float(vals.max())
        med = float(np.median(vals))
        s = c_max / med if med > 0.0 else (1.0 if c_max == 0.0 else float("inf"))
        return c_max, med, s

    c_T, med_T, s_T = fit("ratio_Tstar")
    c_E, med_E, s_E = fit("ratio_E")
    return {
        "rows": rows,
        "c_Tstar": c_T,
        "median_ratio_Tstar": med_T,
        "slack_Tstar": s_T,
        "satisfied_Tstar": s_T <= slack,
        "c_E": c_E,
        "median_ratio_E": med_E,
        "slack_E": s_E,
        "satisfied_E": s_E <= slack,
        "slack": slack,
    }


@dataclass
class TurnpikeReport:
    """Driftless-run diagnostics: how close the state parks at the target."""

    Tstar: float
    idx: int
    max_state_deviation_after_Tstar: float
    CT_product: float
    frac_nonintermediate: float
    sat_mask: list[str] = field(repr=False, default_factory=list)

    def to_dict(self) -> dict:
        return {
            "Tstar": self.Tstar,
            "idx": self.idx,
            "max_state_deviation_after_Tstar": self.max_state_deviation_after_Tstar,
            "CT_product": self.CT_product,
            "frac_nonintermediate": self.frac_nonintermediate,
            "sat_mask": list(self.sat_mask),
        }


def turnpike_check(
    spec: DynamicsSpec,
    x0,
    xbar,
    p: int,
    traj: StateTrajectory,
    ctrl: ControlTrajectory,
    M: float,
    eps_sat: float = 0.05,
    eps_zero: float = 1e-3,
) -> TurnpikeReport:
    """Turnpike diagnostics for a driftless control-affine run.

    The running deviation is ||x(t) - xbar||_p^p over the whole stacked
    state; T* is its first minimizer.  Reports the worst deviation past T*
    and its product with the horizon (bounded by a constant over sweeps if
    the C/T estimate holds), plus the bang-bang classification of the
    control profile.
    """
    if spec.form != "driftless":
        raise ValueError(f"turnpike diagnostics apply to driftless dynamics, got {spec.form!r}")
    if p not in (1, 2):
        raise ValueError(f"p must be 1 or 2, got {p}")
    Xbar, _ = _as_states(spec, xbar)
    diffs = np.abs(traj.states - Xbar)
    dev = (diffs**p).sum(axis=(1, 2))
    idx = int(np.argmin(dev))
    Tstar = float(traj.grid.nodes()[idx])
    mask = saturation_profile(ctrl, M, eps_sat, eps_zero)
    max_dev = float(dev[idx:].max())
    return TurnpikeReport(
        Tstar=Tstar,
        idx=idx,
        max_state_deviation_after_Tstar=max_dev,
        CT_product=max_dev * traj.grid.T,
        frac_nonintermediate=sum(1 for s in mask if s != MID) / len(mask),
        sat_mask=mask,
    )
