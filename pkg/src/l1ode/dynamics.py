"""Homogeneous control-affine vector fields for stacked sample ODEs.

Three right-hand-side families share two structural contracts: positive
1-homogeneity in the control, f(x, a*u) = a*f(x, u) for a > 0, and a zero
fixed point, f(x, 0) = 0.  Homogeneity is what makes trajectories exactly
rescalable in time, so it is exposed as a checkable operation rather than
assumed.

* ``inside``    per sample: dx_i = w @ sigma(x_i) + b
* ``outside``   per sample: dx_i = sigma(w @ x_i + b), sigma 1-homogeneous
* ``driftless`` per sample: dx_i = sum_j u_j * (A_j @ x_i + c_j)

All n samples are stacked into one system driven by a single shared control.
States are handled as (n, d) arrays; flat vectors of length n*d are accepted
and returned flat.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ACTIVATION_KINDS",
    "FORMS",
    "Activation",
    "AffineField",
    "DynamicsSpec",
    "activation_deriv",
    "check_homogeneity",
    "eval_field",
    "field_vjp",
    "flatten_control",
    "spec_from_dict",
    "spec_to_dict",
    "split_control",
]

FORMS = ("inside", "outside", "driftless")
ACTIVATION_KINDS = ("tanh", "relu", "leaky_relu", "identity")
# kinds with sigma(alpha*s) = alpha*sigma(s) for alpha > 0
_ONE_HOMOGENEOUS = ("relu", "leaky_relu", "identity")


@dataclass(frozen=True)
class Activation:
    """Componentwise scalar nonlinearity, globally 1-Lipschitz.

    ``a`` is the negative-side slope, meaningful only for leaky_relu.
    Kink convention: relu'(0) = 0 and leaky_relu'(0) = a (the limit from
    the left), so evaluation at an exactly-zero preactivation contributes
    the flat-side slope.
    """

    kind: str
    a: float = 0.0

    def __post_init__(self):
        if self.kind not in ACTIVATION_KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}")
        if self.kind == "leaky_relu" and not 0.0 <= self.a < 1.0:
            raise ValueError(f"leaky_relu slope must lie in [0, 1), got {self.a}")

    @property
    def one_homogeneous(self) -> bool:
        return self.kind in _ONE_HOMOGENEOUS

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "tanh":
            return np.tanh(s)
        if self.kind == "relu":
            return np.maximum(s, 0.0)
        if self.kind == "leaky_relu":
            return np.where(s > 0.0, s, self.a * s)
        return s.copy()

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "tanh":
            t = np.tanh(s)
            return 1.0 - t * t
        if self.kind == "relu":
            return np.where(s > 0.0, 1.0, 0.0)
        if self.kind == "leaky_relu":
            return np.where(s > 0.0, 1.0, self.a)
        return np.ones_like(s)


def activation_deriv(kind: str, s, a: float = 0.0):
    """Derivative of the named activation at ``s`` (kink conventions above)."""
    return Activation(kind, a).deriv(s)


@dataclass(frozen=True, eq=False)
class AffineField:
    """Affine map x -> A @ x + c, the globally Lipschitz driftless building block."""

    A: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"field matrix must be square, got shape {A.shape}")
        if c.shape != (A.shape[0],):
            raise ValueError(f"field offset shape {c.shape} does not match matrix {A.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "c", c)

    @property
    def d(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True, eq=False)
class DynamicsSpec:
    """Which vector-field family drives the stacked system.

    ``d`` is the per-sample state dimension, ``n`` the number of stacked
    samples.  For the neural forms the control is the flattened pair
    (w, b) with w row-major, so d_u = d*d + d; for ``driftless`` the
    control has one coefficient per affine field.
    """

    form: str
    d: int
    n: int
    activation: Activation = Activation("tanh")
    fields: tuple = ()

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError(f"unknown dynamics form {self.form!r}")
        if self.d < 1 or self.n < 1:
            raise ValueError(f"dimensions must be positive, got d={self.d}, n={self.n}")
        if self.form == "driftless":
            if not self.fields:
                raise ValueError("driftless dynamics need at least one affine field")
            fields = tuple(
                f if isinstance(f, AffineField) else AffineField(*f) for f in self.fields
            )
            for j, f in enumerate(fields):
                if f.d != self.d:
                    raise ValueError(f"field {j} has dimension {f.d}, expected {self.d}")
            object.__setattr__(self, "fields", fields)
        else:
            if self.fields:
                raise ValueError(f"{self.form!r} dynamics take no affine fields")
            if self.form == "outside" and not self.activation.one_homogeneous:
                raise ValueError(
                    "the sigma-outside form needs a 1-homogeneous activation "
                    f"(relu, leaky_relu or identity), got {self.activation.kind!r}"
                )

    @property
    def d_u(self) -> int:
        if self.form == "driftless":
            return len(self.fields)
        return self.d * self.d + self.d


def _as_states(spec: DynamicsSpec, x) -> tuple[np.ndarray, bool]:
    """Coerce x to (n, d); remember whether the caller passed it flat."""
    X = np.asarray(x, dtype=float)
    if X.ndim == 1:
        if X.size != spec.n * spec.d:
            raise ValueError(
                f"stacked state has {X.size} entries, expected n*d = {spec.n * spec.d}"
            )
        return X.reshape(spec.n, spec.d), True
    if X.shape != (spec.n, spec.d):
        raise ValueError(f"state shape {X.shape} does not match (n, d) = ({spec.n}, {spec.d})")
    return X, False


def _as_control(spec: DynamicsSpec, u) -> np.ndarray:
    v = np.asarray(u, dtype=float).reshape(-1)
    if v.size != spec.d_u:
        raise ValueError(f"control has {v.size} entries, expected d_u = {spec.d_u}")
    return v


def split_control(spec: DynamicsSpec, u) -> tuple[np.ndarray, np.ndarray]:
    """View a flat neural-form control as the (w, b) pair."""
    if spec.form == "driftless":
        raise ValueError("driftless controls have no (w, b) structure")
    v = _as_control(spec, u)
    d = spec.d
    return v[: d * d].reshape(d, d), v[d * d :]


def flatten_control(spec: DynamicsSpec, w, b) -> np.ndarray:
    """Inverse of :func:`split_control`: pack (w, b) row-major into one vector."""
    if spec.form == "driftless":
        raise ValueError("driftless controls have no (w, b) structure")
    w = np.asarray(w, dtype=float)
    b = np.asarray(b, dtype=float)
    if w.shape != (spec.d, spec.d) or b.shape != (spec.d,):
        raise ValueError(f"expected w ({spec.d},{spec.d}) and b ({spec.d},)")
    return np.concatenate([w.reshape(-1), b])


def _field_kernel(spec: DynamicsSpec, X: np.ndarray, v: np.ndarray) -> np.ndarray:
    """f(x, u) on a pre-validated (n, d) state; the integrator's hot path."""
    d = spec.d
    if spec.form == "inside":
        return spec.activation(X) @ v[: d * d].reshape(d, d).T + v[d * d :]
    if spec.form == "outside":
        return spec.activation(X @ v[: d * d].reshape(d, d).T + v[d * d :])
    F = np.zeros_like(X)
    for coeff, f in zip(v, spec.fields):
        F += coeff * (X @ f.A.T + f.c)
    return F


def eval_field(spec: DynamicsSpec, x, u) -> np.ndarray:
    """Evaluate f(x, u) on the stacked state; every sample sees the same u."""
    X, flat = _as_states(spec, x)
    v = _as_control(spec, u)
    F = _field_kernel(spec, X, v)
    return F.reshape(-1) if flat else F


def _vjp_kernel(spec: DynamicsSpec, X: np.ndarray, v: np.ndarray, V: np.ndarray):
    """(df/dx)^T V and (df/du)^T V on pre-validated arrays."""
    d = spec.d
    if spec.form == "inside":
        w = v[: d * d].reshape(d, d)
        S = spec.activation(X)
        D = spec.activation.deriv(X)
        xbar = D * (V @ w)
        wbar = V.T @ S
        return xbar, np.concatenate([wbar.reshape(-1), V.sum(axis=0)])
    if spec.form == "outside":
        w = v[: d * d].reshape(d, d)
        Z = X @ w.T + v[d * d :]
        G = spec.activation.deriv(Z) * V
        xbar = G @ w
        wbar = G.T @ X
        return xbar, np.concatenate([wbar.reshape(-1), G.sum(axis=0)])
    Au = np.zeros((d, d))
    for coeff, f in zip(v, spec.fields):
        Au += coeff * f.A
    xbar = V @ Au
    ubar = np.array([float(np.sum(V * (X @ f.A.T + f.c))) for f in spec.fields])
    return xbar, ubar


def field_vjp(spec: DynamicsSpec, x, u, v) -> tuple[np.ndarray, np.ndarray]:
    """Vector-Jacobian products (df/dx)^T v and (df/du)^T v at (x, u).

    ``v`` has the shape of a stacked state.  Returns (xbar, ubar) with xbar
    shaped like x (as (n, d)) and ubar a flat d_u vector.  This is all the
    reverse sweep of the discrete adjoint needs from the dynamics.
    """
    X, _ = _as_states(spec, x)
    V, _ = _as_states(spec, v)
    uvec = _as_control(spec, u)
    return _vjp_kernel(spec, X, uvec, V)


def check_homogeneity(spec: DynamicsSpec, x, u, alpha: float) -> float:
    """Max abs deviation of f(x, alpha*u) - alpha*f(x, u); must be ~0 for alpha > 0."""
    if alpha <= 0.0:
        raise ValueError(f"homogeneity holds for alpha > 0 only, got {alpha}")
    v = _as_control(spec, u)
    dev = eval_field(spec, x, alpha * v) - alpha * eval_field(spec, x, v)
    return float(np.max(np.abs(dev))) if dev.size else 0.0


def spec_to_dict(spec: DynamicsSpec) -> dict:
    """JSON-ready description; inverse of :func:`spec_from_dict`."""
    act: dict = {"kind": spec.activation.kind}
    if spec.activation.kind == "leaky_relu":
        act["a"] = spec.activation.a
    out = {"form": spec.form, "d": spec.d, "n": spec.n, "activation": act}
    if spec.form == "driftless":
        out["fields"] = [{"A": f.A.tolist(), "c": f.c.tolist()} for f in spec.fields]
    return out


def spec_from_dict(data: dict) -> DynamicsSpec:
    act_data = data.get("activation", {"kind": "tanh"})
    act = Activation(act_data["kind"], float(act_data.get("a", 0.0)))
    fields = tuple(
        AffineField(np.asarray(f["A"], dtype=float), np.asarray(f["c"], dtype=float))
        for f in data.get("fields", [])
    )
    return DynamicsSpec(
        form=data["form"],
        d=int(data["d"]),
        n=int(data["n"]),
        activation=act,
        fields=fields,
    )
