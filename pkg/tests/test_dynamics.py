import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from l1ode.dynamics import (
    Activation,
    AffineField,
    DynamicsSpec,
    activation_deriv,
    check_homogeneity,
    eval_field,
    field_vjp,
    flatten_control,
    spec_from_dict,
    spec_to_dict,
    split_control,
)


def inside(d=2, n=3, act="tanh", a=0.0):
    return DynamicsSpec("inside", d, n, Activation(act, a))


def outside(d=2, n=3, act="leaky_relu", a=0.1):
    return DynamicsSpec("outside", d, n, Activation(act, a))


def driftless(d=2, n=2, n_fields=3, seed=0):
    rng = np.random.default_rng(seed)
    fields = tuple(
        AffineField(rng.standard_normal((d, d)), rng.standard_normal(d)) for _ in range(n_fields)
    )
    return DynamicsSpec("driftless", d, n, fields=fields)


def eval_loop_oracle(spec, X, u):
    """Naive per-sample reference implementation."""
    out = np.zeros_like(X)
    for i in range(spec.n):
        xi = X[i]
        if spec.form == "inside":
            w, b = split_control(spec, u)
            out[i] = w @ spec.activation(xi) + b
        elif spec.form == "outside":
            w, b = split_control(spec, u)
            out[i] = spec.activation(w @ xi + b)
        else:
            for coeff, f in zip(u, spec.fields):
                out[i] += coeff * (f.A @ xi + f.c)
    return out


class TestEvalField:
    def test_inside_scalar_tanh(self):
        # w*tanh(0) + b = b
        spec = inside(d=1, n=1)
        assert eval_field(spec, [[0.0]], [2.0, 1.0])[0, 0] == pytest.approx(1.0)

    def test_zero_control_gives_zero_field(self):
        for spec in (inside(), outside(), driftless()):
            x = np.random.default_rng(1).standard_normal((spec.n, spec.d))
            assert np.all(eval_field(spec, x, np.zeros(spec.d_u)) == 0.0)

    @pytest.mark.parametrize("maker", [inside, outside, driftless])
    def test_matches_per_sample_loop(self, maker):
        rng = np.random.default_rng(7)
        spec = maker()
        for _ in range(20):
            X = rng.standard_normal((spec.n, spec.d))
            u = rng.standard_normal(spec.d_u)
            assert np.abs(eval_field(spec, X, u) - eval_loop_oracle(spec, X, u)).max() <= 1e-14

    def test_flat_input_round_trip(self):
        spec = inside()
        rng = np.random.default_rng(2)
        X = rng.standard_normal((spec.n, spec.d))
        u = rng.standard_normal(spec.d_u)
        flat = eval_field(spec, X.reshape(-1), u)
        assert flat.shape == (spec.n * spec.d,)
        assert np.array_equal(flat, eval_field(spec, X, u).reshape(-1))

    def test_dimension_mismatch_rejected(self):
        spec = inside()
        with pytest.raises(ValueError, match="state"):
            eval_field(spec, np.zeros((spec.n, spec.d + 1)), np.zeros(spec.d_u))
        with pytest.raises(ValueError, match="control"):
            eval_field(spec, np.zeros((spec.n, spec.d)), np.zeros(spec.d_u + 1))

    def test_block_structure(self):
        # block i of f depends on x_i only: perturbing another sample is invisible
        rng = np.random.default_rng(3)
        for spec in (inside(), outside(), driftless()):
            X = rng.standard_normal((spec.n, spec.d))
            u = rng.standard_normal(spec.d_u)
            base = eval_field(spec, X, u)
            X2 = X.copy()
            X2[1] += rng.standard_normal(spec.d)
            pert = eval_field(spec, X2, u)
            assert np.array_equal(base[0], pert[0])
            assert not np.array_equal(base[1], pert[1])


class TestHomogeneity:
    def test_alpha_one_is_exact(self):
        spec = inside()
        rng = np.random.default_rng(0)
        x = rng.standard_normal((spec.n, spec.d))
        u = rng.standard_normal(spec.d_u)
        assert check_homogeneity(spec, x, u, 1.0) == 0.0

    def test_examples(self):
        rng = np.random.default_rng(5)
        si = inside()
        x = rng.standard_normal((si.n, si.d))
        u = rng.standard_normal(si.d_u)
        assert check_homogeneity(si, x, u, 3.0) <= 1e-12
        so = outside(act="relu", a=0.0)
        x = rng.standard_normal((so.n, so.d))
        u = rng.standard_normal(so.d_u)
        assert check_homogeneity(so, x, u, 0.5) <= 1e-12

    def test_alpha_nonpositive_rejected(self):
        spec = inside()
        with pytest.raises(ValueError):
            check_homogeneity(spec, np.zeros((spec.n, spec.d)), np.zeros(spec.d_u), 0.0)

    @settings(max_examples=200, deadline=None)
    @given(
        seed=st.integers(0, 10**6),
        alpha=st.floats(1e-6, 10.0),
        form=st.sampled_from(["inside", "outside", "driftless"]),
    )
    def test_property(self, seed, alpha, form):
        rng = np.random.default_rng(seed)
        spec = {"inside": inside, "outside": outside, "driftless": driftless}[form]()
        x = rng.standard_normal((spec.n, spec.d))
        u = rng.standard_normal(spec.d_u)
        assert check_homogeneity(spec, x, u, alpha) <= 1e-10


class TestActivations:
    def test_deriv_examples(self):
        assert activation_deriv("tanh", 0.0) == pytest.approx(1.0)
        assert activation_deriv("relu", -1.0) == 0.0
        assert activation_deriv("leaky_relu", -2.0, a=0.1) == pytest.approx(0.1)

    def test_kink_convention(self):
        assert activation_deriv("relu", 0.0) == 0.0
        assert activation_deriv("leaky_relu", 0.0, a=0.3) == pytest.approx(0.3)

    def test_lipschitz_one(self):
        s = np.linspace(-5, 5, 1001)
        for kind, a in (("tanh", 0.0), ("relu", 0.0), ("leaky_relu", 0.4), ("identity", 0.0)):
            act = Activation(kind, a)
            diffs = np.abs(np.diff(act(s))) / np.diff(s)
            assert diffs.max() <= 1.0 + 1e-12

    def test_bad_slope_rejected(self):
        with pytest.raises(ValueError):
            Activation("leaky_relu", 1.0)
        with pytest.raises(ValueError):
            Activation("softplus")


class TestSpecValidation:
    def test_outside_rejects_tanh(self):
        with pytest.raises(ValueError, match="1-homogeneous"):
            DynamicsSpec("outside", 2, 2, Activation("tanh"))

    def test_outside_accepts_homogeneous_kinds(self):
        for kind in ("relu", "leaky_relu", "identity"):
            DynamicsSpec("outside", 2, 2, Activation(kind, 0.2 if kind == "leaky_relu" else 0.0))

    def test_control_dimension(self):
        assert inside(d=3).d_u == 12
        assert driftless(n_fields=4).d_u == 4

    def test_driftless_needs_fields(self):
        with pytest.raises(ValueError, match="field"):
            DynamicsSpec("driftless", 2, 2)

    def test_split_flatten_round_trip(self):
        spec = inside(d=3)
        rng = np.random.default_rng(4)
        u = rng.standard_normal(spec.d_u)
        w, b = split_control(spec, u)
        assert np.array_equal(flatten_control(spec, w, b), u)

    def test_json_round_trip(self):
        for spec in (inside(d=3, n=5), outside(), driftless(d=2, n_fields=2)):
            restored = spec_from_dict(spec_to_dict(spec))
            assert restored.form == spec.form
            assert restored.d == spec.d and restored.n == spec.n
            assert restored.activation == spec.activation
            for f1, f2 in zip(restored.fields, spec.fields):
                assert np.array_equal(f1.A, f2.A) and np.array_equal(f1.c, f2.c)


class TestFieldVjp:
    @pytest.mark.parametrize("maker", [inside, outside, driftless])
    def test_matches_numerical_jacobian(self, maker):
        rng = np.random.default_rng(11)
        spec = maker()
        X = rng.standard_normal((spec.n, spec.d))
        u = rng.standard_normal(spec.d_u)
        V = rng.standard_normal((spec.n, spec.d))
        xbar, ubar = field_vjp(spec, X, u, V)
        h = 1e-6
        for idx in np.ndindex(X.shape):
            Xp, Xm = X.copy(), X.copy()
            Xp[idx] += h
            Xm[idx] -= h
            num = np.sum(V * (eval_field(spec, Xp, u) - eval_field(spec, Xm, u))) / (2 * h)
            assert xbar[idx] == pytest.approx(num, abs=1e-5)
        for j in range(spec.d_u):
            up, um = u.copy(), u.copy()
            up[j] += h
            um[j] -= h
            num = np.sum(V * (eval_field(spec, X, up) - eval_field(spec, X, um))) / (2 * h)
            assert ubar[j] == pytest.approx(num, abs=1e-5)
