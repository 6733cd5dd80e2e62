import numpy as np
import pytest

from l1ode.dynamics import Activation, AffineField, DynamicsSpec
from l1ode.integrator import (
    ControlTrajectory,
    DivergenceError,
    TimeGrid,
    integrate,
    read_control_csv,
    read_state_csv,
    rescale_control,
    zero_extend,
)


def scalar_linear():
    """xdot = w x + b through the sigma-inside identity form."""
    return DynamicsSpec("inside", 1, 1, Activation("identity"))


def const_ctrl(grid, u):
    return ControlTrajectory(grid, np.tile(np.asarray(u, dtype=float), (grid.n_t, 1)))


def random_setup(seed=0, form="inside", d=2, n=2, n_t=6, T=1.3):
    rng = np.random.default_rng(seed)
    if form == "driftless":
        fields = tuple(
            AffineField(rng.standard_normal((d, d)), rng.standard_normal(d)) for _ in range(3)
        )
        spec = DynamicsSpec("driftless", d, n, fields=fields)
    elif form == "outside":
        spec = DynamicsSpec("outside", d, n, Activation("leaky_relu", 0.2))
    else:
        spec = DynamicsSpec("inside", d, n, Activation("tanh"))
    grid = TimeGrid(T, n_t)
    ctrl = ControlTrajectory(grid, 0.7 * rng.standard_normal((n_t, spec.d_u)))
    x0 = rng.standard_normal((n, d))
    return spec, x0, ctrl


class TestTimeGrid:
    def test_dt_consistency(self):
        g = TimeGrid(5.0, 15)
        assert g.dt * g.n_t == pytest.approx(g.T, abs=1e-15)
        assert g.nodes()[0] == 0.0 and g.nodes()[-1] == g.T

    def test_validation(self):
        with pytest.raises(ValueError):
            TimeGrid(0.0, 4)
        with pytest.raises(ValueError):
            TimeGrid(1.0, 0)


class TestIntegrate:
    def test_single_euler_step_of_linear_ode(self):
        # xdot = x, x0 = 1, one step of size 1: x(T) = 2
        spec = scalar_linear()
        traj = integrate(spec, [[1.0]], const_ctrl(TimeGrid(1.0, 1), [1.0, 0.0]), "euler")
        assert traj.states[-1, 0, 0] == pytest.approx(2.0)

    def test_zero_control_freezes_state(self):
        for form in ("inside", "outside", "driftless"):
            spec, x0, ctrl = random_setup(3, form)
            ctrl = ControlTrajectory(ctrl.grid, np.zeros_like(ctrl.points))
            for scheme in ("euler", "midpoint"):
                traj = integrate(spec, x0, ctrl, scheme)
                assert np.all(traj.states == traj.states[0])

    def test_euler_error_matches_closed_form(self):
        # for xdot = x: euler gives exactly (1 + h)^(n_t)
        spec = scalar_linear()
        n_t = 64
        traj = integrate(spec, [[1.0]], const_ctrl(TimeGrid(1.0, n_t), [1.0, 0.0]), "euler")
        expected = (1.0 + 1.0 / n_t) ** n_t
        assert traj.states[-1, 0, 0] == pytest.approx(expected, rel=1e-14)
        assert np.e - expected == pytest.approx(2.0937e-2, rel=1e-3)

    def test_midpoint_error_matches_closed_form(self):
        # midpoint on xdot = x steps by (1 + h + h^2/2)
        spec = scalar_linear()
        n_t = 64
        h = 1.0 / n_t
        traj = integrate(spec, [[1.0]], const_ctrl(TimeGrid(1.0, n_t), [1.0, 0.0]), "midpoint")
        expected = (1.0 + h + h * h / 2.0) ** n_t
        assert traj.states[-1, 0, 0] == pytest.approx(expected, rel=1e-14)

    @pytest.mark.parametrize("scheme,min_order", [("euler", 0.95), ("midpoint", 1.9)])
    def test_convergence_order(self, scheme, min_order):
        spec = scalar_linear()
        errs = []
        for n_t in (32, 64, 128, 256):
            traj = integrate(spec, [[1.0]], const_ctrl(TimeGrid(1.0, n_t), [1.0, 0.0]), scheme)
            errs.append(abs(traj.states[-1, 0, 0] - np.e))
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert orders.min() >= min_order

    def test_divergence_names_the_step(self):
        spec = DynamicsSpec("driftless", 1, 1, fields=(AffineField([[1.0]], [0.0]),))
        ctrl = const_ctrl(TimeGrid(4.0, 4), [700.0])  # x multiplies by 701 each step
        with np.errstate(over="ignore"), pytest.raises(DivergenceError) as exc:
            integrate(spec, [[1e303]], ctrl, "euler")
        assert exc.value.step == 1
        assert "step 1" in str(exc.value)

    def test_control_dimension_checked(self):
        spec, x0, ctrl = random_setup()
        bad = ControlTrajectory(ctrl.grid, np.zeros((ctrl.grid.n_t, spec.d_u + 1)))
        with pytest.raises(ValueError, match="control dimension"):
            integrate(spec, x0, bad)


class TestRescale:
    def test_constant_control_halves_on_doubled_horizon(self):
        grid = TimeGrid(1.0, 4)
        c = const_ctrl(grid, [3.0, -1.0])
        r = rescale_control(c, 2.0)
        assert r.grid.T == 2.0 and r.grid.n_t == 4
        assert np.allclose(r.points, c.points / 2.0)
        assert r.control_cost() == pytest.approx(c.control_cost(), abs=1e-15)

    def test_identity_when_horizon_unchanged(self):
        spec, x0, ctrl = random_setup(9)
        r = rescale_control(ctrl, ctrl.grid.T)
        a = integrate(spec, x0, ctrl).states
        b = integrate(spec, x0, r).states
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("form", ["inside", "outside", "driftless"])
    @pytest.mark.parametrize("scheme", ["euler", "midpoint"])
    def test_node_states_invariant(self, form, scheme):
        # dt' u' = dt u makes every discrete update identical for both schemes
        spec, x0, ctrl = random_setup(21, form)
        for T_new in (0.3, 2.6):
            r = rescale_control(ctrl, T_new)
            a = integrate(spec, x0, ctrl, scheme).states
            b = integrate(spec, x0, r, scheme).states
            assert np.abs(a - b).max() <= 1e-13

    def test_bad_horizon_rejected(self):
        _, _, ctrl = random_setup()
        with pytest.raises(ValueError):
            rescale_control(ctrl, -1.0)


class TestZeroExtend:
    def test_tail_is_zero_and_cost_unchanged(self):
        grid = TimeGrid(1.0, 4)
        c = const_ctrl(grid, [2.0, 0.5])
        e = zero_extend(c, 2.0)
        assert e.grid.n_t == 8
        assert np.array_equal(e.points[:4], c.points)
        assert np.all(e.points[4:] == 0.0)
        assert e.control_cost() == pytest.approx(c.control_cost(), abs=1e-15)

    def test_state_frozen_after_original_horizon(self):
        spec, x0, ctrl = random_setup(5)
        e = zero_extend(ctrl, 2.0 * ctrl.grid.T)
        traj = integrate(spec, x0, e)
        n_t = ctrl.grid.n_t
        tail = traj.states[n_t:]
        assert np.all(tail == tail[0])

    def test_misaligned_horizon_rejected_with_suggestion(self):
        c = const_ctrl(TimeGrid(1.0, 3), [1.0])
        with pytest.raises(ValueError, match="n_t"):
            zero_extend(c, 1.5)
        # the suggested step count makes the same call work
        c2 = const_ctrl(TimeGrid(1.0, 4), [1.0])
        assert zero_extend(c2, 1.5).grid.n_t == 6


class TestCsv:
    def test_control_round_trip(self, tmp_path):
        _, _, ctrl = random_setup(13)
        path = tmp_path / "controls.csv"
        ctrl.to_csv(path)
        header = path.read_text().splitlines()[0]
        assert header.split(",")[:2] == ["t", "u_0"]
        back = read_control_csv(path)
        assert back.grid.n_t == ctrl.grid.n_t
        assert back.grid.T == pytest.approx(ctrl.grid.T)
        assert np.array_equal(back.points, ctrl.points)

    def test_state_round_trip(self, tmp_path):
        spec, x0, ctrl = random_setup(17)
        traj = integrate(spec, x0, ctrl)
        path = tmp_path / "trajectory.csv"
        traj.to_csv(path)
        back = read_state_csv(path, ctrl.grid, spec.n, spec.d)
        assert np.array_equal(back.states, traj.states)
