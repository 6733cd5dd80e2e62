import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from l1ode.dynamics import Activation, AffineField, DynamicsSpec
from l1ode.integrator import ControlTrajectory, TimeGrid, integrate
from l1ode.objective import ObjectiveSpec, OutputMap, error_E, functional_J
from l1ode.adjoint import grad_running
from l1ode.optimizer import (
    AdamState,
    TrainConfig,
    adam_step,
    project_l1,
    prox_l1,
    train,
)
from l1ode.verify import project_l1_oracle

vectors = st.lists(st.floats(-5, 5), min_size=1, max_size=7).map(np.asarray)


class TestProjectL1:
    def test_inside_ball_unchanged(self):
        v = np.array([0.5, -0.2])
        assert np.array_equal(project_l1(v, 1.0), v)

    def test_worked_kkt_examples(self):
        assert np.allclose(project_l1(np.array([2.0, 1.0]), 1.0), [1.0, 0.0])
        assert np.allclose(project_l1(np.array([3.0, 3.0]), 2.0), [1.0, 1.0])

    def test_agrees_with_grid_search_2d(self):
        # brute-force QP oracle on a fine grid restricted to the ball
        rng = np.random.default_rng(0)
        grid = np.linspace(-2.0, 2.0, 401)
        for _ in range(5):
            v = rng.uniform(-2, 2, 2)
            M = rng.uniform(0.5, 1.5)
            best, best_val = None, np.inf
            for a in grid:
                rem = M - abs(a)
                if rem < 0:
                    continue
                for b in (-rem, min(rem, max(-rem, v[1]))):
                    val = (a - v[0]) ** 2 + (b - v[1]) ** 2
                    if val < best_val:
                        best, best_val = np.array([a, b]), val
            p = project_l1(v, M)
            assert (p[0] - v[0]) ** 2 + (p[1] - v[1]) ** 2 <= best_val + 1e-6

    @settings(max_examples=300, deadline=None)
    @given(v=vectors, M=st.floats(0.05, 4.0))
    def test_oracle_idempotence_feasibility(self, v, M):
        p = project_l1(v, M)
        assert np.abs(p).sum() <= M + 1e-9
        assert np.abs(p - project_l1_oracle(v, M)).max() <= 1e-8
        assert np.abs(project_l1(p, M) - p).max() <= 1e-12

    @settings(max_examples=200, deadline=None)
    @given(seed=st.integers(0, 10**6), M=st.floats(0.05, 4.0))
    def test_non_expansive(self, seed, M):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(1, 7))
        v, w = rng.standard_normal(d) * 3, rng.standard_normal(d) * 3
        lhs = np.linalg.norm(project_l1(v, M) - project_l1(w, M))
        assert lhs <= np.linalg.norm(v - w) + 1e-12

    def test_bad_radius(self):
        with pytest.raises(ValueError):
            project_l1(np.ones(2), 0.0)


class TestProxL1:
    def test_soft_threshold_examples(self):
        assert np.allclose(prox_l1(np.array([2.0, -0.5]), 1.0), [1.0, 0.0])
        v = np.array([0.3, -1.7, 0.0])
        assert np.array_equal(prox_l1(v, 0.0), v)

    @settings(max_examples=200, deadline=None)
    @given(v=vectors, tau=st.floats(0.0, 3.0))
    def test_norm_identity(self, v, tau):
        p = prox_l1(v, tau)
        assert np.abs(p).sum() == pytest.approx(np.maximum(np.abs(v) - tau, 0).sum(), rel=1e-12, abs=1e-12)

    def test_minimizes_proximal_objective_2d(self):
        # grid search of 0.5||z - v||^2 + tau ||z||_1 on d_u = 2 instances
        rng = np.random.default_rng(5)
        grid = np.linspace(-3.0, 3.0, 1201)
        for _ in range(3):
            v = rng.uniform(-2, 2, 2)
            tau = rng.uniform(0.1, 1.0)
            p = prox_l1(v, tau)

            def obj(z0, z1):
                return 0.5 * ((z0 - v[0]) ** 2 + (z1 - v[1]) ** 2) + tau * (abs(z0) + abs(z1))

            # separable: scan each coordinate independently
            best0 = grid[np.argmin([obj(z, p[1]) for z in grid])]
            best1 = grid[np.argmin([obj(p[0], z) for z in grid])]
            assert obj(*p) <= obj(best0, p[1]) + 1e-6
            assert obj(*p) <= obj(p[0], best1) + 1e-6

    def test_per_coordinate_tau(self):
        v = np.array([2.0, 2.0])
        assert np.allclose(prox_l1(v, np.array([0.5, 1.5])), [1.5, 0.5])

    def test_negative_tau_rejected(self):
        with pytest.raises(ValueError):
            prox_l1(np.ones(2), -0.1)


class TestAdamStep:
    def cfg(self, **kw):
        return TrainConfig(lr=kw.pop("lr", 0.1), M=1.0, **kw)

    def test_zero_gradient_is_noop(self):
        u = np.array([[1.0, -2.0]])
        state = AdamState.fresh(u.shape)
        u2, s2 = adam_step(u, np.zeros_like(u), state, self.cfg())
        assert np.array_equal(u2, u)
        assert s2.t == 1

    def test_first_step_magnitude_is_lr(self):
        # bias correction makes |du| -> lr as eps -> 0, regardless of |g|
        cfg = TrainConfig(lr=0.05, eps=1e-12, M=1.0)
        u = np.zeros((2, 3))
        g = np.full((2, 3), 7.3)
        u2, _ = adam_step(u, g, AdamState.fresh(u.shape), cfg)
        assert np.abs(np.abs(u2 - u) - cfg.lr).max() <= 1e-10

    def test_determinism(self):
        rng = np.random.default_rng(0)
        u = rng.standard_normal((3, 2))
        g = rng.standard_normal((3, 2))
        s = AdamState(m=rng.standard_normal((3, 2)), v=rng.standard_normal((3, 2)) ** 2, t=4)
        a1 = adam_step(u, g, s, self.cfg())
        a2 = adam_step(u, g, s, self.cfg())
        assert np.array_equal(a1[0], a2[0])
        assert np.array_equal(a1[1].m, a2[1].m) and np.array_equal(a1[1].v, a2[1].v)


def reachable_problem():
    """Scalar sigma-inside identity system steering 0.5 -> 2.0."""
    spec = DynamicsSpec("inside", 1, 1, Activation("identity"))
    grid = TimeGrid(2.0, 16)
    obj = ObjectiveSpec(
        "least_squares", OutputMap([[1.0]], [0.0]), np.array([[2.0]]),
        M=5.0, quadrature="left", penalty_weight=0.01,
    )
    return spec, np.array([[0.5]]), grid, obj


class TestTrain:
    def test_reachable_scalar_target(self):
        spec, x0, grid, obj = reachable_problem()
        cfg = TrainConfig(lr=0.02, iters=2000, seed=1, M=5.0, penalty_weight=0.01,
                          scheme="euler", quadrature="left")
        res = train(spec, x0, grid, obj, cfg)
        from l1ode.analysis import detect_Tstar

        _, idx = detect_Tstar(res.traj, obj)
        assert error_E(res.traj.states[idx], obj) <= 1e-4
        assert error_E(res.traj.states[-1], obj) <= 1e-4

    def test_penalty_free_untied_matches_plain_adam(self):
        # penalty_weight = 0 with a huge ball reduces to unconstrained Adam
        spec, x0, grid, obj = reachable_problem()
        obj = ObjectiveSpec("least_squares", obj.output, obj.labels, M=1e9,
                            quadrature="left", penalty_weight=0.0)
        cfg = TrainConfig(lr=0.02, iters=60, seed=3, M=1e9, penalty_weight=0.0,
                          init="uniform_small", scheme="euler")
        res = train(spec, x0, grid, obj, cfg)

        # independent plain-Adam reference loop
        rng = np.random.default_rng(3)
        scale = 0.1 / np.sqrt(spec.d_u)
        U = rng.uniform(-scale, scale, (grid.n_t, spec.d_u))
        m = np.zeros_like(U)
        v = np.zeros_like(U)
        ref = []
        for t in range(1, 61 + 1):
            ctrl = ControlTrajectory(grid, U)
            traj = integrate(spec, x0, ctrl, "euler")
            ref.append(functional_J(traj, ctrl, obj)[0])
            if t == 61:
                break
            g = grad_running(spec, x0, ctrl, obj, "euler", traj=traj)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            mhat = m / (1 - 0.9**t)
            vhat = v / (1 - 0.999**t)
            U = U - 0.02 * mhat / (np.sqrt(vhat) + 1e-8)
        assert np.abs(res.history[:, 0] - np.array(ref)).max() <= 1e-10

    def test_zero_iters_zero_init(self):
        spec, x0, grid, obj = reachable_problem()
        cfg = TrainConfig(lr=0.1, iters=0, seed=0, M=5.0, penalty_weight=0.01, init="zeros")
        res = train(spec, x0, grid, obj, cfg)
        assert np.all(res.ctrl.points == 0.0)
        assert res.history.shape == (1, 3)
        assert res.history[0, 0] == pytest.approx(grid.T * error_E(x0, obj), rel=1e-12)

    def test_every_iterate_admissible(self):
        # determinism gives a prefix property: the k-iterate run ends at iterate k
        spec, x0, grid, obj = reachable_problem()
        M = 0.05  # tight ball so the projection genuinely binds
        for iters in (1, 2, 3, 7):
            cfg = TrainConfig(lr=0.05, iters=iters, seed=2, M=M, penalty_weight=0.01)
            res = train(spec, x0, grid, obj, cfg)
            assert res.ctrl.is_admissible(M)

    def test_bitwise_reproducibility(self):
        spec, x0, grid, obj = reachable_problem()
        cfg = TrainConfig(lr=0.03, iters=40, seed=11, M=5.0, penalty_weight=0.01)
        r1 = train(spec, x0, grid, obj, cfg)
        r2 = train(spec, x0, grid, obj, cfg)
        assert np.array_equal(r1.history, r2.history)
        assert np.array_equal(r1.ctrl.points, r2.ctrl.points)

    def test_forward_divergence_reports_iteration(self):
        spec = DynamicsSpec("driftless", 1, 1, fields=(AffineField([[1.0]], [0.0]),))
        grid = TimeGrid(4.0, 4)
        obj = ObjectiveSpec("least_squares", OutputMap([[1.0]], [0.0]), np.array([[0.0]]),
                            M=1e4, quadrature="left")
        cfg = TrainConfig(lr=0.1, iters=3, seed=0, M=1e4, init="uniform_small", init_scale=800.0)
        from l1ode.integrator import DivergenceError

        with np.errstate(over="ignore"), pytest.raises(DivergenceError, match="iteration 0"):
            train(spec, np.array([[1e300]]), grid, obj, cfg)

    def test_nonfinite_gradient_reports_iteration(self):
        # zero control keeps the forward pass finite but the huge residual
        # overflows the pulled-back gradient
        spec = DynamicsSpec("driftless", 1, 1, fields=(AffineField([[1.0]], [0.0]),))
        grid = TimeGrid(4.0, 4)
        obj = ObjectiveSpec("least_squares", OutputMap([[1.0]], [0.0]), np.array([[0.0]]),
                            M=1e4, quadrature="left")
        cfg = TrainConfig(lr=0.1, iters=3, seed=0, M=1e4, init="zeros")
        with np.errstate(over="ignore"), pytest.raises(FloatingPointError, match="iteration 0"):
            train(spec, np.array([[1e303]]), grid, obj, cfg)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(lr=0.0, M=1.0)
        with pytest.raises(ValueError):
            TrainConfig(lr=0.1, beta1=1.0, M=1.0)
        with pytest.raises(ValueError):
            TrainConfig(lr=0.1, M=1.0, scheme="rk4")


class TestCheckpoints:
    def test_snapshots_written_and_round_trip(self, tmp_path):
        from l1ode.optimizer import checkpoint_control, checkpoint_dict
        import json

        spec, x0, grid, obj = reachable_problem()
        cfg = TrainConfig(lr=0.03, iters=10, seed=5, M=5.0, penalty_weight=0.01)
        res = train(spec, x0, grid, obj, cfg, checkpoint_every=4, checkpoint_dir=tmp_path)
        names = sorted(p.name for p in tmp_path.glob("ctrl_iter*.json"))
        assert names == ["ctrl_iter0.json", "ctrl_iter4.json", "ctrl_iter8.json"]
        back = checkpoint_control(json.loads((tmp_path / "ctrl_iter8.json").read_text()))
        assert back.grid.n_t == grid.n_t
        # sanity: a re-serialized snapshot is stable
        assert checkpoint_dict(back) == json.loads((tmp_path / "ctrl_iter8.json").read_text())
