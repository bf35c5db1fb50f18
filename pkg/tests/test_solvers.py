import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rflaf.basis import BasisConfig, radius_bound
from rflaf.errors import DivergenceError, InvalidArgument
from rflaf.features import plain_features, sample_pool, select_features
from rflaf.kernel import basis_tensor
from rflaf.solvers import (CROSS_ENTROPY, MAIN, MSE, SENSING, BilinearObjective, SgdConfig,
                           loss_eval, loss_grad, project_ball, ridge_objective, ridge_solve,
                           ridge_solve_dual, sgd_joint)


def instance(seed=0, n=60, d=3, s=12, N=6):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = np.cos(X @ rng.standard_normal(d))
    pool = sample_pool(d, s, seed)
    basis = BasisConfig.rbf((-3, 3), N)
    return X, y, plain_features(pool), basis


def fd_grad(fn, x, h=1e-6):
    return np.array([(fn(x + h * e) - fn(x - h * e)) / (2 * h) for e in np.eye(x.size)])


class TestRidge:
    def test_zero_target(self):
        Z = np.random.default_rng(0).standard_normal((5, 3))
        np.testing.assert_array_equal(ridge_solve(Z, np.zeros(5), 0.1), 0)
        np.testing.assert_array_equal(ridge_solve_dual(Z, np.zeros(5), 0.1), 0)

    def test_scalar_hand_case(self):
        Z = np.array([[1.0], [1.0]])
        y = np.array([1.0, 1.0])
        assert ridge_solve(Z, y, 0.5)[0] == pytest.approx(2 / 3)
        assert ridge_solve_dual(Z, y, 0.5)[0] == pytest.approx(2 / 3)

    def test_dominant_ridge_shrinks(self):
        rng = np.random.default_rng(1)
        Z, y = rng.standard_normal((8, 4)), rng.standard_normal(8)
        lam = 1e12 * np.linalg.norm(Z) ** 2 / (8 * 4)
        v = ridge_solve(Z, y, lam)
        assert np.linalg.norm(v) <= 1e-6 * np.linalg.norm(y) / np.linalg.norm(Z)

    def test_wide_instance(self):
        rng = np.random.default_rng(2)
        Z, y = rng.standard_normal((10, 40)), rng.standard_normal(10)
        vp, vd = ridge_solve(Z, y, 0.01), ridge_solve_dual(Z, y, 0.01)
        assert np.linalg.norm(vp - vd) <= 1e-8 * np.linalg.norm(vp)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10 ** 6), st.integers(1, 64), st.integers(1, 64), st.floats(-4, 0))
    def test_primal_dual_agree(self, seed, n, s, loglam):
        rng = np.random.default_rng(seed)
        Z, y = rng.standard_normal((n, s)), rng.standard_normal(n)
        lam = 10.0 ** loglam
        vp, vd = ridge_solve(Z, y, lam), ridge_solve_dual(Z, y, lam)
        assert np.linalg.norm(vp - vd) <= 1e-8 * max(np.linalg.norm(vp), 1e-300)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10 ** 6), st.integers(1, 40), st.integers(1, 40), st.floats(-4, 0))
    def test_first_order_condition(self, seed, n, s, loglam):
        rng = np.random.default_rng(seed)
        Z, y = rng.standard_normal((n, s)), rng.standard_normal(n)
        lam = 10.0 ** loglam
        v = ridge_solve(Z, y, lam)
        resid = Z.T @ Z @ v + lam * n * s * v - Z.T @ y
        assert np.linalg.norm(resid) <= 1e-8 * max(np.linalg.norm(Z.T @ y), 1e-12)

    def test_minimises_objective(self):
        rng = np.random.default_rng(3)
        Z, y = rng.standard_normal((15, 6)), rng.standard_normal(15)
        v = ridge_solve(Z, y, 0.05)
        best = ridge_objective(Z, y, v, 0.05)
        for _ in range(20):
            assert ridge_objective(Z, y, v + 1e-3 * rng.standard_normal(6), 0.05) >= best

    def test_bad_lambda(self):
        with pytest.raises(InvalidArgument):
            ridge_solve(np.ones((2, 2)), np.ones(2), 0.0)


class TestLosses:
    def test_mse(self):
        assert loss_eval(MSE, [1.0, 2.0], [1.0, 2.0]) == 0.0
        assert loss_eval(MSE, [0.0], [2.0]) == 4.0

    def test_binary_logit_zero(self):
        assert loss_eval(CROSS_ENTROPY, np.zeros(4), [0, 1, 1, 0]) == pytest.approx(np.log(2))
        assert np.log(2) == pytest.approx(0.69315, abs=1e-5)

    def test_multiclass_scaled(self):
        logits = np.zeros((3, 4))
        assert loss_eval(CROSS_ENTROPY, logits, [0, 1, 3]) == pytest.approx(np.log(4) / np.sqrt(2))

    def test_label_validation(self):
        with pytest.raises(InvalidArgument):
            loss_eval(CROSS_ENTROPY, np.zeros(2), [0, 2])
        with pytest.raises(InvalidArgument):
            loss_eval(CROSS_ENTROPY, np.zeros((2, 3)), [0, 3])
        with pytest.raises(InvalidArgument):
            loss_eval("hinge", [0.0], [0.0])

    def test_stable_for_large_logits(self):
        assert np.isfinite(loss_eval(CROSS_ENTROPY, np.array([800.0, -800.0]), [0, 1]))

    @pytest.mark.parametrize("shape,labels", [((5,), [0, 1, 1, 0, 1]), ((5, 3), [0, 2, 1, 1, 0])])
    def test_cross_entropy_gradient(self, shape, labels):
        p = np.random.default_rng(0).standard_normal(shape)
        g = loss_grad(CROSS_ENTROPY, p, labels)
        fd = fd_grad(lambda x: loss_eval(CROSS_ENTROPY, x.reshape(shape), labels), p.ravel())
        np.testing.assert_allclose(g.ravel(), fd, rtol=1e-6, atol=1e-9)

    def test_multiclass_lipschitz(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            p = rng.standard_normal((1, 5)) * 5
            assert np.linalg.norm(loss_grad(CROSS_ENTROPY, p, [2])) <= 1.0 + 1e-12


class TestBilinear:
    @pytest.mark.parametrize("objective", [MAIN, SENSING])
    @pytest.mark.parametrize("loss", [MSE, CROSS_ENTROPY])
    def test_gradient_matches_finite_differences(self, objective, loss):
        rng = np.random.default_rng(5)
        n, s, N = 8, 3, 4
        basis = BasisConfig.rbf((-2, 2), N)
        X = rng.standard_normal((n, 2))
        Phi = basis_tensor(X, rng.standard_normal((2, s)), basis)
        y = rng.integers(0, 2, n) if loss == CROSS_ENTROPY else rng.standard_normal(n)
        prob = BilinearObjective(objective, Phi, rng.uniform(0.5, 2, s), y, loss, 0.2, 0.4)
        for _ in range(10):
            a, v = rng.standard_normal(N), rng.standard_normal(s)
            ga, gv = prob.gradient(a, v)
            fa = fd_grad(lambda t: prob.value(t, v), a, 1e-5)
            fv = fd_grad(lambda t: prob.value(a, t), v, 1e-5)
            g, f = np.concatenate([ga, gv]), np.concatenate([fa, fv])
            assert np.linalg.norm(g - f) <= 1e-4 * np.linalg.norm(f)

    def test_minibatch_gradient_is_subset_gradient(self):
        rng = np.random.default_rng(6)
        basis = BasisConfig.rbf((-2, 2), 4)
        Phi = basis_tensor(rng.standard_normal((10, 2)), rng.standard_normal((2, 3)), basis)
        y = rng.standard_normal(10)
        idx = np.array([1, 4, 7])
        full = BilinearObjective(MAIN, Phi, np.ones(3), y, lam=0.0)
        sub = BilinearObjective(MAIN, Phi[idx], np.ones(3), y[idx], lam=0.0)
        a, v = rng.standard_normal(4), rng.standard_normal(3)
        for g1, g2 in zip(full.gradient(a, v, idx), sub.gradient(a, v)):
            np.testing.assert_allclose(g1, g2, rtol=1e-12)

    def test_balanced_penalty_is_zero(self):
        prob = BilinearObjective(SENSING, np.zeros((2, 2, 2)), np.ones(2), np.zeros(2), lam0=5.0)
        a = np.array([3.0, 4.0])
        v = np.array([0.0, 5.0])
        assert prob.penalty(a, v) == 0.0

    def test_unknown_objective(self):
        with pytest.raises(InvalidArgument):
            BilinearObjective("unknown", np.zeros((1, 1, 1)), np.ones(1), np.zeros(1))


class TestSgd:
    def test_frozen_zero_v(self):
        X, y, feats, basis = instance()
        res = sgd_joint(MAIN, X, y, feats, basis, SgdConfig(epochs=3), v0=np.zeros(feats.S),
                        train_v=False, lam=0.01)
        np.testing.assert_allclose(res.objectives, np.mean(y ** 2), rtol=1e-12)

    def test_projection_invariant(self):
        X, y, feats, basis = instance(1)
        cfg = SgdConfig(epochs=5, learning_rate=0.5, radius_scale=0.3)
        res = sgd_joint(MAIN, X, y, feats, basis, cfg, lam=1e-4)
        R = radius_bound(basis, 0.3)
        assert all(np.linalg.norm(a) <= R + 1e-12 for a in res.a_history)

    def test_sensing_is_unconstrained(self):
        X, y, feats, basis = instance(2)
        a0 = np.full(basis.n_grid, 10.0)
        res = sgd_joint(SENSING, X, y, feats, basis, SgdConfig(epochs=0), a0=a0)
        np.testing.assert_array_equal(res.a, a0)

    def test_monotone_full_batch_trace(self):
        X, y, feats, basis = instance(3)
        cfg = SgdConfig(epochs=25, learning_rate=10.0, batch_size=10 ** 6, refresh_v=True,
                        radius_scale=5.0)
        obj = sgd_joint(MAIN, X, y, feats, basis, cfg, lam=1e-4).objectives
        assert np.all(np.diff(obj) <= 1e-10)
        assert obj[-1] < obj[0]

    def test_v_near_closed_form_for_fixed_a(self):
        X, y, feats, basis = instance(4)
        a0 = np.random.default_rng(0).standard_normal(basis.n_grid) * 0.3
        lam = 1e-3
        res = sgd_joint(MAIN, X, y, feats, basis, SgdConfig(radius_scale=100.0), lam=lam,
                        a0=a0, train_a=False)
        prob = BilinearObjective(MAIN, basis_tensor(X, feats.W, basis), feats.Q, y, lam=lam)
        Z = prob.features(a0)
        best = prob.value(a0, ridge_solve(Z, y, lam))
        assert best <= prob.value(a0, res.v) <= 1.05 * best

    def test_seeded(self):
        X, y, feats, basis = instance(5)
        cfg = SgdConfig(epochs=3, seed=11)
        r1 = sgd_joint(MAIN, X, y, feats, basis, cfg)
        r2 = sgd_joint(MAIN, X, y, feats, basis, cfg)
        np.testing.assert_array_equal(r1.a, r2.a)
        np.testing.assert_array_equal(r1.v, r2.v)

    def test_divergence_detected(self):
        X, y, feats, basis = instance(6)
        with pytest.raises(DivergenceError, match="smaller learning rate"):
            sgd_joint(MAIN, X, y * 50, feats, basis,
                      SgdConfig(epochs=20, learning_rate=50.0, radius_scale=50), lam=1e-6)

    def test_trace_csv(self, tmp_path):
        X, y, feats, basis = instance(7)
        res = sgd_joint(SENSING, X, y, feats, basis, SgdConfig(epochs=2))
        res.to_csv(tmp_path / "t.csv")
        rows = (tmp_path / "t.csv").read_text().splitlines()
        assert rows[0] == "epoch,objective,grad_norm" and len(rows) == 4

    def test_classification_runs(self):
        X, y, feats, basis = instance(8)
        labels = (y > 0).astype(int)
        res = sgd_joint(MAIN, X, labels, feats, basis, SgdConfig(epochs=3),
                        loss=CROSS_ENTROPY, n_classes=2)
        assert np.all(np.isfinite(res.objectives))

    def test_weighted_features(self):
        X, y, _, basis = instance(9)
        pool = sample_pool(3, 10, 0)
        feats = select_features(pool, np.full(10, 0.1), [0, 0, 3, 9])
        res = sgd_joint(MAIN, X, y, feats, basis, SgdConfig(epochs=2))
        assert res.v.shape == (4,)

    def test_config_validation(self):
        with pytest.raises(InvalidArgument):
            SgdConfig(learning_rate=0)
        with pytest.raises(InvalidArgument):
            SgdConfig(batch_size=0)


def test_project_ball():
    np.testing.assert_allclose(project_ball(np.array([3.0, 4.0]), 1.0), [0.6, 0.8])
    np.testing.assert_array_equal(project_ball(np.array([0.1, 0.0]), 1.0), [0.1, 0.0])
