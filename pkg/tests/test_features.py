import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rflaf.basis import BasisConfig
from rflaf.errors import DegeneratePoolError, InvalidArgument
from rflaf.features import (UNSCALED, POOL_SCALED, LeverageWeights, WeightedFeatures,
                            importance_weights, leverage_weights, plain_features,
                            resample_weighted, sample_pool, select_features)
from rflaf.kernel import basis_tensor, effective_dimension, feature_eigenvalues, gram_empirical


def brute_leverage(Z, lam, n=None):
    n = Z.shape[0] if n is None else n
    s = Z.shape[1]
    M = Z.T @ Z
    return np.diag(M @ np.linalg.inv(M / s + n * lam * np.eye(s)))


def random_features(seed, n=30, d=3, s=20, N=6):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    pool = sample_pool(d, s, seed)
    cfg = BasisConfig.rbf((-3, 3), N)
    return pool, basis_tensor(X, pool.W, cfg) @ rng.standard_normal(N)


class TestPool:
    def test_seeded(self):
        np.testing.assert_array_equal(sample_pool(3, 5, 7).W, sample_pool(3, 5, 7).W)

    def test_mean_near_zero(self):
        W = sample_pool(2, 10000, 1).W
        assert np.all(np.abs(W.mean(axis=1)) <= 3 / np.sqrt(10000))

    def test_minimal(self):
        pool = sample_pool(1, 1, 123)
        assert pool.W.shape == (1, 1) and np.isfinite(pool.W[0, 0])

    def test_rejects_empty(self):
        with pytest.raises(InvalidArgument):
            sample_pool(0, 3, 0)


class TestLeverage:
    @pytest.mark.parametrize("n,s", [(30, 20), (10, 40), (25, 25)])
    def test_matches_brute_force(self, n, s):
        _, Z = random_features(0, n=n, s=s)
        np.testing.assert_allclose(leverage_weights(Z, 0.01).raw, brute_leverage(Z, 0.01),
                                   rtol=1e-9)

    def test_orthogonal_equal_columns(self):
        gamma, s, n = 4.0, 5, 8
        Q, _ = np.linalg.qr(np.random.default_rng(1).standard_normal((n, s)))
        Z = Q * np.sqrt(gamma)
        w = leverage_weights(Z, 0.3)
        np.testing.assert_allclose(w.q, 1.0 / s, rtol=1e-12)
        np.testing.assert_allclose(w.raw, gamma / (gamma / s + n * 0.3), rtol=1e-12)

    def test_huge_ridge_tracks_column_norms(self):
        _, Z = random_features(2, n=6, s=4)
        lam = 1e12 * np.sum(Z * Z)
        w = leverage_weights(Z, lam)
        norms = np.sum(Z * Z, axis=0)
        np.testing.assert_allclose(w.q, norms / norms.sum(), rtol=1e-6)

    def test_zero_features(self):
        with pytest.raises(DegeneratePoolError):
            leverage_weights(np.zeros((5, 4)), 0.1)

    def test_bad_lambda(self):
        with pytest.raises(InvalidArgument):
            leverage_weights(np.ones((3, 2)), 0.0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10 ** 6), st.integers(3, 40), st.integers(2, 60),
           st.floats(-4, 0))
    def test_trivial_bound(self, seed, n, s, loglam):
        _, Z = random_features(seed, n=n, s=s)
        lam = 10.0 ** loglam
        raw = leverage_weights(Z, lam).raw
        assert np.all(raw <= np.sum(Z * Z, axis=0) / (n * lam))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10 ** 6), st.integers(3, 40), st.integers(2, 60),
           st.floats(-4, 0))
    def test_total_is_scaled_effective_dimension(self, seed, n, s, loglam):
        # sum of raw scores = s * d_eff of the pool Gram, an independent route
        _, Z = random_features(seed, n=n, s=s)
        lam = 10.0 ** loglam
        raw = leverage_weights(Z, lam).raw
        d_eff = effective_dimension(feature_eigenvalues(Z), lam)
        assert raw.sum() == pytest.approx(s * d_eff, rel=1e-8, abs=1e-10)

    def test_summary(self):
        w = LeverageWeights(np.full(4, 0.25), np.ones(4), 0.1)
        assert w.summary()["q_entropy"] == pytest.approx(np.log(4))


class TestResampling:
    def test_uniform_pool_scaled_is_identity(self):
        pool = sample_pool(2, 8, 0)
        w = LeverageWeights(np.full(8, 1 / 8), np.ones(8), 0.1)
        f = resample_weighted(pool, w, 5, 1, POOL_SCALED)
        np.testing.assert_allclose(f.Q, 1.0)

    def test_uniform_literal_is_sqrt_s(self):
        pool = sample_pool(2, 8, 0)
        w = LeverageWeights(np.full(8, 1 / 8), np.ones(8), 0.1)
        f = resample_weighted(pool, w, 5, 1, UNSCALED)
        np.testing.assert_allclose(f.Q, np.sqrt(8))

    def test_point_mass(self):
        pool = sample_pool(2, 6, 0)
        q = np.eye(6)[0]
        f = resample_weighted(pool, LeverageWeights(q, q, 0.1), 7, 3)
        np.testing.assert_array_equal(f.source_indices, 0)
        np.testing.assert_array_equal(f.W, np.repeat(pool.W[:, :1], 7, axis=1))

    def test_seeded(self):
        pool, Z = random_features(4)
        w = leverage_weights(Z, 0.05)
        a = resample_weighted(pool, w, 10, 9)
        b = resample_weighted(pool, w, 10, 9)
        np.testing.assert_array_equal(a.source_indices, b.source_indices)
        np.testing.assert_array_equal(a.Q, b.Q)

    def test_zero_scores_never_drawn(self):
        pool = sample_pool(2, 5, 0)
        q = np.array([0.5, 0.0, 0.5, 0.0, 0.0])
        f = resample_weighted(pool, LeverageWeights(q, q, 0.1), 200, 0)
        assert set(f.source_indices.tolist()) <= {0, 2}

    def test_errors(self):
        pool = sample_pool(2, 5, 0)
        w = LeverageWeights(np.full(5, 0.2), np.ones(5), 0.1)
        with pytest.raises(InvalidArgument):
            resample_weighted(pool, w, 0, 0)
        with pytest.raises(InvalidArgument):
            resample_weighted(pool, w, 3, 0, "other")
        with pytest.raises(InvalidArgument):
            importance_weights(np.ones(2), 2, "other")

    def test_unbiased_gram(self):
        pool, Z = random_features(5, n=50, s=100)
        w = leverage_weights(Z, 0.02)
        acc = np.zeros((50, 50))
        for r in range(1000):
            f = resample_weighted(pool, w, 100, r)
            acc += gram_empirical(Z[:, f.source_indices] * f.Q)
        err = np.linalg.norm(acc / 1000 - gram_empirical(Z)) / np.linalg.norm(gram_empirical(Z))
        assert err <= 0.05

    def test_save_load(self, tmp_path):
        pool = sample_pool(3, 6, 0)
        f = select_features(pool, np.full(6, 1 / 6), [1, 1, 4])
        f.save(tmp_path / "f.npz")
        g = WeightedFeatures.load(tmp_path / "f.npz")
        np.testing.assert_array_equal(g.W, f.W)
        np.testing.assert_array_equal(g.Q, f.Q)
        np.testing.assert_array_equal(g.source_indices, [1, 1, 4])
        assert g.d == 3 and g.S == 3

    def test_plain_features(self):
        pool = sample_pool(3, 4, 0)
        f = plain_features(pool)
        np.testing.assert_array_equal(f.Q_matrix, np.eye(4))
