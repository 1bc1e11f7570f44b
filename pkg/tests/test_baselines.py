"""IDW, KNN, and ordinary kriging against direct-formula oracles."""

import numpy as np
import pytest

from radiomap.baselines import (IdwConfig, KnnConfig, KnnWeighting,
                                VariogramKind, VariogramModel,
                                empirical_variogram, fit_variogram,
                                idw_predict, knn_predict, kriging_predict,
                                semivariance)
from radiomap.kernels import ConstantKernel, MaternKernel


class TestIdw:
    def test_exact_at_training_point(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(8, 3))
        y = rng.normal(size=8)
        np.testing.assert_array_equal(idw_predict(X, y, X[2]), [y[2]])

    def test_symmetric_pair_averages(self):
        X = np.array([[1.0, 0.0], [-1.0, 0.0]])
        y = np.array([0.0, 10.0])
        assert idw_predict(X, y, np.zeros(2))[0] == pytest.approx(5.0)

    def test_matches_hand_rolled_weights(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(3, 3))
        y = rng.normal(size=3)
        q = rng.normal(size=3)
        d = np.linalg.norm(X - q, axis=1)
        w = d ** -2.0
        expected = (w @ y) / w.sum()
        assert idw_predict(X, y, q)[0] == pytest.approx(expected, rel=1e-12)

    def test_power_changes_weighting(self):
        X = np.array([[1.0], [3.0]])
        y = np.array([0.0, 1.0])
        p1 = idw_predict(X, y, np.array([0.0]), IdwConfig(power=1.0))[0]
        p4 = idw_predict(X, y, np.array([0.0]), IdwConfig(power=4.0))[0]
        assert p4 < p1  # higher power leans harder on the near point

    def test_empty_training_rejected(self):
        with pytest.raises(ValueError):
            idw_predict(np.zeros((0, 2)), np.zeros(0), np.zeros(2))

    def test_prediction_within_target_range(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(20, 3))
        y = rng.normal(size=20)
        preds = idw_predict(X, y, rng.normal(size=(50, 3)))
        assert preds.min() >= y.min() - 1e-12 and preds.max() <= y.max() + 1e-12


class TestKnn:
    def test_k_equals_m_uniform_is_global_mean(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(7, 2))
        y = rng.normal(size=7)
        config = KnnConfig(k=7, weighting=KnnWeighting.UNIFORM)
        assert knn_predict(X, y, rng.normal(size=2), config)[0] == pytest.approx(y.mean())

    def test_k1_is_nearest_target(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(9, 3))
        y = rng.normal(size=9)
        q = rng.normal(size=3)
        nearest = int(np.linalg.norm(X - q, axis=1).argmin())
        assert knn_predict(X, y, q, KnnConfig(k=1))[0] == pytest.approx(y[nearest])

    def test_matches_exhaustive_sort_oracle(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(15, 4))
        y = rng.normal(size=15)
        Q = rng.normal(size=(6, 4))
        config = KnnConfig(k=3)
        preds = knn_predict(X, y, Q, config)
        for qi, q in enumerate(Q):
            d = np.linalg.norm(X - q, axis=1)
            order = sorted(range(15), key=lambda i: (d[i], i))[:3]
            w = 1.0 / np.maximum(d[order], config.epsilon)
            expected = (w * y[order]).sum() / w.sum()
            assert preds[qi] == pytest.approx(expected, rel=1e-12)

    def test_distance_tie_prefers_lowest_index(self):
        X = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        y = np.array([10.0, 20.0, 30.0, 40.0])
        # all four are equidistant from the origin; k=2 must take indices 0, 1
        got = knn_predict(X, y, np.zeros(2), KnnConfig(k=2, weighting=KnnWeighting.UNIFORM))
        assert got[0] == pytest.approx(15.0)

    def test_k_larger_than_m_rejected(self):
        with pytest.raises(ValueError):
            knn_predict(np.zeros((3, 2)), np.zeros(3), np.zeros(2), KnnConfig(k=4))

    def test_exact_at_training_point_with_inverse_distance(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(10, 3))
        y = rng.normal(size=10)
        assert knn_predict(X, y, X[4])[0] == pytest.approx(y[4], abs=1e-6)


class TestVariogram:
    def test_flat_targets_fit_to_floor(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(25, 3))
        fitted = fit_variogram(X, np.full(25, 3.3))
        assert fitted.nugget == pytest.approx(0.0, abs=1e-9)
        assert fitted.sill <= 1e-6

    def test_bin_semivariances_nonnegative(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(40, 3))
        y = rng.normal(size=40)
        _, gamma_hat, counts = empirical_variogram(X, y)
        assert (gamma_hat >= 0).all() and (counts > 0).all()

    def test_recovers_exponential_field(self):
        # exponential covariance == unit-variance Matern nu=1/2 scaled by sill
        sill_true, range_true = 4.0, 0.5
        kernel = ConstantKernel(sill_true) * MaternKernel(range_true, 0.5)
        ratios = []
        for seed in range(10):
            rng = np.random.default_rng(seed)
            X = rng.uniform(0, 3, size=(120, 3))
            y = np.linalg.cholesky(kernel.gram(X) + 1e-8 * np.eye(120))
            y = y @ rng.standard_normal(120)
            fitted = fit_variogram(X, y, VariogramModel(kind=VariogramKind.EXPONENTIAL))
            ratios.append((fitted.sill / sill_true, fitted.range_ / range_true))
        med = np.median(np.array(ratios), axis=0)
        assert 0.7 <= med[0] <= 1.3
        assert 0.7 <= med[1] <= 1.3

    def test_needs_ten_points(self):
        with pytest.raises(ValueError, match="at least 10"):
            fit_variogram(np.zeros((5, 2)), np.zeros(5))

    def test_coincident_points_rejected(self):
        with pytest.raises(ValueError, match="coincide"):
            fit_variogram(np.zeros((12, 2)), np.zeros(12))

    def test_semivariance_limits(self):
        model = VariogramModel(kind=VariogramKind.EXPONENTIAL, nugget=0.5,
                               sill=2.0, range_=1.0)
        assert semivariance(model, np.array([0.0]))[0] == 0.0
        assert semivariance(model, np.array([1e-9]))[0] == pytest.approx(0.5, rel=1e-6)
        assert semivariance(model, np.array([1e3]))[0] == pytest.approx(2.5, rel=1e-6)

    def test_spherical_and_gaussian_shapes(self):
        for kind in (VariogramKind.SPHERICAL, VariogramKind.GAUSSIAN):
            model = VariogramModel(kind=kind, nugget=0.0, sill=1.0, range_=2.0)
            d = np.linspace(0.01, 10, 50)
            g = semivariance(model, d)
            assert (np.diff(g) >= -1e-12).all()
            assert g[-1] == pytest.approx(1.0, abs=1e-3)


class TestKriging:
    def make_instance(self, seed, m=12):
        rng = np.random.default_rng(seed)
        X = rng.uniform(0, 2, size=(m, 3))
        y = rng.normal(size=m)
        model = VariogramModel(nugget=0.1, sill=1.5, range_=0.8)
        return X, y, model

    def test_weights_sum_to_one_via_augmented_oracle(self):
        for seed in range(5):
            X, y, model = self.make_instance(seed)
            q = np.random.default_rng(100 + seed).uniform(0, 2, size=(1, 3))
            m = X.shape[0]
            A = np.zeros((m + 1, m + 1))
            d = np.linalg.norm(X[:, None] - X[None], axis=2)
            A[:m, :m] = semivariance(model, d)
            A[m, :m] = A[:m, m] = 1.0
            b = np.append(semivariance(model, np.linalg.norm(X - q[0], axis=1)), 1.0)
            w = np.linalg.solve(A, b)[:m]
            assert w.sum() == pytest.approx(1.0, abs=1e-8)
            mean, _ = kriging_predict(X, y, model, q)
            assert mean[0] == pytest.approx(w @ y, abs=1e-8)

    def test_constant_field_reproduced_exactly(self):
        # observable consequence of the sum-to-one constraint
        X, _, model = self.make_instance(11)
        y = np.full(X.shape[0], 7.25)
        Q = np.random.default_rng(12).uniform(0, 2, size=(20, 3))
        mean, _ = kriging_predict(X, y, model, Q)
        np.testing.assert_allclose(mean, 7.25, atol=1e-8)

    def test_exact_at_training_point_zero_nugget(self):
        X, y, _ = self.make_instance(13)
        model = VariogramModel(nugget=0.0, sill=2.0, range_=0.6)
        mean, var = kriging_predict(X, y, model, X[3])
        assert mean[0] == pytest.approx(y[3], abs=1e-6)
        assert var[0] == pytest.approx(0.0, abs=1e-8)

    def test_matches_dense_three_point_oracle(self):
        rng = np.random.default_rng(14)
        X = rng.uniform(0, 1, size=(3, 2))
        y = rng.normal(size=3)
        model = VariogramModel(nugget=0.05, sill=1.0, range_=0.5)
        q = rng.uniform(0, 1, size=(1, 2))
        A = np.zeros((4, 4))
        d = np.linalg.norm(X[:, None] - X[None], axis=2)
        A[:3, :3] = semivariance(model, d)
        A[3, :3] = A[:3, 3] = 1.0
        b = np.append(semivariance(model, np.linalg.norm(X - q[0], axis=1)), 1.0)
        sol = np.linalg.solve(A, b)
        expected_mean = sol[:3] @ y
        expected_var = sol[:3] @ b[:3] + sol[3]
        mean, var = kriging_predict(X, y, model, q)
        assert mean[0] == pytest.approx(expected_mean, rel=1e-8)
        assert var[0] == pytest.approx(expected_var, rel=1e-8, abs=1e-10)

    def test_variance_clamped_nonnegative(self):
        X, y, model = self.make_instance(15)
        _, var = kriging_predict(X, y, model, X)
        assert var.min() >= 0.0
