"""Kernel algebra: evaluation, Gram assembly, gradients, text form."""

import math

import numpy as np
import pytest

from radiomap.kernels import (ConstantKernel, MaternKernel, RBFKernel,
                              RationalQuadraticKernel, WhiteNoiseKernel,
                              composite_kernel, format_kernel, gram_diag,
                              gram_matrix, kernel_eval, parse_kernel,
                              table2_kernels)


def sample_kernels():
    """A spread of leaves and compositions exercised by the property tests."""
    return [
        ConstantKernel(2.5),
        RBFKernel(0.8),
        MaternKernel(1.2, 0.5),
        MaternKernel(0.9, 1.5),
        MaternKernel(1.1, 2.5),
        RationalQuadraticKernel(0.7, alpha=1.3),
        WhiteNoiseKernel(0.3),
        composite_kernel(4.0, 1.0, 1.5, 0.25),
        ConstantKernel(1.5) * RBFKernel(0.6) + WhiteNoiseKernel(0.05),
        (ConstantKernel(2.0) + RBFKernel(1.0)) * MaternKernel(0.8, 2.5),
        RationalQuadraticKernel(1.0, alpha=0.5) + MaternKernel(1.0, 0.5),
    ]


class TestKernelEval:
    def test_matern_at_zero_distance(self):
        x = np.array([0.3, -0.2, 1.0])
        assert kernel_eval(MaternKernel(1.0, 1.5), x, x) == pytest.approx(1.0)

    def test_composite_at_same_index(self):
        k = composite_kernel(4.0, 1.0, 1.5, 0.25)
        x = np.zeros(3)
        assert kernel_eval(k, x, x, same_index=True) == pytest.approx(4.25)
        # distinct samples at the same coordinates get no noise covariance
        assert kernel_eval(k, x, x, same_index=False) == pytest.approx(4.0)

    def test_matern_half_is_exponential(self):
        value = kernel_eval(MaternKernel(1.0, 0.5), np.zeros(1), np.ones(1))
        assert value == pytest.approx(math.exp(-1.0), rel=1e-12)

    def test_rbf_formula(self):
        d = 0.7
        value = kernel_eval(RBFKernel(0.5), np.array([0.0]), np.array([d]))
        assert value == pytest.approx(math.exp(-d * d / (2 * 0.25)), rel=1e-12)

    def test_rq_formula(self):
        d, length, alpha = 1.3, 0.9, 1.7
        value = kernel_eval(RationalQuadraticKernel(length, alpha),
                            np.array([0.0]), np.array([d]))
        assert value == pytest.approx(
            (1 + d * d / (2 * alpha * length ** 2)) ** (-alpha), rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            kernel_eval(RBFKernel(), np.zeros(2), np.zeros(3))

    @pytest.mark.parametrize("idx", range(len(sample_kernels())))
    def test_symmetry(self, idx):
        k = sample_kernels()[idx]
        rng = np.random.default_rng(idx)
        for _ in range(5):
            x, y = rng.normal(size=(2, 4))
            assert kernel_eval(k, x, y) == pytest.approx(kernel_eval(k, y, x), rel=1e-14)

    @pytest.mark.parametrize("k", [RBFKernel(0.8), MaternKernel(0.8, 0.5),
                                   MaternKernel(0.8, 1.5), MaternKernel(0.8, 2.5),
                                   RationalQuadraticKernel(0.8, alpha=1.1)])
    def test_monotone_decay_in_distance(self, k):
        dists = np.linspace(0.0, 6.0, 40)
        values = [kernel_eval(k, np.zeros(1), np.array([d])) for d in dists]
        assert all(a >= b - 1e-15 for a, b in zip(values, values[1:]))


class TestGram:
    def test_same_set_diagonal_and_symmetry(self):
        k = composite_kernel(4.0, 1.0, 1.5, 0.25)
        X = np.random.default_rng(0).normal(size=(7, 4))
        K = gram_matrix(k, X)
        np.testing.assert_allclose(K, K.T)
        np.testing.assert_allclose(np.diag(K), 4.25)

    def test_cross_gram_has_no_noise(self):
        k = composite_kernel(4.0, 1.0, 1.5, 0.25)
        X = np.random.default_rng(1).normal(size=(4, 3))
        cross = gram_matrix(k, X, X.copy())
        # same coordinates, different sample identity: pure const * matern
        np.testing.assert_allclose(np.diag(cross), 4.0)

    def test_gram_entries_match_pointwise_eval(self):
        k = sample_kernels()[9]
        rng = np.random.default_rng(2)
        X, Y = rng.normal(size=(5, 2)), rng.normal(size=(6, 2))
        K = gram_matrix(k, X, Y)
        for i in range(5):
            for j in range(6):
                assert K[i, j] == pytest.approx(kernel_eval(k, X[i], Y[j]), rel=1e-12)

    def test_diag_matches_gram(self):
        k = composite_kernel(2.0, 0.7, 2.5, 0.1)
        X = np.random.default_rng(3).normal(size=(6, 4))
        np.testing.assert_allclose(gram_diag(k, X), np.diag(gram_matrix(k, X)))
        np.testing.assert_allclose(gram_diag(k, X, include_noise=False), 2.0)

    def test_psd_random_eight_points(self):
        k = composite_kernel(3.0, 0.5, 1.5, 0.2)
        X = np.random.default_rng(4).normal(size=(8, 4))
        eigs = np.linalg.eigvalsh(gram_matrix(k, X))
        assert eigs.min() >= -1e-10

    @pytest.mark.parametrize("idx", range(len(sample_kernels())))
    def test_psd_property_up_to_fifty_points(self, idx):
        k = sample_kernels()[idx]
        rng = np.random.default_rng(100 + idx)
        for n in (5, 20, 50):
            X = rng.normal(size=(n, 3))
            K = gram_matrix(k, X)
            floor = -1e-10 * np.trace(K) / n
            assert np.linalg.eigvalsh(K).min() >= floor


def finite_difference_grads(kernel, X, step=1e-5):
    theta = kernel.theta
    grads = []
    for i in range(len(theta)):
        bump = np.zeros_like(theta)
        bump[i] = step
        plus = kernel.with_theta(theta + bump).gram(X)
        minus = kernel.with_theta(theta - bump).gram(X)
        grads.append((plus - minus) / (2 * step))
    return grads


class TestGradients:
    @pytest.mark.parametrize("idx", range(len(sample_kernels())))
    def test_matches_finite_differences(self, idx):
        k = sample_kernels()[idx]
        if not k.free_params():
            pytest.skip("no free hyperparameters")
        X = np.random.default_rng(200 + idx).normal(size=(6, 3))
        analytic = k.gradients(X)
        numeric = finite_difference_grads(k, X)
        assert len(analytic) == len(numeric)
        for a, b in zip(analytic, numeric):
            scale = np.abs(b).max() + 1e-12
            assert np.abs(a - b).max() / scale < 1e-4

    def test_constant_gradient_is_scaled_component(self):
        k = composite_kernel(4.0, 1.0, 1.5, 0.25)
        X = np.random.default_rng(5).normal(size=(5, 3))
        grads = k.gradients(X)
        product_part = (ConstantKernel(4.0) * MaternKernel(1.0, 1.5)).gram(X)
        np.testing.assert_allclose(grads[0], product_part, rtol=1e-12)

    def test_white_noise_gradient_is_diagonal(self):
        k = composite_kernel(4.0, 1.0, 1.5, 0.25)
        X = np.random.default_rng(6).normal(size=(5, 3))
        np.testing.assert_allclose(k.gradients(X)[-1], 0.25 * np.eye(5))


class TestCompositeFactory:
    def test_default_same_index_value(self):
        k = composite_kernel()
        x = np.zeros(4)
        assert kernel_eval(k, x, x, same_index=True) == pytest.approx(1.1)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            composite_kernel(constant=-1.0)
        with pytest.raises(ValueError):
            composite_kernel(noise_var=0.0)
        with pytest.raises(ValueError):
            MaternKernel(1.0, nu=1.0)

    def test_table2_has_twelve_combinations(self):
        kernels = table2_kernels()
        assert len(kernels) == 12
        assert "rbf+wn" in kernels
        for family in ("rbf", "rq", "matern"):
            for name in (family, f"{family}+wn", f"const*{family}", f"const*{family}+wn"):
                assert name in kernels

    def test_best_row_is_the_composite(self):
        best = table2_kernels(constant=1.0, length=1.0, nu=1.5, noise_var=0.1)
        assert format_kernel(best["const*matern+wn"]) == format_kernel(composite_kernel())


class TestTextForm:
    def test_round_trip(self):
        text = "const(4.0) * matern(l=1.0,nu=1.5) + white(0.25)"
        assert format_kernel(parse_kernel(text)) == text

    def test_all_leaves_round_trip(self):
        for k in sample_kernels():
            text = format_kernel(k)
            assert format_kernel(parse_kernel(text)) == text

    def test_product_binds_tighter(self):
        k = parse_kernel("const(2.0) + rbf(l=1.0) * white(0.5)")
        X = np.random.default_rng(0).normal(size=(3, 2))
        expected = (ConstantKernel(2.0) + RBFKernel(1.0) * WhiteNoiseKernel(0.5)).gram(X)
        np.testing.assert_allclose(k.gram(X), expected)

    def test_parenthesized_sum(self):
        k = parse_kernel("(const(2.0) + rbf(l=1.0)) * matern(l=0.8,nu=2.5)")
        X = np.random.default_rng(1).normal(size=(4, 2))
        expected = ((ConstantKernel(2.0) + RBFKernel(1.0)) * MaternKernel(0.8, 2.5)).gram(X)
        np.testing.assert_allclose(k.gram(X), expected)

    def test_parse_errors(self):
        for bad in ("bogus(1.0)", "const(", "matern(l=1.0,nu=2.0)", "", "const(1) +"):
            with pytest.raises(ValueError):
                parse_kernel(bad)


class TestHyperParams:
    def test_theta_excludes_fixed(self):
        k = ConstantKernel(2.0, bounds=(2.0, 2.0)) * MaternKernel(1.0, 1.5)
        assert len(k.theta) == 1
        k2 = k.with_theta(np.array([math.log(0.5)]))
        assert k2.left.constant.value == 2.0
        assert k2.right.length.value == pytest.approx(0.5)

    def test_with_theta_round_trip(self):
        k = composite_kernel(2.0, 0.5, 1.5, 0.1)
        np.testing.assert_allclose(k.with_theta(k.theta).theta, k.theta)

    def test_bounds_validated(self):
        from radiomap.kernels import HyperParam
        with pytest.raises(ValueError):
            HyperParam(0.5, 1.0, 2.0)
        with pytest.raises(ValueError):
            HyperParam(3.0, 1.0, 2.0)

    def test_constructor_widens_default_bounds_to_value(self):
        # explicit out-of-default values must stay constructible
        k = ConstantKernel(1e4)
        assert k.constant.upper >= 1e4
