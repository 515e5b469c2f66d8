import numpy as np
import pytest

from imclab import (
    DriftCertificate,
    ErgodicityConstants,
    FiniteKernel,
    FiniteMeasure,
    NonGeometricDecayError,
    ReducibleChainError,
    apply_kernel,
    fit_drift,
    fit_ergodicity_constants,
    iterate_kernel,
    kernel_from_json,
    kernel_to_json,
    measure_from_json,
    measure_to_json,
    stationary_distribution,
    v_distance_kernels,
    v_norm_function,
    v_norm_measure,
)

TWO_STATE = np.array([[0.9, 0.1], [0.2, 0.8]])


def random_kernel(rng, n):
    return FiniteKernel(rng.dirichlet(np.ones(n), size=n))


def power_iteration(rows, tol=1e-14, max_iter=500_000):
    """Independent stationary-distribution oracle."""
    pi = np.full(rows.shape[0], 1.0 / rows.shape[0])
    for _ in range(max_iter):
        nxt = pi @ rows
        if np.abs(nxt - pi).sum() < tol:
            return nxt / nxt.sum()
        pi = nxt
    return pi / pi.sum()


class TestKernelTypes:
    def test_rejects_non_square(self):
        with pytest.raises(ValueError, match="square"):
            FiniteKernel(np.ones((2, 3)) / 3)

    def test_rejects_bad_row_sum(self):
        with pytest.raises(ValueError, match="sums to"):
            FiniteKernel(np.array([[0.5, 0.4], [0.5, 0.5]]))

    def test_rejects_negative(self):
        with pytest.raises(ValueError, match="nonnegative"):
            FiniteKernel(np.array([[1.1, -0.1], [0.5, 0.5]]))

    def test_measure_probability_check(self):
        FiniteMeasure(np.array([0.25, 0.75]))
        with pytest.raises(ValueError):
            FiniteMeasure(np.array([0.25, 0.85]))
        FiniteMeasure(np.array([2.0, 3.0]), probability=False)

    def test_ergodicity_constants_invariant(self):
        c = ErgodicityConstants.from_fit(1.5, 0.6)
        assert c.l == max(1.5, 2.5)
        with pytest.raises(ValueError, match="max"):
            ErgodicityConstants(c=1.5, rho=0.6, l=3.0)

    def test_drift_certificate_ranges(self):
        DriftCertificate(lam=0.5, b=0.5)
        with pytest.raises(ValueError):
            DriftCertificate(lam=1.0, b=0.5)


class TestApplyIterate:
    def test_identity_kernel(self):
        f = np.array([3.0, -1.0, 2.0])
        assert np.array_equal(apply_kernel(np.eye(3), f), f)

    def test_rank_one_kernel_gives_constant(self):
        mu = np.array([0.2, 0.5, 0.3])
        k = np.vstack([mu, mu, mu])
        f = np.array([1.0, 2.0, 3.0])
        np.testing.assert_allclose(apply_kernel(k, f), np.full(3, mu @ f), rtol=0, atol=1e-15)

    def test_two_state_arithmetic(self):
        np.testing.assert_allclose(
            apply_kernel(TWO_STATE, np.array([0.0, 1.0])), [0.1, 0.8], atol=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            apply_kernel(TWO_STATE, np.zeros(3))

    def test_iterate_zero_is_identity(self):
        k = random_kernel(np.random.default_rng(0), 4)
        assert np.array_equal(iterate_kernel(k, 0).rows, np.eye(4))

    def test_iterate_one_is_kernel(self):
        k = random_kernel(np.random.default_rng(1), 3)
        np.testing.assert_allclose(iterate_kernel(k, 1).rows, k.rows, atol=0)

    def test_iterate_two_hand_product(self):
        np.testing.assert_allclose(
            iterate_kernel(TWO_STATE, 2).rows, [[0.83, 0.17], [0.34, 0.66]], atol=1e-15)

    def test_row_stochastic_after_200_iterations(self):
        rng = np.random.default_rng(2)
        for n in (2, 5, 17):
            k = random_kernel(rng, n)
            rows = iterate_kernel(k, 200).rows
            assert np.all(rows >= -1e-10)
            np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-10)


class TestStationary:
    def test_two_state_closed_form(self):
        # exit rates a=0.1, b=0.2 give pi = (b, a) / (a + b)
        pi = stationary_distribution(TWO_STATE)
        np.testing.assert_allclose(pi, [2 / 3, 1 / 3], atol=1e-14)

    def test_doubly_stochastic_gives_uniform(self):
        k = np.array([
            [0.2, 0.5, 0.3],
            [0.3, 0.2, 0.5],
            [0.5, 0.3, 0.2],
        ])
        np.testing.assert_allclose(stationary_distribution(k), np.full(3, 1 / 3), atol=1e-13)

    def test_residual_and_power_iteration_agreement(self):
        rng = np.random.default_rng(3)
        for n in (3, 8, 25):
            k = random_kernel(rng, n)
            pi = stationary_distribution(k)
            assert np.abs(pi @ k.rows - pi).sum() <= 1e-12
            np.testing.assert_allclose(pi, power_iteration(k.rows), atol=1e-8)

    def test_reducible_kernel_raises(self):
        k = np.array([
            [0.5, 0.5, 0.0, 0.0],
            [0.5, 0.5, 0.0, 0.0],
            [0.0, 0.0, 0.7, 0.3],
            [0.0, 0.0, 0.3, 0.7],
        ])
        with pytest.raises(ReducibleChainError):
            stationary_distribution(k)


class TestNorms:
    def test_function_norm_of_weight_itself(self):
        v = np.array([1.0, 2.0, 5.0])
        assert v_norm_function(v, v) == 1.0

    def test_function_norm_zero(self):
        assert v_norm_function(np.zeros(3), np.ones(3)) == 0.0

    def test_function_norm_example(self):
        assert v_norm_function(np.array([2.0, 3.0]), np.array([1.0, 2.0])) == 2.0

    def test_weight_below_one_rejected(self):
        with pytest.raises(ValueError, match="v >= 1"):
            v_norm_function(np.ones(2), np.array([1.0, 0.5]))

    def test_measure_norm_zero(self):
        assert v_norm_measure(np.zeros(4), np.ones(4)) == 0.0

    def test_measure_norm_is_total_variation_mass_for_unit_weight(self):
        rng = np.random.default_rng(4)
        mu = rng.normal(size=6)
        assert v_norm_measure(mu, np.ones(6)) == pytest.approx(np.abs(mu).sum(), abs=1e-15)

    def test_measure_norm_example(self):
        assert v_norm_measure(np.array([0.5, -0.5]), np.array([1.0, 3.0])) == 2.0

    def test_kernel_distance_zero_and_symmetry(self):
        rng = np.random.default_rng(5)
        k1, k2 = random_kernel(rng, 4), random_kernel(rng, 4)
        v = 1.0 + rng.random(4)
        assert v_distance_kernels(k1, k1, v) == 0.0
        assert v_distance_kernels(k1, k2, v) == v_distance_kernels(k2, k1, v)

    def test_kernel_distance_triangle_inequality(self):
        rng = np.random.default_rng(6)
        for _ in range(25):
            n = int(rng.integers(2, 7))
            a, b, c = (random_kernel(rng, n) for _ in range(3))
            v = 1.0 + rng.random(n) * 3
            dab = v_distance_kernels(a, b, v)
            dbc = v_distance_kernels(b, c, v)
            dac = v_distance_kernels(a, c, v)
            assert dac <= dab + dbc + 1e-12


class TestErgodicityFit:
    def test_two_state_rate_matches_second_eigenvalue(self):
        pi = stationary_distribution(TWO_STATE)
        fit = fit_ergodicity_constants(TWO_STATE, pi, np.ones(2), 1.0, 40)
        assert fit.rho == pytest.approx(0.7, abs=0.01)
        assert fit.l == max(fit.c, 1 / (1 - fit.rho))

    def test_rank_one_kernel_degenerate_path(self):
        nu = np.array([0.3, 0.7])
        k = np.vstack([nu, nu])
        fit = fit_ergodicity_constants(k, nu, np.ones(2), 1.0, 20)
        assert fit.rho == 1e-6
        assert fit.c >= 1.0

    def test_identity_kernel_raises(self):
        with pytest.raises(NonGeometricDecayError):
            fit_ergodicity_constants(np.eye(2), np.array([0.5, 0.5]), np.ones(2), 1.0, 20)

    def test_certificate_dominates_observed_decay(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            n = int(rng.integers(2, 9))
            k = random_kernel(rng, n)
            pi = stationary_distribution(k)
            v = 1.0 + rng.random(n) * 4
            alpha = float(rng.uniform(0.2, 1.0))
            fit = fit_ergodicity_constants(k, pi, v, alpha, 30)
            limit = np.outer(np.ones(n), pi)
            va = v**alpha
            power = np.eye(n)
            for lag in range(31):
                d = max(np.abs(power - limit) @ va / va)
                assert d <= fit.c * fit.rho**lag + 1e-12
                power = power @ k.rows


class TestDriftFit:
    def test_unit_weight_returns_half_half(self):
        k = random_kernel(np.random.default_rng(8), 3)
        cert = fit_drift(k, np.ones(3))
        assert (cert.lam, cert.b) == (0.5, 0.5)

    def test_rank_one_kernel_certificate(self):
        nu = np.array([0.1, 0.6, 0.3])
        v = np.array([1.0, 4.0, 9.0])
        k = np.vstack([nu, nu, nu])
        cert = fit_drift(k, v)
        assert cert.lam == 0.5
        # the stated certificate (0.5, nu(v)) is valid; the fit must be no worse
        assert cert.b <= nu @ v
        np.testing.assert_array_less(k @ v, cert.lam * v + cert.b + 1e-10)

    def test_certificate_valid_pointwise_on_random_instances(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            n = int(rng.integers(2, 10))
            k = random_kernel(rng, n)
            v = 1.0 + rng.random(n) * 10
            cert = fit_drift(k, v)
            assert np.all(k.rows @ v <= cert.lam * v + cert.b + 1e-10)


class TestSerialization:
    def test_kernel_round_trip(self):
        k = random_kernel(np.random.default_rng(10), 4)
        back = kernel_from_json(kernel_to_json(k))
        assert np.array_equal(back.rows, k.rows)

    def test_measure_round_trip(self):
        m = FiniteMeasure(np.array([0.125, 0.5, 0.375]))
        back = measure_from_json(measure_to_json(m))
        assert np.array_equal(back.weights, m.weights)
