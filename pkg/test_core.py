#!/usr/bin/env python3
"""
Tests for the trigonometric basis, Sobolev geometry and observation simulation
"""

import math

import numpy as np
import pytest

from seqadapt.core import (
    as_coef_vector,
    in_ellipsoid,
    simulate_observation,
    sobolev_norm_sq,
    trig_basis_eval,
    trig_basis_matrix,
)
from seqadapt.harness import theta_family
from seqadapt.schemas import EllipsoidSpec, ModelSpec, RngSpec


class TestTrigBasis:

    def test_constant_first_element(self):
        assert trig_basis_eval(1, 0.3) == 1.0

    def test_cosine_at_zero(self):
        assert trig_basis_eval(2, 0.0) == pytest.approx(math.sqrt(2), abs=1e-12)

    def test_sine_at_quarter(self):
        assert trig_basis_eval(3, 0.25) == pytest.approx(math.sqrt(2), abs=1e-12)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            trig_basis_eval(0, 0.5)
        with pytest.raises(ValueError):
            trig_basis_eval(2, 1.5)
        with pytest.raises(ValueError):
            trig_basis_eval(2, -0.1)

    def test_matrix_matches_scalar_evaluation(self):
        grid = np.array([0.0, 0.13, 0.5, 0.77, 1.0])
        basis = trig_basis_matrix(7, grid)
        assert basis.shape == (5, 7)
        for row, t in enumerate(grid):
            for j in range(1, 8):
                assert basis[row, j - 1] == pytest.approx(trig_basis_eval(j, t), abs=1e-12)

    def test_continuum_orthonormality(self):
        # the periodic rectangle rule is exact for trigonometric polynomials of low degree
        n = 400
        grid = np.arange(n) / n
        basis = trig_basis_matrix(20, grid)
        gram = basis.T @ basis / n
        np.testing.assert_allclose(gram, np.eye(20), atol=1e-8)


class TestSobolevNorm:

    def test_single_coordinate(self):
        B = 3.0
        theta = np.zeros(10)
        theta[0] = B
        for alpha0 in (0.1, 1.0, 5.0):
            assert sobolev_norm_sq(theta, alpha0) == pytest.approx(B**2)

    def test_zero_vector(self):
        assert sobolev_norm_sq(np.zeros(5), 2.0) == 0.0

    def test_power_family_partial_sum(self):
        B = 2.0
        theta = theta_family(4, B, 100)
        i = np.arange(1, 101)
        oracle = B**2 * 90 / math.pi**4 * np.sum(i**-2.0)
        assert sobolev_norm_sq(theta, 2.0) == pytest.approx(oracle, rel=1e-12)

    def test_monotone_in_alpha_away_from_first_coordinate(self):
        rng = np.random.default_rng(42)
        theta = rng.normal(size=8)
        theta[0] = 0.0
        values = [sobolev_norm_sq(theta, a) for a in (0.5, 1.0, 1.5, 2.0)]
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_invariant_in_alpha_on_first_coordinate(self):
        theta = np.array([1.7, 0.0, 0.0])
        values = {sobolev_norm_sq(theta, a) for a in (0.3, 1.0, 4.0)}
        assert values == {1.7**2}


class TestInEllipsoid:

    def test_point_mass_on_first_coordinate(self):
        for alpha0 in (0.01, 1.0, 10.0):
            assert in_ellipsoid(theta_family(2, 3.0, 50), EllipsoidSpec(alpha0=alpha0, B=3.0))

    def test_zero_vector(self):
        assert in_ellipsoid(np.zeros(4), EllipsoidSpec(alpha0=1.0, B=0.1))

    def test_truncated_sum_of_slow_power_family(self):
        # the untruncated series diverges for alpha0 = 0.02 (see the harness
        # family checks) but the first 100 terms stay well inside the ball
        theta = theta_family(1, 1.0, 100)
        assert in_ellipsoid(theta, EllipsoidSpec(alpha0=0.02, B=1.0))

    def test_outside(self):
        theta = np.array([0.0, 1.0])
        assert not in_ellipsoid(theta, EllipsoidSpec(alpha0=1.0, B=1.0))

    def test_scaling_covariance(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            theta = rng.normal(size=6) * 0.5
            spec = EllipsoidSpec(alpha0=1.0, B=2.0)
            scaled = EllipsoidSpec(alpha0=1.0, B=5.0)
            assert in_ellipsoid(theta, spec) == in_ellipsoid(theta * 2.5, scaled)


class TestSimulateObservation:

    def test_deterministic_for_identical_keys(self):
        model = ModelSpec(eps2=1.0, p=10)
        rng = RngSpec(seed=123, stream_id=4)
        theta = np.linspace(0, 1, 10)
        np.testing.assert_array_equal(
            simulate_observation(theta, model, rng, 0), simulate_observation(theta, model, rng, 0)
        )

    def test_distinct_streams_differ(self):
        model = ModelSpec(eps2=1.0, p=10)
        theta = np.zeros(10)
        a = simulate_observation(theta, model, RngSpec(seed=1, stream_id=0), 0)
        b = simulate_observation(theta, model, RngSpec(seed=1, stream_id=1), 0)
        c = simulate_observation(theta, model, RngSpec(seed=1, stream_id=0), 1)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_tiny_noise_returns_theta(self):
        model = ModelSpec(eps2=1e-300, p=5)
        theta = np.array([1.0, -2.0, 0.5, 3.0, 0.25])
        np.testing.assert_allclose(simulate_observation(theta, model, RngSpec(), 0), theta, atol=1e-140)

    def test_moments(self):
        eps2, reps = 0.5, 20_000
        model = ModelSpec(eps2=eps2, p=3)
        theta = np.array([1.0, -0.5, 0.0])
        rng = RngSpec(seed=2024)
        draws = np.array([simulate_observation(theta, model, rng, r) for r in range(reps)])

        mean_se = math.sqrt(eps2 / reps)
        assert np.all(np.abs(draws.mean(axis=0) - theta) <= 5 * mean_se)

        var_se = eps2 * math.sqrt(2.0 / (reps - 1))
        assert np.all(np.abs(draws.var(axis=0, ddof=1) - eps2) <= 5 * var_se)

    def test_rejects_wrong_length(self):
        with pytest.raises(ValueError):
            simulate_observation(np.zeros(3), ModelSpec(eps2=1.0, p=4), RngSpec(), 0)


class TestCoefVector:

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            as_coef_vector([1.0, np.nan])

    def test_rejects_matrix(self):
        with pytest.raises(ValueError):
            as_coef_vector(np.zeros((2, 2)))


class TestRngSpec:

    def test_seed_range(self):
        RngSpec(seed=2**64 - 1)
        with pytest.raises(ValueError):
            RngSpec(seed=-1)

    def test_substream(self):
        rng = RngSpec(seed=5)
        assert rng.substream(3) == RngSpec(seed=5, stream_id=3)
