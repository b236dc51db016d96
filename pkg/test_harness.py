#!/usr/bin/env python3
"""
Tests for the benchmark families, the Monte Carlo risk harness and the small-ball probes
"""

import json
import math

import numpy as np
import pandas as pd
import pytest
from scipy.stats import norm

from seqadapt.core import in_ellipsoid, sobolev_norm_sq, trig_basis_matrix
from seqadapt.harness import (
    RISK_COLUMNS,
    SMALL_BALL_COLUMNS,
    calibrate_c3,
    evaluate_risk,
    family_in_ellipsoid,
    family_sobolev_norm_sq,
    gaussian_prior_coordinate_one_risk,
    minimax_reference,
    pinsker_constant,
    resolve_theta,
    run_experiment,
    small_ball_mc,
    small_ball_reweighted,
    small_ball_table,
    small_ball_volume_bound,
    theta_family,
    truncation_risk,
    truncation_witness,
    white_noise_curves,
)
from seqadapt.posterior import TruncationMassError
from seqadapt.schemas import (
    EllipsoidSpec,
    EstimatorSpec,
    ExperimentConfig,
    HyperParams,
    ModelSpec,
    RngSpec,
    SmallBallConfig,
)


def _config(**overrides):
    data = {
        "model": {"eps2": 1.0, "p": 20},
        "theta_family": 1,
        "B2": [1.0, 4.0],
        "reps": 40,
        "rng": {"seed": 99},
        "hp": {"k_max": 20},
    }
    data.update(overrides)
    return ExperimentConfig.model_validate(data)


class TestThetaFamilies:

    def test_values(self):
        np.testing.assert_allclose(theta_family(1, 2.0, 3), 0.2 * np.arange(1, 4) ** -0.52)
        np.testing.assert_array_equal(theta_family(2, 3.0, 4), [3.0, 0.0, 0.0, 0.0])
        np.testing.assert_allclose(theta_family(3, 1.0, 2), [0.5, 0.5 * 2**-0.65])
        assert theta_family(4, 1.0, 1)[0] == pytest.approx(math.sqrt(90) / math.pi**2)

    def test_untruncated_norms(self):
        assert family_sobolev_norm_sq(4, 2.0, 2.0) == pytest.approx(4.0 * 15 / math.pi**2, rel=1e-12)
        assert family_sobolev_norm_sq(4, 1.0, 2.0) == pytest.approx(1.5198, abs=1e-4)
        assert family_sobolev_norm_sq(2, 3.0, 10.0) == 9.0
        assert math.isinf(family_sobolev_norm_sq(1, 1.0, 0.02))

    def test_untruncated_membership(self):
        assert not family_in_ellipsoid(1, EllipsoidSpec(alpha0=0.02, B=1.0))
        assert family_in_ellipsoid(2, EllipsoidSpec(alpha0=5.0, B=1.0))

    def test_truncated_norm_below_untruncated(self):
        theta = theta_family(4, 1.0, 100)
        assert sobolev_norm_sq(theta, 2.0) < family_sobolev_norm_sq(4, 1.0, 2.0)

    def test_custom_shape_scaled(self):
        np.testing.assert_allclose(resolve_theta([1.0, 0.5], 3.0, 2), [3.0, 1.5])
        with pytest.raises(ValueError):
            resolve_theta([1.0, 0.5], 3.0, 3)

    def test_rejects_unknown_tag(self):
        with pytest.raises(ValueError):
            theta_family(5, 1.0, 10)


class TestPinsker:

    def test_constant(self):
        assert pinsker_constant(1.0) == pytest.approx(3 ** (1 / 3) * 0.5 ** (4 / 3), rel=1e-12)
        assert pinsker_constant(1.0) == pytest.approx(0.5724, abs=1e-4)

    def test_scale_invariance(self):
        assert minimax_reference(1.5, 2.0, 0.2) == pytest.approx(minimax_reference(1.5, 20.0, 2.0), rel=1e-14)

    def test_requires_small_noise(self):
        with pytest.raises(ValueError):
            minimax_reference(1.0, 1.0, 2.0)


class TestClosedFormWitnesses:

    def test_gaussian_prior_first_coordinate(self):
        for eps2 in (0.01, 0.5, 1.0):
            for B in (0.5, 1.0, 3.0):
                risk = gaussian_prior_coordinate_one_risk(B, eps2)
                expected = eps2**2 / (1 + eps2) ** 2 + eps2 / ((1 + eps2) ** 2 * B**2)
                assert risk == pytest.approx(expected, rel=1e-14)
                assert risk >= eps2**2 / (1 + eps2) ** 2

    def test_truncation_witness(self):
        spec = EllipsoidSpec(alpha0=1.5, B=2.0)
        for d in (1, 5, 30):
            theta = truncation_witness(d, spec, 50)
            assert in_ellipsoid(theta, spec)
            assert truncation_risk(theta, d, 0.01, spec.B) >= (d + 1) ** (-2 * spec.alpha0)


class TestEvaluateRisk:

    def test_mle_risk(self):
        model = ModelSpec(eps2=0.5, p=10)
        theta = theta_family(1, 2.0, 10)
        risk = evaluate_risk(EstimatorSpec(kind="mle"), theta, model, 2000, RngSpec(seed=1), B=2.0)
        assert abs(risk.mean - 10 * 0.5 / 4.0) <= 5 * risk.stderr

    def test_truncation_risk(self):
        model = ModelSpec(eps2=0.25, p=10)
        theta = theta_family(3, 1.0, 10)
        est = EstimatorSpec(kind="truncation", d=3)
        risk = evaluate_risk(est, theta, model, 2000, RngSpec(seed=2))
        assert abs(risk.mean - truncation_risk(theta, 3, 0.25, 1.0)) <= 5 * risk.stderr

    def test_deterministic(self):
        model = ModelSpec(eps2=1.0, p=10)
        theta = theta_family(1, 1.0, 10)
        est = EstimatorSpec(kind="model_selection")
        a = evaluate_risk(est, theta, model, 300, RngSpec(seed=3))
        b = evaluate_risk(est, theta, model, 300, RngSpec(seed=3))
        assert a == b

    def test_independent_of_worker_count(self):
        model = ModelSpec(eps2=1.0, p=10)
        theta = theta_family(1, 1.0, 10)
        est = EstimatorSpec(kind="model_averaging")
        serial = evaluate_risk(est, theta, model, 600, RngSpec(seed=4), workers=1)
        parallel = evaluate_risk(est, theta, model, 600, RngSpec(seed=4), workers=2)
        assert serial == parallel

    def test_strict_tail_mass(self):
        model = ModelSpec(eps2=1.0, p=5)
        est = EstimatorSpec(kind="proposed", hp=HyperParams(k_max=2))
        theta = theta_family(2, 1.0, 5)
        with pytest.raises(TruncationMassError):
            evaluate_risk(est, theta, model, 4, RngSpec(seed=6), strict=True)
        relaxed = evaluate_risk(est, theta, model, 4, RngSpec(seed=6), strict=True, tail_mass_warning=0.5)
        assert math.isfinite(relaxed.mean)

    def test_requires_two_reps(self):
        with pytest.raises(ValueError):
            evaluate_risk(EstimatorSpec(kind="mle"), np.zeros(3), ModelSpec(eps2=1.0, p=3), 1, RngSpec())


class TestRunExperiment:

    def test_report_shape(self):
        report = run_experiment(_config())
        frame = report.to_frame()
        assert list(frame.columns) == RISK_COLUMNS
        assert len(frame) == 6
        assert set(frame["estimator"]) == {"Proposed", "ModelSelection", "ModelAveraging(0.5)"}
        assert set(frame["B2"]) == {1.0, 4.0}
        assert (frame["seed"] == 99).all()

    def test_common_random_numbers(self):
        estimators = ["mle", {"kind": "truncation", "d": 20}]
        shared = run_experiment(_config(estimators=estimators, common_random_numbers=True))
        assert shared.get("MLE", 1.0).loss_mean == shared.get("Truncation(20)", 1.0).loss_mean
        separate = run_experiment(_config(estimators=estimators))
        assert separate.get("MLE", 1.0).loss_mean != separate.get("Truncation(20)", 1.0).loss_mean

    def test_serialization(self, tmp_path):
        report = run_experiment(_config(estimators=["mle"], B2=[2.0]))
        report.to_csv(tmp_path / "risk.csv")
        report.to_json(tmp_path / "risk.json")
        frame = pd.read_csv(tmp_path / "risk.csv")
        assert frame.loc[0, "estimator"] == "MLE"
        document = json.loads((tmp_path / "risk.json").read_text())
        assert document["config"]["B2"] == [2.0]
        assert document["rows"][0]["reps"] == 40

    def test_error_bars_clipped(self):
        bars = run_experiment(_config(estimators=["mle"])).error_bars()
        assert (bars["lower"] >= 0).all()
        assert (bars["upper"] > bars["loss_mean"]).all()

    def test_strict_tail_mass(self):
        cfg = _config(hp={"k_max": 2}, reps=4)
        with pytest.raises(TruncationMassError):
            run_experiment(cfg, strict=True)
        assert len(run_experiment(cfg).rows) == 6

    def test_missing_row(self):
        report = run_experiment(_config(estimators=["mle"], B2=[1.0]))
        with pytest.raises(KeyError):
            report.get("Proposed", 1.0)


@pytest.mark.slow
class TestBenchmarkOrdering:
    """Risk orderings on the slowly decaying and point-mass families at unit noise"""

    def _check_beats(self, report, winner, loser, B2):
        gap = report.get(loser, B2).loss_mean - report.get(winner, B2).loss_mean
        combined = math.hypot(report.stderr(winner, B2), report.stderr(loser, B2))
        assert gap > 2 * combined, f"{winner} vs {loser} at B2={B2}: gap {gap:.4f}, se {combined:.4f}"

    def test_slow_decay_family(self):
        cfg = ExperimentConfig.model_validate({
            "model": {"eps2": 1.0, "p": 100},
            "theta_family": 1,
            "B2": [1, 2, 3, 4, 5],
            "reps": 1000,
            "rng": {"seed": 2024},
        })
        report = run_experiment(cfg)
        for B2 in cfg.B2_values:
            self._check_beats(report, "Proposed", "ModelSelection", B2)
            self._check_beats(report, "Proposed", "ModelAveraging(0.5)", B2)

    def test_point_mass_family(self):
        cfg = ExperimentConfig.model_validate({
            "model": {"eps2": 1.0, "p": 100},
            "theta_family": 2,
            "B2": [1, 2, 3, 4, 5],
            "reps": 500,
            "rng": {"seed": 2025},
            "estimators": ["proposed", "model_selection", "model_averaging"],
        })
        report = run_experiment(cfg)
        for B2 in cfg.B2_values:
            assert report.get("Proposed", B2).loss_mean < report.get("ModelSelection", B2).loss_mean
            self._check_beats(report, "Proposed", "ModelAveraging(0.5)", B2)


class TestWhiteNoiseCurves:

    def test_default_grid(self):
        theta = theta_family(1, 1.0, 20)
        x = theta + 0.1
        frame = white_noise_curves(theta, x, {"MLE": x})
        assert len(frame) == 1000
        assert list(frame.columns) == ["t", "true", "observed", "MLE"]
        assert frame["t"].iloc[0] == pytest.approx(0.001)
        assert frame["t"].iloc[-1] == pytest.approx(1.0)
        np.testing.assert_allclose(frame["observed"], frame["MLE"])

    def test_curve_values(self):
        theta = np.array([1.0, 0.5, -0.25])
        grid = np.array([0.1, 0.6])
        frame = white_noise_curves(theta, theta, {}, grid=grid)
        np.testing.assert_allclose(frame["true"], trig_basis_matrix(3, grid) @ theta)


class TestSmallBall:

    def test_one_dimension_matches_normal(self):
        reps = 100_000
        estimate = small_ball_mc(1.0, 1, None, reps, RngSpec(seed=5), 0)
        exact = norm.cdf(1.0) - norm.cdf(-1.0)
        assert abs(estimate.probability - exact) <= 3 * estimate.std_error
        assert calibrate_c3(1.0, 1, reps, RngSpec(seed=5), 0) == pytest.approx(-math.log(estimate.probability))

    def test_reweighting_never_below_shift_penalty(self):
        alpha, reps = 1.0, 20_000
        rng = RngSpec(seed=6)
        for d in range(1, 7):
            v = 0.3 * np.arange(1, d + 1) ** (-alpha - 0.5)
            centred = small_ball_mc(alpha, d, None, reps, rng, d)
            shifted = small_ball_reweighted(alpha, d, v, reps, rng, d)
            if centred.upper_bound_only:
                continue
            penalty = math.exp(-0.5 * np.sum(np.arange(1, d + 1) ** (2 * alpha + 1) * v**2))
            assert shifted.probability >= penalty * centred.probability * (1 - 1e-12)

    def test_reweighted_without_shift_is_plain(self):
        rng = RngSpec(seed=7)
        plain = small_ball_mc(1.0, 3, None, 5000, rng, 0)
        reweighted = small_ball_reweighted(1.0, 3, np.zeros(3), 5000, rng, 0)
        assert reweighted.probability == pytest.approx(plain.probability, rel=1e-12)

    def test_volume_bound_below_estimate(self):
        reps = 50_000
        for d in range(1, 5):
            estimate = small_ball_mc(1.0, d, None, reps, RngSpec(seed=8), d)
            assert small_ball_volume_bound(1.0, d) <= estimate.probability + 5 * estimate.std_error

    def test_zero_hits_gives_upper_bound(self):
        estimate = small_ball_mc(3.0, 8, None, 10, RngSpec(seed=9), 0)
        assert estimate.upper_bound_only
        assert estimate.probability == pytest.approx(0.3)
        assert estimate.hits == 0

    def test_table(self):
        frame = small_ball_table(SmallBallConfig(d_values=[1, 2], reps=2000))
        assert list(frame.columns) == SMALL_BALL_COLUMNS
        assert list(frame["d"]) == [1, 2]
        assert (frame["c3"] > 0).all()
