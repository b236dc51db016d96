"""
Adaptive Bayesian estimation in the Gaussian sequence model
"""

from .schemas import (
    EllipsoidSpec,
    EstimatorKind,
    EstimatorSpec,
    ExperimentConfig,
    HyperParams,
    ModelSpec,
    RegressionConfig,
    RngSpec,
    ScaleMixtureSpec,
    SmallBallConfig,
)
from .posterior import PosteriorSummary, TruncationMassError, posterior_mean, posterior_summary
from .estimators import apply_estimator
from .harness import RiskReport, evaluate_risk, run_experiment

__version__ = "0.1.0"

__all__ = [
    "EllipsoidSpec",
    "EstimatorKind",
    "EstimatorSpec",
    "ExperimentConfig",
    "HyperParams",
    "ModelSpec",
    "PosteriorSummary",
    "RegressionConfig",
    "RiskReport",
    "RngSpec",
    "ScaleMixtureSpec",
    "SmallBallConfig",
    "TruncationMassError",
    "apply_estimator",
    "evaluate_risk",
    "posterior_mean",
    "posterior_summary",
    "run_experiment",
]
