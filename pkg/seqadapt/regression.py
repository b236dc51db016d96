"""
Fixed-design regression through the sequence model.

Responses Y_k = f(k/n) + W_k on the grid k = 1..n are projected onto the
first p trigonometric basis vectors. Because those vectors are orthonormal
in R^n after scaling by 1/sqrt(n), the projections are exactly N(theta_j, 1/n).
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .core import as_coef_vector, trig_basis_matrix
from .posterior import DEFAULT_TAIL_MASS_WARNING, posterior_summary
from .schemas import CoefVector, EllipsoidSpec, HyperParams, ModelSpec, RngSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RegressionSample:
    """Responses on the design points 1/n, 2/n, ..., 1"""
    y: np.ndarray
    p: int

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        if y.ndim != 1 or not np.all(np.isfinite(y)):
            raise ValueError("Responses must be a finite one-dimensional array")
        if not 1 <= self.p < y.shape[0]:
            raise ValueError(f"Need 1 <= p < n, got p={self.p}, n={y.shape[0]}")
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def design(self) -> np.ndarray:
        return np.arange(1, self.n + 1) / self.n


@dataclass(frozen=True)
class FunctionEstimate:
    """Trigonometric-series estimate sum_i coefs_i phi_i"""
    coefs: np.ndarray
    eps2: Optional[float] = None

    @property
    def p(self) -> int:
        return self.coefs.shape[0]

    def __call__(self, grid: Sequence[float]) -> np.ndarray:
        return reconstruct(self, grid)


@lru_cache(maxsize=8)
def _design_basis(n: int, p: int) -> np.ndarray:
    basis = trig_basis_matrix(p, np.arange(1, n + 1) / n)
    basis.setflags(write=False)
    return basis


def design_transform(sample: RegressionSample) -> Tuple[CoefVector, float]:
    """x_j = (1/n) sum_k y_k phi_j(k/n) for j = 1..p, with noise variance 1/n"""
    if sample.p >= sample.n:
        raise ValueError(f"p={sample.p} must be smaller than n={sample.n}")
    basis = _design_basis(sample.n, sample.p)
    return basis.T @ sample.y / sample.n, 1.0 / sample.n


def estimate_regression(
    sample: RegressionSample,
    hp: HyperParams,
    tail_mass_warning: float = DEFAULT_TAIL_MASS_WARNING,
    strict: bool = False,
) -> FunctionEstimate:
    """Posterior mean of the sieve prior truncated at d_max = p, applied to the projections"""
    x, eps2 = design_transform(sample)
    model = ModelSpec(eps2=eps2, p=sample.p)
    hp = hp.model_copy(update={"d_max": sample.p})
    summary = posterior_summary(x, hp, model, tail_mass_warning=tail_mass_warning, strict=strict)
    logger.debug(f"Regression estimate with n={sample.n}, p={sample.p}")
    return FunctionEstimate(coefs=summary.mean, eps2=eps2)


def reconstruct(est: FunctionEstimate, grid: Sequence[float]) -> np.ndarray:
    """sum_{i<=p} coefs_i phi_i(t) at every grid point"""
    coefs = as_coef_vector(est.coefs)
    return trig_basis_matrix(coefs.shape[0], grid) @ coefs


def simulate_regression(theta, n: int, rng: RngSpec, *keys: int, noise_sd: float = 1.0) -> np.ndarray:
    """Responses f(k/n) + W_k for f = sum_i theta_i phi_i"""
    theta = as_coef_vector(theta)
    if theta.shape[0] >= n:
        raise ValueError(f"Coefficient vector of length {theta.shape[0]} needs n > {theta.shape[0]}")
    signal = _design_basis(n, theta.shape[0]) @ theta
    return signal + noise_sd * rng.generator(*keys).standard_normal(n)


def tau_bound(p: int, spec: EllipsoidSpec) -> float:
    """Worst-case approximation error bound B^2 p^(-2 alpha0)"""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return spec.B**2 * float(p) ** (-2.0 * spec.alpha0)


def regression_sobolev_weights(p: int, alpha0: float) -> np.ndarray:
    """a_1 = 0, a_{2k} = a_{2k+1} = (2k)^alpha0"""
    j = np.arange(1, p + 1)
    weights = (2.0 * (j // 2)) ** alpha0
    weights[0] = 0.0
    return weights


def in_periodic_sobolev(theta, spec: EllipsoidSpec) -> bool:
    """sum a_j^2 theta_j^2 <= B^2 / pi^(2 alpha0)"""
    theta = as_coef_vector(theta)
    a = regression_sobolev_weights(theta.shape[0], spec.alpha0)
    bound = spec.B**2 / np.pi ** (2.0 * spec.alpha0)
    return float(np.sum(a**2 * theta**2)) <= bound * (1.0 + 1e-12)


def regression_risk_shape(p: int, n: int, spec: EllipsoidSpec) -> float:
    """[min(p, (n B^2)^(1/(2 alpha0 + 1))) / n + B^2 p^(-2 alpha0)] / B^2"""
    if not 1 <= p < n:
        raise ValueError(f"Need 1 <= p < n, got p={p}, n={n}")
    effective = min(p, (n * spec.B**2) ** (1.0 / (2.0 * spec.alpha0 + 1.0)))
    return (effective / n + tau_bound(p, spec)) / spec.B**2


def regression_minimax_lower_shape(n: int, spec: EllipsoidSpec) -> float:
    """max over 1 <= p < n of min(p^(-2 alpha0), p / (n B^2))"""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    p = np.arange(1, n, dtype=np.float64)
    return float(np.max(np.minimum(p ** (-2.0 * spec.alpha0), p / (n * spec.B**2))))


def function_l2_error(theta_true, estimate: Union[FunctionEstimate, np.ndarray]) -> float:
    """||f - f_hat||^2 via Parseval: sum_{i<=p} (theta_i - theta_hat_i)^2 + sum_{i>p} theta_i^2"""
    theta = as_coef_vector(theta_true)
    coefs = as_coef_vector(estimate.coefs if isinstance(estimate, FunctionEstimate) else estimate)
    p = coefs.shape[0]
    padded = np.zeros(max(p, theta.shape[0]))
    padded[:theta.shape[0]] = theta
    return float(np.sum((padded[:p] - coefs) ** 2) + np.sum(padded[p:] ** 2))


def read_regression_csv(path: Union[str, Path], p: int) -> RegressionSample:
    """
    Load responses from a CSV with columns (t, y) or a single response column.

    When t is present it must be the grid 1/n, ..., 1.
    """
    frame = pd.read_csv(path)
    if "y" in frame.columns:
        y = frame["y"].to_numpy(dtype=np.float64)
    elif frame.shape[1] == 1:
        y = frame.iloc[:, 0].to_numpy(dtype=np.float64)
    else:
        raise ValueError(f"{path}: expected a 'y' column or a single response column")
    if "t" in frame.columns:
        n = y.shape[0]
        expected = np.arange(1, n + 1) / n
        if not np.allclose(frame["t"].to_numpy(dtype=np.float64), expected, atol=1e-9):
            raise ValueError(f"{path}: t column must be the design grid i/n, i = 1..{n}")
    logger.info(f"Loaded {y.shape[0]} responses from {path}")
    return RegressionSample(y=y, p=p)


def write_reconstruction_csv(path: Union[str, Path], grid: Sequence[float], values: Sequence[float]) -> None:
    pd.DataFrame({"t": np.asarray(grid, dtype=np.float64), "fhat": np.asarray(values)}).to_csv(path, index=False)
    logger.info(f"Wrote reconstruction to {path}")
