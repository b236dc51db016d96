"""
Prior families on the coefficient sequence.

The hierarchical sieve prior draws a smoothness index k ~ F and a dimension
d ~ M independently, then puts N(0, eps^2 (d/i)^(2k+1)) on coordinates
i <= d and a point mass at zero beyond d. Both F and M are geometric.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .schemas import HyperParams, ModelSpec, RngSpec, ScaleMixtureSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PriorDraws:
    """Draws from the hierarchical prior with their latent indices"""
    k: np.ndarray
    d: np.ndarray
    theta: np.ndarray

    @property
    def n(self) -> int:
        return self.theta.shape[0]


def _check_index(name: str, value: int) -> int:
    if int(value) != value or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value}")
    return int(value)


def _log_geometric(n: int, rate: float) -> float:
    # mass e^{-rate n} (e^rate - 1) written as e^{-rate (n-1)} (1 - e^{-rate})
    if rate <= 0:
        raise ValueError(f"Geometric rate must be positive, got {rate}")
    return -rate * (n - 1) + math.log(-math.expm1(-rate))


def log_M(d: int, eta: float) -> float:
    """log M(d) for M(d) proportional to exp(-eta d) on d = 1, 2, ..."""
    return _log_geometric(_check_index("d", d), eta)


def log_F(k: int, gamma: float) -> float:
    """log F(k) for F(k) proportional to exp(-gamma k) on k = 1, 2, ..."""
    return _log_geometric(_check_index("k", k), gamma)


def truncated_log_masses(n_max: int, rate: float) -> np.ndarray:
    """Geometric log-masses on 1..n_max renormalized to sum to one"""
    n_max = _check_index("n_max", n_max)
    if rate <= 0:
        raise ValueError(f"Geometric rate must be positive, got {rate}")
    log_w = -rate * np.arange(1, n_max + 1, dtype=np.float64)
    return log_w - logsumexp(log_w)


def prior_component_variance(i: int, d: int, k: int, eps2: float) -> float:
    """Variance of coordinate i under S(.|d, k): eps^2 (d/i)^(2k+1) for i <= d, else 0"""
    i = _check_index("i", i)
    d = _check_index("d", d)
    k = _check_index("k", k)
    if i > d:
        return 0.0
    return eps2 * (d / i) ** (2 * k + 1)


def component_std_matrix(d: np.ndarray, k: np.ndarray, p: int, eps2: float) -> np.ndarray:
    """Standard deviations of S(.|d,k) for each (d, k) pair, one row per pair"""
    i = np.arange(1, p + 1, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64).reshape(-1, 1)
    k = np.asarray(k, dtype=np.float64).reshape(-1, 1)
    log_sd = 0.5 * math.log(eps2) + (k + 0.5) * (np.log(d) - np.log(i))
    return np.where(i <= d, np.exp(log_sd), 0.0)


def sample_sieve_component(
    d: int, k: int, model: ModelSpec, rng: RngSpec, n: int = 1, *keys: int
) -> np.ndarray:
    """n draws from S(.|d, alpha=k), one row per draw"""
    d = _check_index("d", d)
    k = _check_index("k", k)
    if d > model.p:
        raise ValueError(f"d={d} exceeds p={model.p}")
    gen = rng.generator(*keys)
    sd = component_std_matrix(np.array([d]), np.array([k]), model.p, model.eps2)
    return sd * gen.standard_normal((n, model.p))


def sample_prior_Pi_many(
    hp: HyperParams, model: ModelSpec, rng: RngSpec, n: int, *keys: int
) -> PriorDraws:
    """n draws of (k, d, theta) from the truncated hierarchical prior"""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    d_max = hp.resolve_d_max(model)
    gen = rng.generator(*keys)
    k = 1 + gen.choice(hp.k_max, size=n, p=np.exp(truncated_log_masses(hp.k_max, hp.gamma)))
    d = 1 + gen.choice(d_max, size=n, p=np.exp(truncated_log_masses(d_max, hp.eta)))
    theta = component_std_matrix(d, k, model.p, model.eps2) * gen.standard_normal((n, model.p))
    logger.debug(f"Drew {n} prior samples with d_max={d_max}, k_max={hp.k_max}")
    return PriorDraws(k=k, d=d, theta=theta)


def sample_prior_Pi(hp: HyperParams, model: ModelSpec, rng: RngSpec, *keys: int) -> np.ndarray:
    """One draw from the hierarchical prior"""
    return sample_prior_Pi_many(hp, model, rng, 1, *keys).theta[0]


def expected_prior_sobolev_norm_sq(d: int, k: int, alpha0: float, eps2: float) -> float:
    """E[sum i^(2 alpha0) theta_i^2 | K=k, D=d] under S(.|d,k)"""
    d = _check_index("d", d)
    k = _check_index("k", k)
    i = np.arange(1, d + 1, dtype=np.float64)
    log_terms = math.log(eps2) + (2 * k + 1) * math.log(d) + (2.0 * alpha0 - 2 * k - 1) * np.log(i)
    return float(np.exp(logsumexp(log_terms)))


def gaussian_prior_variance(i: int, alpha: float) -> float:
    """Variance i^(-2 alpha - 1) of G(.|alpha)"""
    i = _check_index("i", i)
    return float(i) ** (-2.0 * alpha - 1.0)


def zhao_sieve_component_variance(i: int, d: int, alpha: Optional[float] = None) -> float:
    """
    Coordinate variance of the d-th component of Zhao's sieve prior.

    i^(-2 alpha - 1) for i <= d, zero beyond; alpha=None gives the unit-variance sieve.
    """
    i = _check_index("i", i)
    d = _check_index("d", d)
    if i > d:
        return 0.0
    return 1.0 if alpha is None else gaussian_prior_variance(i, alpha)


def scale_mixture_component_variance(i: int, t: float, spec: ScaleMixtureSpec) -> float:
    """t * i^(-(2 alpha + 1)) for mixing value t"""
    i = _check_index("i", i)
    if not t > 0:
        raise ValueError(f"Mixing value t must be positive, got {t}")
    return t * float(i) ** (-(2.0 * spec.alpha + 1.0))
