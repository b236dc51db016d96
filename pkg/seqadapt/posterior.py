"""
Exact posterior of the hierarchical sieve prior.

Given x, the posterior is again a mixture over (k, d): the index weights are
F(k|x) and M(d|x,k), and within a component coordinate i <= d is
N(s x_i, eps^2 s) with shrinkage s = r/(1+r), r = (d/i)^(2k+1). Every weight
is handled in the log domain; the exponent of the marginal likelihood can
reach thousands at p=100.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import expit, logsumexp

from .core import as_coef_vector, in_ellipsoid, simulate_observation
from .priors import gaussian_prior_variance, truncated_log_masses
from .schemas import CoefVector, EllipsoidSpec, HyperParams, ModelSpec, RngSpec

logger = logging.getLogger(__name__)

DEFAULT_TAIL_MASS_WARNING = 1e-10


class TruncationMassError(ArithmeticError):
    """Truncated-away posterior mass exceeds the configured threshold"""


@dataclass(frozen=True)
class PosteriorSummary:
    """
    Posterior weights and mean for one observation.

    log_F_post has shape (k_max,), log_M_post has shape (d_max, k_max) with
    column k-1 holding log M(d|x,k). shrink[i-1, d-1, k-1] is s(i,d,k) and is
    zero for i > d.
    """
    log_F_post: np.ndarray
    log_M_post: np.ndarray
    shrink: np.ndarray
    mean: CoefVector
    tail_mass_bound: float

    @property
    def d_max(self) -> int:
        return self.log_M_post.shape[0]

    @property
    def k_max(self) -> int:
        return self.log_M_post.shape[1]

    @property
    def log_joint(self) -> np.ndarray:
        """log of the joint (d, k) posterior masses"""
        return self.log_M_post + self.log_F_post[np.newaxis, :]


@dataclass(frozen=True)
class PosteriorDraws:
    """Exact posterior draws with the latent indices that produced them"""
    k: np.ndarray
    d: np.ndarray
    theta: np.ndarray


@lru_cache(maxsize=16)
def _sieve_tables(d_max: int, k_max: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Observation-free pieces of the joint log-weights.

    Returns the shrinkage tensor s(i,d,k) and half the log-determinant
    sum_{i<=d} log(1 + r(i,d,k)) / 2 for every (d, k).
    """
    i = np.arange(1, d_max + 1, dtype=np.float64)[:, None, None]
    d = np.arange(1, d_max + 1, dtype=np.float64)[None, :, None]
    k = np.arange(1, k_max + 1, dtype=np.float64)[None, None, :]
    log_ratio = (2.0 * k + 1.0) * (np.log(d) - np.log(i))
    active = np.broadcast_to(i <= d, log_ratio.shape)
    shrink = np.where(active, expit(log_ratio), 0.0)
    half_log_det = 0.5 * np.where(active, np.logaddexp(0.0, log_ratio), 0.0).sum(axis=0)
    shrink.setflags(write=False)
    half_log_det.setflags(write=False)
    logger.debug(f"Built sieve tables for d_max={d_max}, k_max={k_max}")
    return shrink, half_log_det


def shrinkage(i: int, d: int, k: int) -> float:
    """s(i,d,k) = r/(r+1) with r = (d/i)^(2k+1)"""
    if min(i, d, k) < 1:
        raise ValueError(f"Indices must be positive, got i={i}, d={d}, k={k}")
    if i > d:
        raise ValueError(f"Coordinate i={i} is degenerate at zero under dimension d={d}")
    return float(expit((2 * k + 1) * (math.log(d) - math.log(i))))


def joint_log_weights(x, hp: HyperParams, model: ModelSpec) -> np.ndarray:
    """
    Unnormalized joint log-weights L(d, k), shape (d_max, k_max).

    L(d,k) = log F(k) + log M(d) + sum_{i<=d} [ -log(1+r)/2 + x_i^2 s / (2 eps^2) ]
    """
    x = as_coef_vector(x, model)
    d_max = hp.resolve_d_max(model)
    shrink, half_log_det = _sieve_tables(d_max, hp.k_max)
    scaled = x[:d_max] ** 2 / (2.0 * model.eps2)
    quadratic = np.tensordot(scaled, shrink, axes=(0, 0))
    log_prior = (
        truncated_log_masses(d_max, hp.eta)[:, None]
        + truncated_log_masses(hp.k_max, hp.gamma)[None, :]
    )
    weights = log_prior - half_log_det + quadratic
    if not np.all(np.isfinite(weights)):
        raise FloatingPointError("Non-finite posterior log-weights")
    return weights


def log_M_posterior(x, k: int, hp: HyperParams, model: ModelSpec) -> np.ndarray:
    """Normalized log M(d|x,k) over d = 1..d_max"""
    if not 1 <= k <= hp.k_max:
        raise ValueError(f"k={k} outside 1..{hp.k_max}")
    column = joint_log_weights(x, hp, model)[:, k - 1]
    return column - logsumexp(column)


def log_F_posterior(x, hp: HyperParams, model: ModelSpec) -> np.ndarray:
    """Normalized log F(k|x) over k = 1..k_max"""
    per_k = logsumexp(joint_log_weights(x, hp, model), axis=0)
    return per_k - logsumexp(per_k)


def truncation_tail_mass(hp: HyperParams, d_max: int) -> float:
    """Prior mass outside {k <= k_max} x {d <= d_max}, a proxy for the truncated posterior mass"""
    kept_k = -math.expm1(-hp.gamma * hp.k_max)
    kept_d = -math.expm1(-hp.eta * d_max)
    return 1.0 - kept_k * kept_d


@lru_cache(maxsize=64)
def _report_tail_mass(tail: float, threshold: float) -> None:
    logger.warning(
        f"Truncated prior mass {tail:.3e} exceeds {threshold:.1e}; raise k_max or d_max"
    )


def posterior_summary(
    x,
    hp: HyperParams,
    model: ModelSpec,
    tail_mass_warning: float = DEFAULT_TAIL_MASS_WARNING,
    strict: bool = False,
) -> PosteriorSummary:
    """Full posterior summary: weights, shrinkage table, mean and truncation diagnostic"""
    x = as_coef_vector(x, model)
    d_max = hp.resolve_d_max(model)
    tail = truncation_tail_mass(hp, d_max)
    if tail > tail_mass_warning:
        if strict:
            raise TruncationMassError(
                f"Truncated prior mass {tail:.3e} exceeds {tail_mass_warning:.1e}"
            )
        _report_tail_mass(tail, tail_mass_warning)

    weights = joint_log_weights(x, hp, model)
    log_M_post = weights - logsumexp(weights, axis=0, keepdims=True)
    per_k = logsumexp(weights, axis=0)
    log_F_post = per_k - logsumexp(per_k)

    shrink, _ = _sieve_tables(d_max, hp.k_max)
    joint = np.exp(log_M_post + log_F_post[None, :])
    factor = np.tensordot(shrink, joint, axes=([1, 2], [0, 1]))
    mean = np.zeros(model.p)
    mean[:d_max] = factor * x[:d_max]
    return PosteriorSummary(
        log_F_post=log_F_post,
        log_M_post=log_M_post,
        shrink=shrink,
        mean=mean,
        tail_mass_bound=tail,
    )


def posterior_mean(
    x,
    hp: HyperParams,
    model: ModelSpec,
    tail_mass_warning: float = DEFAULT_TAIL_MASS_WARNING,
    strict: bool = False,
) -> CoefVector:
    """Bayes estimator: sum_k F(k|x) sum_{d>=i} M(d|x,k) s(i,d,k) x_i"""
    return posterior_summary(x, hp, model, tail_mass_warning=tail_mass_warning, strict=strict).mean


def _inverse_cdf(cumulative: np.ndarray, u: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(cumulative, u * cumulative[-1], side="right")
    return np.minimum(idx, cumulative.shape[0] - 1)


def draw_posterior(
    x, n: int, hp: HyperParams, model: ModelSpec, rng: RngSpec, *keys: int
) -> PosteriorDraws:
    """
    Exact hierarchical sampling: k ~ F(.|x), d ~ M(.|x,k), then
    theta_i ~ N(s x_i, eps^2 s) for i <= d and theta_i = 0 beyond d.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    x = as_coef_vector(x, model)
    summary = posterior_summary(x, hp, model)
    gen = rng.generator(*keys)

    k_idx = _inverse_cdf(np.cumsum(np.exp(summary.log_F_post)), gen.random(n))
    u = gen.random(n)
    d_idx = np.empty(n, dtype=np.int64)
    column_cdf = np.cumsum(np.exp(summary.log_M_post), axis=0)
    for k in np.unique(k_idx):
        rows = k_idx == k
        d_idx[rows] = _inverse_cdf(column_cdf[:, k], u[rows])

    d_max = summary.d_max
    s = summary.shrink[:, d_idx, k_idx].T
    z = gen.standard_normal((n, d_max))
    theta = np.zeros((n, model.p))
    theta[:, :d_max] = s * x[:d_max] + np.sqrt(model.eps2 * s) * z
    return PosteriorDraws(k=k_idx + 1, d=d_idx + 1, theta=theta)


def sample_posterior(
    x, n: int, hp: HyperParams, model: ModelSpec, rng: RngSpec, *keys: int
) -> List[CoefVector]:
    """n exact posterior draws as a list of coefficient vectors"""
    return list(draw_posterior(x, n, hp, model, rng, *keys).theta)


def contraction_threshold(C: float, spec: EllipsoidSpec, model: ModelSpec) -> float:
    """C (eps/B)^(4 alpha0 / (2 alpha0 + 1))"""
    if C < 0:
        raise ValueError(f"C must be non-negative, got {C}")
    rate = 4.0 * spec.alpha0 / (2.0 * spec.alpha0 + 1.0)
    return C * (model.eps / spec.B) ** rate


def posterior_tail_probability(
    theta0,
    spec: EllipsoidSpec,
    C: float,
    model: ModelSpec,
    hp: HyperParams,
    reps: int,
    rng: RngSpec,
    n_post: int = 200,
) -> float:
    """
    Monte Carlo estimate of E[ Pi(||theta - theta0||^2 / B^2 >= C (eps/B)^(4a/(2a+1)) | X) ].

    Replication r observes x from rng.generator(r, 0) and samples the posterior
    from rng.generator(r, 1), so estimates at different C share randomness and
    are monotone in C.
    """
    theta0 = as_coef_vector(theta0, model)
    if not in_ellipsoid(theta0, spec):
        raise ValueError("theta0 lies outside the ellipsoid E(alpha0, B)")
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    threshold = contraction_threshold(C, spec, model)
    fractions = np.empty(reps)
    for r in range(reps):
        x = simulate_observation(theta0, model, rng, r, 0)
        draws = draw_posterior(x, n_post, hp, model, rng, r, 1)
        loss = np.sum((draws.theta - theta0) ** 2, axis=1) / spec.B**2
        fractions[r] = np.mean(loss >= threshold)
    return float(np.mean(fractions))


def gaussian_posterior_tail_probability(
    theta0,
    spec: EllipsoidSpec,
    C: float,
    alpha: float,
    model: ModelSpec,
    reps: int,
    rng: RngSpec,
    n_post: int = 200,
) -> float:
    """The same tail probe under the plain Gaussian prior G(.|alpha)"""
    theta0 = as_coef_vector(theta0, model)
    if not in_ellipsoid(theta0, spec):
        raise ValueError("theta0 lies outside the ellipsoid E(alpha0, B)")
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    threshold = contraction_threshold(C, spec, model)
    v = np.array([gaussian_prior_variance(i, alpha) for i in range(1, model.p + 1)])
    factor = v / (v + model.eps2)
    fractions = np.empty(reps)
    for r in range(reps):
        x = simulate_observation(theta0, model, rng, r, 0)
        z = rng.generator(r, 1).standard_normal((n_post, model.p))
        draws = factor * x + np.sqrt(model.eps2 * factor) * z
        loss = np.sum((draws - theta0) ** 2, axis=1) / spec.B**2
        fractions[r] = np.mean(loss >= threshold)
    return float(np.mean(fractions))
