"""
Estimator catalog for the Gaussian sequence model.

Every estimator is a pure, coordinate-wise odd map x -> theta_hat. The
unbiased risk criterion r_hat_d = -sum_{i<=d} x_i^2 + 2 eps^2 d drives both
model selection and exponential-weights model averaging.
"""

import logging
import math
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import logsumexp, softmax

from .core import as_coef_vector
from .posterior import DEFAULT_TAIL_MASS_WARNING, posterior_mean
from .priors import truncated_log_masses
from .schemas import CoefVector, EstimatorKind, EstimatorSpec, HyperParams, ModelSpec, ScaleMixtureSpec

logger = logging.getLogger(__name__)


def _index(p: int) -> np.ndarray:
    return np.arange(1, p + 1, dtype=np.float64)


def rhat(x, d: int, eps2: float) -> float:
    """r_hat_d = -sum_{i<=d} x_i^2 + 2 eps^2 d"""
    x = as_coef_vector(x)
    if not 1 <= d <= x.shape[0]:
        raise ValueError(f"d={d} outside 1..{x.shape[0]}")
    return float(-np.sum(x[:d] ** 2) + 2.0 * eps2 * d)


def rhat_path(x, eps2: float) -> np.ndarray:
    """r_hat_1, ..., r_hat_p"""
    x = as_coef_vector(x)
    return -np.cumsum(x**2) + 2.0 * eps2 * _index(x.shape[0])


def estimate_truncation(x, d: int) -> CoefVector:
    """Keep the first d coordinates, zero the rest"""
    x = as_coef_vector(x)
    if not 1 <= d <= x.shape[0]:
        raise ValueError(f"Truncation dimension d={d} outside 1..{x.shape[0]}")
    out = np.zeros_like(x)
    out[:d] = x[:d]
    return out


def estimate_mle(x) -> CoefVector:
    return as_coef_vector(x).copy()


def estimate_model_selection(x, model: ModelSpec) -> CoefVector:
    """Truncation at the smallest minimizer of r_hat over 1..p"""
    x = as_coef_vector(x, model)
    d_hat = int(np.argmin(rhat_path(x, model.eps2))) + 1
    return estimate_truncation(x, d_hat)


def model_averaging_weights(x, beta: float, eps2: float) -> np.ndarray:
    """Normalized w_d proportional to exp(-beta r_hat_d / (2 eps^2)), d = 1..p"""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return softmax(-beta * rhat_path(x, eps2) / (2.0 * eps2))


def estimate_model_averaging(x, beta: float, model: ModelSpec) -> CoefVector:
    """theta_hat_i = x_i sum_{d>=i} w_d"""
    if not 0 < beta <= 0.5:
        raise ValueError(f"Model averaging requires 0 < beta <= 1/2, got {beta}")
    x = as_coef_vector(x, model)
    w = model_averaging_weights(x, beta, model.eps2)
    retained = np.cumsum(w[::-1])[::-1]
    return x * np.minimum(retained, 1.0)


def estimate_gaussian_prior(x, alpha: float, model: ModelSpec, scale: float = 1.0) -> CoefVector:
    """Conjugate posterior mean under N(0, scale * i^(-2 alpha - 1)) coordinates"""
    x = as_coef_vector(x, model)
    v = scale * _index(model.p) ** (-2.0 * alpha - 1.0)
    return v / (v + model.eps2) * x


def block_partition(d_js: int, eps2: float, rho: Optional[float] = None) -> List[Tuple[int, int]]:
    """
    Weakly geometric blocks covering coordinates 1..d_js.

    Boundaries sit at ceil((1 + rho)^j) with rho = 1/log(1/eps^2) by default,
    floored at 1 so that eps^2 >= 1/e still gives dyadic blocks. Blocks are
    returned as 0-based half-open index ranges.
    """
    if d_js < 0:
        raise ValueError(f"d_js must be non-negative, got {d_js}")
    if rho is None:
        rho = 1.0 / math.log(max(1.0 / eps2, math.e))
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    blocks = []
    start, j = 1, 0
    while start <= d_js:
        j += 1
        stop = min(math.ceil((1.0 + rho) ** j), d_js + 1)
        if stop > start:
            blocks.append((start - 1, stop - 1))
            start = stop
    return blocks


def estimate_block_james_stein(
    x, model: ModelSpec, d: Optional[int] = None, rho: Optional[float] = None
) -> CoefVector:
    """
    Positive-part James-Stein on weakly geometric blocks below d_JS.

    d_JS = min(p, floor(1/eps^2)) unless d is given. Blocks of size <= 2 pass
    through unshrunk.
    """
    x = as_coef_vector(x, model)
    d_js = min(model.p, math.floor(1.0 / model.eps2)) if d is None else d
    if d_js > model.p:
        raise ValueError(f"Block James-Stein dimension {d_js} exceeds p={model.p}")
    out = np.zeros_like(x)
    for lo, hi in block_partition(d_js, model.eps2, rho):
        block = x[lo:hi]
        size = hi - lo
        if size <= 2:
            out[lo:hi] = block
            continue
        norm2 = float(np.sum(block**2))
        factor = max(0.0, 1.0 - (size - 2) * model.eps2 / norm2) if norm2 > 0 else 0.0
        out[lo:hi] = factor * block
    return out


def estimate_scale_mixture(x, spec: ScaleMixtureSpec, model: ModelSpec) -> CoefVector:
    """Bayes estimator under the discretized scale mixture of N(0, t i^(-(2 alpha + 1)))"""
    x = as_coef_vector(x, model)
    base = _index(model.p) ** (-(2.0 * spec.alpha + 1.0))
    v = spec.t_values[:, None] * base[None, :]
    factor = v / (v + model.eps2)
    with np.errstate(divide="ignore"):
        log_w = np.log(spec.weights)
    log_lik = (
        log_w
        - 0.5 * np.sum(np.log1p(v / model.eps2), axis=1)
        + np.sum(x**2 / (2.0 * model.eps2) * factor, axis=1)
    )
    post = softmax(log_lik)
    return (post @ factor) * x


def estimate_zhao_sieve(x, alpha: Optional[float], eta: float, model: ModelSpec) -> CoefVector:
    """
    Bayes estimator of Zhao's sieve prior with M(d) proportional to exp(-eta d), d <= p.

    Component d puts N(0, i^(-2 alpha - 1)) on i <= d (unit variances when
    alpha is None). The first coordinate is always x_1 / (1 + eps^2).
    """
    x = as_coef_vector(x, model)
    v = np.ones(model.p) if alpha is None else _index(model.p) ** (-2.0 * alpha - 1.0)
    factor = v / (v + model.eps2)
    increments = -0.5 * np.log1p(v / model.eps2) + x**2 / (2.0 * model.eps2) * factor
    log_w = truncated_log_masses(model.p, eta) + np.cumsum(increments)
    w = np.exp(log_w - logsumexp(log_w))
    retained = np.minimum(np.cumsum(w[::-1])[::-1], 1.0)
    return factor * retained * x


def coordinate_one_risk(factor: float, theta1: float, eps2: float) -> float:
    """Risk of c x_1 for theta_1: (1 - c)^2 theta_1^2 + c^2 eps^2"""
    return (1.0 - factor) ** 2 * theta1**2 + factor**2 * eps2


def estimate_proposed(
    x,
    hp: HyperParams,
    model: ModelSpec,
    tail_mass_warning: float = DEFAULT_TAIL_MASS_WARNING,
    strict: bool = False,
) -> CoefVector:
    """Posterior mean of the hierarchical sieve prior"""
    return posterior_mean(x, hp, model, tail_mass_warning=tail_mass_warning, strict=strict)


def apply_estimator(
    spec: EstimatorSpec,
    x,
    model: ModelSpec,
    *,
    tail_mass_warning: float = DEFAULT_TAIL_MASS_WARNING,
    strict: bool = False,
) -> CoefVector:
    """Dispatch one catalog entry; the tail-mass options reach the posterior-based entries only"""
    kind = spec.kind
    if kind == EstimatorKind.PROPOSED:
        return estimate_proposed(x, spec.hp, model, tail_mass_warning=tail_mass_warning, strict=strict)
    if kind == EstimatorKind.MODEL_SELECTION:
        return estimate_model_selection(x, model)
    if kind == EstimatorKind.MODEL_AVERAGING:
        return estimate_model_averaging(x, spec.beta, model)
    if kind == EstimatorKind.BLOCK_JAMES_STEIN:
        return estimate_block_james_stein(x, model, d=spec.d)
    if kind == EstimatorKind.GAUSSIAN_PRIOR:
        return estimate_gaussian_prior(x, spec.alpha, model)
    if kind == EstimatorKind.SCALE_MIXTURE:
        return estimate_scale_mixture(x, spec.mixture or default_scale_mixture(), model)
    if kind == EstimatorKind.ZHAO_SIEVE:
        return estimate_zhao_sieve(x, spec.alpha, spec.eta, model)
    if kind == EstimatorKind.MLE:
        return estimate_mle(as_coef_vector(x, model))
    if kind == EstimatorKind.TRUNCATION:
        return estimate_truncation(as_coef_vector(x, model), spec.d)
    raise ValueError(f"Unknown estimator kind: {kind}")


@lru_cache(maxsize=1)
def default_scale_mixture() -> ScaleMixtureSpec:
    """64-point inverse-gamma(1, 1) grid over [1e-3, 1e3] with i^-5 components"""
    return ScaleMixtureSpec.inverse_gamma()
