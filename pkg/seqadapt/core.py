"""
Trigonometric basis, Sobolev geometry and observation simulation
"""

import logging
from typing import Optional, Sequence

import numpy as np

from .schemas import CoefVector, EllipsoidSpec, ModelSpec, RngSpec

logger = logging.getLogger(__name__)

SQRT2 = np.sqrt(2.0)

# relative slack on the ellipsoid boundary, absorbs summation rounding
ELLIPSOID_RTOL = 1e-12


def as_coef_vector(x, model: Optional[ModelSpec] = None) -> CoefVector:
    """Validate a coefficient vector and return it as a float64 array"""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"Coefficient vector must be one-dimensional, got shape {arr.shape}")
    if model is not None and arr.shape[0] != model.p:
        raise ValueError(f"Coefficient vector has length {arr.shape[0]}, expected p={model.p}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("Coefficient vector contains non-finite entries")
    return arr


def _check_grid(t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if np.any(~np.isfinite(t)) or np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError("Basis evaluation points must lie in [0, 1]")
    return t


def trig_basis_eval(i: int, t: float) -> float:
    """phi_i(t): 1 for i=1, sqrt(2) cos(2 pi k t) for i=2k, sqrt(2) sin(2 pi k t) for i=2k+1"""
    if int(i) != i or i < 1:
        raise ValueError(f"Basis index must be a positive integer, got {i}")
    t = float(_check_grid(t))
    i = int(i)
    if i == 1:
        return 1.0
    k = i // 2
    if i % 2 == 0:
        return float(SQRT2 * np.cos(2.0 * np.pi * k * t))
    return float(SQRT2 * np.sin(2.0 * np.pi * k * t))


def trig_basis_matrix(p: int, t_grid: Sequence[float]) -> np.ndarray:
    """Matrix of phi_j(t) with one row per grid point and one column per j = 1..p"""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    t = _check_grid(t_grid).reshape(-1, 1)
    j = np.arange(1, p + 1)
    angle = 2.0 * np.pi * (j // 2) * t
    basis = np.where(j % 2 == 0, SQRT2 * np.cos(angle), SQRT2 * np.sin(angle))
    basis[:, 0] = 1.0
    return basis


def sobolev_norm_sq(theta, alpha0: float) -> float:
    """Truncated Sobolev functional sum_{i<=p} i^(2 alpha0) theta_i^2"""
    theta = as_coef_vector(theta)
    i = np.arange(1, theta.shape[0] + 1, dtype=np.float64)
    return float(np.sum(i ** (2.0 * alpha0) * theta**2))


def in_ellipsoid(theta, spec: EllipsoidSpec) -> bool:
    """Membership in E(alpha0, B) using the truncated sum"""
    return sobolev_norm_sq(theta, spec.alpha0) <= spec.B**2 * (1.0 + ELLIPSOID_RTOL)


def simulate_observation(theta, model: ModelSpec, rng: RngSpec, *keys: int) -> CoefVector:
    """Draw x_i = theta_i + eps z_i from the stream rng.generator(*keys)"""
    theta = as_coef_vector(theta, model)
    z = rng.generator(*keys).standard_normal(model.p)
    return theta + model.eps * z
