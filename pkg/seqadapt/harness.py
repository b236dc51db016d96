"""
Monte Carlo risk harness.

Holds the benchmark parameter families, Pinsker's minimax reference, the
replicated risk evaluation behind the sweep experiments and the small-ball
probability probes.
"""

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import gammaln, zeta
from tqdm import tqdm

from .core import as_coef_vector, in_ellipsoid, simulate_observation, trig_basis_matrix
from .estimators import apply_estimator, coordinate_one_risk
from .posterior import DEFAULT_TAIL_MASS_WARNING
from .schemas import (
    CoefVector,
    EllipsoidSpec,
    EstimatorSpec,
    ExperimentConfig,
    ModelSpec,
    RngSpec,
    SmallBallConfig,
    ThetaFamily,
)

logger = logging.getLogger(__name__)

CHUNK_SIZE = 250

RISK_COLUMNS = ["estimator", "B2", "loss_mean", "loss_std", "reps", "seed"]
SMALL_BALL_COLUMNS = [
    "alpha", "d", "probability", "std_error", "hits", "reps", "upper_bound_only", "c3", "volume_bound",
]

# power-law families theta_i = B * scale * i^-decay
_POWER_FAMILIES = {
    1: (0.1, 0.52),
    3: (0.5, 0.65),
    4: (math.sqrt(90.0) / math.pi**2, 3.0),
}


def theta_family(tag: int, B: float, p: int) -> CoefVector:
    """Benchmark coefficient vector number tag at radius B, truncated at p"""
    if tag not in (1, 2, 3, 4):
        raise ValueError(f"Unknown theta family tag: {tag}")
    if B <= 0 or p < 1:
        raise ValueError(f"Need B > 0 and p >= 1, got B={B}, p={p}")
    if tag == 2:
        theta = np.zeros(p)
        theta[0] = B
        return theta
    scale, decay = _POWER_FAMILIES[tag]
    return B * scale * np.arange(1, p + 1, dtype=np.float64) ** (-decay)


def resolve_theta(family: ThetaFamily, B: float, p: int) -> CoefVector:
    """Family tag, or a custom shape vector given at B=1 and scaled by B"""
    if isinstance(family, int):
        return theta_family(family, B, p)
    shape = as_coef_vector(family)
    if shape.shape[0] != p:
        raise ValueError(f"Custom theta vector has length {shape.shape[0]}, expected p={p}")
    return B * shape


def family_sobolev_norm_sq(tag: int, B: float, alpha0: float) -> float:
    """Untruncated sum i^(2 alpha0) theta_i^2 for a family; inf when it diverges"""
    if tag == 2:
        return B**2
    if tag not in _POWER_FAMILIES:
        raise ValueError(f"Unknown theta family tag: {tag}")
    scale, decay = _POWER_FAMILIES[tag]
    s = 2.0 * decay - 2.0 * alpha0
    if s <= 1.0:
        return math.inf
    return float(B**2 * scale**2 * zeta(s, 1))


def family_in_ellipsoid(tag: int, spec: EllipsoidSpec) -> bool:
    return family_sobolev_norm_sq(tag, spec.B, spec.alpha0) <= spec.B**2 * (1.0 + 1e-12)


def pinsker_constant(alpha0: float) -> float:
    """(2a+1)^(1/(2a+1)) (a/(a+1))^(4a/(2a+1))"""
    if alpha0 <= 0:
        raise ValueError(f"alpha0 must be positive, got {alpha0}")
    a = alpha0
    log_c = math.log(2 * a + 1) / (2 * a + 1) + 4 * a / (2 * a + 1) * math.log(a / (a + 1))
    return math.exp(log_c)


def minimax_reference(alpha0: float, B: float, eps: float) -> float:
    """Pinsker benchmark c_P(alpha0) (eps/B)^(4 alpha0 / (2 alpha0 + 1)) for the normalized risk"""
    if not 0 < eps <= B:
        raise ValueError(f"Pinsker reference needs 0 < eps <= B, got eps={eps}, B={B}")
    return pinsker_constant(alpha0) * (eps / B) ** (4 * alpha0 / (2 * alpha0 + 1))


def truncation_witness(d: int, spec: EllipsoidSpec, p: int) -> CoefVector:
    """theta with theta_{d+1} = B (d+1)^-alpha0 and zeros elsewhere; lies on the ellipsoid boundary"""
    if not 1 <= d < p:
        raise ValueError(f"Witness needs 1 <= d < p, got d={d}, p={p}")
    theta = np.zeros(p)
    theta[d] = spec.B * (d + 1) ** (-spec.alpha0)
    return theta


def truncation_risk(theta, d: int, eps2: float, B: float) -> float:
    """Exact normalized risk (sum_{i>d} theta_i^2 + d eps^2) / B^2 of truncation at d"""
    theta = as_coef_vector(theta)
    return float((np.sum(theta[d:] ** 2) + d * eps2) / B**2)


def gaussian_prior_coordinate_one_risk(B: float, eps2: float) -> float:
    """
    Normalized first-coordinate risk at theta = (B, 0, ...) of any estimator
    shrinking x_1 by 1/(1 + eps^2), as the Gaussian and Zhao sieve priors do.
    """
    return coordinate_one_risk(1.0 / (1.0 + eps2), B, eps2) / B**2


@dataclass(frozen=True)
class RiskEstimate:
    mean: float
    std: float
    reps: int

    @property
    def stderr(self) -> float:
        return self.std / math.sqrt(self.reps)


def _loss_chunk(
    est: EstimatorSpec,
    theta: np.ndarray,
    model: ModelSpec,
    rng: RngSpec,
    key: Tuple[int, ...],
    start: int,
    stop: int,
    B: float,
    tail_mass_warning: float = DEFAULT_TAIL_MASS_WARNING,
    strict: bool = False,
) -> Tuple[int, np.ndarray]:
    """Losses for replications start..stop-1; module level so the pool can pickle it"""
    losses = np.empty(stop - start)
    for offset, r in enumerate(range(start, stop)):
        x = simulate_observation(theta, model, rng, *key, r)
        estimate = apply_estimator(est, x, model, tail_mass_warning=tail_mass_warning, strict=strict)
        losses[offset] = np.sum((estimate - theta) ** 2) / B**2
    return start, losses


def _replicated_losses(
    est: EstimatorSpec,
    theta: np.ndarray,
    model: ModelSpec,
    reps: int,
    rng: RngSpec,
    key: Tuple[int, ...],
    B: float,
    workers: int,
    progress: bool,
    tail_mass_warning: float = DEFAULT_TAIL_MASS_WARNING,
    strict: bool = False,
) -> np.ndarray:
    chunks = [(start, min(start + CHUNK_SIZE, reps)) for start in range(0, reps, CHUNK_SIZE)]
    losses = np.empty(reps)

    if workers > 1 and len(chunks) > 1:
        try:
            with ProcessPoolExecutor(max_workers=workers) as executor:
                futures = [
                    executor.submit(
                        _loss_chunk, est, theta, model, rng, key, start, stop, B, tail_mass_warning, strict
                    )
                    for start, stop in chunks
                ]
                for future in tqdm(
                    as_completed(futures), total=len(futures), disable=not progress, desc=est.label
                ):
                    start, values = future.result()
                    losses[start:start + values.shape[0]] = values
            return losses
        except (OSError, RuntimeError) as e:
            logger.warning(f"Parallel risk evaluation failed ({e}); falling back to sequential execution")

    for start, stop in tqdm(chunks, disable=not progress, desc=est.label):
        _, values = _loss_chunk(est, theta, model, rng, key, start, stop, B, tail_mass_warning, strict)
        losses[start:stop] = values
    return losses


def evaluate_risk(
    est: EstimatorSpec,
    theta,
    model: ModelSpec,
    reps: int,
    rng: RngSpec,
    *,
    B: float = 1.0,
    key: Sequence[int] = (),
    workers: int = 1,
    progress: bool = False,
    tail_mass_warning: float = DEFAULT_TAIL_MASS_WARNING,
    strict: bool = False,
) -> RiskEstimate:
    """
    Mean and sample std of ||theta_hat - theta||^2 / B^2 over reps observations.

    Replication r draws its observation from rng.generator(*key, r); losses are
    placed by replication index, so the result is the same for any worker count.
    With strict=True a truncation-mass violation raises TruncationMassError.
    """
    if reps < 2:
        raise ValueError(f"reps must be >= 2 for a standard deviation, got {reps}")
    theta = as_coef_vector(theta, model)
    losses = _replicated_losses(
        est, theta, model, reps, rng, tuple(key), B, workers, progress, tail_mass_warning, strict
    )
    if not np.all(np.isfinite(losses)):
        raise FloatingPointError(f"{est.label} produced non-finite losses")
    return RiskEstimate(mean=float(np.mean(losses)), std=float(np.std(losses, ddof=1)), reps=reps)


@dataclass(frozen=True)
class RiskRow:
    estimator: str
    B2: float
    loss_mean: float
    loss_std: float
    reps: int
    seed: int


@dataclass(frozen=True)
class RiskReport:
    """Normalized risk per (estimator, B^2) with the config that produced it"""
    rows: Tuple[RiskRow, ...]
    config: Dict[str, Any] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(row) for row in self.rows], columns=RISK_COLUMNS)

    def to_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False)

    def to_dict(self) -> Dict[str, Any]:
        return {"config": self.config, "rows": [asdict(row) for row in self.rows]}

    def to_json(self, path: Union[str, Path]) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

    def error_bars(self) -> pd.DataFrame:
        """mean +/- std with the lower bar clipped at zero"""
        frame = self.to_frame()
        frame["lower"] = np.maximum(0.0, frame["loss_mean"] - frame["loss_std"])
        frame["upper"] = frame["loss_mean"] + frame["loss_std"]
        return frame

    def get(self, estimator: str, B2: float) -> RiskRow:
        for row in self.rows:
            if row.estimator == estimator and math.isclose(row.B2, B2):
                return row
        raise KeyError(f"No row for estimator={estimator}, B2={B2}")

    def stderr(self, estimator: str, B2: float) -> float:
        row = self.get(estimator, B2)
        return row.loss_std / math.sqrt(row.reps)


def run_experiment(
    cfg: ExperimentConfig,
    workers: Optional[int] = None,
    progress: bool = False,
    tail_mass_warning: float = DEFAULT_TAIL_MASS_WARNING,
    strict: bool = False,
) -> RiskReport:
    """
    Full sweep over (estimator, B^2).

    Each pair gets its own substream key (b, e + 1); with common random
    numbers every estimator at a given B^2 uses key (b, 0) and so sees the
    same observations.
    """
    workers = workers or cfg.workers or 1
    rows: List[RiskRow] = []
    for b, B2 in enumerate(cfg.B2_values):
        B = math.sqrt(B2)
        theta = resolve_theta(cfg.theta_family, B, cfg.model.p)
        if cfg.ellipsoid is not None:
            spec = cfg.ellipsoid.model_copy(update={"B": B})
            if not in_ellipsoid(theta, spec):
                logger.info(f"theta at B2={B2} lies outside E({spec.alpha0}, B)")
        for e, est in enumerate(cfg.estimators):
            key = (b, 0) if cfg.common_random_numbers else (b, e + 1)
            logger.info(f"Evaluating {est.label} at B2={B2} with {cfg.reps} reps")
            risk = evaluate_risk(
                est, theta, cfg.model, cfg.reps, cfg.rng,
                B=B, key=key, workers=workers, progress=progress,
                tail_mass_warning=tail_mass_warning, strict=strict,
            )
            rows.append(RiskRow(
                estimator=est.label,
                B2=float(B2),
                loss_mean=risk.mean,
                loss_std=risk.std,
                reps=cfg.reps,
                seed=cfg.rng.seed,
            ))
    return RiskReport(rows=tuple(rows), config=cfg.to_dict())


def white_noise_curves(
    theta, x, estimates: Mapping[str, np.ndarray], grid: Optional[Sequence[float]] = None
) -> pd.DataFrame:
    """Function-space curves sum_i c_i phi_i(t) for the truth, the observation and each estimate"""
    theta = as_coef_vector(theta)
    if grid is None:
        grid = 0.001 * np.arange(1, 1001)
    grid = np.asarray(grid, dtype=np.float64)
    basis = trig_basis_matrix(theta.shape[0], grid)
    frame = pd.DataFrame({"t": grid, "true": basis @ theta, "observed": basis @ as_coef_vector(x)})
    for label, coefs in estimates.items():
        frame[label] = basis @ as_coef_vector(coefs)
    return frame


@dataclass(frozen=True)
class SmallBallEstimate:
    """
    Monte Carlo estimate of Pr(sum (i^(-alpha-1/2) N_i - v_i)^2 <= d^(-2 alpha)).

    With zero hits the probability field holds the 95% upper bound 3/reps and
    upper_bound_only is set.
    """
    alpha: float
    d: int
    probability: float
    std_error: float
    hits: int
    reps: int
    upper_bound_only: bool = False

    @property
    def log_probability(self) -> float:
        return math.log(self.probability)


def _check_shift(v, d: int) -> np.ndarray:
    v = np.zeros(d) if v is None else as_coef_vector(v)
    if v.shape[0] != d:
        raise ValueError(f"Shift vector has length {v.shape[0]}, expected d={d}")
    return v


def _ball_draws(alpha: float, d: int, reps: int, rng: RngSpec, keys: Tuple[int, ...]):
    if d < 1 or reps < 1:
        raise ValueError(f"Need d >= 1 and reps >= 1, got d={d}, reps={reps}")
    i = np.arange(1, d + 1, dtype=np.float64)
    N = rng.generator(*keys).standard_normal((reps, d))
    return i, N, float(d) ** (-2.0 * alpha)


def small_ball_mc(alpha: float, d: int, v, reps: int, rng: RngSpec, *keys: int) -> SmallBallEstimate:
    """Plain Monte Carlo small-ball probability"""
    v = _check_shift(v, d)
    i, N, radius2 = _ball_draws(alpha, d, reps, rng, keys)
    inside = np.sum((i ** (-alpha - 0.5) * N - v) ** 2, axis=1) <= radius2
    hits = int(np.sum(inside))
    if hits == 0:
        logger.warning(f"Small-ball probe hit nothing at d={d}, alpha={alpha} over {reps} reps")
        return SmallBallEstimate(alpha, d, 3.0 / reps, math.nan, 0, reps, upper_bound_only=True)
    prob = hits / reps
    return SmallBallEstimate(alpha, d, prob, math.sqrt(prob * (1 - prob) / reps), hits, reps)


def small_ball_reweighted(alpha: float, d: int, v, reps: int, rng: RngSpec, *keys: int) -> SmallBallEstimate:
    """
    Small-ball probability at shift v from draws of the centred ball.

    Uses Pr(v) = exp(-sum i^(2a+1) v_i^2 / 2) E[1{centred ball} cosh(sum i^(a+1/2) v_i N_i)].
    Since cosh >= 1 the estimate is never below exp(-sum i^(2a+1) v_i^2 / 2)
    times the centred estimate from the same stream.
    """
    v = _check_shift(v, d)
    i, N, radius2 = _ball_draws(alpha, d, reps, rng, keys)
    inside = np.sum(i ** (-2.0 * alpha - 1.0) * N**2, axis=1) <= radius2
    hits = int(np.sum(inside))
    if hits == 0:
        logger.warning(f"Small-ball probe hit nothing at d={d}, alpha={alpha} over {reps} reps")
        return SmallBallEstimate(alpha, d, 3.0 / reps, math.nan, 0, reps, upper_bound_only=True)
    penalty = math.exp(-0.5 * float(np.sum(i ** (2.0 * alpha + 1.0) * v**2)))
    values = np.where(inside, np.cosh(N @ (i ** (alpha + 0.5) * v)), 0.0) * penalty
    std_error = float(np.std(values, ddof=1) / math.sqrt(reps)) if reps > 1 else math.nan
    return SmallBallEstimate(alpha, d, float(np.mean(values)), std_error, hits, reps)


def small_ball_volume_bound(alpha: float, d: int) -> float:
    """
    Lower bound on the centred small-ball probability from the Gaussian density
    minimum over the ellipsoid times its volume:
    Gamma(d+1)^(a+1/2) e^(-d/2) (2 pi)^(-d/2) pi^(d/2) d^(-d a) / Gamma(d/2 + 1).
    """
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    log_bound = (
        (alpha + 0.5) * gammaln(d + 1)
        - d / 2.0
        - d / 2.0 * math.log(2 * math.pi)
        - d * alpha * math.log(d)
        + d / 2.0 * math.log(math.pi)
        - gammaln(d / 2.0 + 1)
    )
    return float(math.exp(log_bound))


def calibrate_c3(alpha: float, d: int, reps: int, rng: RngSpec, *keys: int) -> float:
    """c3 = -log Pr(centred ball) / d from a plain Monte Carlo estimate"""
    estimate = small_ball_mc(alpha, d, None, reps, rng, *keys)
    return -estimate.log_probability / d


def small_ball_table(cfg: SmallBallConfig) -> pd.DataFrame:
    """One row per d with the estimate, the fitted c3 and the volume lower bound"""
    alpha, reps, rng = cfg.alpha, cfg.reps, cfg.rng
    probe = small_ball_reweighted if cfg.method == "reweighted" else small_ball_mc
    rows = []
    for d in cfg.d_values:
        estimate = probe(alpha, d, cfg.shift_vector(d), reps, rng, d, 0)
        c3 = calibrate_c3(alpha, d, reps, rng, d, 0)
        rows.append({
            "alpha": alpha,
            "d": d,
            "probability": estimate.probability,
            "std_error": estimate.std_error,
            "hits": estimate.hits,
            "reps": estimate.reps,
            "upper_bound_only": estimate.upper_bound_only,
            "c3": c3,
            "volume_bound": small_ball_volume_bound(alpha, d),
        })
    return pd.DataFrame(rows, columns=SMALL_BALL_COLUMNS)
