"""
Domain types for the Gaussian sequence model toolkit.

Validated inputs are frozen pydantic models; array-carrying results live in
the modules that produce them as frozen dataclasses.
"""

import math
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import stats
from scipy.special import softmax

CoefVector = np.ndarray

MAX_SEED = 2**64 - 1


class EllipsoidSpec(BaseModel):
    """Sobolev ellipsoid E(alpha0, B)"""
    model_config = ConfigDict(frozen=True)

    alpha0: float = Field(gt=0)
    B: float = Field(gt=0)


class ModelSpec(BaseModel):
    """Noise level and truncation dimension of the sequence model"""
    model_config = ConfigDict(frozen=True)

    eps2: float = Field(gt=0)
    p: int = Field(ge=1)

    @property
    def eps(self) -> float:
        return math.sqrt(self.eps2)


class RngSpec(BaseModel):
    """
    Deterministic random stream.

    Every draw in the package goes through ``generator(*keys)``, which keys a
    counter-based Philox generator by (seed, stream_id, *keys). Replication r
    of a sweep asks for ``generator(..., r)`` so the result does not depend on
    which worker computed it.
    """
    model_config = ConfigDict(frozen=True)

    seed: int = Field(default=0, ge=0, le=MAX_SEED)
    stream_id: int = Field(default=0, ge=0)

    def generator(self, *keys: int) -> np.random.Generator:
        entropy = [int(self.seed), int(self.stream_id)] + [int(k) for k in keys]
        if any(k < 0 for k in entropy):
            raise ValueError(f"RNG keys must be non-negative, got {entropy}")
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

    def substream(self, stream_id: int) -> "RngSpec":
        return RngSpec(seed=self.seed, stream_id=stream_id)


class HyperParams(BaseModel):
    """Hyperparameters of the hierarchical sieve prior"""
    model_config = ConfigDict(frozen=True)

    eta: float = Field(default=2.0, gt=0)
    gamma: float = Field(default=2.0, gt=0)
    k_max: int = Field(default=50, ge=1)
    d_max: Optional[int] = Field(default=None, ge=1)

    def resolve_d_max(self, model: ModelSpec) -> int:
        """d_max for this model; defaults to p"""
        if self.d_max is None:
            return model.p
        if self.d_max > model.p:
            raise ValueError(f"d_max={self.d_max} exceeds the truncation dimension p={model.p}")
        return self.d_max


class ScaleMixtureSpec(BaseModel):
    """Discretized scale mixture over t with component variances t * i^-(2*alpha+1)"""
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(default=2.0, gt=0)
    grid: Tuple[Tuple[float, float], ...]

    @field_validator("grid", mode="before")
    @classmethod
    def normalize_grid(cls, v):
        pairs = [(float(t), float(w)) for t, w in v]
        if not pairs:
            raise ValueError("Scale mixture grid cannot be empty")
        ts = [t for t, _ in pairs]
        ws = [w for _, w in pairs]
        if any(t <= 0 or not math.isfinite(t) for t in ts):
            raise ValueError("Scale mixture grid values t must be positive and finite")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("Scale mixture grid values t must be strictly increasing")
        if any(w < 0 or not math.isfinite(w) for w in ws):
            raise ValueError("Scale mixture weights must be non-negative and finite")
        total = math.fsum(ws)
        if total <= 0:
            raise ValueError("Scale mixture weights must have positive total")
        return tuple((t, w / total) for t, w in pairs)

    @property
    def t_values(self) -> np.ndarray:
        return np.array([t for t, _ in self.grid])

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.grid])

    @classmethod
    def inverse_gamma(
        cls,
        n: int = 64,
        t_min: float = 1e-3,
        t_max: float = 1e3,
        shape: float = 1.0,
        rate: float = 1.0,
        alpha: float = 2.0,
        weighting: str = "density",
    ) -> "ScaleMixtureSpec":
        """
        Geometric grid over [t_min, t_max] carrying an inverse-gamma(shape, rate) law.

        weighting="density" weights each grid point by the density at that point;
        weighting="mass" uses the CDF mass of the geometric cell around it.
        """
        if n < 1 or not 0 < t_min < t_max:
            raise ValueError(f"Invalid grid request n={n}, t_min={t_min}, t_max={t_max}")
        law = stats.invgamma(a=shape, scale=rate)
        ts = np.geomspace(t_min, t_max, n)
        if weighting == "density":
            # far-tail nodes underflow to weight 0 but stay on the grid
            ws = softmax(law.logpdf(ts))
        elif weighting == "mass":
            log_ts = np.log(ts)
            edges = np.concatenate(([-np.inf], (log_ts[1:] + log_ts[:-1]) / 2, [np.inf]))
            ws = np.diff(law.cdf(np.exp(edges)))
        else:
            raise ValueError(f"Unknown weighting: {weighting}")
        return cls(alpha=alpha, grid=list(zip(ts, ws)))


class EstimatorKind(str, Enum):
    """Estimators in the catalog"""
    PROPOSED = "proposed"
    MODEL_SELECTION = "model_selection"
    MODEL_AVERAGING = "model_averaging"
    BLOCK_JAMES_STEIN = "block_james_stein"
    GAUSSIAN_PRIOR = "gaussian_prior"
    SCALE_MIXTURE = "scale_mixture"
    ZHAO_SIEVE = "zhao_sieve"
    MLE = "mle"
    TRUNCATION = "truncation"


_LABELS = {
    EstimatorKind.PROPOSED: "Proposed",
    EstimatorKind.MODEL_SELECTION: "ModelSelection",
    EstimatorKind.MODEL_AVERAGING: "ModelAveraging",
    EstimatorKind.BLOCK_JAMES_STEIN: "BlockJamesStein",
    EstimatorKind.GAUSSIAN_PRIOR: "GaussianPrior",
    EstimatorKind.SCALE_MIXTURE: "ScaleMixture",
    EstimatorKind.ZHAO_SIEVE: "ZhaoSieve",
    EstimatorKind.MLE: "MLE",
    EstimatorKind.TRUNCATION: "Truncation",
}


class EstimatorSpec(BaseModel):
    """
    One member of the estimator catalog together with its parameters.

    beta is used by ModelAveraging, alpha by GaussianPrior and ZhaoSieve
    (None there means the unit-variance sieve), d by Truncation and as an
    optional truncation override for BlockJamesStein, mixture by
    ScaleMixture and hp by Proposed.
    """
    model_config = ConfigDict(frozen=True)

    kind: EstimatorKind
    beta: Optional[float] = None
    alpha: Optional[float] = None
    d: Optional[int] = None
    eta: float = Field(default=2.0, gt=0)
    mixture: Optional[ScaleMixtureSpec] = None
    hp: HyperParams = Field(default_factory=HyperParams)

    @model_validator(mode="before")
    @classmethod
    def fill_defaults(cls, data: Any) -> Any:
        if isinstance(data, str):
            data = {"kind": data}
        if isinstance(data, dict):
            data = dict(data)
            kind = data.get("kind")
            # str-valued enum, so plain strings compare equal
            if kind == EstimatorKind.MODEL_AVERAGING and data.get("beta") is None:
                data["beta"] = 0.5
            if kind == EstimatorKind.GAUSSIAN_PRIOR and data.get("alpha") is None:
                data["alpha"] = 1.0
        return data

    @model_validator(mode="after")
    def check_parameters(self) -> "EstimatorSpec":
        if self.kind == EstimatorKind.MODEL_AVERAGING:
            if not 0 < self.beta <= 0.5:
                raise ValueError(f"ModelAveraging requires 0 < beta <= 1/2, got beta={self.beta}")
        if self.kind == EstimatorKind.TRUNCATION and self.d is None:
            raise ValueError("Truncation requires a dimension d")
        if self.d is not None and self.d < 1:
            raise ValueError(f"Truncation dimension must be >= 1, got d={self.d}")
        if self.alpha is not None and self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        return self

    @property
    def label(self) -> str:
        name = _LABELS[self.kind]
        if self.kind == EstimatorKind.MODEL_AVERAGING:
            return f"{name}({self.beta:g})"
        if self.kind == EstimatorKind.GAUSSIAN_PRIOR:
            return f"{name}({self.alpha:g})"
        if self.kind == EstimatorKind.ZHAO_SIEVE:
            return f"{name}({'unit' if self.alpha is None else format(self.alpha, 'g')})"
        if self.kind == EstimatorKind.TRUNCATION:
            return f"{name}({self.d})"
        if self.kind == EstimatorKind.BLOCK_JAMES_STEIN and self.d is not None:
            return f"{name}({self.d})"
        return name


ThetaFamily = Union[int, List[float]]

DEFAULT_ESTIMATORS = ("proposed", "model_selection", "model_averaging")


def _parse_family(v):
    if isinstance(v, str):
        tag = v.lower()
        if tag.startswith("theta"):
            tag = tag[len("theta"):]
        if not tag.isdigit():
            raise ValueError(f"Unknown theta family: {v}")
        v = int(tag)
    if isinstance(v, int) and not isinstance(v, bool):
        if v not in (1, 2, 3, 4):
            raise ValueError(f"theta_family tag must be one of 1, 2, 3, 4, got {v}")
        return v
    return [float(c) for c in v]


class ExperimentConfig(BaseModel):
    """
    Monte Carlo sweep over estimators and B^2 values.

    Estimators given without their own hp (or beta for model averaging)
    inherit the experiment-level values.
    """
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    model: ModelSpec
    ellipsoid: Optional[EllipsoidSpec] = None
    estimators: List[EstimatorSpec]
    theta_family: ThetaFamily
    B2_values: List[float] = Field(alias="B2")
    reps: int = Field(default=1000, ge=1)
    rng: RngSpec = Field(default_factory=RngSpec)
    hp: HyperParams = Field(default_factory=HyperParams)
    beta: float = 0.5
    workers: Optional[int] = Field(default=None, ge=1)
    common_random_numbers: bool = False

    @model_validator(mode="before")
    @classmethod
    def inherit_defaults(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        hp = data.get("hp")
        beta = data.get("beta")
        entries = []
        for entry in data.get("estimators") or DEFAULT_ESTIMATORS:
            if isinstance(entry, str):
                entry = {"kind": entry}
            if isinstance(entry, dict):
                entry = dict(entry)
                if hp is not None:
                    entry.setdefault("hp", hp)
                if beta is not None and entry.get("kind") == EstimatorKind.MODEL_AVERAGING:
                    entry.setdefault("beta", beta)
            entries.append(entry)
        data["estimators"] = entries
        return data

    @field_validator("theta_family", mode="before")
    @classmethod
    def validate_family(cls, v):
        return _parse_family(v)

    @field_validator("B2_values")
    @classmethod
    def validate_b2(cls, v):
        if not v:
            raise ValueError("B2 values cannot be empty")
        if any(b <= 0 or not math.isfinite(b) for b in v):
            raise ValueError("B2 values must be positive and finite")
        return v

    @field_validator("beta")
    @classmethod
    def validate_beta(cls, v):
        if not 0 < v <= 0.5:
            raise ValueError(f"beta must satisfy 0 < beta <= 1/2, got {v}")
        return v

    @model_validator(mode="after")
    def check_custom_vector(self) -> "ExperimentConfig":
        if isinstance(self.theta_family, list) and len(self.theta_family) != self.model.p:
            raise ValueError(
                f"Custom theta vector has length {len(self.theta_family)}, expected p={self.model.p}"
            )
        if self.hp.d_max is not None and self.hp.d_max > self.model.p:
            raise ValueError(f"d_max={self.hp.d_max} exceeds p={self.model.p}")
        for est in self.estimators:
            if est.d is not None and est.d > self.model.p:
                raise ValueError(f"{est.label}: d={est.d} exceeds p={self.model.p}")
        return self

    def to_dict(self) -> Dict[str, Any]:
        """Convert config to a JSON-ready dictionary"""
        return self.model_dump(mode="json", by_alias=True)


class SmallBallConfig(BaseModel):
    """Small-ball probability probe over a range of dimensions"""
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(default=1.0, gt=0)
    d_values: List[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5, 6])
    shift: float = Field(default=0.0, ge=0)
    method: str = "plain"
    reps: int = Field(default=100_000, ge=1)
    rng: RngSpec = Field(default_factory=RngSpec)

    @field_validator("d_values")
    @classmethod
    def validate_dims(cls, v):
        if not v or any(d < 1 for d in v):
            raise ValueError("d_values must be a non-empty list of positive integers")
        return v

    @field_validator("method")
    @classmethod
    def validate_method(cls, v):
        if v not in ("plain", "reweighted"):
            raise ValueError(f"method must be 'plain' or 'reweighted', got {v}")
        return v

    def shift_vector(self, d: int) -> np.ndarray:
        """Shift v with v_i = shift * i^-(alpha + 1/2), so that sum i^(2 alpha + 1) v_i^2 = d shift^2"""
        i = np.arange(1, d + 1, dtype=float)
        return self.shift * i ** (-self.alpha - 0.5)


class RegressionConfig(BaseModel):
    """
    Fixed-design regression run.

    Either ``data`` names a CSV of responses, or the responses are simulated
    on the grid i/n from ``theta_family`` at radius ``B`` with unit noise.
    """
    model_config = ConfigDict(frozen=True)

    p: int = Field(ge=1)
    n: Optional[int] = Field(default=None, ge=2)
    data: Optional[str] = None
    theta_family: Optional[ThetaFamily] = None
    B: float = Field(default=1.0, gt=0)
    hp: HyperParams = Field(default_factory=HyperParams)
    grid_size: int = Field(default=1000, ge=1)
    rng: RngSpec = Field(default_factory=RngSpec)

    @field_validator("theta_family", mode="before")
    @classmethod
    def validate_family(cls, v):
        return None if v is None else _parse_family(v)

    @model_validator(mode="after")
    def check_source(self) -> "RegressionConfig":
        if self.data is None:
            if self.n is None or self.theta_family is None:
                raise ValueError("Without a data file both n and theta_family are required")
            if self.p >= self.n:
                raise ValueError(f"p={self.p} must be smaller than n={self.n}")
        if isinstance(self.theta_family, list) and len(self.theta_family) > (self.n or len(self.theta_family)):
            raise ValueError("Custom coefficient vector is longer than n")
        return self
