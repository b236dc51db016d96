"""
Configuration for the sequence-model experiment runner
"""

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Type

from dotenv import load_dotenv
from pydantic import BaseModel, ValidationError

from seqadapt.posterior import DEFAULT_TAIL_MASS_WARNING
from seqadapt.schemas import ExperimentConfig, RegressionConfig, SmallBallConfig

# Load environment variables
load_dotenv()


class ConfigError(ValueError):
    """Unreadable experiment file, unknown key or schema violation"""


@dataclass
class AppConfig:
    """Runtime settings read from the environment"""
    threads: int = 1
    log_level: str = "INFO"
    tail_mass_warning: float = DEFAULT_TAIL_MASS_WARNING
    strict_tail_mass: bool = False
    progress: bool = False


def load_config() -> AppConfig:
    """Load configuration from environment variables"""
    return AppConfig(
        threads=max(1, int(os.getenv("SEQADAPT_THREADS", str(os.cpu_count() or 1)))),
        log_level=os.getenv("LOG_LEVEL", "INFO").upper(),
        tail_mass_warning=float(os.getenv("SEQADAPT_TAIL_MASS_WARNING", str(DEFAULT_TAIL_MASS_WARNING))),
        strict_tail_mass=os.getenv("SEQADAPT_STRICT_TAIL_MASS", "false").lower() == "true",
        progress=os.getenv("SEQADAPT_PROGRESS", "false").lower() == "true",
    )


def create_env_template() -> bool:
    """Create a template .env file; returns False when one already exists"""
    env_template = """# Worker processes for Monte Carlo sweeps (defaults to the CPU count)
SEQADAPT_THREADS=4

# Logging
LOG_LEVEL=INFO

# Posterior truncation diagnostics
SEQADAPT_TAIL_MASS_WARNING=1e-10
SEQADAPT_STRICT_TAIL_MASS=false

# Progress bars during sweeps
SEQADAPT_PROGRESS=false
"""

    env_file = Path(".env")
    if env_file.exists():
        return False
    with open(env_file, "w") as f:
        f.write(env_template)
    return True


# Flat shortcuts accepted at the top level of config files, by target section
_RNG_KEYS = {"seed": "rng", "stream_id": "rng"}
_HP_KEYS = {"eta": "hp", "gamma": "hp", "k_max": "hp", "d_max": "hp"}
EXPERIMENT_FLAT_KEYS = {"p": "model", "eps2": "model", "alpha0": "ellipsoid", **_HP_KEYS, **_RNG_KEYS}
REGRESSION_FLAT_KEYS = {"eta": "hp", "gamma": "hp", "k_max": "hp", **_RNG_KEYS}
SMALL_BALL_FLAT_KEYS = dict(_RNG_KEYS)


def parse_override(item: str) -> tuple:
    """Split key=value; the value is read as JSON when possible"""
    if "=" not in item:
        raise ConfigError(f"Override must look like key=value, got '{item}'")
    key, raw = item.split("=", 1)
    key = key.strip()
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _known_keys(model_cls: Type[BaseModel], extra: Iterable[str] = ()) -> set:
    keys = set(extra)
    for name, info in model_cls.model_fields.items():
        keys.add(name)
        if info.alias:
            keys.add(info.alias)
    return keys


def apply_overrides(
    data: Dict[str, Any],
    overrides: Optional[List[str]],
    known: set,
    flat_keys: Optional[Dict[str, str]] = None,
) -> Dict[str, Any]:
    """Apply key=value overrides; dotted keys reach into nested sections and flat shortcuts are routed to theirs"""
    data = dict(data)
    flat_keys = flat_keys or {}
    for item in overrides or []:
        key, value = parse_override(item)
        path = key.split(".")
        if path[0] not in known:
            raise ConfigError(f"Unknown config key: {key}")
        if path[0] in flat_keys:
            path = [flat_keys[path[0]]] + path
        target = data
        for part in path[:-1]:
            section = target.get(part)
            target[part] = dict(section) if isinstance(section, dict) else {}
            target = target[part]
        target[path[-1]] = value
    return data


def _load_json(text: str) -> Dict[str, Any]:
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("Config must be a JSON object")
    return data


def _validation_message(e: ValidationError) -> str:
    parts = []
    for err in e.errors():
        loc = ".".join(str(part) for part in err["loc"]) or "config"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def _validate(model_cls: Type[BaseModel], data: Dict[str, Any]):
    try:
        return model_cls.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid {model_cls.__name__}: {_validation_message(e)}") from e


def _nest_flat_keys(data: Dict[str, Any], flat_keys: Dict[str, str]) -> Dict[str, Any]:
    nested = {key: value for key, value in data.items() if key not in flat_keys}
    for key, value in data.items():
        section = flat_keys.get(key)
        if section is None:
            continue
        current = nested.get(section) or {}
        if not isinstance(current, dict):
            raise ConfigError(f"Cannot combine {key} with a non-object {section} section")
        nested[section] = {**current, key: value}
    return nested


def parse_config(
    text: str,
    overrides: Optional[List[str]] = None,
    default_estimators: Optional[Callable[[int], List[Any]]] = None,
) -> ExperimentConfig:
    """
    Parse a JSON experiment file into a validated ExperimentConfig.

    Top-level shortcuts (p, eps2, eta, gamma, k_max, d_max, seed, stream_id,
    alpha0, B) are folded into their sections; B is turned into B2 = [B^2].
    default_estimators(p) supplies the estimator list when none is given.
    """
    known = _known_keys(ExperimentConfig, list(EXPERIMENT_FLAT_KEYS) + ["B"])
    data = _load_json(text)
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")
    data = _nest_flat_keys(data, EXPERIMENT_FLAT_KEYS)
    data = apply_overrides(data, overrides, known, EXPERIMENT_FLAT_KEYS)

    B = data.pop("B", None)
    if B is not None:
        if "B2" in data or "B2_values" in data:
            raise ConfigError("Give either B or B2, not both")
        try:
            data["B2"] = [float(B) ** 2]
        except (TypeError, ValueError) as e:
            raise ConfigError(f"B must be a number, got {B!r}") from e

    if default_estimators is not None and not data.get("estimators"):
        model = data.get("model")
        if isinstance(model, dict) and isinstance(model.get("p"), int):
            data["estimators"] = default_estimators(model["p"])
    ellipsoid = data.get("ellipsoid")
    if isinstance(ellipsoid, dict) and "B" not in ellipsoid:
        B2 = data.get("B2") or data.get("B2_values") or [1.0]
        data["ellipsoid"] = {**ellipsoid, "B": float(B2[0]) ** 0.5}
    return _validate(ExperimentConfig, data)


def parse_small_ball_config(text: str, overrides: Optional[List[str]] = None) -> SmallBallConfig:
    known = _known_keys(SmallBallConfig, SMALL_BALL_FLAT_KEYS)
    data = _load_json(text)
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")
    data = _nest_flat_keys(data, SMALL_BALL_FLAT_KEYS)
    return _validate(SmallBallConfig, apply_overrides(data, overrides, known, SMALL_BALL_FLAT_KEYS))


def parse_regression_config(text: str, overrides: Optional[List[str]] = None) -> RegressionConfig:
    known = _known_keys(RegressionConfig, REGRESSION_FLAT_KEYS)
    data = _load_json(text)
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")
    data = _nest_flat_keys(data, REGRESSION_FLAT_KEYS)
    return _validate(RegressionConfig, apply_overrides(data, overrides, known, REGRESSION_FLAT_KEYS))


def read_config_file(path: Optional[str]) -> str:
    """Config file contents; an absent path means an empty config"""
    if path is None:
        return ""
    try:
        return Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from e


if __name__ == "__main__":
    if create_env_template():
        print("Created .env template file")
    else:
        print(".env file already exists")

    config = load_config()
    print("Current Configuration:")
    print(f"Worker threads: {config.threads}")
    print(f"Log level: {config.log_level}")
    print(f"Tail mass warning: {config.tail_mass_warning}")
    print(f"Strict tail mass: {config.strict_tail_mass}")
