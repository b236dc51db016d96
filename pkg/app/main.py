#!/usr/bin/env python3
"""
Sequence-model experiment runner
Command-line front end for simulation, estimation, posterior summaries, risk sweeps,
regression and small-ball probes
"""

import argparse
import json
import logging
import math
import sys
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from seqadapt.core import simulate_observation
from seqadapt.estimators import apply_estimator
from seqadapt.harness import resolve_theta, run_experiment, small_ball_table, white_noise_curves
from seqadapt.posterior import TruncationMassError, posterior_summary
from seqadapt.regression import (
    RegressionSample,
    estimate_regression,
    read_regression_csv,
    reconstruct,
    simulate_regression,
)
from seqadapt.schemas import ExperimentConfig

from .config import (
    AppConfig,
    ConfigError,
    create_env_template,
    load_config,
    parse_config,
    parse_regression_config,
    parse_small_ball_config,
    read_config_file,
)

logger = logging.getLogger(__name__)

SUBCOMMANDS = ["simulate", "estimate", "posterior", "risk-sweep", "regression", "whitenoise", "small-ball"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class NonFiniteOutputError(ArithmeticError):
    """An output column holds NaN or infinite values"""


def whitenoise_estimators(p: int) -> List[Any]:
    """Estimators drawn in the white-noise plots when the config names none"""
    return [
        "mle",
        {"kind": "block_james_stein", "d": p},
        "proposed",
        "model_averaging",
        "scale_mixture",
    ]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Adaptive Bayesian estimation in the Gaussian sequence model")
    parser.add_argument("subcommand", nargs="?", choices=SUBCOMMANDS, help="Operation to run")
    parser.add_argument("--config", "-c", help="JSON config file")
    parser.add_argument("--out", "-o", help="Output file (default: stdout)")
    parser.add_argument("--seed", type=int, help="Override the RNG seed")
    parser.add_argument("--reps", type=int, help="Override the replication count")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Override a config field (repeatable; dotted keys reach nested sections)")
    parser.add_argument("--json", action="store_true", help="Write JSON instead of CSV")
    parser.add_argument("--setup", action="store_true", help="Create a .env template and exit")
    return parser


def _overrides(args: argparse.Namespace) -> List[str]:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.reps is not None:
        overrides.append(f"reps={args.reps}")
    return overrides


def _check_finite(frame: pd.DataFrame, columns: List[str]) -> None:
    values = frame[columns].to_numpy(dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NonFiniteOutputError(f"Non-finite values in output columns {columns}")


def _write(frame: pd.DataFrame, out: Optional[str], as_json: bool, payload: Optional[Dict[str, Any]] = None) -> None:
    if as_json:
        document = payload if payload is not None else {"rows": frame.to_dict(orient="records")}
        text = json.dumps(document, indent=2)
        if out:
            with open(out, "w") as f:
                f.write(text + "\n")
        else:
            print(text)
    else:
        frame.to_csv(out if out else sys.stdout, index=False)
    if out:
        logger.info(f"Wrote {len(frame)} rows to {out}")


def _estimate(est, x, cfg: ExperimentConfig, app: AppConfig) -> np.ndarray:
    return apply_estimator(
        est, x, cfg.model, tail_mass_warning=app.tail_mass_warning, strict=app.strict_tail_mass
    )


def _observation_rows(cfg: ExperimentConfig, app: AppConfig, with_estimates: bool) -> pd.DataFrame:
    frames = []
    i = np.arange(1, cfg.model.p + 1)
    for b, B2 in enumerate(cfg.B2_values):
        theta = resolve_theta(cfg.theta_family, math.sqrt(B2), cfg.model.p)
        x = simulate_observation(theta, cfg.model, cfg.rng, b)
        frame = pd.DataFrame({"B2": float(B2), "i": i, "theta": theta, "x": x})
        if with_estimates:
            for est in cfg.estimators:
                frame[est.label] = _estimate(est, x, cfg, app)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def cmd_simulate(args, app: AppConfig) -> pd.DataFrame:
    cfg = parse_config(read_config_file(args.config), _overrides(args))
    frame = _observation_rows(cfg, app, with_estimates=False)
    _write(frame, args.out, args.json)
    return frame


def cmd_estimate(args, app: AppConfig) -> pd.DataFrame:
    cfg = parse_config(read_config_file(args.config), _overrides(args))
    frame = _observation_rows(cfg, app, with_estimates=True)
    _check_finite(frame, [est.label for est in cfg.estimators])
    _write(frame, args.out, args.json)
    return frame


def cmd_posterior(args, app: AppConfig) -> pd.DataFrame:
    cfg = parse_config(read_config_file(args.config), _overrides(args))
    B = math.sqrt(cfg.B2_values[0])
    theta = resolve_theta(cfg.theta_family, B, cfg.model.p)
    x = simulate_observation(theta, cfg.model, cfg.rng, 0)
    summary = posterior_summary(
        x, cfg.hp, cfg.model, tail_mass_warning=app.tail_mass_warning, strict=app.strict_tail_mass
    )
    d_max, k_max = summary.d_max, summary.k_max
    k_grid, d_grid = np.meshgrid(np.arange(1, k_max + 1), np.arange(1, d_max + 1))
    frame = pd.DataFrame({
        "k": k_grid.T.ravel(),
        "d": d_grid.T.ravel(),
        "log_F_post": np.repeat(summary.log_F_post, d_max),
        "log_M_post": summary.log_M_post.T.ravel(),
    })
    _check_finite(frame, ["log_F_post", "log_M_post"])
    payload = {
        "B2": cfg.B2_values[0],
        "x": x.tolist(),
        "mean": summary.mean.tolist(),
        "tail_mass_bound": summary.tail_mass_bound,
        "rows": frame.to_dict(orient="records"),
    }
    _write(frame, args.out, args.json, payload)
    return frame


def cmd_risk_sweep(args, app: AppConfig) -> pd.DataFrame:
    cfg = parse_config(read_config_file(args.config), _overrides(args))
    workers = min(cfg.workers or app.threads, app.threads)
    logger.info(
        f"Risk sweep: {len(cfg.estimators)} estimators x {len(cfg.B2_values)} B2 values, "
        f"{cfg.reps} reps, {workers} workers"
    )
    report = run_experiment(
        cfg,
        workers=workers,
        progress=app.progress,
        tail_mass_warning=app.tail_mass_warning,
        strict=app.strict_tail_mass,
    )
    frame = report.to_frame()
    _check_finite(frame, ["loss_mean", "loss_std"])
    _write(frame, args.out, args.json, report.to_dict())
    return frame


def cmd_regression(args, app: AppConfig) -> pd.DataFrame:
    cfg = parse_regression_config(read_config_file(args.config), _overrides(args))
    if cfg.data is not None:
        sample = read_regression_csv(cfg.data, cfg.p)
    else:
        if isinstance(cfg.theta_family, int):
            theta = resolve_theta(cfg.theta_family, cfg.B, cfg.p)
        else:
            theta = cfg.B * np.asarray(cfg.theta_family)
        sample = RegressionSample(y=simulate_regression(theta, cfg.n, cfg.rng, 0), p=cfg.p)
    estimate = estimate_regression(
        sample, cfg.hp, tail_mass_warning=app.tail_mass_warning, strict=app.strict_tail_mass
    )
    grid = np.arange(1, cfg.grid_size + 1) / cfg.grid_size
    frame = pd.DataFrame({"t": grid, "fhat": reconstruct(estimate, grid)})
    _check_finite(frame, ["fhat"])
    _write(frame, args.out, args.json, {"coefs": estimate.coefs.tolist(), "rows": frame.to_dict(orient="records")})
    return frame


def cmd_whitenoise(args, app: AppConfig) -> pd.DataFrame:
    cfg = parse_config(read_config_file(args.config), _overrides(args), default_estimators=whitenoise_estimators)
    B = math.sqrt(cfg.B2_values[0])
    theta = resolve_theta(cfg.theta_family, B, cfg.model.p)
    x = simulate_observation(theta, cfg.model, cfg.rng, 0)
    estimates = {est.label: _estimate(est, x, cfg, app) for est in cfg.estimators}
    frame = white_noise_curves(theta, x, estimates)
    _check_finite(frame, list(frame.columns))
    _write(frame, args.out, args.json)
    return frame


def cmd_small_ball(args, app: AppConfig) -> pd.DataFrame:
    cfg = parse_small_ball_config(read_config_file(args.config), _overrides(args))
    frame = small_ball_table(cfg)
    _check_finite(frame, ["probability", "c3", "volume_bound"])
    _write(frame, args.out, args.json)
    return frame


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "posterior": cmd_posterior,
    "risk-sweep": cmd_risk_sweep,
    "regression": cmd_regression,
    "whitenoise": cmd_whitenoise,
    "small-ball": cmd_small_ball,
}


def run_cli(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand and return its exit status"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_CONFIG

    try:
        app = load_config()
    except ValueError as e:
        print(f"error: invalid environment setting: {e}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(
        level=getattr(logging, app.log_level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    if args.setup:
        if create_env_template():
            print("Created .env template file")
        else:
            print(".env file already exists")
        return EXIT_OK

    if args.subcommand is None:
        parser.print_usage(sys.stderr)
        print("error: a subcommand is required", file=sys.stderr)
        return EXIT_CONFIG

    try:
        COMMANDS[args.subcommand](args, app)
    except (TruncationMassError, FloatingPointError, NonFiniteOutputError) as e:
        logger.error(f"Numeric failure in {args.subcommand}: {e}")
        return EXIT_NUMERIC
    except ValueError as e:
        logger.error(f"Invalid configuration for {args.subcommand}: {e}")
        return EXIT_CONFIG
    except OSError as e:
        logger.error(f"I/O failure in {args.subcommand}: {e}")
        return EXIT_CONFIG
    return EXIT_OK


def main():
    """Main function for command-line usage"""
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
