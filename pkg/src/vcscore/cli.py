"""Command line: ``vcscore test`` on a CSV file and ``vcscore sim`` for rate tables.

Exit codes: 0 ok, 2 data error, 3 convergence error, 4 config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .covparam import DESK_GRID, FULL_GRID, GridSpec
from .data import load_dataset
from .errors import ConfigError, DataError, ParameterError, VCScoreError
from .estimator import HomogeneityScoreTest
from .expfam import FamilySpec
from .report import TestReport, write_atomic
from .simharness import SimConfig, estimate_rates

logger = logging.getLogger("vcscore")

# replicates x resamples x grid points above which a run takes hours
SLOW_RUN_WORK = 5e8

MODEL_ALIASES = {"logistic": "logistic18", "logistic18": "logistic18",
                 "linear": "linear19", "linear19": "linear19"}

TEST_DEFAULTS = {
    "family": "bernoulli",
    "trials": 1,
    "r0": 1000,
    "seed": None,
    "grid": FULL_GRID,
    "alpha": 0.05,
    "mode": "considered",
    "out": None,
    "data": None,
}

SIM_DEFAULTS = {
    "model": "logistic18",
    "response": "bernoulli",
    "trials": 5,
    "n": 50,
    "m": 5,
    "sigma1_sq": 0.0,
    "rho1": 0.5,
    "rho2": 1.0,
    "sigma2_sq": 0.0,
    "phi": 1.0,
    "reps": 300,
    "r0": 200,
    "alpha": 0.05,
    "seed": 0,
    "grid": DESK_GRID,
    "mode": "considered",
    "perturbation": "variance",
    "jobs": None,
    "out": None,
}


def _grid_arg(text):
    try:
        return GridSpec.parse(text)
    except ParameterError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vcscore", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    # every option defaults to None so config-file values can fill the gaps
    t = sub.add_parser("test", help="score tests on a clustered CSV file")
    t.add_argument("--data", help="CSV with header cluster,y,x1..xp,z1..zq[,trials]")
    t.add_argument("--family", choices=["gaussian", "bernoulli", "binomial"])
    t.add_argument("--trials", type=int, help="default binomial trials")
    t.add_argument("--config", help="JSON file with flat keys mirroring the flags")
    t.add_argument("--r0", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--grid", type=_grid_arg, help="n1,n2,delta0 (default 20,31,15/16)")
    t.add_argument("--alpha", type=float)
    t.add_argument("--mode", choices=["considered", "ignored"])
    t.add_argument("--out", help="report path (stdout if omitted)")

    s = sub.add_parser("sim", help="Monte Carlo rejection rates")
    s.add_argument("--config")
    s.add_argument("--model", choices=sorted(MODEL_ALIASES))
    s.add_argument("--response", choices=["bernoulli", "binomial"])
    s.add_argument("--trials", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--m", type=int)
    s.add_argument("--sigma1-sq", type=float)
    s.add_argument("--rho1", type=float)
    s.add_argument("--rho2", type=float)
    s.add_argument("--sigma2-sq", type=float)
    s.add_argument("--phi", type=float)
    s.add_argument("--reps", type=int)
    s.add_argument("--r0", type=int)
    s.add_argument("--alpha", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--grid", type=_grid_arg, help="n1,n2,delta0 (default 10,7,15/16)")
    s.add_argument("--mode", choices=["considered", "ignored"])
    s.add_argument("--perturbation", choices=["variance", "scale"])
    s.add_argument("--jobs", type=int, help="parallel workers (default: available cores)")
    s.add_argument("--out", help="CSV path (stdout if omitted)")
    return parser


def _read_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return {k.replace("-", "_"): v for k, v in raw.items()}


def merge_settings(args: argparse.Namespace, defaults: dict) -> dict:
    """Defaults, then config file, then explicit flags."""
    config = _read_config(getattr(args, "config", None))
    unknown = sorted(set(config) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}")
    settings = dict(defaults)
    settings.update(config)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    if isinstance(settings.get("grid"), str):
        try:
            settings["grid"] = GridSpec.parse(settings["grid"])
        except ParameterError as exc:
            raise ConfigError(str(exc)) from None
    elif isinstance(settings.get("grid"), list):
        settings["grid"] = GridSpec(*settings["grid"])
    return settings


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        write_atomic(out, text)


def _grid_points(grid: GridSpec) -> int:
    return int(grid.n1) * int(grid.n2)


def run_test(settings: dict) -> TestReport:
    if settings["data"] is None:
        raise ConfigError("test needs --data")
    if settings["seed"] is None:
        raise ConfigError("test needs an explicit --seed")
    try:
        family = FamilySpec.from_name(settings["family"], trials=int(settings["trials"]))
        est = HomogeneityScoreTest(
            family=family, grid=settings["grid"], r0=int(settings["r0"]),
            random_state=int(settings["seed"]), correlation=settings["mode"],
            alpha=float(settings["alpha"]),
        )
        est._check_params()
    except (ParameterError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    dataset = load_dataset(settings["data"])
    if settings["family"] != "binomial" and dataset.trials is not None:
        raise DataError("a trials column needs family binomial", column="trials")
    est.fit_dataset(dataset)
    return est.report()


def run_sim(settings: dict) -> str:
    try:
        model = MODEL_ALIASES[settings["model"]]
    except KeyError:
        raise ConfigError(f"unknown model {settings['model']!r}") from None
    try:
        config = SimConfig(
            model=model, response=settings["response"], trials=int(settings["trials"]),
            n=int(settings["n"]), m=int(settings["m"]),
            sigma1_sq=float(settings["sigma1_sq"]), rho1=float(settings["rho1"]),
            rho2=float(settings["rho2"]), sigma2_sq=float(settings["sigma2_sq"]),
            phi=float(settings["phi"]), reps=int(settings["reps"]), r0=int(settings["r0"]),
            alpha=float(settings["alpha"]), seed=int(settings["seed"]),
            grid=settings["grid"], correlation_mode=settings["mode"],
            perturbation=settings["perturbation"],
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    work = config.reps * config.r0 * _grid_points(config.grid)
    if work > SLOW_RUN_WORK:
        logger.warning("reps=%d, r0=%d on %d grid points: expect a very long run",
                       config.reps, config.r0, _grid_points(config.grid))
    jobs = settings["jobs"] or (os.cpu_count() or 1)
    table = estimate_rates(config, n_jobs=int(jobs))
    return table.to_csv()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        if args.command == "test":
            settings = merge_settings(args, TEST_DEFAULTS)
            report = run_test(settings)
            _emit(report.to_json(), settings["out"])
        else:
            settings = merge_settings(args, SIM_DEFAULTS)
            _emit(run_sim(settings), settings["out"])
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    except VCScoreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
