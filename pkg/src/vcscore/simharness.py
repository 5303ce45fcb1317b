"""Monte Carlo size and power of the homogeneity tests.

Data come from the logistic mixed model::

    logit P(y = 1 | b) = 1.0 + 0.8 x1 + 0.5 x2 + b1 + z1 b2

or the linear mixed model ``y = 1.0 + x1 + x2 + b1 + z1 b2 + eps`` with
``x1, x2, z1`` standard normal, ``b ~ N(0, sigma1_sq [[1, rho1], [rho1, rho2]])``
and ``eps ~ N(0, phi)``.  Nuisance overdispersion perturbs each observation
with ``s * v``, ``v`` standard normal: added to the logistic intercept, or as
``exp(s * v)`` scaling of the linear noise variance.  By default ``s = sqrt(sigma2_sq)`` so that the
perturbation has variance ``sigma2_sq`` (``perturbation="variance"``);
``perturbation="scale"`` uses ``s = sigma2_sq``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Literal

import numpy as np
from scipy.special import expit

from .covparam import DESK_GRID, GridSpec, make_grid
from .data import Dataset
from .errors import ConfigError, ConvergenceError, DataError
from .expfam import FamilySpec
from .nullfit import fit_null
from .resample import p_values, run_resampling
from .scorestats import score_profile, sup_statistics

__all__ = [
    "SimConfig",
    "RateTable",
    "gen_logistic",
    "gen_linear",
    "gen_perturbed",
    "simulate_dataset",
    "estimate_rates",
    "STATISTICS",
]

logger = logging.getLogger(__name__)

STATISTICS = ("S_O", "S_P", "S_S")

LOGISTIC_BETA = np.array([1.0, 0.8, 0.5])
LINEAR_BETA = np.array([1.0, 1.0, 1.0])


@dataclass(frozen=True)
class SimConfig:
    model: Literal["logistic18", "linear19"] = "logistic18"
    response: Literal["bernoulli", "binomial"] = "bernoulli"
    trials: int = 5
    n: int = 50
    m: int = 5
    sigma1_sq: float = 0.0
    rho1: float = 0.5
    rho2: float = 1.0
    sigma2_sq: float = 0.0
    phi: float = 1.0
    reps: int = 300
    r0: int = 200
    alpha: float = 0.05
    seed: int = 0
    grid: GridSpec = DESK_GRID
    correlation_mode: Literal["considered", "ignored"] = "considered"
    perturbation: Literal["variance", "scale"] = "variance"

    def __post_init__(self):
        object.__setattr__(self, "grid", GridSpec(*self.grid))
        if self.model not in ("logistic18", "linear19"):
            raise ConfigError(f"model must be logistic18 or linear19, got {self.model!r}")
        if self.response not in ("bernoulli", "binomial"):
            raise ConfigError(f"response must be bernoulli or binomial, got {self.response!r}")
        if self.perturbation not in ("variance", "scale"):
            raise ConfigError(f"perturbation must be variance or scale, got {self.perturbation!r}")
        if self.correlation_mode not in ("considered", "ignored"):
            raise ConfigError(f"mode must be considered or ignored, got {self.correlation_mode!r}")
        for name in ("n", "m", "reps", "r0", "trials"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        for name in ("sigma1_sq", "sigma2_sq"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.rho2 < 0 or self.rho1 * self.rho1 > self.rho2 + 1e-12:
            raise ConfigError(
                f"random-effect covariance is not PSD: rho1^2 = {self.rho1**2:g} > rho2 = {self.rho2:g}"
            )
        if not self.phi > 0:
            raise ConfigError("phi must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")

    @property
    def family(self) -> FamilySpec:
        if self.model == "linear19":
            return FamilySpec("gaussian")
        if self.response == "binomial":
            return FamilySpec("binomial", trials=self.trials)
        return FamilySpec("bernoulli")

    @property
    def random_effect_cov(self) -> np.ndarray:
        return self.sigma1_sq * np.array([[1.0, self.rho1], [self.rho1, self.rho2]])

    @property
    def perturbation_sd(self) -> float:
        if self.perturbation == "variance":
            return math.sqrt(self.sigma2_sq)
        return self.sigma2_sq

    @property
    def varied_parameter(self) -> tuple[str, float]:
        if self.sigma2_sq > 0:
            return "sigma2_sq", self.sigma2_sq
        return "sigma1_sq", self.sigma1_sq


def _random_effects(config: SimConfig, rng) -> np.ndarray:
    # explicit 2x2 Cholesky factor; tolerates the rank-one case rho2 = rho1^2
    L = math.sqrt(config.sigma1_sq) * np.array(
        [[1.0, 0.0], [config.rho1, math.sqrt(max(config.rho2 - config.rho1**2, 0.0))]]
    )
    return rng.standard_normal((config.n, 2)) @ L.T


def _design(config: SimConfig, rng):
    N = config.n * config.m
    groups = np.repeat(np.arange(config.n), config.m)
    X = np.column_stack([np.ones(N), rng.standard_normal((N, 2))])
    z1 = rng.standard_normal(N)
    Z = np.column_stack([np.ones(N), z1])
    return groups, X, Z


def simulate_dataset(config: SimConfig, rng) -> Dataset:
    """One dataset with both the random effects and the nuisance perturbation applied."""
    groups, X, Z = _design(config, rng)
    b = _random_effects(config, rng)
    re = np.einsum("ka,ka->k", Z, b[groups])
    N = X.shape[0]
    if config.model == "logistic18":
        eta = X @ LOGISTIC_BETA + re
        if config.sigma2_sq > 0:
            eta = eta + config.perturbation_sd * rng.standard_normal(N)
        trials = config.trials if config.response == "binomial" else 1
        y = rng.binomial(trials, expit(eta)).astype(float)
    else:
        scale = np.full(N, config.phi)
        if config.sigma2_sq > 0:
            scale = config.phi * np.exp(config.perturbation_sd * rng.standard_normal(N))
        y = X @ LINEAR_BETA + re + np.sqrt(scale) * rng.standard_normal(N)
    return Dataset.from_arrays(y, X, Z, groups)


def gen_logistic(config: SimConfig, rng) -> Dataset:
    if config.model != "logistic18":
        raise ConfigError("gen_logistic needs model logistic18")
    return simulate_dataset(replace(config, sigma2_sq=0.0), rng)


def gen_linear(config: SimConfig, rng) -> Dataset:
    if config.model != "linear19":
        raise ConfigError("gen_linear needs model linear19")
    return simulate_dataset(replace(config, sigma2_sq=0.0), rng)


def gen_perturbed(config: SimConfig, rng) -> Dataset:
    """Null model (no random effects) with nuisance overdispersion ``sigma2_sq``."""
    if config.sigma1_sq != 0:
        raise ConfigError("gen_perturbed studies the null: sigma1_sq must be 0")
    return simulate_dataset(config, rng)


@dataclass
class RateTable:
    """Rejection rates per statistic; keeps every replication's p-values."""

    config: SimConfig
    pvalues: np.ndarray  # (reps_used, 3) in S_O, S_P, S_S order
    excluded: int = 0
    failures: list = field(default_factory=list)

    @property
    def reps(self) -> int:
        return int(self.pvalues.shape[0])

    def rates(self, alpha: float | None = None) -> dict[str, float]:
        alpha = self.config.alpha if alpha is None else alpha
        if self.reps == 0:
            return {s: float("nan") for s in STATISTICS}
        hits = np.count_nonzero(self.pvalues <= alpha, axis=0)
        return {s: float(h) / self.reps for s, h in zip(STATISTICS, hits)}

    def standard_errors(self, alpha: float | None = None) -> dict[str, float]:
        return {
            s: math.sqrt(r * (1.0 - r) / self.reps) for s, r in self.rates(alpha).items()
        }

    def rows(self, alpha: float | None = None) -> list[dict]:
        name, value = self.config.varied_parameter
        se = self.standard_errors(alpha)
        return [
            {
                "model": self.config.model,
                "statistic": s,
                "param": name,
                "value": value,
                "mode": self.config.correlation_mode,
                "rate": r,
                "se": se[s],
                "reps": self.reps,
                "excluded": self.excluded,
            }
            for s, r in self.rates(alpha).items()
        ]

    def to_csv(self, alpha: float | None = None) -> str:
        buf = io.StringIO()
        rows = self.rows(alpha)
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in row.items()})
        return buf.getvalue()


def _replicate_seeds(seed: int, reps: int):
    return np.random.SeedSequence(int(seed)).spawn(reps)


def run_replication(config: SimConfig, child: np.random.SeedSequence, grid):
    """p-values ``(p_O, p_P, p_S)`` for one simulated dataset."""
    data_rng = np.random.default_rng(child)
    resample_seed = int(child.generate_state(1, np.uint64)[0])
    ds = simulate_dataset(config, data_rng)
    fit = fit_null(ds, config.family)
    profile = score_profile(ds, fit, grid)
    observed = sup_statistics(profile)
    reps = run_resampling(ds, profile, config.r0, resample_seed)
    return p_values(observed, reps)


def estimate_rates(config: SimConfig, n_jobs: int = 1) -> RateTable:
    """Simulate ``config.reps`` datasets and test each at level ``config.alpha``.

    Replications whose null fit fails are excluded and counted.
    """
    grid = make_grid(config.grid)
    if config.correlation_mode == "ignored":
        grid = grid.zero_correlation()
    children = _replicate_seeds(config.seed, config.reps)

    def one(child):
        try:
            return run_replication(config, child, grid)
        except (ConvergenceError, DataError) as exc:
            return exc

    if n_jobs == 1:
        results = [one(c) for c in children]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(delayed(one)(c) for c in children)
    failures = [r for r in results if isinstance(r, Exception)]
    pv = np.array([r for r in results if not isinstance(r, Exception)], dtype=float).reshape(-1, 3)
    if failures:
        logger.info("%d of %d replications excluded", len(failures), config.reps)
    return RateTable(config=config, pvalues=pv, excluded=len(failures),
                     failures=[str(f) for f in failures])


def config_dict(config: SimConfig) -> dict:
    d = asdict(config)
    d["grid"] = list(config.grid)
    return d
