"""Score tests for homogeneity in generalized linear mixed models."""

from .covparam import DESK_GRID, FULL_GRID, GammaPoint, GridSpec, NuisanceGrid, make_grid
from .data import Dataset, load_dataset
from .errors import ConfigError, ConvergenceError, DataError, ParameterError, VCScoreError
from .estimator import HomogeneityScoreTest, NullGLM
from .expfam import FamilySpec, central_moments, score_terms
from .nullfit import NullFit, fit_null
from .report import TestReport
from .resample import p_values, run_resampling
from .scorestats import score_profile, sup_statistics
from .simharness import RateTable, SimConfig, estimate_rates

__version__ = "0.1.0"

__all__ = [
    "DESK_GRID",
    "FULL_GRID",
    "GammaPoint",
    "GridSpec",
    "NuisanceGrid",
    "make_grid",
    "Dataset",
    "load_dataset",
    "ConfigError",
    "ConvergenceError",
    "DataError",
    "ParameterError",
    "VCScoreError",
    "HomogeneityScoreTest",
    "NullGLM",
    "FamilySpec",
    "central_moments",
    "score_terms",
    "NullFit",
    "fit_null",
    "TestReport",
    "p_values",
    "run_resampling",
    "score_profile",
    "sup_statistics",
    "RateTable",
    "SimConfig",
    "estimate_rates",
]
