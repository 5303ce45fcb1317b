"""Estimator front end: ``fit`` runs the null GLM and the homogeneity tests."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_clustered_data, check_grid_spec
from .covparam import FULL_GRID, make_grid
from .data import Dataset
from .errors import ParameterError
from .expfam import FamilySpec, link_mean
from .nullfit import fit_null
from .report import TestReport
from .resample import p_values, run_resampling
from .scorestats import score_profile, sup_statistics

__all__ = ["NullGLM", "HomogeneityScoreTest"]


def _family(family, trials) -> FamilySpec:
    if isinstance(family, FamilySpec):
        return family
    try:
        return FamilySpec.from_name(family, trials=trials)
    except ParameterError:
        raise
    except Exception as exc:  # pragma: no cover - unexpected types
        raise ParameterError(f"bad family {family!r}: {exc}") from None


class NullGLM(BaseEstimator):
    """Canonical-link GLM without random effects.

    Parameters
    ----------
    family : {"gaussian", "bernoulli", "binomial"}
    trials : int
        Default binomial trial count.
    """

    def __init__(self, family="bernoulli", trials=1):
        self.family = family
        self.trials = trials

    def fit(self, X, y, trials=None):
        X = check_array(X, dtype=np.float64)
        fam = _family(self.family, self.trials)
        ds = check_clustered_data(X, y, np.ones((X.shape[0], 1)), np.arange(X.shape[0]), trials)
        self.fit_ = fit_null(ds, fam)
        self.coef_ = self.fit_.beta_hat.copy()
        self.phi_ = float(self.fit_.phi_hat)
        self.n_iter_ = int(self.fit_.iterations)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.coef_

    def predict(self, X, trials=None):
        """Fitted mean ``E[y | x]``."""
        fam = _family(self.family, self.trials)
        return link_mean(fam, self.decision_function(X), trials)


class HomogeneityScoreTest(BaseEstimator):
    """Score tests that all random-effect variance components are zero.

    ``fit`` needs the cluster labels ``groups`` and the random-effect design
    ``Z`` (two columns for the built-in grid).  After fitting, ``statistics_``
    holds the sup statistics and ``pvalues_`` maps ``S_O``, ``S_P``, ``S_S``
    to resampling p-values.

    Parameters
    ----------
    family : {"gaussian", "bernoulli", "binomial"}
    trials : int
        Default binomial trial count, overridden by a per-row ``trials`` array.
    grid : tuple or str
        ``(n1, n2, delta0)`` or ``"n1,n2,delta0"``.
    r0 : int
        Number of multiplier replicates.
    random_state : int
        Seed for the multipliers; required.
    correlation : {"considered", "ignored"}
        ``"ignored"`` pins the correlation parameter at zero.
    alpha : float
        Level used by :meth:`report` to flag rejections.
    """

    def __init__(self, family="bernoulli", trials=1, grid=FULL_GRID, r0=1000,
                 random_state=None, correlation="considered", alpha=0.05):
        self.family = family
        self.trials = trials
        self.grid = grid
        self.r0 = r0
        self.random_state = random_state
        self.correlation = correlation
        self.alpha = alpha

    def _check_params(self):
        if self.random_state is None or isinstance(self.random_state, np.random.RandomState):
            raise ParameterError("random_state must be an explicit integer seed")
        if int(self.r0) < 1:
            raise ParameterError("r0 must be a positive integer")
        if self.correlation not in ("considered", "ignored"):
            raise ParameterError(f"correlation must be considered or ignored, got {self.correlation!r}")
        if not 0.0 <= float(self.alpha) <= 1.0:
            raise ParameterError("alpha must lie in [0, 1]")
        return _family(self.family, self.trials), check_grid_spec(self.grid)

    def fit(self, X, y, *, groups, Z, trials=None):
        fam, spec = self._check_params()
        ds = check_clustered_data(X, y, Z, groups, trials)
        return self.fit_dataset(ds, family=fam, grid_spec=spec)

    def fit_dataset(self, dataset: Dataset, *, family=None, grid_spec=None):
        """Fit from an already assembled :class:`Dataset`."""
        fam, spec = self._check_params()
        fam = family or fam
        spec = grid_spec or spec
        grid = make_grid(spec)
        if self.correlation == "ignored":
            grid = grid.zero_correlation()
        if dataset.Z.shape[1] != grid.q:
            raise ParameterError(f"the grid needs {grid.q} random-effect covariates, got {dataset.Z.shape[1]}")

        self.family_ = fam
        self.grid_spec_ = spec
        self.dataset_ = dataset
        self.null_fit_ = fit_null(dataset, fam)
        self.coef_ = self.null_fit_.beta_hat.copy()
        self.phi_ = float(self.null_fit_.phi_hat)
        self.profile_ = score_profile(dataset, self.null_fit_, grid)
        self.statistics_ = sup_statistics(self.profile_)
        self.replicates_ = run_resampling(dataset, self.profile_, int(self.r0), int(self.random_state))
        p = p_values(self.statistics_, self.replicates_)
        self.pvalues_ = dict(zip(("S_O", "S_P", "S_S"), p))
        self.n_degenerate_ = self.profile_.n_degenerate
        self.warnings_ = self._collect_warnings()
        return self

    def _collect_warnings(self) -> list[str]:
        out = []
        n_floor = int(np.count_nonzero(self.profile_.floored))
        if n_floor:
            out.append(f"i_eo was negative and floored at 0 at {n_floor} grid point(s)")
        if self.n_degenerate_:
            out.append(f"{self.n_degenerate_} grid point(s) had a degenerate variance and contribute 0")
        if not self.null_fit_.converged:
            out.append("null fit reached the iteration limit")
        return out

    def report(self) -> TestReport:
        check_is_fitted(self, "pvalues_")
        s = self.statistics_
        fam = self.family_
        ds = self.dataset_
        return TestReport(
            family=fam.kind,
            trials=None if fam.kind == "gaussian" else int(fam.trials),
            n=ds.n,
            N=ds.N,
            beta_hat=tuple(float(b) for b in self.coef_),
            phi_hat=self.phi_,
            sigma2_hat=float(self.null_fit_.sigma2_hat) if fam.kind == "gaussian" else None,
            grid=(int(self.grid_spec_.n1), int(self.grid_spec_.n2), float(self.grid_spec_.delta0)),
            grid_points=len(self.profile_.grid),
            r0=int(self.r0),
            seed=int(self.random_state),
            alpha=float(self.alpha),
            s_o=s.s_o, s_p=s.s_p, s_s=s.s_s,
            argmax_o=_plain_point(s.argmax_o),
            argmax_p=_plain_point(s.argmax_p),
            argmax_s=_plain_point(s.argmax_s),
            p_o=self.pvalues_["S_O"], p_p=self.pvalues_["S_P"], p_s=self.pvalues_["S_S"],
            n_degenerate=int(self.n_degenerate_),
            warnings=tuple(self.warnings_),
        )


def _plain_point(g):
    return type(g)(float(g.gamma1), float(g.gamma2))
