"""Maximum likelihood fit of the null model (fixed effects only).

Under homogeneity there are no random effects, so every observation enters
the fit independently and the model is an ordinary canonical-link GLM.  The
fit also exposes what the plug-in corrections need: the per-observation
score contributions ``s_K`` for ``xi = (beta[, phi])``, the information
matrix, and influence vectors ``F_K = N * I^{-1} s_K`` so that
``xi_hat - xi ~= mean_K F_K``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

from .errors import ConvergenceError, DataError
from .expfam import FamilySpec, check_support, cumulant_derivatives

__all__ = [
    "NullFit",
    "fit_null",
    "influence_vectors",
    "information_matrix",
    "observation_trials",
    "loglik",
]

logger = logging.getLogger(__name__)

TOL = 1e-8
MAX_ITER = 100
MAX_HALVINGS = 30
# |eta| beyond this means fitted probabilities are numerically 0 or 1
SEPARATION_ETA = 30.0


@dataclass(frozen=True)
class NullFit:
    family: FamilySpec
    beta_hat: np.ndarray
    phi_hat: float
    eta_hat: np.ndarray
    mu_hat: np.ndarray
    information: np.ndarray
    xi_information: np.ndarray
    scores: np.ndarray
    influence: np.ndarray
    converged: bool
    iterations: int

    @property
    def sigma2_hat(self) -> float:
        """Residual variance ``1 / phi`` (meaningful for the gaussian family)."""
        return 1.0 / self.phi_hat

    @property
    def n_params(self) -> int:
        return self.scores.shape[1]


def observation_trials(dataset, family: FamilySpec) -> np.ndarray | None:
    """Per-row binomial trial counts (``None`` for gaussian)."""
    if family.kind == "gaussian":
        return None
    if dataset.trials is not None and family.kind == "binomial":
        return np.asarray(dataset.trials, dtype=float)
    return np.full(dataset.N, float(family.trials))


def loglik(family: FamilySpec, y, eta, trials=None, phi: float = 1.0, weights=None) -> float:
    """Log-likelihood up to the ``c(y, phi)`` term (gaussian keeps its phi part)."""
    w = 1.0 if weights is None else weights
    if family.kind == "gaussian":
        r = y - eta
        return float(np.sum(w * (0.5 * np.log(phi) - 0.5 * phi * r * r)))
    return float(np.sum(w * (y * log_expit(eta) + (trials - y) * log_expit(-eta))))


def _check_design(X):
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise DataError(f"fixed-effect design is rank deficient (rank < {X.shape[1]})")


def fit_null(dataset, family: FamilySpec, weights=None, beta0=None) -> NullFit:
    """Newton-Raphson (IRLS) for the canonical-link GLM with step-halving.

    ``weights`` multiplies each observation's log-likelihood contribution;
    it exists for sensitivity analysis and defaults to one.
    """
    X, y = dataset.X, dataset.y
    trials = observation_trials(dataset, family)
    check_support(family, y, trials, row_labels=dataset.rows)
    _check_design(X)
    N, p = X.shape
    w = np.ones(N) if weights is None else np.asarray(weights, dtype=float)

    if family.kind == "gaussian":
        sw = np.sqrt(w)
        beta, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
        iterations = 1
    else:
        if np.all(y == 0) or np.all(y == trials):
            raise ConvergenceError(
                "every response sits on the same boundary; the MLE is infinite (separation)",
                last_iterate=None, iterations=0,
            )
        beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
        if beta0 is None:
            # start at the logit of the pooled proportion on the intercept direction
            pbar = np.clip(np.sum(w * y) / np.sum(w * trials), 0.01, 0.99)
            start, *_ = np.linalg.lstsq(X, np.full(N, np.log(pbar / (1 - pbar))), rcond=None)
            beta = start
        eta = X @ beta
        ll = loglik(family, y, eta, trials, weights=w)
        iterations = 0
        while True:
            mu = trials * expit(eta)
            grad = X.T @ (w * (y - mu))
            if np.max(np.abs(grad)) <= TOL:
                break
            if iterations >= MAX_ITER:
                raise ConvergenceError(
                    f"Newton-Raphson did not converge in {MAX_ITER} iterations",
                    last_iterate=beta, iterations=iterations,
                )
            a2, _, _ = cumulant_derivatives(family, eta, trials)
            H = (X * (w * a2)[:, None]).T @ X
            try:
                step = np.linalg.solve(H, grad)
            except np.linalg.LinAlgError:
                raise ConvergenceError(
                    "information matrix became singular", last_iterate=beta, iterations=iterations
                ) from None
            t = 1.0
            for _ in range(MAX_HALVINGS + 1):
                cand = beta + t * step
                eta_c = X @ cand
                ll_c = loglik(family, y, eta_c, trials, weights=w)
                if ll_c >= ll - 1e-12 * abs(ll):
                    break
                t *= 0.5
            else:
                raise ConvergenceError(
                    "step-halving failed to increase the log-likelihood",
                    last_iterate=beta, iterations=iterations,
                )
            beta, eta, ll = cand, eta_c, ll_c
            iterations += 1
            if np.max(np.abs(eta)) > SEPARATION_ETA:
                raise ConvergenceError(
                    "fitted probabilities numerically 0 or 1 (separation)",
                    last_iterate=beta, iterations=iterations,
                )

    eta = X @ beta
    if family.kind == "gaussian":
        r = y - eta
        rss = float(np.sum(w * r * r))
        # round-off level residuals mean an exact fit
        if rss <= 1e-20 * max(float(np.sum(w * y * y)), 1e-300):
            raise DataError("gaussian null fit has zero residual variance")
        phi = float(np.sum(w)) / rss
        mu = eta.copy()
    else:
        phi = 1.0
        mu = trials * expit(eta)

    scores = _scores(family, X, y, mu, phi)
    info_beta = _information_beta(family, X, eta, phi, trials, w)
    xi_info = info_beta
    if family.kind == "gaussian":
        xi_info = np.zeros((p + 1, p + 1))
        xi_info[:p, :p] = info_beta
        xi_info[p, p] = np.sum(w) / (2.0 * phi * phi)
    influence = N * np.linalg.solve(xi_info, scores.T).T
    return NullFit(
        family=family,
        beta_hat=beta,
        phi_hat=phi,
        eta_hat=eta,
        mu_hat=mu,
        information=info_beta,
        xi_information=xi_info,
        scores=scores,
        influence=influence,
        converged=True,
        iterations=iterations,
    )


def _scores(family, X, y, mu, phi):
    """Per-observation score contributions for ``beta`` (and ``phi`` if estimated)."""
    e = y - mu
    s_beta = (phi * e)[:, None] * X
    if family.kind != "gaussian":
        return s_beta
    s_phi = 0.5 / phi - 0.5 * e * e
    return np.column_stack([s_beta, s_phi])


def _information_beta(family, X, eta, phi, trials, w=None):
    a2, _, _ = cumulant_derivatives(family, eta, trials)
    wt = phi * a2 if w is None else phi * a2 * w
    info = (X * wt[:, None]).T @ X
    return 0.5 * (info + info.T)


def information_matrix(dataset, fit: NullFit) -> np.ndarray:
    """Fixed-effect information ``sum_K phi a''(theta_K) x_K x_K^T`` at the fit."""
    return _information_beta(
        fit.family, dataset.X, fit.eta_hat, fit.phi_hat, observation_trials(dataset, fit.family)
    )


def influence_vectors(dataset, fit: NullFit) -> np.ndarray:
    """``F_K = N * I_xi^{-1} s_K``; includes the dispersion component for gaussian fits."""
    if not fit.converged:
        raise ConvergenceError("influence vectors need a converged fit")
    return fit.influence
