"""Exponential-family pieces for canonical-link GLMs.

Densities have the form ``exp[phi * (y*theta - a(theta)) + c(y, phi)]`` with
``theta = eta`` (canonical link).  For the binomial family ``y`` is a count
out of ``trials`` and ``a(theta) = trials * log(1 + exp(theta))``; for the
gaussian family ``a(theta) = theta**2 / 2`` and ``phi = 1 / sigma**2``.

Derivatives of ``log p`` with respect to a shift ``t`` of the linear
predictor give the score pieces used everywhere else::

    U = phi * (y - mu)            # first derivative at t = 0
    V = phi * a''(theta)          # minus the second derivative at t = 0

Because the link is canonical, dk/dt = 1 and d2k/dt2 = 0, so the terms that
carry d2k/dt2 in the general formulas vanish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import expit

from .errors import DataError, ParameterError

__all__ = [
    "FamilySpec",
    "ScoreTerms",
    "MomentSet",
    "link_mean",
    "score_terms",
    "central_moments",
    "moment_oracle",
    "cumulant_derivatives",
]

Kind = Literal["gaussian", "bernoulli", "binomial"]


@dataclass(frozen=True)
class FamilySpec:
    """Response family with its canonical link.

    ``trials`` is the default number of binomial trials; individual
    observations may override it.  Bernoulli is binomial with one trial.
    """

    kind: Kind
    trials: int = 1

    def __post_init__(self):
        if self.kind not in ("gaussian", "bernoulli", "binomial"):
            raise ParameterError(f"unknown family kind {self.kind!r}")
        if self.kind == "bernoulli" and self.trials != 1:
            raise ParameterError("bernoulli family has exactly one trial")
        if self.kind == "binomial" and (int(self.trials) != self.trials or self.trials < 1):
            raise ParameterError(f"binomial trials must be a positive integer, got {self.trials}")

    @classmethod
    def from_name(cls, name: str, trials: int = 1) -> "FamilySpec":
        if name == "bernoulli":
            return cls("bernoulli")
        return cls(name, trials=trials)  # type: ignore[arg-type]

    @property
    def discrete(self) -> bool:
        return self.kind != "gaussian"

    @property
    def dispersion_mode(self) -> str:
        return "estimated" if self.kind == "gaussian" else "fixed"


@dataclass(frozen=True)
class ScoreTerms:
    U: np.ndarray | float
    V: np.ndarray | float
    e: np.ndarray | float
    mu: np.ndarray | float


@dataclass(frozen=True)
class MomentSet:
    eu2: float
    eu4: float
    ev2: float
    eu2v: float
    var_u2_minus_v: float


def _trials(family: FamilySpec, trials=None):
    if family.kind == "gaussian":
        return None
    if trials is None:
        return family.trials
    return np.asarray(trials, dtype=float)


def _check_eta(eta):
    eta = np.asarray(eta, dtype=float)
    if not np.all(np.isfinite(eta)):
        raise ParameterError("linear predictor must be finite")
    return eta


def _unwrap(x):
    return x.item() if isinstance(x, np.ndarray) and x.ndim == 0 else x


def link_mean(family: FamilySpec, eta, trials=None):
    """Conditional mean ``g(eta)`` for the canonical link."""
    eta = _check_eta(eta)
    if family.kind == "gaussian":
        return _unwrap(eta.copy())
    return _unwrap(_trials(family, trials) * expit(eta))


def cumulant_derivatives(family: FamilySpec, eta, trials=None):
    """Return ``(a'', a''', a'''')`` of the cumulant function at ``theta = eta``."""
    eta = _check_eta(eta)
    if family.kind == "gaussian":
        one = np.ones_like(eta)
        return one, np.zeros_like(eta), np.zeros_like(eta)
    n = _trials(family, trials)
    p = expit(eta)
    # expit(-eta) keeps 1 - p accurate in the upper tail
    q = expit(-eta)
    pq = p * q
    return n * pq, n * pq * (q - p), n * pq * (1.0 - 6.0 * pq)


def check_support(family: FamilySpec, y, trials=None, row_labels=None) -> None:
    """Raise DataError naming the first observation outside the support.

    ``row_labels`` translates positions into the caller's row numbering.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    bad = ~np.isfinite(y)
    if family.discrete:
        n = _trials(family, trials)
        n = np.broadcast_to(np.asarray(n, dtype=float), y.shape)
        bad |= (y < 0) | (y > n) | (y != np.round(y))
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        row = k if row_labels is None else int(row_labels[k])
        raise DataError(f"response {y[k]:g} outside the {family.kind} support", row=row)


def score_terms(family: FamilySpec, y, eta, phi: float = 1.0, trials=None) -> ScoreTerms:
    """U, V, raw residual and mean at ``t = 0``."""
    if not phi > 0:
        raise ParameterError("dispersion phi must be positive")
    check_support(family, y, trials)
    y = np.asarray(y, dtype=float)
    mu = np.asarray(link_mean(family, eta, trials), dtype=float)
    a2, _, _ = cumulant_derivatives(family, eta, trials)
    e = y - mu
    return ScoreTerms(
        U=_unwrap(phi * e), V=_unwrap(phi * a2), e=_unwrap(e), mu=_unwrap(mu)
    )


def central_moments(family: FamilySpec, eta, phi: float = 1.0, trials=None) -> MomentSet:
    """Moments of U and V under the null, from the cumulants of ``y``.

    The cumulants of ``y`` are ``a^(k)(theta) / phi**(k-1)``, so with
    ``U = phi * e`` and ``V = phi * a''`` constant in ``y``::

        E U^2    = phi a''
        E U^4    = 3 phi^2 a''^2 + phi a''''
        E V^2    = phi^2 a''^2
        E U^2 V  = phi^2 a''^2
        Var(U^2 - V) = phi a'''' + 2 phi^2 a''^2

    Works elementwise when ``eta`` is an array.
    """
    if not phi > 0:
        raise ParameterError("dispersion phi must be positive")
    a2, a3, a4 = cumulant_derivatives(family, eta, trials)
    eu2 = phi * a2
    ev2 = eu2 * eu2
    eu4 = 3.0 * ev2 + phi * a4
    if family.kind == "gaussian":
        var = 2.0 * phi * phi * a2
    else:
        # phi n pq (1 - 6pq) + 2 phi^2 n^2 p^2 q^2 rewritten with (q - p)^2 = 1 - 4pq
        # so the bernoulli case is exactly zero at p = 1/2
        n = _trials(family, trials)
        eta = np.asarray(eta, dtype=float)
        p, q = expit(eta), expit(-eta)
        pq = p * q
        var = phi * n * pq * ((q - p) ** 2 + 2.0 * pq * (phi * n - 1.0))
    return MomentSet(
        eu2=_unwrap(eu2),
        eu4=_unwrap(eu4),
        ev2=_unwrap(ev2),
        eu2v=_unwrap(ev2),
        var_u2_minus_v=_unwrap(np.asarray(var, dtype=float)),
    )


_GH_NODES, _GH_WEIGHTS = hermegauss(64)
_GH_WEIGHTS = _GH_WEIGHTS / math.sqrt(2.0 * math.pi)


def moment_oracle(family: FamilySpec, eta: float, phi: float = 1.0, trials=None) -> MomentSet:
    """Moments of U and V computed by brute force over the distribution of ``y``.

    Discrete families enumerate ``y = 0..trials``; the gaussian family uses
    64-point Gauss-Hermite quadrature for ``y - mu ~ N(0, 1/phi)``.
    """
    if not phi > 0:
        raise ParameterError("dispersion phi must be positive")
    eta = float(eta)
    if family.kind == "gaussian":
        e = _GH_NODES / math.sqrt(phi)
        w = _GH_WEIGHTS
        U = phi * e
        V = np.full_like(e, phi)
    else:
        n = int(family.trials if trials is None else trials)
        p = 1.0 / (1.0 + math.exp(-eta))
        ys = np.arange(n + 1, dtype=float)
        w = np.array([math.comb(n, k) * p**k * (1.0 - p) ** (n - k) for k in range(n + 1)])
        U = phi * (ys - n * p)
        V = np.full_like(ys, phi * n * p * (1.0 - p))
    eu2 = float(w @ U**2)
    eu4 = float(w @ U**4)
    ev2 = float(w @ V**2)
    eu2v = float(w @ (U**2 * V))
    d = U**2 - V
    dbar = float(w @ d)
    return MomentSet(eu2=eu2, eu4=eu4, ev2=ev2, eu2v=eu2v, var_u2_minus_v=float(w @ (d - dbar) ** 2))
