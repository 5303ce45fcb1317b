"""Score statistics for homogeneity and their supremum over the nuisance grid.

For a grid point ``gamma`` with coefficients ``b[K, K'] = z_K^T W(gamma) z_K'``
(zero across clusters) the score splits into a pairwise-correlation part and
an overdispersion part::

    T_P = sum_{K != K'} b[K, K'] U_K U_K'        (ordered pairs)
    T_O = sum_K b[K, K] (U_K^2 - V_K)
    T_S = T_P + T_O

Plugging in the null MLE leaves ``T_P`` first-order unaffected but shifts
``T_O`` by ``-sum_K j_n^T F_K``, where ``N j_n = H = sum_K b[K, K] E[-d D_K / d xi]``
and ``D_K = U_K^2 - V_K``.  Because ``E[D s] = E[-dD/dxi]`` for the score
``s``, the cross and quadratic correction terms coincide and::

    I_EP = 2 sum_{K != K'} b[K, K']^2 E U_K^2 E U_K'^2
    I_EO = sum_K b[K, K]^2 Var(D_K) - H^T I_xi^{-1} H
    I_ES = I_EP + I_EO

The difference form of ``I_EO`` loses most of its digits when the
correction nearly exhausts ``I_TO``.  It is evaluated instead as
``sum_K E[(b[K, K] D_K - a^T s_K)^2]`` with ``a = I_xi^{-1} H``; completing
the square per observation leaves a sum of nonnegative terms (see
:func:`_corrected_o_variance`).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .covparam import BlockCoefficients, GammaPoint, NuisanceGrid
from .errors import ParameterError
from .expfam import central_moments, cumulant_derivatives
from .nullfit import NullFit, observation_trials

__all__ = [
    "ObservationTerms",
    "ScoreProfile",
    "SupStatistics",
    "observation_terms",
    "raw_statistics",
    "variance_components",
    "standardize",
    "score_profile",
    "sup_statistics",
    "DEGENERACY_RTOL",
]

logger = logging.getLogger(__name__)

DEGENERACY_RTOL = 1e-12


@dataclass(frozen=True)
class ObservationTerms:
    """Per-observation quantities evaluated at the null fit."""

    U: np.ndarray
    V: np.ndarray
    eu2: np.ndarray
    var_d: np.ndarray
    dscore: np.ndarray  # E[-dD_K/dxi], one row per observation
    scores: np.ndarray
    xi_information: np.ndarray
    N: int
    X: np.ndarray
    a2: np.ndarray
    skew: np.ndarray  # a3 / a2, the slope of D on e
    resid_d: np.ndarray  # Var(D) - a3^2 / a2, the part of D not linear in e
    phi: float
    kind: str

    @property
    def D(self) -> np.ndarray:
        return self.U * self.U - self.V


def observation_terms(dataset, fit: NullFit) -> ObservationTerms:
    family = fit.family
    trials = observation_trials(dataset, family)
    phi = fit.phi_hat
    a2, a3, _ = cumulant_derivatives(family, fit.eta_hat, trials)
    U = phi * (dataset.y - fit.mu_hat)
    V = phi * a2
    mom = central_moments(family, fit.eta_hat, phi, trials)
    dscore = (phi * a3)[:, None] * dataset.X
    if family.kind == "gaussian":
        # d/dphi of phi^2 e^2 - phi a'' has expectation a''
        dscore = np.column_stack([dscore, -a2])
        skew = np.zeros(dataset.N)
        resid = np.asarray(mom.var_u2_minus_v, dtype=float)
    else:
        # a3 / a2 = q - p and Var(D) - a3^2 / a2 = 2 n (n - 1) (pq)^2, zero for bernoulli
        skew = expit(-fit.eta_hat) - expit(fit.eta_hat)
        resid = 2.0 * a2 * a2 * (1.0 - 1.0 / trials)
    return ObservationTerms(
        U=U,
        V=V,
        eu2=np.asarray(mom.eu2, dtype=float),
        var_d=np.asarray(mom.var_u2_minus_v, dtype=float),
        dscore=dscore,
        scores=fit.scores,
        xi_information=fit.xi_information,
        N=dataset.N,
        X=dataset.X,
        a2=a2,
        skew=skew,
        resid_d=resid,
        phi=phi,
        kind=family.kind,
    )


def _corrected_o_variance(terms: ObservationTerms, b_diag: np.ndarray, A: np.ndarray) -> np.ndarray:
    """``sum_K E[(b_K D_K - A^T s_K)^2]`` for ``b_diag`` of shape (N, G) and ``A`` of shape (P, G).

    Discrete families (``phi = 1``, ``s = e x``), with ``c = x^T A``::

        E[(bD - ce)^2] = a2 (c - b a3 / a2)^2 + b^2 (Var D - a3^2 / a2)

    Gaussian (``s = (phi e x, 1/(2 phi) - e^2/2)``): ``bD - A^T s`` equals
    ``(b phi^2 + A_phi / 2)(e^2 - 1/phi) - phi c e`` and the two parts are
    uncorrelated.
    """
    p = terms.X.shape[1]
    c = terms.X @ A[:p]
    if terms.kind == "gaussian":
        phi = terms.phi
        u = b_diag * phi + A[p][None, :] / (2.0 * phi)
        return 2.0 * np.sum(u * u, axis=0) + phi * np.sum(c * c, axis=0)
    r = c - b_diag * terms.skew[:, None]
    return terms.a2 @ (r * r) + terms.resid_d @ (b_diag * b_diag)


# --------------------------------------------------------------------------- #
# single grid point, block form
# --------------------------------------------------------------------------- #


def _block_slices(blocks: BlockCoefficients):
    lo = 0
    for b in blocks.blocks:
        hi = lo + b.shape[0]
        yield slice(lo, hi), b
        lo = hi


def raw_statistics(U, V, blocks: BlockCoefficients) -> tuple[float, float, float]:
    """``(t_p, t_o, t_s)`` for one grid point; clusters summed in order."""
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    t_p = 0.0
    t_o = 0.0
    for sl, b in _block_slices(blocks):
        u = U[sl]
        d = np.diag(b)
        t_p += float(u @ b @ u - d @ (u * u))
        t_o += float(d @ (u * u - V[sl]))
    return t_p, t_o, t_p + t_o


def variance_components(dataset, fit: NullFit, family, blocks: BlockCoefficients, W=None):
    """``(i_ep, i_eo, i_es, j_n)`` for one grid point.

    ``i_eo`` uses the cancellation-free form; ``family`` must match ``fit.family`` and
    ``W`` is accepted for symmetry with the grid form but not needed once the
    blocks are built.
    """
    if family != fit.family:
        raise ParameterError("family does not match the null fit")
    terms = observation_terms(dataset, fit)
    i_ep = 0.0
    H = np.zeros(terms.dscore.shape[1])
    for sl, b in _block_slices(blocks):
        e = terms.eu2[sl]
        off = b * b
        np.fill_diagonal(off, 0.0)
        i_ep += 2.0 * float(e @ off @ e)
        H += np.diag(b) @ terms.dscore[sl]
    A = np.linalg.solve(terms.xi_information, H)
    d_all = np.concatenate([np.diag(b) for _, b in _block_slices(blocks)])
    i_eo = max(float(_corrected_o_variance(terms, d_all[:, None], A[:, None])[0]), 0.0)
    return i_ep, i_eo, i_ep + i_eo, H / terms.N


def standardize(t_p, t_o, t_s, i_ep, i_eo, i_es, ref=None):
    """Divide each statistic by the root of its variance; degenerate variances give 0.

    A variance is degenerate when it does not exceed ``DEGENERACY_RTOL * ref``
    (``ref = 0`` when omitted, so only exact zeros count).
    """
    t = np.array([t_p, t_o, t_s], dtype=float)
    i = np.array([i_ep, i_eo, i_es], dtype=float)
    ref = 0.0 if ref is None else ref
    ok = i > DEGENERACY_RTOL * np.asarray(ref)
    x = np.where(ok, t / np.sqrt(np.where(ok, i, 1.0)), 0.0)
    return float(x[0]), float(x[1]), float(x[2])


# --------------------------------------------------------------------------- #
# whole grid, vectorized
# --------------------------------------------------------------------------- #


def pair_index(dataset) -> tuple[np.ndarray, np.ndarray]:
    """Unordered within-cluster pairs ``(K, K')`` with ``K < K'``, cluster-major."""
    left, right = [], []
    for lo, hi in zip(dataset.offsets[:-1], dataset.offsets[1:]):
        r, c = np.triu_indices(hi - lo, 1)
        left.append(r + lo)
        right.append(c + lo)
    if not left:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    return np.concatenate(left), np.concatenate(right)


def grid_coefficients(dataset, W: np.ndarray, left=None, right=None):
    """``b`` on every pair and on the diagonal for a stack of W matrices.

    Returns ``(b_pairs, b_diag)`` with shapes ``(n_pairs, G)`` and ``(N, G)``.
    """
    if left is None:
        left, right = pair_index(dataset)
    Z = dataset.Z
    q = Z.shape[1]
    if W.shape[1:] != (q, q):
        raise ParameterError(f"W matrices are {W.shape[1:]} but z has length {q}")
    Wf = W.reshape(W.shape[0], q * q).T
    b_pairs = np.einsum("pa,pb->pab", Z[left], Z[right]).reshape(-1, q * q) @ Wf
    b_diag = np.einsum("pa,pb->pab", Z, Z).reshape(-1, q * q) @ Wf
    return b_pairs, b_diag


@dataclass(frozen=True)
class ScoreProfile:
    """Raw, variance and standardized statistics at every grid point."""

    grid: NuisanceGrid
    t_p: np.ndarray
    t_o: np.ndarray
    t_s: np.ndarray
    i_ep: np.ndarray
    i_eo: np.ndarray
    i_es: np.ndarray
    x_p: np.ndarray
    x_o: np.ndarray
    x_s: np.ndarray
    j_n: np.ndarray
    degenerate: np.ndarray  # (G, 3) bool for the P, O, S channels
    floored: np.ndarray  # (G,) bool, i_eo was negative before flooring
    terms: ObservationTerms = field(repr=False)
    b_pairs: np.ndarray = field(repr=False)
    b_diag: np.ndarray = field(repr=False)
    left: np.ndarray = field(repr=False)
    right: np.ndarray = field(repr=False)

    @property
    def n_degenerate(self) -> int:
        return int(np.any(self.degenerate, axis=1).sum())

    @property
    def variances(self) -> np.ndarray:
        return np.column_stack([self.i_ep, self.i_eo, self.i_es])


def score_profile(dataset, fit: NullFit, grid: NuisanceGrid) -> ScoreProfile:
    terms = observation_terms(dataset, fit)
    left, right = pair_index(dataset)
    b_pairs, b_diag = grid_coefficients(dataset, grid.W, left, right)
    U, D = terms.U, terms.D

    t_p = 2.0 * (U[left] * U[right]) @ b_pairs
    t_o = D @ b_diag
    t_s = t_p + t_o

    i_ep = 4.0 * (terms.eu2[left] * terms.eu2[right]) @ (b_pairs * b_pairs)
    i_to = terms.var_d @ (b_diag * b_diag)
    H = b_diag.T @ terms.dscore
    Iinv_H = np.linalg.solve(terms.xi_information, H.T)
    # the difference form is kept only to flag points where it goes negative
    i_eo_raw = i_to - np.einsum("gp,pg->g", H, Iinv_H)
    i_eo = np.maximum(_corrected_o_variance(terms, b_diag, Iinv_H), 0.0)
    i_es = i_ep + i_eo

    ref = (terms.eu2 * terms.eu2) @ (b_diag * b_diag)
    degenerate = np.column_stack([i_ep, i_eo, i_es]) <= DEGENERACY_RTOL * ref[:, None]
    floored = (i_eo_raw < 0) & ~degenerate[:, 1]
    if np.any(floored):
        logger.warning("i_eo was negative at %d grid point(s); floored at 0", int(floored.sum()))

    x = np.column_stack([t_p, t_o, t_s])
    var = np.column_stack([i_ep, i_eo, i_es])
    x = np.where(degenerate, 0.0, x / np.sqrt(np.where(degenerate, 1.0, var)))
    return ScoreProfile(
        grid=grid,
        t_p=t_p, t_o=t_o, t_s=t_s,
        i_ep=i_ep, i_eo=i_eo, i_es=i_es,
        x_p=x[:, 0], x_o=x[:, 1], x_s=x[:, 2],
        j_n=H / terms.N,
        degenerate=degenerate,
        floored=floored,
        terms=terms,
        b_pairs=b_pairs, b_diag=b_diag, left=left, right=right,
    )


@dataclass(frozen=True)
class SupStatistics:
    s_o: float
    s_p: float
    s_s: float
    argmax_o: GammaPoint
    argmax_p: GammaPoint
    argmax_s: GammaPoint


def one_sided_sup(x: np.ndarray, axis: int = -1):
    """``max(x^2 * 1(x >= 0))`` along ``axis`` and the first maximizing index."""
    v = np.where(x >= 0, x * x, 0.0)
    return v.max(axis=axis), v.argmax(axis=axis)


def sup_statistics(profile: ScoreProfile) -> SupStatistics:
    pts = profile.grid.points
    if len(pts) == 0:
        raise ParameterError("empty grid")
    out = {}
    for name, x in (("o", profile.x_o), ("p", profile.x_p), ("s", profile.x_s)):
        s, k = one_sided_sup(np.asarray(x))
        out[f"s_{name}"] = float(s)
        out[f"argmax_{name}"] = pts[int(k)]
    return SupStatistics(**out)
