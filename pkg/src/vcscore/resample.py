"""Multiplier resampling of the null distribution of (S_O, S_P, S_S).

Conditional on the data, each replicate reweights the fixed summands of the
observed statistics with fresh standard normals::

    T_P^(r) = sqrt(2) sum_{K != K'} b[K, K'] U_K U_K' v[K, K']
    T_O^(r) = sum_K v[K, K] (b[K, K] D_K - j_n^T F_K)

With independent multipliers on the ordered pairs ``(K, K')`` and
``(K', K)`` the pair sum equals ``2 sum_{K < K'} b U U' w`` in law with one
standard normal ``w`` per unordered pair, which is what is drawn here.  Its
conditional variance is ``2 sum_{K != K'} b^2 U^2 U'^2``, the plug-in
counterpart of ``I_EP``.

Multipliers come from one stream per cluster keyed by ``(seed, cluster id)``
so results do not depend on cluster order, chunking or ``r0`` (replicate
``r`` is the same for every ``r0 > r``).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .scorestats import ScoreProfile, SupStatistics, one_sided_sup

__all__ = [
    "NullReplicates",
    "replicate_components",
    "replicate_statistics",
    "run_resampling",
    "p_values",
    "cluster_streams",
]

CHUNK = 256


@dataclass(frozen=True)
class NullReplicates:
    r0: int
    s_o: np.ndarray
    s_p: np.ndarray
    s_s: np.ndarray


def _cluster_key(cluster_id) -> int:
    digest = hashlib.blake2b(repr(cluster_id).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def cluster_streams(cluster_ids, seed: int) -> list[np.random.Generator]:
    """One independent generator per cluster."""
    return [
        np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), _cluster_key(c)]))
        for c in cluster_ids
    ]


class _Multipliers:
    """Draws ``(v_diag, w_pairs)`` chunk by chunk from the per-cluster streams.

    Each cluster row of a replicate holds its ``m`` diagonal multipliers then
    its ``m(m-1)/2`` pair multipliers, in pair order.
    """

    def __init__(self, dataset, seed):
        self.sizes = dataset.sizes
        self.streams = cluster_streams(dataset.cluster_ids, seed)

    def draw(self, k: int):
        diag, pairs = [], []
        for m, rng in zip(self.sizes, self.streams):
            block = rng.standard_normal((k, m + m * (m - 1) // 2))
            diag.append(block[:, :m])
            pairs.append(block[:, m:])
        return np.concatenate(diag, axis=1), np.concatenate(pairs, axis=1)


def replicate_components(profile: ScoreProfile):
    """Fixed summands ``(P, Q)`` so that ``T_P^(r) = 2 w @ P`` and ``T_O^(r) = v @ Q``.

    ``P`` is ``(n_pairs, G)`` and ``Q`` is ``(N, G)``.
    """
    t = profile.terms
    P = profile.b_pairs * (t.U[profile.left] * t.U[profile.right])[:, None]
    H = profile.j_n * t.N
    correction = t.scores @ np.linalg.solve(t.xi_information, H.T)
    Q = profile.b_diag * t.D[:, None] - correction
    return P, Q


def _standardize(T, var, degenerate):
    return np.where(degenerate, 0.0, T / np.sqrt(np.where(degenerate, 1.0, var)))


def replicate_statistics(profile: ScoreProfile, v_diag, w_pairs):
    """Replicate sup statistics for multiplier arrays of shape ``(R, N)`` and ``(R, n_pairs)``.

    Returns ``(s_o, s_p, s_s)`` each of length ``R``.
    """
    P, Q = replicate_components(profile)
    v_diag = np.atleast_2d(v_diag)
    w_pairs = np.atleast_2d(w_pairs)
    T_p = 2.0 * (w_pairs @ P) if P.shape[0] else np.zeros((v_diag.shape[0], Q.shape[1]))
    T_o = v_diag @ Q
    T_s = T_p + T_o
    deg = profile.degenerate
    s_p, _ = one_sided_sup(_standardize(T_p, profile.i_ep, deg[:, 0]))
    s_o, _ = one_sided_sup(_standardize(T_o, profile.i_eo, deg[:, 1]))
    s_s, _ = one_sided_sup(_standardize(T_s, profile.i_es, deg[:, 2]))
    return s_o, s_p, s_s


def replicate_raw(profile: ScoreProfile, dataset, r0: int, seed: int):
    """Unstandardized ``(T_P^(r), T_O^(r))`` arrays of shape ``(r0, G)``; for diagnostics."""
    P, Q = replicate_components(profile)
    mult = _Multipliers(dataset, seed)
    v, w = mult.draw(r0)
    return 2.0 * (w @ P), v @ Q


def run_resampling(dataset, profile: ScoreProfile, r0: int, seed: int) -> NullReplicates:
    if r0 < 1:
        raise ValueError("r0 must be at least 1")
    mult = _Multipliers(dataset, seed)
    out = [[], [], []]
    done = 0
    while done < r0:
        k = min(CHUNK, r0 - done)
        v, w = mult.draw(k)
        for acc, s in zip(out, replicate_statistics(profile, v, w)):
            acc.append(s)
        done += k
    s_o, s_p, s_s = (np.concatenate(a) for a in out)
    return NullReplicates(r0=r0, s_o=s_o, s_p=s_p, s_s=s_s)


def p_values(observed: SupStatistics, reps: NullReplicates) -> tuple[float, float, float]:
    """Add-one empirical p-values ``(1 + #{s_r >= s_obs}) / (r0 + 1)`` for O, P, S."""
    if reps.r0 < 1:
        raise ValueError("no replicates")
    out = []
    for obs, rep in ((observed.s_o, reps.s_o), (observed.s_p, reps.s_p), (observed.s_s, reps.s_s)):
        out.append((1.0 + np.count_nonzero(rep >= obs)) / (reps.r0 + 1.0))
    return tuple(out)
