"""Normalized random-effect covariance W(gamma) and nuisance grids.

The random-effect covariance is written ``Sigma = sigma_T * W(gamma)`` so that
homogeneity is the single boundary hypothesis ``sigma_T = 0`` while ``gamma``
is a nuisance parameter that is only identified under the alternative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DataError, ParameterError

__all__ = [
    "GammaPoint",
    "GridSpec",
    "NuisanceGrid",
    "BlockCoefficients",
    "w_matrix_q2",
    "w_matrix_cholesky",
    "lambda_from_angles",
    "make_grid",
    "build_blocks",
    "FULL_GRID",
    "DESK_GRID",
]


class GammaPoint(NamedTuple):
    gamma1: float
    gamma2: float


class GridSpec(NamedTuple):
    n1: int
    n2: int
    delta0: float = 15.0 / 16.0

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        """Parse ``"n1,n2,delta0"`` (delta0 may be a fraction such as ``15/16``)."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) not in (2, 3):
            raise ParameterError(f"grid must be 'n1,n2[,delta0]', got {text!r}")
        try:
            n1, n2 = int(parts[0]), int(parts[1])
            if len(parts) == 3:
                num, _, den = parts[2].partition("/")
                delta0 = float(num) / float(den) if den else float(num)
            else:
                delta0 = 15.0 / 16.0
        except ValueError as exc:
            raise ParameterError(f"grid must be 'n1,n2[,delta0]', got {text!r}") from exc
        return cls(n1, n2, delta0)


FULL_GRID = GridSpec(20, 31, 15.0 / 16.0)
DESK_GRID = GridSpec(10, 7, 15.0 / 16.0)


def w_matrix_q2(g: GammaPoint | Sequence[float]) -> np.ndarray:
    """Two-dimensional W with unit trace.

    ``gamma1`` splits the total variance between the two components
    (``cos^2`` and ``sin^2``) and ``gamma2`` is their correlation.
    """
    g1, g2 = float(g[0]), float(g[1])
    if abs(g2) > 1.0:
        raise ParameterError(f"|gamma2| must not exceed 1, got {g2}")
    c, s = math.cos(g1), math.sin(g1)
    off = g2 * s * c
    return np.array([[c * c, off], [off, s * s]])


def lambda_from_angles(angles: Sequence[float]) -> np.ndarray:
    """Map ``q - 1`` hyperspherical angles to a unit vector in the positive orthant."""
    angles = np.asarray(angles, dtype=float)
    q = angles.size + 1
    lam = np.ones(q)
    for k, a in enumerate(angles):
        lam[k] *= math.cos(a)
        lam[k + 1 :] *= math.sin(a)
    if np.any(lam < -1e-15):
        raise ParameterError("angles must lie in [0, pi/2] for a nonnegative diagonal")
    return np.clip(lam, 0.0, None)


def w_matrix_cholesky(lambda_angles: Sequence[float], lower_gamma) -> np.ndarray:
    """General-q W = Lam Gam Gam^T Lam with Lam = diag(unit vector), Gam unit lower triangular.

    ``lower_gamma`` is either the ``q(q-1)/2`` strictly-lower entries in
    row-major order (``g21, g31, g32, ...``) or a ``q x q`` array whose
    strictly lower part is used.
    """
    lam = lambda_from_angles(lambda_angles)
    q = lam.size
    lower = np.asarray(lower_gamma, dtype=float)
    gam = np.eye(q)
    rows, cols = np.tril_indices(q, -1)
    if lower.ndim == 2:
        if lower.shape != (q, q):
            raise ParameterError(f"lower_gamma must be {q}x{q}, got {lower.shape}")
        gam[rows, cols] = lower[rows, cols]
    else:
        if lower.size != rows.size:
            raise ParameterError(
                f"expected {rows.size} strictly-lower entries for q={q}, got {lower.size}"
            )
        gam[rows, cols] = lower.ravel()
    L = lam[:, None] * gam
    W = L @ L.T
    return 0.5 * (W + W.T)


@dataclass(frozen=True)
class NuisanceGrid:
    """Grid points in row-major order (gamma1 outer, gamma2 inner)."""

    points: tuple[GammaPoint, ...]
    spec: GridSpec | None = None
    W: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if not self.points:
            raise ParameterError("grid is empty")
        if self.W is None:
            object.__setattr__(self, "W", np.stack([w_matrix_q2(p) for p in self.points]))

    def __len__(self):
        return len(self.points)

    @property
    def q(self) -> int:
        return self.W.shape[1]

    def zero_correlation(self) -> "NuisanceGrid":
        """Sub-grid with ``gamma2 == 0`` (correlation ignored)."""
        keep = [k for k, p in enumerate(self.points) if p.gamma2 == 0.0]
        return NuisanceGrid(tuple(self.points[k] for k in keep), self.spec, self.W[keep])

    @classmethod
    def from_matrices(cls, points, matrices) -> "NuisanceGrid":
        """Grid over arbitrary W matrices (e.g. from :func:`w_matrix_cholesky`)."""
        return cls(tuple(points), None, np.asarray(matrices, dtype=float))


def make_grid(spec: GridSpec | tuple = DESK_GRID) -> NuisanceGrid:
    """Points ``(i*pi/n1, j*delta0/((n2-1)/2))`` for ``i = 1..n1`` and symmetric ``j``."""
    n1, n2, delta0 = GridSpec(*spec)
    if n1 < 1 or n2 < 1 or n2 % 2 == 0:
        raise ParameterError(f"grid counts need n1 >= 1 and odd n2 >= 1, got ({n1}, {n2})")
    if not 0.0 < delta0 < 1.0:
        raise ParameterError(f"delta0 must lie in (0, 1), got {delta0}")
    half = (n2 - 1) // 2
    step = delta0 / half if half else 0.0
    points = tuple(
        GammaPoint(i * math.pi / n1, j * step)
        for i in range(1, n1 + 1)
        for j in range(-half, half + 1)
    )
    return NuisanceGrid(points, GridSpec(n1, n2, delta0))


@dataclass(frozen=True)
class BlockCoefficients:
    """Per-cluster blocks ``b[K, K'] = z_K^T W z_K'``; cross-cluster entries are zero."""

    blocks: tuple[np.ndarray, ...]

    def dense(self) -> np.ndarray:
        from scipy.linalg import block_diag

        return block_diag(*self.blocks) if self.blocks else np.zeros((0, 0))

    @property
    def n_stored(self) -> int:
        return sum(b.size for b in self.blocks)


def build_blocks(dataset, W: np.ndarray) -> BlockCoefficients:
    W = np.asarray(W, dtype=float)
    if dataset.Z.shape[1] != W.shape[0]:
        raise DataError(
            f"random-effect covariates have length {dataset.Z.shape[1]} but W is {W.shape[0]}x{W.shape[1]}"
        )
    blocks = []
    for lo, hi in zip(dataset.offsets[:-1], dataset.offsets[1:]):
        Zi = dataset.Z[lo:hi]
        blocks.append(Zi @ W @ Zi.T)
    return BlockCoefficients(tuple(blocks))
