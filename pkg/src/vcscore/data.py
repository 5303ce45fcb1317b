"""Clustered data container and CSV ingestion."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

__all__ = ["Dataset", "load_dataset"]


@dataclass(frozen=True)
class Dataset:
    """Observations stored cluster-contiguously.

    ``offsets[i]:offsets[i+1]`` indexes the rows of cluster ``i``.  ``trials``
    is ``None`` unless a per-row trial count was supplied.  ``rows`` holds the
    original row label (input index or file line) of each observation.
    """

    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    offsets: np.ndarray
    cluster_ids: tuple
    trials: np.ndarray | None = None
    rows: np.ndarray | None = None

    def __post_init__(self):
        N = self.y.shape[0]
        if N == 0:
            raise DataError("dataset is empty")
        if self.X.shape[0] != N or self.Z.shape[0] != N:
            raise DataError("y, X and Z must have the same number of rows")
        if self.offsets[0] != 0 or self.offsets[-1] != N:
            raise DataError("cluster offsets do not cover the observations")
        if len(set(self.cluster_ids)) != len(self.cluster_ids):
            raise DataError("cluster ids must be unique")
        if N < self.X.shape[1]:
            raise DataError(f"need at least {self.X.shape[1]} observations, got {N}")
        if self.rows is None:
            object.__setattr__(self, "rows", np.arange(N))
        for a in (self.y, self.X, self.Z, self.offsets, self.rows):
            a.setflags(write=False)
        if self.trials is not None:
            self.trials.setflags(write=False)

    @property
    def N(self) -> int:
        return self.y.shape[0]

    @property
    def n(self) -> int:
        return len(self.cluster_ids)

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def groups(self) -> np.ndarray:
        """Cluster index (0..n-1) of every row."""
        return np.repeat(np.arange(self.n), self.sizes)

    @classmethod
    def from_arrays(cls, y, X, Z, groups, trials=None, row_labels=None) -> "Dataset":
        """Build from row-aligned arrays; rows are regrouped by cluster in order of first appearance."""
        y = np.asarray(y, dtype=float).ravel()
        X = np.asarray(X, dtype=float)
        Z = np.asarray(Z, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if Z.ndim == 1:
            Z = Z[:, None]
        groups = np.asarray(groups)
        if groups.shape[0] != y.shape[0]:
            raise DataError("groups must have one entry per observation")
        ids, first, codes = np.unique(groups, return_index=True, return_inverse=True)
        rank = np.empty(ids.size, dtype=int)
        rank[np.argsort(first, kind="stable")] = np.arange(ids.size)
        codes = rank[codes.ravel()]
        order = np.argsort(codes, kind="stable")
        sizes = np.bincount(codes, minlength=ids.size)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        ordered_ids = tuple(_plain(v) for v in ids[np.argsort(first, kind="stable")])
        t = None
        if trials is not None:
            t = np.asarray(trials, dtype=float).ravel()[order]
        labels = np.arange(y.shape[0]) if row_labels is None else np.asarray(row_labels)
        return cls(y[order], X[order], Z[order], offsets, ordered_ids, t, labels[order])

    def with_scaled_z(self, scale_z: float) -> "Dataset":
        """Copy with every random-effect covariate multiplied by ``scale_z``."""
        return Dataset(
            self.y.copy(), self.X.copy(), self.Z * scale_z, self.offsets.copy(),
            self.cluster_ids, None if self.trials is None else self.trials.copy(),
            self.rows.copy(),
        )


def _plain(v):
    return v.item() if hasattr(v, "item") else v


def _parse_float(text, row, column):
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise DataError(f"non-numeric value {text!r}", row=row, column=column) from None
    if not math.isfinite(value):
        raise DataError(f"non-finite value {text!r}", row=row, column=column)
    return value


def load_dataset(path, schema=None) -> Dataset:
    """Read ``cluster,y,x1..xp,z1..zq[,trials]``.

    ``schema`` optionally pins ``{"p": int, "q": int, "trials": bool}``; by
    default the column counts are inferred from the header.  Row numbers in
    diagnostics are 1-based file lines (the header is line 1).
    """
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        rows = list(reader)

    if len(set(header)) != len(header):
        dup = next(h for h in header if header.count(h) > 1)
        raise DataError(f"duplicate header column {dup!r}", row=1, column=dup)
    for required in ("cluster", "y"):
        if required not in header:
            raise DataError(f"missing required column {required!r}", row=1)
    xcols = _numbered(header, "x")
    zcols = _numbered(header, "z")
    if not xcols:
        raise DataError("missing fixed-effect columns x1..xp", row=1)
    if not zcols:
        raise DataError("missing random-effect columns z1..zq", row=1)
    has_trials = "trials" in header
    if schema is not None:
        if "p" in schema and len(xcols) != schema["p"]:
            raise DataError(f"expected {schema['p']} x columns, found {len(xcols)}", row=1)
        if "q" in schema and len(zcols) != schema["q"]:
            raise DataError(f"expected {schema['q']} z columns, found {len(zcols)}", row=1)
        if schema.get("trials") and not has_trials:
            raise DataError("missing column 'trials'", row=1, column="trials")
    known = {"cluster", "y", "trials", *xcols, *zcols}
    extra = [h for h in header if h not in known]
    if extra:
        raise DataError(f"unexpected column {extra[0]!r}", row=1, column=extra[0])

    idx = {h: k for k, h in enumerate(header)}
    body = [(line, r) for line, r in enumerate(rows, start=2) if any(c.strip() for c in r)]
    if not body:
        raise DataError(f"{path} has a header but no data rows")
    ys, Xs, Zs, gs, ts, lines = [], [], [], [], [], []
    for line, r in body:
        if len(r) != len(header):
            raise DataError(f"expected {len(header)} fields, found {len(r)}", row=line)
        lines.append(line)
        gs.append(r[idx["cluster"]].strip())
        ys.append(_parse_float(r[idx["y"]], line, "y"))
        Xs.append([_parse_float(r[idx[c]], line, c) for c in xcols])
        Zs.append([_parse_float(r[idx[c]], line, c) for c in zcols])
        if has_trials:
            t = _parse_float(r[idx["trials"]], line, "trials")
            if t < 1 or t != int(t):
                raise DataError(f"trials must be a positive integer, got {t}", row=line, column="trials")
            ts.append(t)
    return Dataset.from_arrays(
        np.array(ys), np.array(Xs), np.array(Zs), np.array(gs, dtype=object),
        np.array(ts) if has_trials else None, np.array(lines),
    )


def _numbered(header, prefix):
    cols = sorted(
        (h for h in header if h.startswith(prefix) and h[len(prefix):].isdigit()),
        key=lambda h: int(h[len(prefix):]),
    )
    expected = [f"{prefix}{k}" for k in range(1, len(cols) + 1)]
    if cols != expected:
        raise DataError(f"{prefix} columns must be numbered {prefix}1..{prefix}{len(cols)}", row=1)
    return cols
