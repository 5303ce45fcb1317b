"""Input checks for the estimator front end."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array, check_consistent_length, column_or_1d

from .data import Dataset
from .errors import DataError


def check_clustered_data(X, y, Z, groups, trials=None) -> Dataset:
    """Validate row-aligned arrays and pack them into a :class:`Dataset`."""
    try:
        X = check_array(X, dtype=np.float64, ensure_2d=True)
        Z = check_array(Z, dtype=np.float64, ensure_2d=False)
        y = column_or_1d(check_array(y, dtype=np.float64, ensure_2d=False), warn=True)
        groups = np.asarray(groups)
        check_consistent_length(X, y, Z, groups)
        if trials is not None:
            trials = column_or_1d(check_array(trials, dtype=np.float64, ensure_2d=False))
            check_consistent_length(y, trials)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    if groups.ndim != 1:
        raise DataError("groups must be one-dimensional")
    if trials is not None and np.any((trials < 1) | (trials != np.round(trials))):
        k = int(np.flatnonzero((trials < 1) | (trials != np.round(trials)))[0])
        raise DataError("trials must be positive integers", row=k)
    return Dataset.from_arrays(y, X, Z, groups, trials)


def check_grid_spec(grid):
    from .covparam import GridSpec

    if isinstance(grid, str):
        return GridSpec.parse(grid)
    return GridSpec(*grid)
