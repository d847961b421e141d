from __future__ import annotations

import numpy as np
from sklearn.utils import check_consistent_length, column_or_1d
from sklearn.utils.validation import assert_all_finite

from ..errors import DataError, InsufficientDataError


def check_xy(x, y, min_points: int = 1, name: str = "data") -> tuple[np.ndarray, np.ndarray]:
    """1-D float arrays of equal length, finite, ``x`` strictly increasing."""
    try:
        x = column_or_1d(np.asarray(x, dtype=float))
        y = column_or_1d(np.asarray(y, dtype=float))
        check_consistent_length(x, y)
        assert_all_finite(x)
        assert_all_finite(y)
    except ValueError as exc:
        raise DataError(f"{name}: {exc}") from None
    if np.any(np.diff(x) <= 0):
        raise DataError(f"{name}: x must be strictly increasing")
    if len(x) < min_points:
        raise InsufficientDataError(f"{name}: {len(x)} points, need at least {min_points}")
    return x, y


def check_windows(windows) -> tuple[tuple[float, float], ...]:
    out = []
    for w in windows or ():
        lo, hi = (float(v) for v in w)
        if not lo < hi:
            raise DataError(f"exclusion window ({lo}, {hi}) must have lo < hi")
        out.append((lo, hi))
    return tuple(out)


def keep_mask(x: np.ndarray, windows) -> np.ndarray:
    """True for samples outside every closed exclusion window."""
    keep = np.ones(len(x), dtype=bool)
    for lo, hi in windows:
        keep &= ~((x >= lo) & (x <= hi))
    return keep
