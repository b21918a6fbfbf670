"""Input validation helpers shared by the estimators and the CLI."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from rrmar.exceptions import DataError
from rrmar.model import MatrixSeries


def check_series(Y) -> MatrixSeries:
    """Coerce ``Y`` to a :class:`MatrixSeries`; arrays are read as ``(T, N1, N2)``."""
    if isinstance(Y, MatrixSeries):
        return Y
    arr = np.asarray(Y, dtype=float)
    if arr.ndim != 3:
        raise DataError(f"expected an array of shape (T, N1, N2), got {arr.shape}")
    return MatrixSeries.from_array(arr, time_first=True)


def check_ranks(ranks: Sequence[int]) -> tuple[int, int, int, int]:
    try:
        out = tuple(int(r) for r in ranks)
    except (TypeError, ValueError):
        raise ValueError(f"ranks must be four integers, got {ranks!r}") from None
    if len(out) != 4 or min(out) < 1:
        raise ValueError(f"ranks must be four positive integers, got {ranks!r}")
    return out


def check_lag(p) -> int:
    if isinstance(p, bool) or int(p) != p or p < 1:
        raise ValueError(f"lag order must be a positive integer, got {p!r}")
    return int(p)
