"""Co-movement analysis of a fitted RR-MAR.

Left null spaces of ``U1`` and ``U2`` give serial-correlation common
features: ``delta^T Y_t`` and ``Y_t gamma`` are white noise. ``U3`` and
``U4`` give predictor factors, ``U1`` and ``U2`` response factors, and the
per-lag cores are the VAR coefficients linking the two.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg

from rrmar.exceptions import PivotError
from rrmar.model import MatrixSeries, RRMARModel, stack_lags
from rrmar.tucker import _fix_signs

_ORTHO_TOL = 1e-8


def null_complement(u) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of ``span(u)``.

    Returns an ``N x (N - r)`` matrix, zero columns when ``u`` is square.
    """
    u = np.asarray(u, dtype=float)
    n, r = u.shape
    if r > n:
        raise ValueError(f"matrix with {r} columns cannot have {n}-dimensional rows orthonormal")
    if r == n:
        return np.zeros((n, 0))
    # right singular vectors of u^T beyond its rank span the null space
    _, _, vt = np.linalg.svd(u.T, full_matrices=True)
    return _fix_signs(vt[r:].T)


def default_pivots(basis: np.ndarray) -> list[int]:
    """Rows picked greedily by column-pivoted QR of ``basis^T``.

    For a single vector this is the row with the largest absolute entry.
    """
    k = basis.shape[1]
    _, _, piv = scipy.linalg.qr(basis.T, pivoting=True, mode="economic")
    return sorted(int(i) for i in piv[:k])


def normalize_null(basis, pivot: Union[int, Sequence[int], None] = None) -> np.ndarray:
    """Rescale a null basis so the pivot rows form an identity block.

    ``pivot`` is one row index per column (an int is accepted for a single
    column). Columns are combined by ``basis @ inv(basis[pivot])``.
    """
    basis = np.asarray(basis, dtype=float)
    n, k = basis.shape
    if k == 0:
        return basis.copy()
    if pivot is None:
        rows = default_pivots(basis)
    else:
        rows = [int(pivot)] if np.isscalar(pivot) else [int(i) for i in pivot]
    if len(rows) != k or len(set(rows)) != k or not all(0 <= i < n for i in rows):
        raise PivotError(f"need {k} distinct pivot rows in 0..{n - 1}, got {rows}")
    block = basis[rows]
    s = np.linalg.svd(block, compute_uv=False)
    if s[-1] <= 1e-10 * max(s[0], 1.0):
        usable = [i for i in range(n) if np.linalg.norm(basis[i]) > 1e-10]
        raise PivotError(f"pivot rows {rows} lead a singular block; rows with nonzero loadings: {usable}")
    out = basis @ np.linalg.inv(block)
    out[rows] = np.eye(k)
    return out


def projection(u) -> np.ndarray:
    """``U U^T`` for a matrix with orthonormal columns."""
    u = np.asarray(u, dtype=float)
    if not np.allclose(u.T @ u, np.eye(u.shape[1]), atol=_ORTHO_TOL):
        raise ValueError("projection needs a matrix with orthonormal columns")
    return u @ u.T


def sccf_series(m: RRMARModel, y: MatrixSeries, side: str = "rows") -> np.ndarray:
    """Common-feature combinations of the data.

    ``side='rows'`` returns ``delta^T Y_t`` with shape ``(N1 - r1, N2, T)``;
    ``side='cols'`` returns ``Y_t gamma`` with shape ``(N1, N2 - r2, T)``.
    A full rank on the requested side gives an empty array and a warning.
    """
    if side == "rows":
        delta = null_complement(m.factors[0])
        out = np.einsum("ak,abt->kbt", delta, y.values)
    elif side == "cols":
        gamma = null_complement(m.factors[1])
        out = np.einsum("abt,bk->akt", y.values, gamma)
    else:
        raise ValueError(f"side must be 'rows' or 'cols', got {side!r}")
    if out.size == 0:
        warnings.warn(f"full rank on the {side} side: no common-feature relations", stacklevel=2)
    return out


def response_factors(m: RRMARModel, y: MatrixSeries) -> np.ndarray:
    """``U1^T Y_t U2`` for every t, shape ``(r1, r2, T)``."""
    u1, u2 = m.factors[:2]
    return np.einsum("ab,act,cd->bdt", u1, y.values, u2)


def predictor_factors(m: RRMARModel, y: MatrixSeries) -> np.ndarray:
    """``U3^T Y_{t-i} U4`` for each usable t and lag i, shape ``(r3, r4, T - p, p)``."""
    u3, u4 = m.factors[2:]
    _, lagged = stack_lags(y, m.p)
    return np.einsum("ab,acit,cd->bdti", u3, lagged, u4)


def factor_var(m: RRMARModel) -> list[np.ndarray]:
    """Per-lag ``r1 r2 x r3 r4`` matrices mapping predictor to response factors."""
    r1, r2, r3, r4, p = m.core.shape
    return [m.core[..., j].reshape(r1 * r2, r3 * r4, order="F") for j in range(p)]


def autocorrelations(x, max_lag: int = 10) -> np.ndarray:
    """Sample autocorrelations at lags ``1..max_lag`` of a 1-d series."""
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    denom = float(x @ x)
    if denom == 0:
        return np.zeros(max_lag)
    return np.array([float(x[k:] @ x[:-k]) / denom for k in range(1, max_lag + 1)])


def whiteness(series: np.ndarray, max_lag: int = 10) -> dict:
    """Autocorrelations of every component of a ``(..., T)`` array and the ±2/√T band count."""
    series = np.asarray(series, dtype=float)
    t = series.shape[-1]
    flat = series.reshape(-1, t)
    acf = np.array([autocorrelations(s, max_lag) for s in flat]).reshape(series.shape[:-1] + (max_lag,))
    band = 2.0 / np.sqrt(t)
    inside = np.abs(acf) <= band
    return {
        "acf": acf,
        "band": band,
        "inside": inside,
        "fraction_inside": float(inside.mean()) if inside.size else 1.0,
    }


@dataclass
class ComovementReport:
    """Co-movement summaries of one fitted model on one series."""

    delta: np.ndarray
    gamma: np.ndarray
    delta_normalized: np.ndarray
    gamma_normalized: np.ndarray
    delta_pivots: list
    gamma_pivots: list
    response_factor_series: np.ndarray
    predictor_factor_series: np.ndarray
    projections: dict
    factor_var_cores: list
    row_labels: tuple = ()
    col_labels: tuple = ()
    time_labels: tuple = ()
    p: int = 1
    notes: list = field(default_factory=list)


def comovement_report(m: RRMARModel, y: MatrixSeries, row_pivot=None, col_pivot=None) -> ComovementReport:
    """Null spaces, normalized relations, factor series and projections.

    ``row_pivot`` / ``col_pivot`` choose the normalization rows of ``delta``
    and ``gamma`` (defaults from :func:`default_pivots`).
    """
    if y.dims != m.dims:
        raise ValueError(f"series dims {y.dims} do not match model dims {m.dims}")
    delta = null_complement(m.factors[0])
    gamma = null_complement(m.factors[1])
    notes = []
    if delta.shape[1] == 0:
        notes.append("r1 = N1: no row-side common features")
    if gamma.shape[1] == 0:
        notes.append("r2 = N2: no column-side common features")
    d_piv = default_pivots(delta) if row_pivot is None else _as_rows(row_pivot)
    g_piv = default_pivots(gamma) if col_pivot is None else _as_rows(col_pivot)
    return ComovementReport(
        delta=delta,
        gamma=gamma,
        delta_normalized=normalize_null(delta, d_piv) if delta.shape[1] else delta,
        gamma_normalized=normalize_null(gamma, g_piv) if gamma.shape[1] else gamma,
        delta_pivots=d_piv if delta.shape[1] else [],
        gamma_pivots=g_piv if gamma.shape[1] else [],
        response_factor_series=response_factors(m, y),
        predictor_factor_series=predictor_factors(m, y),
        projections={f"U{i + 1}": projection(u) for i, u in enumerate(m.factors)},
        factor_var_cores=factor_var(m),
        row_labels=y.row_labels,
        col_labels=y.col_labels,
        time_labels=y.time_labels,
        p=m.p,
        notes=notes,
    )


def _as_rows(pivot) -> list[int]:
    return [int(pivot)] if np.isscalar(pivot) else [int(i) for i in pivot]
