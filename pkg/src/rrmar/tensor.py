"""Dense tensor algebra: matricization, mode products and contractions.

Tensors are plain :class:`numpy.ndarray` objects. The linearization
order is column-major with mode 0 varying fastest, so ``vec`` and every
unfolding below follow the usual Kolda-Bader index maps. Modes are
zero-based throughout.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

DenseTensor = np.ndarray


def _check_mode(mode: int, ndim: int) -> int:
    if isinstance(mode, bool) or not isinstance(mode, (int, np.integer)):
        raise ValueError(f"mode must be an integer, got {mode!r}")
    if not 0 <= mode < ndim:
        raise ValueError(f"mode {mode} out of range for a tensor of order {ndim}")
    return int(mode)


def as_tensor(x) -> DenseTensor:
    """Return ``x`` as a float array of order at least one."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        raise ValueError("a tensor needs at least one mode")
    if any(n < 1 for n in arr.shape):
        raise ValueError(f"all mode sizes must be positive, got shape {arr.shape}")
    return arr


def vec(x) -> np.ndarray:
    """Column-major vectorization."""
    return np.asarray(x).reshape(-1, order="F")


def from_vec(data, shape: Sequence[int]) -> DenseTensor:
    """Inverse of :func:`vec`."""
    data = np.asarray(data, dtype=float).ravel()
    shape = tuple(int(n) for n in shape)
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{data.size} values cannot fill shape {shape}")
    return data.reshape(shape, order="F")


def unfold(x, mode: int) -> np.ndarray:
    """Mode-``mode`` matricization.

    Element ``(n_0, ..., n_{K-1})`` lands in row ``n_mode`` and in the
    column whose index runs over the remaining modes with the lowest
    mode fastest.
    """
    x = as_tensor(x)
    mode = _check_mode(mode, x.ndim)
    return np.moveaxis(x, mode, 0).reshape(x.shape[mode], -1, order="F")


def refold(m, mode: int, shape: Sequence[int]) -> DenseTensor:
    """Inverse of :func:`unfold` for a tensor of the given ``shape``."""
    m = np.asarray(m, dtype=float)
    shape = tuple(int(n) for n in shape)
    mode = _check_mode(mode, len(shape))
    rest = shape[:mode] + shape[mode + 1:]
    expected = (shape[mode], int(np.prod(rest)))
    if m.shape != expected:
        raise ValueError(f"matrix of shape {m.shape} cannot refold to {shape} along mode {mode}; expected {expected}")
    return np.moveaxis(m.reshape((shape[mode],) + rest, order="F"), 0, mode)


def _split_modes(row_modes: Iterable[int], ndim: int) -> tuple[list[int], list[int]]:
    rows = sorted({_check_mode(m, ndim) for m in row_modes})
    if not rows:
        raise ValueError("row_modes must be non-empty")
    cols = [m for m in range(ndim) if m not in rows]
    return rows, cols


def multi_unfold(x, row_modes: Iterable[int]) -> np.ndarray:
    """Multi-mode matricization ``X_[S]``.

    Row index strides are cumulative products of the sizes of the modes in
    ``row_modes`` (ascending); column strides likewise over the other modes.
    """
    x = as_tensor(x)
    rows, cols = _split_modes(row_modes, x.ndim)
    n_rows = int(np.prod([x.shape[m] for m in rows]))
    return np.transpose(x, rows + cols).reshape(n_rows, -1, order="F")


def multi_refold(m, row_modes: Iterable[int], shape: Sequence[int]) -> DenseTensor:
    """Inverse of :func:`multi_unfold`."""
    m = np.asarray(m, dtype=float)
    shape = tuple(int(n) for n in shape)
    rows, cols = _split_modes(row_modes, len(shape))
    perm = rows + cols
    expected = (int(np.prod([shape[i] for i in rows])), int(np.prod([shape[i] for i in cols])))
    if m.shape != expected:
        raise ValueError(f"matrix of shape {m.shape} does not match {expected} for shape {shape}")
    permuted = m.reshape([shape[i] for i in perm], order="F")
    return np.transpose(permuted, np.argsort(perm))


def mode_product(x, u, mode: int) -> DenseTensor:
    """``x ×_mode u``: multiply every mode-``mode`` fiber of ``x`` by ``u``."""
    x = as_tensor(x)
    u = np.asarray(u, dtype=float)
    mode = _check_mode(mode, x.ndim)
    if u.ndim != 2 or u.shape[1] != x.shape[mode]:
        raise ValueError(f"matrix of shape {u.shape} cannot multiply mode {mode} of size {x.shape[mode]}")
    return np.moveaxis(np.tensordot(u, x, axes=(1, mode)), 0, mode)


def multi_mode_product(x, matrices: Sequence, transpose: bool = False) -> DenseTensor:
    """Apply ``x ×_0 U_0 ×_1 U_1 ...``; ``None`` entries leave a mode alone."""
    out = as_tensor(x)
    for mode, u in enumerate(matrices):
        if u is None:
            continue
        out = mode_product(out, np.asarray(u).T if transpose else u, mode)
    return out


def contract(x, y, k: int) -> DenseTensor:
    """Contracted product over the last ``k`` modes of ``x`` and first ``k`` of ``y``.

    Returns a 0-d array when every mode is contracted.
    """
    x = as_tensor(x)
    y = as_tensor(y)
    if k < 1 or k > min(x.ndim, y.ndim):
        raise ValueError(f"cannot contract {k} modes of tensors of order {x.ndim} and {y.ndim}")
    if x.shape[x.ndim - k:] != y.shape[:k]:
        raise ValueError(f"trailing modes {x.shape[x.ndim - k:]} do not match leading modes {y.shape[:k]}")
    return np.tensordot(x, y, axes=k)


def kron(*matrices) -> np.ndarray:
    """Kronecker product of one or more matrices, left to right."""
    if not matrices:
        raise ValueError("kron needs at least one matrix")
    out = np.atleast_2d(np.asarray(matrices[0], dtype=float))
    for m in matrices[1:]:
        out = np.kron(out, np.atleast_2d(np.asarray(m, dtype=float)))
    return out


def outer(x, y) -> DenseTensor:
    """Tensor outer product; the result's modes are those of ``x`` then ``y``."""
    return np.multiply.outer(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
