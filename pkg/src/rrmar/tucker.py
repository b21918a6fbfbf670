"""Tucker factorizations, HOSVD and the RR-MAR parameter count."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from rrmar.tensor import as_tensor, multi_mode_product, unfold


@dataclass(frozen=True)
class TuckerFactorization:
    """Core tensor plus one factor matrix per mode.

    A factor of ``None`` means the identity on that mode (the mode is not
    compressed).
    """

    core: np.ndarray
    factors: tuple

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(
            self.core.shape[i] if u is None else u.shape[0] for i, u in enumerate(self.factors)
        )

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(self.core.shape)


def validate_ranks(ranks: Sequence[int], dims: Sequence[int]) -> bool:
    """True iff ``r_i <= min(N_i, prod_{j != i} r_j)`` for every mode."""
    ranks = [int(r) for r in ranks]
    dims = [int(n) for n in dims]
    if len(ranks) != len(dims):
        raise ValueError(f"got {len(ranks)} ranks for {len(dims)} dimensions")
    if any(r < 1 for r in ranks) or any(n < 1 for n in dims):
        raise ValueError("ranks and dimensions must be positive")
    total = int(np.prod(ranks))
    return all(r <= n and r * r <= total for r, n in zip(ranks, dims))


def _fix_signs(u: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each column made positive
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs


def leading_left_singular_vectors(m: np.ndarray, r: int) -> np.ndarray:
    """Top ``r`` left singular vectors of ``m`` under the sign convention."""
    u, _, _ = np.linalg.svd(m, full_matrices=False)
    if u.shape[1] < r:
        # fewer columns than rows: complete the basis from the full SVD
        u = np.linalg.svd(m, full_matrices=True)[0]
    return _fix_signs(u[:, :r])


def hosvd(x, ranks: Sequence[Optional[int]]) -> TuckerFactorization:
    """Truncated higher-order SVD.

    Factor ``i`` holds the top ``ranks[i]`` left singular vectors of the
    mode-``i`` unfolding; the core is the projection of ``x`` onto them.
    A rank of ``None`` leaves that mode uncompressed (identity factor).
    """
    x = as_tensor(x)
    if len(ranks) != x.ndim:
        raise ValueError(f"got {len(ranks)} ranks for a tensor of order {x.ndim}")
    full = [x.shape[i] if r is None else int(r) for i, r in enumerate(ranks)]
    total = int(np.prod(full))
    for r, n in zip(ranks, x.shape):
        # uncompressed modes are exempt from the feasibility condition
        if r is not None and not (1 <= r <= n and r * r <= total):
            raise ValueError(f"ranks {tuple(ranks)} are not feasible for shape {x.shape}")
    factors = tuple(
        None if r is None else leading_left_singular_vectors(unfold(x, i), int(r))
        for i, r in enumerate(ranks)
    )
    core = multi_mode_product(x, factors, transpose=True)
    return TuckerFactorization(core=core, factors=factors)


def reconstruct(f: TuckerFactorization) -> np.ndarray:
    """``core ×_0 U_0 ×_1 U_1 ...``."""
    core = as_tensor(f.core)
    if len(f.factors) != core.ndim:
        raise ValueError(f"{len(f.factors)} factors for a core of order {core.ndim}")
    for i, u in enumerate(f.factors):
        if u is not None and np.shape(u)[1] != core.shape[i]:
            raise ValueError(f"factor {i} has {np.shape(u)[1]} columns but the core has size {core.shape[i]}")
    return multi_mode_product(core, f.factors)


def param_count(ranks: Sequence[int], dims: Sequence[int], p: int) -> int:
    """Free parameters of an RR-MAR(p) with Tucker ranks ``(r1, r2, r3, r4)``.

    Core entries for every lag plus the Grassmann dimension ``r (N - r)`` of
    each factor; the rotation of each factor is absorbed by the core.
    """
    r1, r2, r3, r4 = (int(r) for r in ranks)
    n1, n2 = (int(n) for n in dims)
    if p < 1:
        raise ValueError("lag order must be at least 1")
    return r1 * r2 * r3 * r4 * p + r1 * (n1 - r1) + r2 * (n2 - r2) + r3 * (n1 - r3) + r4 * (n2 - r4)
