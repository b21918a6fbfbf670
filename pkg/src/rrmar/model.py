"""RR-MAR model objects, lag stacking, diagnostics and the simulation DGP."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from rrmar.exceptions import DataError, GenerationError
from rrmar.tensor import contract, multi_unfold
from rrmar.tucker import TuckerFactorization, leading_left_singular_vectors, reconstruct

_ORTHO_TOL = 1e-8


@dataclass(frozen=True)
class MatrixSeries:
    """A length-``T`` sequence of ``N1 x N2`` observations.

    ``values`` has shape ``(N1, N2, T)``; time is the last mode.
    """

    values: np.ndarray
    row_labels: tuple = ()
    col_labels: tuple = ()
    time_labels: tuple = ()
    demeaned: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 3:
            raise DataError(f"a matrix series needs shape (N1, N2, T), got {values.shape}")
        if min(values.shape) < 1:
            raise DataError(f"empty matrix series of shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataError("matrix series contains NaN or infinite values")
        n1, n2, t = values.shape
        rows = tuple(self.row_labels) or tuple(f"R{i + 1}" for i in range(n1))
        cols = tuple(self.col_labels) or tuple(f"C{j + 1}" for j in range(n2))
        times = tuple(self.time_labels) or tuple(range(t))
        if len(rows) != n1 or len(cols) != n2 or len(times) != t:
            raise DataError("label lengths do not match the series dimensions")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "row_labels", rows)
        object.__setattr__(self, "col_labels", cols)
        object.__setattr__(self, "time_labels", times)

    @classmethod
    def from_array(cls, y, time_first: bool = True, **labels) -> "MatrixSeries":
        """Build from an array of shape ``(T, N1, N2)`` (or ``(N1, N2, T)``)."""
        arr = np.asarray(y, dtype=float)
        if arr.ndim != 3:
            raise DataError(f"expected a 3-d array, got shape {arr.shape}")
        if time_first:
            arr = np.moveaxis(arr, 0, -1)
        return cls(arr, **labels)

    @property
    def n1(self) -> int:
        return self.values.shape[0]

    @property
    def n2(self) -> int:
        return self.values.shape[1]

    @property
    def T(self) -> int:
        return self.values.shape[2]

    @property
    def dims(self) -> tuple[int, int]:
        return self.values.shape[0], self.values.shape[1]

    def means(self) -> np.ndarray:
        return self.values.mean(axis=2)

    def demean(self) -> "MatrixSeries":
        """Subtract the sample mean of every ``(i, j)`` series."""
        if self.demeaned:
            return self
        return replace(self, values=self.values - self.means()[:, :, None], demeaned=True)

    def time_first(self) -> np.ndarray:
        """Values as ``(T, N1, N2)``."""
        return np.moveaxis(self.values, -1, 0)


def feasible_ranks(ranks: Sequence[int], dims: Sequence[int], p: int) -> bool:
    """Tucker feasibility of ``(r1, r2, r3, r4)`` against the lag-extended core.

    Mode ``i`` needs ``r_i <= min(N_i, p * prod_{j != i} r_j)``; the lag mode
    keeps an identity factor and is not itself rank-reduced.
    """
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != 4 or len(dims) != 2:
        raise ValueError("expected four ranks and two dimensions")
    if p < 1 or min(ranks) < 1:
        raise ValueError("ranks and lag order must be positive")
    n1, n2 = (int(n) for n in dims)
    full = (n1, n2, n1, n2)
    total = int(np.prod(ranks)) * p
    return all(r <= n and r * r <= total for r, n in zip(ranks, full))


@dataclass(frozen=True)
class RRMARModel:
    """Tucker-structured matrix autoregression.

    ``factors`` are ``(U1, U2, U3, U4)`` with shapes ``N1 x r1``, ``N2 x r2``,
    ``N1 x r3``, ``N2 x r4``. ``core`` stacks the per-lag cores into an
    order-5 tensor of shape ``(r1, r2, r3, r4, p)``. ``sigma`` is the
    ``N1 N2 x N1 N2`` innovation covariance of ``vec(E_t)``.
    """

    factors: tuple
    core: np.ndarray
    sigma: Optional[np.ndarray] = None

    def __post_init__(self):
        factors = tuple(np.asarray(u, dtype=float) for u in self.factors)
        core = np.asarray(self.core, dtype=float)
        if len(factors) != 4 or any(u.ndim != 2 for u in factors):
            raise ValueError("an RR-MAR model needs four factor matrices")
        if core.ndim == 4:
            core = core[..., None]
        if core.ndim != 5:
            raise ValueError(f"core must have shape (r1, r2, r3, r4, p), got {core.shape}")
        u1, u2, u3, u4 = factors
        if u1.shape[0] != u3.shape[0] or u2.shape[0] != u4.shape[0]:
            raise ValueError("U1/U3 must share N1 rows and U2/U4 must share N2 rows")
        if core.shape[:4] != tuple(u.shape[1] for u in factors):
            raise ValueError(f"core shape {core.shape} does not match factor ranks")
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "core", core)
        if self.sigma is not None:
            sigma = np.asarray(self.sigma, dtype=float)
            n = self.n_series
            if sigma.shape != (n, n):
                raise ValueError(f"sigma must be {n} x {n}, got {sigma.shape}")
            object.__setattr__(self, "sigma", sigma)

    @classmethod
    def from_coefficients(cls, coef: np.ndarray, dims: Sequence[int], sigma=None) -> "RRMARModel":
        """Full-rank model with identity factors from a stacked ``N x Np`` coefficient."""
        n1, n2 = dims
        n = n1 * n2
        coef = np.asarray(coef, dtype=float)
        if coef.ndim != 2 or coef.shape[0] != n or coef.shape[1] % n:
            raise ValueError(f"coefficient of shape {coef.shape} is not N x Np for dims {tuple(dims)}")
        p = coef.shape[1] // n
        core = coef.reshape(n1, n2, n1, n2, p, order="F")
        return cls((np.eye(n1), np.eye(n2), np.eye(n1), np.eye(n2)), core, sigma)

    @property
    def ranks(self) -> tuple[int, int, int, int]:
        return tuple(int(r) for r in self.core.shape[:4])

    @property
    def p(self) -> int:
        return self.core.shape[4]

    @property
    def dims(self) -> tuple[int, int]:
        return self.factors[0].shape[0], self.factors[1].shape[0]

    @property
    def n_series(self) -> int:
        return self.dims[0] * self.dims[1]

    @property
    def is_orthonormal(self) -> bool:
        return all(np.allclose(u.T @ u, np.eye(u.shape[1]), atol=_ORTHO_TOL) for u in self.factors)

    def tucker(self) -> TuckerFactorization:
        return TuckerFactorization(core=self.core, factors=self.factors + (None,))

    @cached_property
    def coefficient_tensor(self) -> np.ndarray:
        """Order-5 coefficient ``(N1, N2, N1, N2, p)``; slice ``[..., i]`` is ``A_{i+1}``."""
        return reconstruct(self.tucker())

    @cached_property
    def coefficient(self) -> np.ndarray:
        """Stacked VAR coefficient ``(U2 ⊗ U1) G*_[2] (I_p ⊗ U4 ⊗ U3)^T``, shape ``N x Np``."""
        return multi_unfold(self.coefficient_tensor, (0, 1))

    def lag_matrices(self) -> list[np.ndarray]:
        n = self.n_series
        a = self.coefficient
        return [a[:, i * n:(i + 1) * n] for i in range(self.p)]

    def with_sigma(self, sigma) -> "RRMARModel":
        return RRMARModel(self.factors, self.core, sigma)


def coefficient_matrix(m: RRMARModel) -> np.ndarray:
    """The ``N1 N2 x N1 N2 p`` stacked VAR coefficient of ``m``."""
    return m.coefficient


def stack_lags(y: MatrixSeries, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Split a series into responses and stacked lagged predictors.

    Returns ``responses`` of shape ``(N1, N2, T - p)`` holding ``Y_{p+1..T}``
    and ``predictors`` of shape ``(N1, N2, p, T - p)`` whose slice
    ``[:, :, i, s]`` is the lag ``i + 1`` of response ``s``.
    """
    values = y.values if isinstance(y, MatrixSeries) else np.asarray(y, dtype=float)
    t = values.shape[2]
    if p < 1:
        raise ValueError("lag order must be at least 1")
    if p >= t:
        raise ValueError(f"lag order {p} needs more than {t} observations")
    responses = values[:, :, p:]
    predictors = np.stack([values[:, :, p - i - 1:t - i - 1] for i in range(p)], axis=2)
    return responses, predictors


def design_matrices(responses: np.ndarray, predictors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-per-time regression matrices ``vec(Y_t)^T`` and ``vec(X_t)^T``."""
    n1, n2, t = responses.shape
    if predictors.ndim != 4 or predictors.shape[:2] != (n1, n2) or predictors.shape[3] != t:
        raise ValueError(f"predictors of shape {predictors.shape} do not match responses {responses.shape}")
    yv = responses.reshape(n1 * n2, t, order="F").T
    xv = predictors.reshape(n1 * n2 * predictors.shape[2], t, order="F").T
    return yv, xv


def predict(m: RRMARModel, predictors) -> np.ndarray:
    """Fitted values ``sum_i A_i ×̄_2 Y_{t-i}``.

    ``predictors`` is one stacked lag tensor ``(N1, N2, p)`` or a batch
    ``(N1, N2, p, T')``; the result is ``(N1, N2)`` or ``(N1, N2, T')``.
    """
    x = np.asarray(predictors, dtype=float)
    expected = m.dims + (m.p,)
    if x.shape[:3] != expected or x.ndim not in (3, 4):
        raise ValueError(f"predictors of shape {x.shape} do not match model lags {expected}")
    return contract(m.coefficient_tensor, x, 3)


def residuals(m: RRMARModel, y: MatrixSeries) -> np.ndarray:
    """Observed minus fitted over ``t = p+1..T``, shape ``(N1, N2, T - p)``."""
    if y.dims != m.dims:
        raise ValueError(f"series dims {y.dims} do not match model dims {m.dims}")
    responses, predictors = stack_lags(y, m.p)
    return responses - predict(m, predictors)


def companion(coef: np.ndarray) -> np.ndarray:
    """Companion matrix of a stacked ``N x Np`` VAR coefficient."""
    n, np_ = coef.shape
    out = np.zeros((np_, np_))
    out[:n] = coef
    out[n:, :np_ - n] = np.eye(np_ - n)
    return out


def spectral_radius(coef: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(companion(coef)))))


def is_stationary(m: RRMARModel) -> bool:
    """Spectral radius of the companion matrix strictly below one."""
    return spectral_radius(m.coefficient) < 1.0 - 1e-10


def snr(m: RRMARModel) -> float:
    """Largest singular value of the stacked coefficient over the largest eigenvalue of ``sigma``."""
    if m.sigma is None:
        raise ValueError("model has no innovation covariance")
    eig = np.linalg.eigvalsh((m.sigma + m.sigma.T) / 2)
    if eig[0] <= 0:
        raise ValueError("innovation covariance is not positive definite")
    return float(np.linalg.norm(m.coefficient, 2) / eig[-1])


@dataclass(frozen=True)
class SimulationSpec:
    """Parameters of the simulation DGP.

    ``noise_std = 0`` gives a noiseless series; the coefficient is then
    scaled as if the innovation covariance were the identity.
    """

    dims: tuple
    ranks: tuple
    p: int = 1
    T: int = 100
    burn_in: int = 50
    snr: float = 0.7
    seed: int = 0
    noise_std: float = 1.0
    core_norm: float = 4.0
    max_draws: int = 100

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        object.__setattr__(self, "ranks", tuple(int(r) for r in self.ranks))
        if not feasible_ranks(self.ranks, self.dims, self.p):
            raise ValueError(f"ranks {self.ranks} are infeasible for dims {self.dims} and p={self.p}")
        if self.T < 1 or self.burn_in < 0:
            raise ValueError("T must be positive and burn_in non-negative")
        if self.snr <= 0 or self.noise_std < 0:
            raise ValueError("snr must be positive and noise_std non-negative")


def draw_model(spec: SimulationSpec, rng: np.random.Generator) -> RRMARModel:
    """One random Tucker model scaled to the target signal-to-noise ratio."""
    n1, n2 = spec.dims
    r1, r2, r3, r4 = spec.ranks
    core = rng.standard_normal((r1, r2, r3, r4, spec.p))
    factors = tuple(
        leading_left_singular_vectors(rng.standard_normal((n, r)), r)
        for n, r in zip((n1, n2, n1, n2), spec.ranks)
    )
    core *= spec.core_norm / np.linalg.norm(core)
    noise_var = spec.noise_std ** 2 if spec.noise_std > 0 else 1.0
    sigma = spec.noise_std ** 2 * np.eye(n1 * n2)
    model = RRMARModel(factors, core)
    core = core * (spec.snr * noise_var / np.linalg.norm(model.coefficient, 2))
    return RRMARModel(factors, core, sigma)


def simulate(spec: SimulationSpec) -> tuple[MatrixSeries, RRMARModel]:
    """Draw a stationary model and a series of length ``spec.T`` after burn-in.

    Non-stationary draws are rejected and redrawn; the generator is seeded
    by ``spec.seed`` only, so equal specs give bit-identical output.
    """
    rng = np.random.default_rng(spec.seed)
    for _ in range(spec.max_draws):
        model = draw_model(spec, rng)
        if is_stationary(model):
            break
    else:
        raise GenerationError(f"no stationary draw in {spec.max_draws} attempts")

    n1, n2 = spec.dims
    n = n1 * n2
    coef = model.coefficient
    total = spec.burn_in + spec.T
    presample = rng.standard_normal((spec.p, n))
    shocks = spec.noise_std * rng.standard_normal((total, n))
    path = np.empty((spec.p + total, n))
    path[:spec.p] = presample[::-1]
    for t in range(spec.p, spec.p + total):
        lags = path[t - spec.p:t][::-1].ravel()
        path[t] = coef @ lags + shocks[t - spec.p]
    values = path[spec.p + spec.burn_in:].T.reshape(n1, n2, spec.T, order="F")
    return MatrixSeries(values), model
