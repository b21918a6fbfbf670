"""Least-squares estimation of the RR-MAR by block gradient descent.

The objective is ``(1 / 2T') sum_t ||vec(Y_t) - A vec(X_t)||^2`` with
``A = (U2 ⊗ U1) G*_[2] (I_p ⊗ U4 ⊗ U3)^T`` and ``T' = T - p`` usable
observations. Gradients are taken through the residual moment
``M = mean_t (fitted_t - Y_t) ∘ X_t``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from rrmar._validation import check_ranks, check_series
from rrmar.exceptions import DivergenceError, IllConditionedDataError
from rrmar.model import (
    MatrixSeries,
    RRMARModel,
    design_matrices,
    feasible_ranks,
    stack_lags,
)
from rrmar.model import predict as model_predict
from rrmar.tucker import hosvd

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitConfig:
    """Gradient-descent settings.

    Convergence is declared when the relative change in loss between two
    sweeps drops below ``tolerance``.
    """

    step_size: float = 1e-3
    tolerance: float = 1e-3
    max_iterations: int = 500
    demean: bool = True
    divergence_factor: float = 1e6

    def __post_init__(self):
        if self.step_size <= 0 or self.tolerance <= 0:
            raise ValueError("step_size and tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class FitResult:
    model: RRMARModel
    loss_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


class _Design:
    """Regression data ``vec(Y_t)`` on ``vec(X_t)`` in row-per-time layout."""

    def __init__(self, responses: np.ndarray, predictors: np.ndarray):
        self.yv, self.xv = design_matrices(responses, predictors)
        self.dims = responses.shape[:2]
        self.p = predictors.shape[2]
        self.t_eff = responses.shape[2]

    @classmethod
    def from_series(cls, y: MatrixSeries, p: int) -> "_Design":
        return cls(*stack_lags(y, p))

    def ols(self) -> np.ndarray:
        """Unrestricted stacked VAR(p) coefficient, ``N x Np``."""
        k = self.xv.shape[1]
        if self.t_eff <= k:
            raise IllConditionedDataError(
                f"{self.t_eff} usable observations cannot identify {k} regressors per equation"
            )
        s = np.linalg.svd(self.xv, compute_uv=False)
        if s[-1] <= s[0] * 1e-10:
            raise IllConditionedDataError("lagged regressor Gram matrix is singular")
        coef, *_ = np.linalg.lstsq(self.xv, self.yv, rcond=None)
        return coef.T

    def residuals(self, coef: np.ndarray) -> np.ndarray:
        """``fitted - observed``, one row per usable time point."""
        return self.xv @ coef.T - self.yv


def _coefficient(factors, core) -> np.ndarray:
    u1, u2, u3, u4 = factors
    r1, r2, r3, r4, p = core.shape
    left = np.kron(u2, u1) @ core.reshape(r1 * r2, r3 * r4 * p, order="F")
    right = np.kron(u4, u3)
    return np.hstack([left[:, q * r3 * r4:(q + 1) * r3 * r4] @ right.T for q in range(p)])


def _moment(design: _Design, coef: np.ndarray) -> tuple[float, np.ndarray]:
    resid = design.residuals(coef)
    loss = 0.5 * float(np.einsum("ij,ij->", resid, resid)) / design.t_eff
    return loss, resid.T @ design.xv / design.t_eff


def _moment_blocks(moment: np.ndarray, right: np.ndarray, p: int) -> np.ndarray:
    # M (I_p ⊗ U4 ⊗ U3), one N x r3r4 block per lag
    n = moment.shape[0]
    return np.hstack([moment[:, q * n:(q + 1) * n] @ right for q in range(p)])


def _grad_left(moment, factors, core):
    """Gradients for U1 and U2 from ``dL/d(U2 ⊗ U1)``."""
    u1, u2, u3, u4 = factors
    r1, r2, r3, r4, p = core.shape
    n1, n2 = u1.shape[0], u2.shape[0]
    g2 = core.reshape(r1 * r2, r3 * r4 * p, order="F")
    d_left = (_moment_blocks(moment, np.kron(u4, u3), p) @ g2.T).reshape(n1, n2, r1, r2, order="F")
    return np.einsum("ajbk,jk->ab", d_left, u2), np.einsum("ajbk,ab->jk", d_left, u1)


def _grad_right(moment, factors, core):
    """Gradients for U3 and U4 from ``dL/d(U4 ⊗ U3)`` summed over lags."""
    u1, u2, u3, u4 = factors
    r1, r2, r3, r4, p = core.shape
    n1, n2 = u3.shape[0], u4.shape[0]
    n = n1 * n2
    k = r3 * r4
    left = np.kron(u2, u1) @ core.reshape(r1 * r2, k * p, order="F")
    d_right = sum(moment[:, q * n:(q + 1) * n].T @ left[:, q * k:(q + 1) * k] for q in range(p))
    d_right = d_right.reshape(n1, n2, r3, r4, order="F")
    return np.einsum("ajbk,jk->ab", d_right, u4), np.einsum("ajbk,ab->jk", d_right, u3)


def _grad_core(moment, factors, core):
    """``M ×1 U1^T ×2 U2^T ×3 U3^T ×4 U4^T`` as an order-5 tensor."""
    u1, u2, u3, u4 = factors
    g = np.kron(u2, u1).T @ _moment_blocks(moment, np.kron(u4, u3), core.shape[4])
    return g.reshape(core.shape, order="F")


def _all_gradients(moment, factors, core) -> dict:
    g1, g2 = _grad_left(moment, factors, core)
    g3, g4 = _grad_right(moment, factors, core)
    return {"U1": g1, "U2": g2, "U3": g3, "U4": g4, "core": _grad_core(moment, factors, core)}


def _check_model_data(m: RRMARModel, y: MatrixSeries) -> _Design:
    if y.dims != m.dims:
        raise ValueError(f"series dims {y.dims} do not match model dims {m.dims}")
    return _Design.from_series(y, m.p)


def loss(m: RRMARModel, y: MatrixSeries) -> float:
    """Half mean squared one-step residual norm over ``t = p+1..T``."""
    design = _check_model_data(m, y)
    return _moment(design, m.coefficient)[0]


def residual_moment(m: RRMARModel, y: MatrixSeries) -> np.ndarray:
    """``mean_t (fitted_t - Y_t) ∘ X_t``, shape ``(N1, N2, N1, N2, p)``."""
    design = _check_model_data(m, y)
    moment = _moment(design, m.coefficient)[1]
    return moment.reshape(m.dims + m.dims + (m.p,), order="F")


def gradients(m: RRMARModel, y: MatrixSeries) -> dict:
    """Gradients of :func:`loss` for ``U1..U4`` and the order-5 core."""
    design = _check_model_data(m, y)
    moment = _moment(design, m.coefficient)[1]
    return _all_gradients(moment, m.factors, m.core)


def _init_from_coefficient(coef: np.ndarray, dims, ranks) -> RRMARModel:
    n1, n2 = dims
    p = coef.shape[1] // (n1 * n2)
    tensor = coef.reshape(n1, n2, n1, n2, p, order="F")
    f = hosvd(tensor, tuple(ranks) + (None,))
    return RRMARModel(f.factors[:4], f.core)


def ols_init(y: MatrixSeries, ranks: Sequence[int], p: int) -> RRMARModel:
    """HOSVD of the unrestricted least-squares VAR(p) coefficient."""
    ranks = check_ranks(ranks)
    if not feasible_ranks(ranks, y.dims, p):
        raise ValueError(f"ranks {ranks} are infeasible for dims {y.dims} and p={p}")
    design = _Design.from_series(y, p)
    return _init_from_coefficient(design.ols(), y.dims, ranks)


def _is_full(ranks, dims) -> bool:
    return tuple(ranks) == (dims[0], dims[1], dims[0], dims[1])


def _descend(design: _Design, init: RRMARModel, config: FitConfig) -> FitResult:
    # overflow shows up as a non-finite loss and is reported as divergence
    with np.errstate(over="ignore", invalid="ignore"):
        return _descend_loop(design, init, config)


def _descend_loop(design: _Design, init: RRMARModel, config: FitConfig) -> FitResult:
    factors = [u.copy() for u in init.factors]
    core = init.core.copy()
    eta = config.step_size

    current, moment = _moment(design, _coefficient(factors, core))
    start = current
    trace = [current]
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        # sequential block updates, each using the freshest parameters
        factors[0] = factors[0] - eta * _grad_left(moment, factors, core)[0]
        _, moment = _moment(design, _coefficient(factors, core))
        factors[1] = factors[1] - eta * _grad_left(moment, factors, core)[1]
        _, moment = _moment(design, _coefficient(factors, core))
        factors[2] = factors[2] - eta * _grad_right(moment, factors, core)[0]
        _, moment = _moment(design, _coefficient(factors, core))
        factors[3] = factors[3] - eta * _grad_right(moment, factors, core)[1]
        _, moment = _moment(design, _coefficient(factors, core))
        core = core - eta * _grad_core(moment, factors, core)
        new, moment = _moment(design, _coefficient(factors, core))
        trace.append(new)

        if not np.isfinite(new) or new > config.divergence_factor * max(start, 1e-300):
            raise DivergenceError(
                f"loss grew from {start:.4g} to {new:.4g} after {iterations} iterations; "
                f"try step_size={eta / 10:g}"
            )
        if abs(new - current) / max(current, 1e-12) < config.tolerance:
            converged = True
            break
        current = new

    # finalize: re-extract orthonormal factors from the fitted coefficient
    final = _init_from_coefficient(_coefficient(factors, core), design.dims, init.ranks)
    return FitResult(model=final, loss_trace=trace, iterations=iterations, converged=converged)


def _with_covariance(result: FitResult, design: _Design) -> FitResult:
    resid = design.residuals(result.model.coefficient)
    sigma = resid.T @ resid / design.t_eff
    result.model = result.model.with_sigma(sigma)
    return result


def _fit_design(design: _Design, ranks, config: FitConfig, ols_coef=None, init=None) -> FitResult:
    if init is None:
        coef = design.ols() if ols_coef is None else ols_coef
        if _is_full(ranks, design.dims):
            model = RRMARModel.from_coefficients(coef, design.dims)
            result = FitResult(model, [_moment(design, coef)[0]], 0, True)
            return _with_covariance(result, design)
        init = _init_from_coefficient(coef, design.dims, ranks)
    return _with_covariance(_descend(design, init, config), design)


def fit_regression(responses, predictors, ranks: Sequence[int], config: Optional[FitConfig] = None,
                   init: Optional[RRMARModel] = None) -> FitResult:
    """Fit on explicit responses ``(N1, N2, T')`` and predictors ``(N1, N2, p, T')``.

    No demeaning is applied. Full-rank requests return the least-squares
    coefficient directly.
    """
    config = config or FitConfig()
    responses = np.asarray(responses, dtype=float)
    predictors = np.asarray(predictors, dtype=float)
    design = _Design(responses, predictors)
    ranks = check_ranks(ranks)
    if not feasible_ranks(ranks, design.dims, design.p):
        raise ValueError(f"ranks {ranks} are infeasible for dims {design.dims} and p={design.p}")
    return _fit_design(design, ranks, config, init=init)


def fit(y: MatrixSeries, ranks: Sequence[int], p: int, config: Optional[FitConfig] = None) -> FitResult:
    """Estimate an RR-MAR(p) with the given Tucker ranks.

    Starts from the HOSVD of the least-squares VAR coefficient, runs block
    gradient descent and finalizes with an HOSVD of the fitted coefficient.
    ``sigma`` of the returned model is the residual covariance with divisor
    ``T - p``.
    """
    config = config or FitConfig()
    if config.demean:
        y = y.demean()
    return fit_regression(*stack_lags(y, p), ranks, config)


class RRMAR(TransformerMixin, BaseEstimator):
    """Reduced-rank matrix autoregression estimator.

    Parameters
    ----------
    ranks : tuple of int, default=(1, 1, 1, 1)
        Tucker ranks ``(r1, r2, r3, r4)`` of the coefficient tensor.
    p : int, default=1
        Lag order.
    step_size, tol, max_iter : float, float, int
        Gradient-descent settings.
    demean : bool, default=True
        Subtract per-series sample means before fitting.

    Notes
    -----
    Array inputs are time-first, shape ``(T, N1, N2)``; a
    :class:`~rrmar.model.MatrixSeries` is accepted as is.
    """

    def __init__(self, ranks=(1, 1, 1, 1), p=1, step_size=1e-3, tol=1e-3, max_iter=500, demean=True):
        self.ranks = ranks
        self.p = p
        self.step_size = step_size
        self.tol = tol
        self.max_iter = max_iter
        self.demean = demean

    def _config(self) -> FitConfig:
        return FitConfig(step_size=self.step_size, tolerance=self.tol, max_iterations=self.max_iter,
                         demean=False)

    def _center(self, y: MatrixSeries) -> MatrixSeries:
        return MatrixSeries(y.values - self.mean_[:, :, None], y.row_labels, y.col_labels,
                            y.time_labels, demeaned=self.demean)

    def fit(self, Y, y=None):
        series = check_series(Y)
        self.mean_ = series.means() if self.demean else np.zeros(series.dims)
        result = fit(self._center(series), self.ranks, self.p, self._config())
        self.model_ = result.model
        self.loss_trace_ = list(result.loss_trace)
        self.n_iter_ = result.iterations
        self.converged_ = result.converged
        self.coef_ = result.model.coefficient
        self.sigma_ = result.model.sigma
        self.dims_ = series.dims
        if not result.converged:
            logger.warning("gradient descent stopped after %d iterations without converging", result.iterations)
        return self

    def _checked(self, Y) -> MatrixSeries:
        check_is_fitted(self, "model_")
        series = check_series(Y)
        if series.dims != self.dims_:
            raise ValueError(f"series dims {series.dims} do not match fitted dims {self.dims_}")
        return series

    def predict(self, Y) -> np.ndarray:
        """One-step-ahead predictions for ``t = p..T-1``, shape ``(T - p, N1, N2)``."""
        series = self._checked(Y)
        _, predictors = stack_lags(self._center(series), self.model_.p)
        fitted = model_predict(self.model_, predictors) + self.mean_[:, :, None]
        return np.moveaxis(fitted, -1, 0)

    def transform(self, Y) -> np.ndarray:
        """Response factors ``U1^T Y_t U2``, shape ``(T, r1, r2)``."""
        series = self._checked(Y)
        u1, u2 = self.model_.factors[:2]
        return np.einsum("ab,act,cd->tbd", u1, self._center(series).values, u2)

    def score(self, Y, y=None) -> float:
        """Negative least-squares loss on ``Y`` (higher is better)."""
        series = self._checked(Y)
        return -loss(self.model_, self._center(series))
