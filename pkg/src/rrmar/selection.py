"""Joint Tucker-rank and lag-order selection by AIC and BIC."""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from rrmar._validation import check_lag, check_series
from rrmar.estimator import RRMAR, FitConfig, _Design, _fit_design
from rrmar.exceptions import DivergenceError, IllConditionedDataError
from rrmar.model import MatrixSeries, RRMARModel, feasible_ranks, residuals
from rrmar.tucker import param_count

logger = logging.getLogger(__name__)

CRITERIA = ("aic", "bic")


def log_det(cov: np.ndarray) -> tuple[float, bool]:
    """Log-determinant of a covariance; falls back to the pseudo-determinant.

    Returns ``(value, singular)``.
    """
    eig = np.linalg.eigvalsh((cov + cov.T) / 2)
    tol = max(eig[-1], 0.0) * eig.size * np.finfo(float).eps
    if eig[0] > tol:
        return float(np.sum(np.log(eig))), False
    kept = eig[eig > tol]
    return (float(np.sum(np.log(kept))) if kept.size else -np.inf), True


def _criteria(logdet: float, n_params: int, t_eff: int) -> dict:
    return {
        "aic": logdet + 2.0 / t_eff * n_params,
        "bic": logdet + math.log(t_eff) / t_eff * n_params,
    }


def info_criterion(m: RRMARModel, y: MatrixSeries, kind: str = "bic") -> float:
    """AIC or BIC of a fitted model on ``y``.

    Uses ``T' = T - p`` both as the covariance divisor and in the penalty.
    """
    kind = kind.lower()
    if kind not in CRITERIA:
        raise ValueError(f"criterion must be 'aic' or 'bic', got {kind!r}")
    resid = residuals(m, y).reshape(m.n_series, -1, order="F")
    t_eff = resid.shape[1]
    logdet, singular = log_det(resid @ resid.T / t_eff)
    if singular:
        logger.warning("residual covariance is singular; using the pseudo-determinant")
    return _criteria(logdet, param_count(m.ranks, m.dims, m.p), t_eff)[kind]


@dataclass
class SelectionEntry:
    ranks: tuple
    p: int
    aic: float = math.inf
    bic: float = math.inf
    loglik_proxy: float = math.inf
    n_params: int = 0
    loss: float = math.inf
    converged: bool = False
    iterations: int = 0
    message: str = ""

    def sort_key(self, kind: str):
        return (getattr(self, kind), self.n_params, self.p) + tuple(self.ranks)

    def as_dict(self) -> dict:
        out = asdict(self)
        out["ranks"] = list(self.ranks)
        return out


@dataclass
class SelectionResult:
    """Criterion values over the feasible ``(r1, r2, r3, r4, p)`` grid."""

    entries: list = field(default_factory=list)
    dims: tuple = ()
    max_lag: int = 1

    def best(self, kind: str) -> Optional[SelectionEntry]:
        """Minimal criterion among converged entries.

        Ties go to fewer parameters, then the lexicographically smaller
        ``(p, r1, r2, r3, r4)``.
        """
        pool = [e for e in self.entries if e.converged and np.isfinite(getattr(e, kind))]
        if not pool:
            return None
        return min(pool, key=lambda e: e.sort_key(kind))

    @property
    def best_aic(self) -> Optional[SelectionEntry]:
        return self.best("aic")

    @property
    def best_bic(self) -> Optional[SelectionEntry]:
        return self.best("bic")

    @property
    def failures(self) -> list:
        return [e for e in self.entries if e.message]


def rank_grid(dims, max_lag: int) -> list[tuple[tuple, int]]:
    """All feasible ``(ranks, p)`` pairs in enumeration order (p, r1, r2, r3, r4)."""
    n1, n2 = dims
    grid = []
    for p in range(1, max_lag + 1):
        for ranks in itertools.product(range(1, n1 + 1), range(1, n2 + 1), range(1, n1 + 1), range(1, n2 + 1)):
            if feasible_ranks(ranks, dims, p):
                grid.append((ranks, p))
    return grid


def _evaluate_lag(y: MatrixSeries, p: int, rank_list: list, config: FitConfig) -> list[SelectionEntry]:
    """Fit every rank tuple for one lag order, sharing the least-squares start."""
    entries = [SelectionEntry(ranks=r, p=p, n_params=param_count(r, y.dims, p)) for r in rank_list]
    try:
        design = _Design.from_series(y, p)
        ols = design.ols()
    except (IllConditionedDataError, ValueError) as exc:
        for e in entries:
            e.message = str(exc)
        return entries

    for e in entries:
        try:
            result = _fit_design(design, e.ranks, config, ols_coef=ols)
        except (DivergenceError, IllConditionedDataError, np.linalg.LinAlgError) as exc:
            e.message = f"{type(exc).__name__}: {exc}"
            continue
        logdet, singular = log_det(result.model.sigma)
        e.loglik_proxy = logdet
        e.loss = 0.5 * float(np.trace(result.model.sigma))
        e.__dict__.update(_criteria(logdet, e.n_params, design.t_eff))
        e.iterations = result.iterations
        e.converged = result.converged and not singular
        if singular:
            e.message = "singular residual covariance"
    _check_nesting(entries)
    return entries


def _check_nesting(entries: list, tol: float = 1e-8) -> None:
    """Flag candidates whose loss exceeds that of a nested smaller-rank fit."""
    for big in entries:
        for small in entries:
            if small is big or not all(s <= b for s, b in zip(small.ranks, big.ranks)):
                continue
            if np.isfinite(small.loss) and big.loss > small.loss + tol:
                big.converged = False
                big.message = (f"loss {big.loss:.6g} exceeds nested ranks {tuple(small.ranks)} "
                               f"loss {small.loss:.6g}")
                break


def select_rank_lag(y: MatrixSeries, max_lag: int = 3, config: Optional[FitConfig] = None,
                    n_jobs: int = 1) -> SelectionResult:
    """Fit every feasible rank/lag candidate and record AIC and BIC.

    Full-rank candidates are fitted as unrestricted VARs. Candidates are
    grouped per lag order; with ``n_jobs > 1`` the groups run in worker
    processes and are merged in grid order.
    """
    config = config or FitConfig()
    max_lag = check_lag(max_lag)
    if config.demean:
        y = y.demean()
    grid = rank_grid(y.dims, max_lag)
    by_lag = {p: [r for r, q in grid if q == p] for p in range(1, max_lag + 1)}
    jobs = [(y, p, by_lag[p], config) for p in by_lag]
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(n_jobs, len(jobs))) as pool:
            blocks = list(pool.map(_evaluate_lag, *zip(*jobs)))
    else:
        blocks = [_evaluate_lag(*job) for job in jobs]
    entries = [e for block in blocks for e in block]
    return SelectionResult(entries=entries, dims=y.dims, max_lag=max_lag)


class RankLagSelector(BaseEstimator):
    """Pick Tucker ranks and lag order by an information criterion.

    After ``fit``, ``ranks_`` and ``p_`` hold the argmin of ``criterion``
    and ``best_estimator_`` is an :class:`~rrmar.estimator.RRMAR` refit at
    that choice.
    """

    def __init__(self, max_lag=3, criterion="bic", step_size=1e-3, tol=1e-3, max_iter=500, demean=True,
                 n_jobs=1):
        self.max_lag = max_lag
        self.criterion = criterion
        self.step_size = step_size
        self.tol = tol
        self.max_iter = max_iter
        self.demean = demean
        self.n_jobs = n_jobs

    def fit(self, Y, y=None):
        kind = str(self.criterion).lower()
        if kind not in CRITERIA:
            raise ValueError(f"criterion must be 'aic' or 'bic', got {self.criterion!r}")
        series = check_series(Y)
        config = FitConfig(self.step_size, self.tol, self.max_iter, demean=self.demean)
        self.result_ = select_rank_lag(series, self.max_lag, config, n_jobs=self.n_jobs)
        best = self.result_.best(kind)
        if best is None:
            raise IllConditionedDataError("no candidate model could be fitted")
        self.ranks_ = tuple(best.ranks)
        self.p_ = best.p
        self.best_estimator_ = RRMAR(self.ranks_, self.p_, self.step_size, self.tol, self.max_iter,
                                     self.demean).fit(series)
        return self

    def predict(self, Y) -> np.ndarray:
        check_is_fitted(self, "best_estimator_")
        return self.best_estimator_.predict(Y)
