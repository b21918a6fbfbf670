import itertools
import math

import numpy as np
import pytest

from rrmar.estimator import fit
from rrmar.model import MatrixSeries, SimulationSpec, simulate
from rrmar.selection import (
    RankLagSelector,
    SelectionEntry,
    SelectionResult,
    _check_nesting,
    _criteria,
    info_criterion,
    log_det,
    rank_grid,
    select_rank_lag,
)


def test_hand_example_criteria():
    c = _criteria(0.0, 11, 100)
    assert c["aic"] == pytest.approx(0.22, abs=1e-12)
    assert c["bic"] == pytest.approx(0.5066, abs=1e-4)


def test_penalties_monotone_and_ordered():
    small, large = _criteria(1.0, 10, 50), _criteria(1.0, 20, 50)
    assert small["aic"] < large["aic"] and small["bic"] < large["bic"]
    for t in (8, 20, 500):
        c = _criteria(0.0, 5, t)
        assert c["bic"] > c["aic"]


def test_log_det_regular_and_singular():
    value, singular = log_det(np.diag([2.0, 3.0]))
    assert value == pytest.approx(math.log(6.0)) and not singular
    value, singular = log_det(np.diag([2.0, 0.0]))
    assert value == pytest.approx(math.log(2.0)) and singular


def brute_force_grid(dims, max_lag):
    n1, n2 = dims
    out = []
    for p in range(1, max_lag + 1):
        for r in itertools.product(range(1, n1 + 1), range(1, n2 + 1), range(1, n1 + 1), range(1, n2 + 1)):
            ok = True
            for i in range(4):
                others = p * np.prod([r[j] for j in range(4) if j != i])
                ok &= r[i] <= others
            if ok:
                out.append((r, p))
    return out


@pytest.mark.parametrize("dims,max_lag", [((2, 2), 1), ((4, 3), 2), ((3, 3), 3), ((1, 4), 1)])
def test_grid_matches_brute_force(dims, max_lag):
    grid = rank_grid(dims, max_lag)
    assert grid == brute_force_grid(dims, max_lag)
    assert len(grid) <= (dims[0] * dims[1]) ** 2 * max_lag


def test_tie_break_prefers_fewer_parameters_then_lexicographic():
    entries = [
        SelectionEntry((2, 1, 1, 1), 1, aic=1.0, bic=1.0, n_params=9, converged=True),
        SelectionEntry((1, 2, 1, 1), 1, aic=1.0, bic=1.0, n_params=8, converged=True),
        SelectionEntry((1, 1, 2, 1), 1, aic=1.0, bic=1.0, n_params=8, converged=True),
        SelectionEntry((1, 1, 1, 1), 1, aic=0.5, bic=0.5, n_params=5, converged=False),
    ]
    best = SelectionResult(entries).best("bic")
    assert best.ranks == (1, 1, 2, 1)


def test_best_is_none_without_converged_entries():
    assert SelectionResult([SelectionEntry((1, 1, 1, 1), 1)]).best("aic") is None


def test_nesting_guard_flags_larger_model():
    small = SelectionEntry((1, 1, 1, 1), 1, loss=1.0, converged=True)
    big = SelectionEntry((2, 1, 2, 1), 1, loss=1.1, converged=True)
    other = SelectionEntry((1, 2, 1, 2), 1, loss=0.9, converged=True)
    _check_nesting([small, big, other])
    assert not big.converged and "nested" in big.message
    assert small.converged and other.converged


@pytest.fixture(scope="module")
def small_selection():
    y, _ = simulate(SimulationSpec((2, 2), (1, 1, 1, 1), T=300, seed=3))
    return y, select_rank_lag(y, max_lag=2)


def test_selection_covers_grid(small_selection):
    y, result = small_selection
    assert [(e.ranks, e.p) for e in result.entries] == rank_grid((2, 2), 2)
    assert all(e.converged for e in result.entries if not e.message)


def test_selection_nested_losses(small_selection):
    _, result = small_selection
    by_key = {(e.ranks, e.p): e for e in result.entries}
    for (r, p), e in by_key.items():
        for (s, q), f in by_key.items():
            if q == p and s != r and all(a <= b for a, b in zip(s, r)) and e.converged:
                assert e.loss <= f.loss + 1e-8


def test_entry_matches_info_criterion(small_selection):
    y, result = small_selection
    e = next(e for e in result.entries if e.ranks == (1, 1, 1, 1) and e.p == 1)
    m = fit(y, (1, 1, 1, 1), 1).model
    assert info_criterion(m, y.demean(), "bic") == pytest.approx(e.bic, rel=1e-12)
    assert info_criterion(m, y.demean(), "aic") == pytest.approx(e.aic, rel=1e-12)
    with pytest.raises(ValueError):
        info_criterion(m, y, "hqc")


def test_parallel_matches_serial(small_selection):
    y, serial = small_selection
    parallel = select_rank_lag(y, max_lag=2, n_jobs=2)
    assert [e.as_dict() for e in parallel.entries] == [e.as_dict() for e in serial.entries]


def test_criteria_invariant_to_relabeling():
    y, _ = simulate(SimulationSpec((3, 2), (2, 1, 2, 1), T=150, seed=6))
    rows, cols = [2, 0, 1], [1, 0]
    permuted = MatrixSeries(y.values[rows][:, cols])
    a = select_rank_lag(y, max_lag=1)
    b = select_rank_lag(permuted, max_lag=1)
    for ea, eb in zip(a.entries, b.entries):
        assert ea.bic == pytest.approx(eb.bic, abs=1e-8)
        assert ea.aic == pytest.approx(eb.aic, abs=1e-8)


def test_selector_estimator():
    y, _ = simulate(SimulationSpec((2, 2), (2, 2, 2, 2), T=300, seed=1))
    sel = RankLagSelector(max_lag=1, criterion="aic").fit(y.time_first())
    assert sel.p_ == 1 and len(sel.ranks_) == 4
    assert sel.best_estimator_.ranks == sel.ranks_
    assert sel.predict(y.time_first()).shape == (299, 2, 2)
    with pytest.raises(ValueError):
        RankLagSelector(criterion="hq").fit(y.time_first())
