"""Seeded Monte Carlo replications of rank-lag selection.

Replication ``i`` of a run with base seed ``s`` uses seed ``s + i``, so runs
over disjoint seed ranges can be merged and give the same summary as one
run over their union.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from rrmar.estimator import FitConfig
from rrmar.exceptions import RRMARError
from rrmar.model import SimulationSpec, simulate
from rrmar.selection import CRITERIA, select_rank_lag

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Scenario:
    """One cell of a simulation table."""

    dims: tuple
    ranks: tuple
    T: int
    p: int = 1
    max_lag: int = 1
    snr: float = 0.7
    burn_in: int = 50

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        object.__setattr__(self, "ranks", tuple(int(r) for r in self.ranks))

    @property
    def name(self) -> str:
        return "dims{}x{}_ranks{}_T{}_p{}".format(*self.dims, "".join(map(str, self.ranks)), self.T, self.p)

    def spec(self, seed: int) -> SimulationSpec:
        return SimulationSpec(self.dims, self.ranks, p=self.p, T=self.T, burn_in=self.burn_in, snr=self.snr,
                              seed=seed)


def run_one(scenario: Scenario, seed: int, config: Optional[FitConfig] = None) -> dict:
    """Simulate one series and record the AIC and BIC choices.

    Failures are recorded in the ``error`` field rather than raised.
    """
    row = {"scenario": scenario.name, "seed": int(seed), "error": ""}
    try:
        y, _ = simulate(scenario.spec(seed))
        result = select_rank_lag(y, scenario.max_lag, config)
    except RRMARError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row
    for kind in CRITERIA:
        best = result.best(kind)
        if best is None:
            row["error"] = f"no converged candidate for {kind}"
            continue
        row[kind] = {"ranks": list(best.ranks), "p": best.p}
    return row


def run_scenario(scenario: Scenario, reps: int, seed: int, n_jobs: int = 1,
                 config: Optional[FitConfig] = None) -> list[dict]:
    """``reps`` replications with seeds ``seed, seed + 1, ...`` in seed order."""
    if reps < 1:
        raise ValueError("reps must be at least 1")
    seeds = [seed + i for i in range(reps)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            rows = list(pool.map(run_one, [scenario] * reps, seeds, [config] * reps,
                                 chunksize=max(1, reps // (4 * n_jobs))))
    else:
        rows = [run_one(scenario, s, config) for s in seeds]
    return rows


def merge(*row_sets: Iterable[dict]) -> list[dict]:
    """Combine replication rows from several runs, ordered by scenario then seed.

    Raises if the same ``(scenario, seed)`` appears twice.
    """
    rows = [r for rs in row_sets for r in rs]
    keys = [(r["scenario"], r["seed"]) for r in rows]
    if len(set(keys)) != len(keys):
        raise ValueError("overlapping seeds in merged replication runs")
    return sorted(rows, key=lambda r: (r["scenario"], r["seed"]))


def summarize(rows: Sequence[dict], truth: Sequence[int], criterion: str, true_p: int = 1) -> dict:
    """Average rank, standard deviation (``ddof=1``) and frequency correct per dimension.

    Only replications without errors for ``criterion`` enter the statistics.
    """
    truth = np.asarray(truth, dtype=int)
    ok = sorted((r for r in rows if criterion in r), key=lambda r: r["seed"])
    out = {"criterion": criterion, "n_reps": len(rows), "n_used": len(ok)}
    if not ok:
        nan = [float("nan")] * len(truth)
        return {**out, "average": nan, "std": nan, "freq_correct": nan, "freq_lag": float("nan"),
                "freq_all": float("nan")}
    chosen = np.array([r[criterion]["ranks"] for r in ok], dtype=float)
    lags = np.array([r[criterion]["p"] for r in ok])
    hits = chosen == truth
    std = chosen.std(axis=0, ddof=1) if len(ok) > 1 else np.full(len(truth), np.nan)
    return {
        **out,
        "average": chosen.mean(axis=0).tolist(),
        "std": std.tolist(),
        "freq_correct": hits.mean(axis=0).tolist(),
        "freq_lag": float(np.mean(lags == true_p)),
        "freq_all": float(np.mean(hits.all(axis=1) & (lags == true_p))),
    }


def summary_rows(scenario: Scenario, rows: Sequence[dict]) -> list[dict]:
    """One flat summary record per criterion, ready for CSV output."""
    records = []
    for kind in CRITERIA:
        s = summarize(rows, scenario.ranks, kind, scenario.p)
        rec = {"scenario": scenario.name, "n1": scenario.dims[0], "n2": scenario.dims[1], "T": scenario.T,
               "true_ranks": " ".join(map(str, scenario.ranks)), "criterion": kind.upper(),
               "n_reps": s["n_reps"], "n_used": s["n_used"]}
        for name in ("average", "std", "freq_correct"):
            for i, v in enumerate(s[name]):
                rec[f"{name}_r{i + 1}"] = v
        rec["freq_lag"] = s["freq_lag"]
        rec["freq_all"] = s["freq_all"]
        records.append(rec)
    return records


def scenario_dict(scenario: Scenario) -> dict:
    return asdict(scenario)
