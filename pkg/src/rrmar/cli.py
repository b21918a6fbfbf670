"""Command-line front end.

Usage::

    rrmar simulate|fit|select|analyze|replicate-sim --config FILE
          [--seed N] [--out DIR] [--threads K] [--no-demean] [--pivot ROW]

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure. See the README for the configuration keys of each command.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from rrmar import io
from rrmar.analysis import comovement_report
from rrmar.estimator import FitConfig, fit
from rrmar.exceptions import ConfigError, DataError, PivotError, RRMARError
from rrmar.model import MatrixSeries, SimulationSpec, simulate
from rrmar.replication import Scenario, merge, run_scenario, summary_rows
from rrmar.selection import select_rank_lag

logger = logging.getLogger("rrmar")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
COMMANDS = ("simulate", "fit", "select", "analyze", "replicate-sim")


class Options:
    """Typed access to the flat config with command-line overrides."""

    def __init__(self, values: dict, args: argparse.Namespace, base: Path):
        self.values = values
        self.args = args
        self.base = base

    def raw(self, key: str, default=None, required: bool = False):
        key = key.lower()
        if key in self.values and self.values[key] != "":
            return self.values[key]
        if required:
            raise ConfigError(f"missing required config key {key!r}")
        return default

    def integer(self, key: str, default=None, required: bool = False) -> Optional[int]:
        v = self.raw(key, default, required)
        try:
            return None if v is None else int(v)
        except (TypeError, ValueError):
            raise ConfigError(f"config key {key!r} must be an integer, got {v!r}") from None

    def real(self, key: str, default=None) -> Optional[float]:
        v = self.raw(key, default)
        try:
            return None if v is None else float(v)
        except (TypeError, ValueError):
            raise ConfigError(f"config key {key!r} must be a number, got {v!r}") from None

    def flag(self, key: str, default: bool) -> bool:
        v = self.raw(key)
        if v is None:
            return default
        low = str(v).strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"config key {key!r} must be a boolean, got {v!r}")

    def ints(self, key: str, length: Optional[int] = None, required: bool = True) -> Optional[tuple]:
        v = self.raw(key, required=required)
        if v is None:
            return None
        out = _int_tuple(v, key)
        if length is not None and len(out) != length:
            raise ConfigError(f"config key {key!r} needs {length} integers, got {v!r}")
        return out

    def int_lists(self, key: str, length: int) -> list[tuple]:
        """Comma-separated groups of whitespace-separated integers."""
        groups = [g for g in str(self.raw(key, required=True)).split(",") if g.strip()]
        out = [_int_tuple(g, key) for g in groups]
        if not out or any(len(g) != length for g in out):
            raise ConfigError(f"config key {key!r} needs groups of {length} integers")
        return out

    def path(self, key: str, required: bool = True) -> Optional[Path]:
        v = self.raw(key, required=required)
        if v is None:
            return None
        p = Path(v)
        return p if p.is_absolute() else self.base / p

    @property
    def seed(self) -> int:
        if self.args.seed is not None:
            return int(self.args.seed)
        return self.integer("seed", required=True)

    @property
    def demean(self) -> bool:
        return False if self.args.no_demean else self.flag("demean", True)

    @property
    def threads(self) -> int:
        if self.args.threads is not None:
            k = self.args.threads
        else:
            k = self.integer("threads")
            if k is None:
                env = os.environ.get("RRMAR_THREADS", "")
                try:
                    k = int(env) if env.strip() else 1
                except ValueError:
                    raise ConfigError(f"RRMAR_THREADS must be an integer, got {env!r}") from None
        if k < 1:
            raise ConfigError(f"thread count must be positive, got {k}")
        return k

    def fit_config(self) -> FitConfig:
        try:
            return FitConfig(step_size=self.real("step_size", 1e-3), tolerance=self.real("tol", 1e-3),
                             max_iterations=self.integer("max_iter", 500), demean=self.demean)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def _int_tuple(text: str, key: str) -> tuple:
    try:
        return tuple(int(x) for x in str(text).replace("x", " ").split())
    except ValueError:
        raise ConfigError(f"config key {key!r} must hold integers, got {text!r}") from None


def _num(x) -> str:
    # shortest round-trip representation keeps reruns byte-identical
    return repr(float(x))


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _load_series(opts: Options) -> MatrixSeries:
    return io.read_series(opts.path("data"), demean=opts.demean)


# -- commands ---------------------------------------------------------------


def cmd_simulate(opts: Options, out: Path) -> int:
    spec = SimulationSpec(
        dims=opts.ints("dims", 2),
        ranks=opts.ints("ranks", 4),
        p=opts.integer("p", 1),
        T=opts.integer("T", required=True),
        burn_in=opts.integer("burn_in", 50),
        snr=opts.real("snr", 0.7),
        seed=opts.seed,
        noise_std=opts.real("noise_std", 1.0),
    )
    y, truth = simulate(spec)
    io.write_series(y, out / "series.csv")
    io.write_model(truth, out / "truth.json", seed=spec.seed, T=spec.T, burn_in=spec.burn_in, snr=spec.snr)
    logger.info("wrote series and truth model to %s", out)
    return EXIT_OK


def cmd_fit(opts: Options, out: Path) -> int:
    y = _load_series(opts)
    ranks = opts.ints("ranks", 4)
    p = opts.integer("p", 1)
    config = opts.fit_config()
    result = fit(y, ranks, p, config)
    io.write_model(result.model, out / "model.json",
                   loss_trace=[float(v) for v in result.loss_trace], iterations=result.iterations,
                   converged=result.converged, demeaned=y.demeaned,
                   row_labels=[str(r) for r in y.row_labels], col_labels=[str(c) for c in y.col_labels])
    if not result.converged:
        logger.warning("gradient descent stopped at max_iter=%d without converging", config.max_iterations)
    return EXIT_OK


def cmd_select(opts: Options, out: Path) -> int:
    y = _load_series(opts)
    config = opts.fit_config()
    result = select_rank_lag(y, opts.integer("max_lag", 3), config, n_jobs=opts.threads)
    header = ["p", "r1", "r2", "r3", "r4", "n_params", "loss", "loglik_proxy", "aic", "bic", "converged",
              "iterations", "message"]
    _write_csv(out / "selection.csv", header,
               ([e.p, *e.ranks, e.n_params, e.loss, e.loglik_proxy, e.aic, e.bic, int(e.converged),
                 e.iterations, e.message] for e in result.entries))
    failures = result.failures
    _write_csv(out / "failures.csv", ["p", "r1", "r2", "r3", "r4", "message"],
               ([e.p, *e.ranks, e.message] for e in failures))
    summary = {"dims": list(result.dims), "max_lag": result.max_lag, "n_candidates": len(result.entries),
               "n_failed": len(failures)}
    for kind in ("aic", "bic"):
        best = result.best(kind)
        summary[kind] = None if best is None else {"ranks": list(best.ranks), "p": best.p,
                                                   "value": getattr(best, kind)}
    _write_json(out / "selection.json", summary)
    if summary["aic"] is None or summary["bic"] is None:
        logger.error("no candidate could be fitted; see failures.csv")
        return EXIT_NUMERIC
    return EXIT_OK


def _pivot(spec, labels: Sequence) -> Optional[list]:
    """Parse pivot rows given as 0-based indices or labels, whitespace separated."""
    if spec is None:
        return None
    names = [str(label) for label in labels]
    rows = []
    for tok in str(spec).split():
        if tok in names:
            rows.append(names.index(tok))
        else:
            try:
                rows.append(int(tok))
            except ValueError:
                raise PivotError(f"pivot {tok!r} is neither a row index nor a label in {names}") from None
    return rows


def cmd_analyze(opts: Options, out: Path) -> int:
    y = _load_series(opts)
    model_path = opts.path("model", required=False)
    if model_path is not None:
        model = io.read_model(model_path)
    else:
        model = fit(y, opts.ints("ranks", 4), opts.integer("p", 1), opts.fit_config()).model
    row_pivot = _pivot(opts.args.pivot if opts.args.pivot is not None else opts.raw("row_pivot"), y.row_labels)
    col_pivot = _pivot(opts.raw("col_pivot"), y.col_labels)
    report = comovement_report(model, y, row_pivot=row_pivot, col_pivot=col_pivot)

    rows = [str(r) for r in y.row_labels]
    cols = [str(c) for c in y.col_labels]
    times = [str(t) for t in y.time_labels]
    for name, basis, labels in (("delta", report.delta_normalized, rows), ("gamma", report.gamma_normalized, cols),
                                ("delta_orthonormal", report.delta, rows),
                                ("gamma_orthonormal", report.gamma, cols)):
        _write_csv(out / f"{name}.csv", ["label"] + [f"v{k + 1}" for k in range(basis.shape[1])],
                   ([labels[i], *basis[i]] for i in range(basis.shape[0])))

    resp = report.response_factor_series
    _write_csv(out / "response_factors.csv", ["time", "i", "j", "value"],
               ([times[t], i + 1, j + 1, resp[i, j, t]]
                for t in range(resp.shape[2]) for i in range(resp.shape[0]) for j in range(resp.shape[1])))

    pred = report.predictor_factor_series
    r3, r4, t_eff, p = pred.shape
    fac_cols = [f"F{i + 1}_{j + 1}" for j in range(r4) for i in range(r3)]
    _write_csv(out / "predictor_factors.csv", ["time", "lag"] + fac_cols,
               ([times[t + p], lag + 1, *pred[:, :, t, lag].reshape(-1, order="F")]
                for t in range(t_eff) for lag in range(p)))

    _write_csv(out / "projections.csv", ["factor", "row", "col", "value"],
               ([name, a + 1, b + 1, P[a, b]] for name, P in report.projections.items()
                for a in range(P.shape[0]) for b in range(P.shape[1])))
    _write_csv(out / "factor_var.csv", ["lag", "response", "predictor", "value"],
               ([lag + 1, a + 1, b + 1, g[a, b]] for lag, g in enumerate(report.factor_var_cores)
                for a in range(g.shape[0]) for b in range(g.shape[1])))
    _write_json(out / "report.json", {"ranks": list(model.ranks), "p": model.p,
                                      "delta_pivots": [rows[i] for i in report.delta_pivots],
                                      "gamma_pivots": [cols[i] for i in report.gamma_pivots],
                                      "notes": report.notes})
    return EXIT_OK


def _scenarios(opts: Options) -> list[Scenario]:
    dims = opts.ints("dims", 2)
    lengths = _int_tuple(str(opts.raw("T", required=True)).replace(",", " "), "T")
    try:
        return [Scenario(dims, ranks, T, p=opts.integer("p", 1), max_lag=opts.integer("max_lag", 1),
                         snr=opts.real("snr", 0.7), burn_in=opts.integer("burn_in", 50))
                for ranks in opts.int_lists("ranks", 4) for T in lengths]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_replicate_sim(opts: Options, out: Path) -> int:
    scenarios = _scenarios(opts)
    for sc in scenarios:
        SimulationSpec(sc.dims, sc.ranks, p=sc.p, T=sc.T)  # fail fast on infeasible ranks
    reps = opts.integer("reps", required=True)
    seed = opts.seed
    config = opts.fit_config()
    threads = opts.threads
    raw, summary = [], []
    for sc in scenarios:
        logger.info("scenario %s: %d replications", sc.name, reps)
        rows = run_scenario(sc, reps, seed, n_jobs=threads, config=config)
        raw.extend(rows)
        summary.extend(summary_rows(sc, rows))
    write_replications(out / "replications.csv", merge(raw))
    write_summary(out / "summary.csv", summary)
    failed = sum(1 for r in raw if r["error"])
    if failed:
        logger.warning("%d replications failed; see replications.csv", failed)
    return EXIT_OK


REPLICATION_HEADER = ["scenario", "seed", "aic_r1", "aic_r2", "aic_r3", "aic_r4", "aic_p",
                      "bic_r1", "bic_r2", "bic_r3", "bic_r4", "bic_p", "error"]


def write_replications(path: Path, rows) -> None:
    def flat(r):
        cells = [r["scenario"], r["seed"]]
        for kind in ("aic", "bic"):
            cells += (r[kind]["ranks"] + [r[kind]["p"]]) if kind in r else [""] * 5
        return cells + [r["error"]]

    _write_csv(path, REPLICATION_HEADER, (flat(r) for r in rows))


def read_replications(path: Path) -> list[dict]:
    """Inverse of :func:`write_replications`, for merging split runs."""
    rows = []
    with Path(path).open(newline="") as fh:
        for rec in csv.DictReader(fh):
            row = {"scenario": rec["scenario"], "seed": int(rec["seed"]), "error": rec["error"]}
            for kind in ("aic", "bic"):
                if rec[f"{kind}_r1"] != "":
                    row[kind] = {"ranks": [int(rec[f"{kind}_r{i}"]) for i in range(1, 5)],
                                 "p": int(rec[f"{kind}_p"])}
            rows.append(row)
    return rows


def write_summary(path: Path, records: list[dict]) -> None:
    if not records:
        return
    header = list(records[0])
    _write_csv(path, header, ([rec[h] for h in header] for rec in records))


HANDLERS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "select": cmd_select,
    "analyze": cmd_analyze,
    "replicate-sim": cmd_replicate_sim,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rrmar", description="Reduced-rank matrix autoregression.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="flat key = value configuration file")
    parser.add_argument("--seed", type=int, help="overrides the config seed")
    parser.add_argument("--out", help="output directory (default: config key 'out' or '.')")
    parser.add_argument("--threads", type=int, help="worker processes (fallback: RRMAR_THREADS, then 1)")
    parser.add_argument("--no-demean", action="store_true", help="keep the series means")
    parser.add_argument("--pivot", help="row pivot(s) for the left null vectors: 0-based index or label")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="rrmar: %(levelname)s: %(message)s")
    try:
        values = io.read_config(args.config)
        opts = Options(values, args, Path(args.config).resolve().parent)
        out = Path(args.out) if args.out else opts.path("out", required=False) or Path(".")
        out.mkdir(parents=True, exist_ok=True)
        return HANDLERS[args.command](opts, out)
    except (DataError, PivotError) as exc:
        logger.error("%s", exc)
        return EXIT_DATA
    except ConfigError as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except RRMARError as exc:
        logger.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except np.linalg.LinAlgError as exc:
        logger.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        logger.error("invalid configuration: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
