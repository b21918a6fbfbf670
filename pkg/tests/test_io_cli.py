import csv
import json

import numpy as np
import pytest

from rrmar import cli, io
from rrmar.exceptions import ConfigError, DataError
from rrmar.model import MatrixSeries, SimulationSpec, simulate
from rrmar.replication import Scenario, merge, run_scenario, summarize


def write_long(path, values, rows=None, cols=None, times=None):
    n1, n2, t = values.shape
    rows = rows or [f"r{i}" for i in range(n1)]
    cols = cols or [f"c{j}" for j in range(n2)]
    times = times or list(range(t))
    with open(path, "w") as fh:
        fh.write("time,row,col,value\n")
        for k in range(t):
            for i in range(n1):
                for j in range(n2):
                    fh.write(f"{times[k]},{rows[i]},{cols[j]},{float(values[i, j, k])!r}\n")


def test_series_roundtrip(tmp_path, rng):
    y = MatrixSeries(rng.standard_normal((2, 3, 7)), ("a", "b"), ("x", "y", "z"))
    io.write_series(y, tmp_path / "s.csv")
    back = io.read_series(tmp_path / "s.csv", demean=False)
    np.testing.assert_array_equal(back.values, y.values)
    assert back.row_labels == ("a", "b") and back.time_labels == tuple(range(7))


def test_panel_dimensions_and_demeaning(tmp_path, rng):
    write_long(tmp_path / "p.csv", rng.standard_normal((4, 5, 96)) + 2.0)
    y = io.read_series(tmp_path / "p.csv")
    assert y.dims == (4, 5) and y.T == 96
    np.testing.assert_allclose(y.values.mean(axis=2), 0, atol=1e-12)
    assert io.read_series(tmp_path / "p.csv", demean=False).values.mean() > 1.0


def test_single_cell_panel(tmp_path):
    write_long(tmp_path / "one.csv", np.arange(5.0).reshape(1, 1, 5))
    assert io.read_series(tmp_path / "one.csv", demean=False).values.shape == (1, 1, 5)


def test_iso_dates_sorted(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("time,row,col,value\n2020-02-01,a,b,2\n2020-01-01,a,b,1\n")
    y = io.read_series(path, demean=False)
    assert y.time_labels == ("2020-01-01", "2020-02-01")
    np.testing.assert_array_equal(y.values[0, 0], [1.0, 2.0])


def test_gap_report_lists_all_missing_cells(tmp_path):
    path = tmp_path / "g.csv"
    path.write_text("time,row,col,value\n0,a,x,1\n0,a,y,1\n0,b,x,1\n0,b,y,1\n1,a,x,1\n1,b,y,1\n")
    with pytest.raises(DataError) as exc:
        io.read_series(path)
    msg = str(exc.value)
    assert "2 missing cells" in msg and "(time=1, row=a, col=y)" in msg and "(time=1, row=b, col=x)" in msg


def test_duplicate_and_non_numeric(tmp_path):
    dup = tmp_path / "dup.csv"
    dup.write_text("time,row,col,value\n0,a,x,1\n0,a,x,2\n")
    with pytest.raises(DataError, match="dup.csv:3: duplicate"):
        io.read_series(dup)
    bad = tmp_path / "bad.csv"
    bad.write_text("time,row,col,value\n0,a,x,1\n1,a,x,abc\n")
    with pytest.raises(DataError, match="bad.csv:3: non-numeric"):
        io.read_series(bad)
    hdr = tmp_path / "hdr.csv"
    hdr.write_text("t,r,c,v\n")
    with pytest.raises(DataError, match="header"):
        io.read_series(hdr)


def test_model_json_roundtrip(tmp_path):
    _, truth = simulate(SimulationSpec((3, 2), (2, 1, 2, 2), p=2, T=10, seed=1))
    io.write_model(truth, tmp_path / "m.json", note="x")
    back = io.read_model(tmp_path / "m.json")
    np.testing.assert_array_equal(back.coefficient, truth.coefficient)
    np.testing.assert_array_equal(back.sigma, truth.sigma)
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["diagnostics"] == {"note": "x"} and len(doc["cores"]) == 2
    (tmp_path / "broken.json").write_text('{"factors": {}}')
    with pytest.raises(DataError):
        io.read_model(tmp_path / "broken.json")


def test_config_parsing(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# comment\nT = 100   # trailing\nranks = 1 1 1 1\n\nsnr=0.7\n")
    assert io.read_config(path) == {"t": "100", "ranks": "1 1 1 1", "snr": "0.7"}
    path.write_text("[section]\na = 1\n")
    with pytest.raises(ConfigError):
        io.read_config(path)
    path.write_text("a = 1\na = 2\n")
    with pytest.raises(ConfigError):
        io.read_config(path)


# -- command line --------------------------------------------------------------


def run(tmp_path, command, config, *extra):
    cfg = tmp_path / f"{command}.cfg"
    cfg.write_text(config)
    return cli.main([command, "--config", str(cfg), *extra])


SIM_CFG = "dims = 4 5\nranks = 3 1 4 3\nT = 120\nseed = 3\n"


def test_simulate_is_byte_identical(tmp_path):
    assert run(tmp_path, "simulate", SIM_CFG, "--out", str(tmp_path / "a")) == 0
    assert run(tmp_path, "simulate", SIM_CFG, "--out", str(tmp_path / "b")) == 0
    for name in ("series.csv", "truth.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert run(tmp_path, "simulate", SIM_CFG, "--seed", "4", "--out", str(tmp_path / "c")) == 0
    assert (tmp_path / "a" / "series.csv").read_bytes() != (tmp_path / "c" / "series.csv").read_bytes()


def test_fit_then_analyze(tmp_path):
    assert run(tmp_path, "simulate", SIM_CFG, "--out", str(tmp_path / "sim")) == 0
    fit_cfg = f"data = {tmp_path / 'sim' / 'series.csv'}\nranks = 3 1 4 3\np = 1\n"
    assert run(tmp_path, "fit", fit_cfg, "--out", str(tmp_path / "fit")) == 0
    doc = json.loads((tmp_path / "fit" / "model.json").read_text())
    assert doc["ranks"] == [3, 1, 4, 3] and doc["diagnostics"]["loss_trace"]

    an_cfg = f"data = {tmp_path / 'sim' / 'series.csv'}\nmodel = {tmp_path / 'fit' / 'model.json'}\n"
    assert run(tmp_path, "analyze", an_cfg, "--out", str(tmp_path / "an"), "--pivot", "R2") == 0
    with open(tmp_path / "an" / "predictor_factors.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:2] == ["time", "lag"] and len(rows[0]) == 2 + 4 * 3
    assert len(rows) == 1 + 119
    report = json.loads((tmp_path / "an" / "report.json").read_text())
    assert report["delta_pivots"] == ["R2"]
    for name in ("delta.csv", "gamma.csv", "response_factors.csv", "projections.csv", "factor_var.csv"):
        assert (tmp_path / "an" / name).exists()
    # a pivot row without loading on the null vector is a data error
    assert run(tmp_path, "analyze", an_cfg, "--out", str(tmp_path / "an2"), "--pivot", "nosuchrow") == 3


def test_select_writes_grid_and_argmins(tmp_path):
    y, _ = simulate(SimulationSpec((2, 2), (1, 1, 1, 1), T=200, seed=2))
    io.write_series(y, tmp_path / "y.csv")
    cfg = f"data = {tmp_path / 'y.csv'}\nmax_lag = 2\n"
    assert run(tmp_path, "select", cfg, "--out", str(tmp_path / "sel"), "--threads", "2") == 0
    summary = json.loads((tmp_path / "sel" / "selection.json").read_text())
    assert summary["n_candidates"] == sum(1 for _ in open(tmp_path / "sel" / "selection.csv")) - 1
    assert set(summary) >= {"aic", "bic", "n_failed"}
    assert (tmp_path / "sel" / "failures.csv").exists()


def test_exit_codes(tmp_path, rng):
    assert cli.main(["fit", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert cli.main(["bogus", "--config", "x"]) == 2
    assert run(tmp_path, "simulate", "dims = 4 3\nranks = 1 1 1 1\nseed = 1\n") == 2
    assert run(tmp_path, "simulate", "dims = 4 3\nranks = 1 one 1 1\nT = 10\nseed = 1\n") == 2
    assert run(tmp_path, "simulate", "dims = 4 3\nranks = 4 1 1 1\nT = 10\nseed = 1\n") == 2
    # a gap in the data file
    (tmp_path / "gap.csv").write_text("time,row,col,value\n0,a,x,1\n0,a,y,1\n1,a,x,1\n")
    assert run(tmp_path, "fit", f"data = {tmp_path / 'gap.csv'}\nranks = 1 1 1 1\n") == 3
    # too few observations for the regression
    write_long(tmp_path / "short.csv", rng.standard_normal((3, 2, 5)))
    assert run(tmp_path, "fit", f"data = {tmp_path / 'short.csv'}\nranks = 1 1 1 1\n",
               "--out", str(tmp_path / "o")) == 4
    # non-stationary simulation target
    assert run(tmp_path, "simulate", "dims = 1 1\nranks = 1 1 1 1\nT = 10\nseed = 1\nsnr = 5\n",
               "--out", str(tmp_path / "o")) == 4


def test_threads_resolution(tmp_path, monkeypatch):
    args = cli.build_parser().parse_args(["select", "--config", "x"])
    opts = cli.Options({}, args, tmp_path)
    monkeypatch.delenv("RRMAR_THREADS", raising=False)
    assert opts.threads == 1
    monkeypatch.setenv("RRMAR_THREADS", "3")
    assert opts.threads == 3
    assert cli.Options({"threads": "2"}, args, tmp_path).threads == 2
    args.threads = 5
    assert opts.threads == 5
    monkeypatch.setenv("RRMAR_THREADS", "many")
    args.threads = None
    with pytest.raises(ConfigError):
        opts.threads


REP_CFG = "dims = 2 2\nranks = 1 1 1 1, 2 2 2 2\nT = 60\nreps = {reps}\nseed = {seed}\n"


def test_replicate_sim_deterministic(tmp_path):
    cfg = REP_CFG.format(reps=3, seed=7)
    assert run(tmp_path, "replicate-sim", cfg, "--out", str(tmp_path / "a")) == 0
    assert run(tmp_path, "replicate-sim", cfg, "--out", str(tmp_path / "b"), "--threads", "2") == 0
    for name in ("summary.csv", "replications.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    with open(tmp_path / "a" / "summary.csv") as fh:
        records = list(csv.DictReader(fh))
    assert len(records) == 4 and {r["criterion"] for r in records} == {"AIC", "BIC"}


def test_replicate_sim_split_runs_merge(tmp_path):
    assert run(tmp_path, "replicate-sim", REP_CFG.format(reps=4, seed=10), "--out", str(tmp_path / "all")) == 0
    assert run(tmp_path, "replicate-sim", REP_CFG.format(reps=2, seed=10), "--out", str(tmp_path / "p1")) == 0
    assert run(tmp_path, "replicate-sim", REP_CFG.format(reps=2, seed=12), "--out", str(tmp_path / "p2")) == 0
    whole = cli.read_replications(tmp_path / "all" / "replications.csv")
    parts = merge(cli.read_replications(tmp_path / "p1" / "replications.csv"),
                  cli.read_replications(tmp_path / "p2" / "replications.csv"))
    assert parts == merge(whole)
    for ranks in ((1, 1, 1, 1), (2, 2, 2, 2)):
        name = Scenario((2, 2), ranks, 60).name
        for kind in ("aic", "bic"):
            a = summarize([r for r in whole if r["scenario"] == name], ranks, kind)
            b = summarize([r for r in parts if r["scenario"] == name], ranks, kind)
            for key in ("average", "std", "freq_correct"):
                np.testing.assert_allclose(a[key], b[key], rtol=0, atol=1e-12)


def test_merge_rejects_overlap():
    sc = Scenario((2, 2), (1, 1, 1, 1), 40)
    rows = run_scenario(sc, 2, 0)
    with pytest.raises(ValueError):
        merge(rows, rows)


def test_summary_statistics_hand_example():
    rows = [{"scenario": "s", "seed": i, "error": "", "bic": {"ranks": r, "p": 1}}
            for i, r in enumerate([[1, 1, 1, 1], [2, 1, 1, 1], [1, 1, 1, 2]])]
    rows.append({"scenario": "s", "seed": 3, "error": "GenerationError: x"})
    s = summarize(rows, (1, 1, 1, 1), "bic")
    assert s["n_reps"] == 4 and s["n_used"] == 3
    np.testing.assert_allclose(s["average"], [4 / 3, 1, 1, 4 / 3])
    np.testing.assert_allclose(s["std"], [np.sqrt(1 / 3), 0, 0, np.sqrt(1 / 3)])
    np.testing.assert_allclose(s["freq_correct"], [2 / 3, 1, 1, 2 / 3])
    assert s["freq_all"] == pytest.approx(1 / 3)
