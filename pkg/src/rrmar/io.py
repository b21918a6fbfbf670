"""Reading and writing series, models and run configurations.

Series files are long-format CSV with a header ``time,row,col,value``.
Models are single JSON documents. Configurations are flat ``key = value``
text files; ``#`` and ``;`` start comments.
"""

from __future__ import annotations

import configparser
import csv
import json
import math
from pathlib import Path
from typing import Union

import numpy as np

from rrmar.exceptions import ConfigError, DataError
from rrmar.model import MatrixSeries, RRMARModel

PathLike = Union[str, Path]

SERIES_COLUMNS = ("time", "row", "col", "value")
_SECTION = "rrmar"


def _time_key(label: str):
    # integer indices sort numerically; anything else (ISO dates) as text
    try:
        return (0, int(label), "")
    except ValueError:
        return (1, 0, label)


def read_series(path: PathLike, demean: bool = True) -> MatrixSeries:
    """Load a long-format CSV into a dense series.

    Row and column labels are indexed by first appearance; time labels are
    sorted (integers numerically, other labels such as ISO dates as text).
    Every ``(time, row, col)`` cell must appear exactly once.

    Raises
    ------
    DataError
        On a missing header, non-numeric values, duplicate cells or gaps.
        Gap errors list every missing cell.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"series file {path} does not exist")
    rows, cols, cells = {}, {}, {}
    times = set()
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip().lower() for h in header) != SERIES_COLUMNS:
            raise DataError(f"{path}: header must be {','.join(SERIES_COLUMNS)}, got {header}")
        for lineno, record in enumerate(reader, start=2):
            if not record or all(not f.strip() for f in record):
                continue
            if len(record) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 fields, got {len(record)}")
            t, r, c, v = (f.strip() for f in record)
            try:
                value = float(v)
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric value {v!r}") from None
            if not math.isfinite(value):
                raise DataError(f"{path}:{lineno}: non-finite value {v!r}")
            key = (t, r, c)
            if key in cells:
                raise DataError(f"{path}:{lineno}: duplicate cell time={t} row={r} col={c}")
            cells[key] = value
            rows.setdefault(r, len(rows))
            cols.setdefault(c, len(cols))
            times.add(t)
    if not cells:
        raise DataError(f"{path}: no observations")

    time_labels = sorted(times, key=_time_key)
    t_index = {t: k for k, t in enumerate(time_labels)}
    values = np.full((len(rows), len(cols), len(time_labels)), np.nan)
    for (t, r, c), v in cells.items():
        values[rows[r], cols[c], t_index[t]] = v
    if np.isnan(values).any():
        row_names, col_names = list(rows), list(cols)
        gaps = [f"(time={time_labels[k]}, row={row_names[i]}, col={col_names[j]})"
                for i, j, k in zip(*np.nonzero(np.isnan(values)))]
        raise DataError(f"{path}: {len(gaps)} missing cells: " + ", ".join(gaps))
    series = MatrixSeries(values, tuple(rows), tuple(cols), tuple(_parse_time(t) for t in time_labels))
    return series.demean() if demean else series


def _parse_time(label: str):
    try:
        return int(label)
    except ValueError:
        return label


def write_series(series: MatrixSeries, path: PathLike) -> None:
    """Write a series in the long format read by :func:`read_series`."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        for k, t in enumerate(series.time_labels):
            for i, r in enumerate(series.row_labels):
                for j, c in enumerate(series.col_labels):
                    w.writerow([t, r, c, repr(float(series.values[i, j, k]))])


def model_to_dict(m: RRMARModel, **diagnostics) -> dict:
    """JSON-ready dictionary: shapes, factors, per-lag cores, covariance, diagnostics."""
    return {
        "dims": list(m.dims),
        "ranks": list(m.ranks),
        "p": m.p,
        "factors": {f"U{i + 1}": u.tolist() for i, u in enumerate(m.factors)},
        "cores": [m.core[..., j].tolist() for j in range(m.p)],
        "sigma": None if m.sigma is None else m.sigma.tolist(),
        "diagnostics": diagnostics,
    }


def model_from_dict(d: dict) -> RRMARModel:
    try:
        factors = tuple(np.asarray(d["factors"][f"U{i + 1}"], dtype=float) for i in range(4))
        core = np.stack([np.asarray(c, dtype=float) for c in d["cores"]], axis=-1)
        sigma = d.get("sigma")
        return RRMARModel(factors, core, None if sigma is None else np.asarray(sigma, dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed model document: {exc}") from exc


def write_model(m: RRMARModel, path: PathLike, **diagnostics) -> None:
    Path(path).write_text(json.dumps(model_to_dict(m, **diagnostics), indent=2, sort_keys=True) + "\n")


def read_model(path: PathLike) -> RRMARModel:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"model file {path} does not exist")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    return model_from_dict(doc)


def read_config(path: PathLike) -> dict:
    """Parse a flat ``key = value`` file into a dict of strings.

    Keys are lower-cased; sections are not allowed.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        parser.read_string(f"[{_SECTION}]\n" + path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if parser.sections() != [_SECTION]:
        raise ConfigError(f"{path}: sections are not supported in the config file")
    return dict(parser[_SECTION])
