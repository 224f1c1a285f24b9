"""File formats: CSV at 17 significant digits, JSON, atomic writes."""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile

import numpy as np

from .diffusion import TrajectoryEnsemble


def fmt(x) -> str:
    """Shortest text that round-trips a float64 exactly (17 significant digits)."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def atomic_write(path, data) -> None:
    """Write ``data`` (str or bytes) to ``path`` via a temporary file and rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode() if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(x) for x in r])
    return buf.getvalue()


def write_csv(path, header, rows) -> None:
    atomic_write(path, csv_text(header, rows))


def read_csv(path):
    """Header and a float array of the body."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float)
    return rows[0], body.reshape(len(rows) - 1, len(rows[0]))


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def write_json(path, obj) -> None:
    atomic_write(path, json_text(obj))


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def trajectory_rows(ens: TrajectoryEnsemble):
    header = ["t"] + [f"v{int(i)}" for i in ens.ids]
    rows = [[t, *p] for t, p in zip(ens.times, ens.paths)]
    return header, rows


def trajectory_from_csv(path) -> TrajectoryEnsemble:
    header, body = read_csv(path)
    ids = np.array([int(h[1:]) for h in header[1:]], dtype=np.int64)
    return TrajectoryEnsemble(body[:, 0].copy(), body[:, 1:].copy(), ids)


def surface_rows(h_values, K_values, table):
    """Rows h, columns K, first column h; header holds the K values."""
    header = ["h"] + [fmt(k) for k in K_values]
    return header, [[int(h), *row] for h, row in zip(h_values, table)]
