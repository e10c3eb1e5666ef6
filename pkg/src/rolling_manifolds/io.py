"""JSON and CSV import/export for rollings, curvature, filtrations and reports."""
from __future__ import annotations

import csv
import io
import json
from typing import Iterable, Optional, TextIO

import numpy as np

from .catalog import to_config
from .geometry import ChartManifold, riemann
from .rolling import RollingCurve
from .transport import BaseCurve

SCHEMA = 1


def _fmt(v: float) -> str:
    return repr(float(v))


def dumps(obj) -> str:
    """Deterministic JSON text (sorted keys, fixed indentation)."""
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def with_schema(payload: dict, seed: Optional[int] = None) -> dict:
    out = {"schema": SCHEMA}
    if seed is not None:
        out["seed"] = seed
    out.update(payload)
    return out


def rolling_header(n: int) -> list:
    return (["t"] + [f"x{i}" for i in range(n)] + [f"xhat{i}" for i in range(n)]
            + [f"Q{i}{j}" for i in range(n) for j in range(n)])


def write_rolling_csv(rc: RollingCurve, fh: TextIO) -> None:
    n = rc.x.shape[1]
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(rolling_header(n))
    for t, x, xh, Q in zip(rc.times, rc.x, rc.xhat, rc.Q):
        w.writerow([_fmt(t)] + [_fmt(v) for v in np.concatenate([x, xh, Q.ravel()])])


def rolling_csv(rc: RollingCurve) -> str:
    buf = io.StringIO()
    write_rolling_csv(rc, buf)
    return buf.getvalue()


def read_rolling_csv(fh: TextIO):
    """Read back ``(times, x, xhat, Q)`` arrays from a trajectory CSV."""
    rows = list(csv.reader(fh))
    header, data = rows[0], np.array(rows[1:], dtype=float)
    n = sum(1 for h in header if h.startswith("x") and not h.startswith("xhat"))
    return data[:, 0], data[:, 1:1 + n], data[:, 1 + n:1 + 2 * n], data[:, 1 + 2 * n:].reshape(-1, n, n)


def rolling_dict(rc: RollingCurve) -> dict:
    return {
        "M": to_config(rc.M),
        "Mhat": to_config(rc.Mh),
        "times": rc.times.tolist(),
        "x": rc.x.tolist(),
        "xhat": rc.xhat.tolist(),
        "Q": rc.Q.tolist(),
    }


def read_base_curve_csv(fh: TextIO, n: Optional[int] = None) -> BaseCurve:
    """Sampled base curve: a header row, then ``t, x0, ..., x_{n-1}`` with increasing ``t``."""
    rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise ValueError("empty curve file")
    try:
        float(rows[0][0])
    except ValueError:
        rows = rows[1:]
    data = np.array(rows, dtype=float)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ValueError("curve file needs at least two samples")
    if n is not None and data.shape[1] != n + 1:
        raise ValueError(f"curve file has {data.shape[1] - 1} coordinates, expected {n}")
    if np.any(np.diff(data[:, 0]) <= 0):
        raise ValueError("curve times must be strictly increasing")
    return BaseCurve.from_samples(data[:, 0], data[:, 1:])


def write_curve_csv(times, points, fh: TextIO) -> None:
    points = np.atleast_2d(points)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t"] + [f"x{i}" for i in range(points.shape[1])])
    for t, p in zip(times, points):
        w.writerow([_fmt(t)] + [_fmt(v) for v in p])


def curvature_dict(M: ChartManifold, x, nabla: bool = True) -> dict:
    data = riemann(M, x, nabla=nabla)
    out = {"manifold": to_config(M), "x": np.asarray(x, float).tolist(), "R": data.R.tolist()}
    if data.nablaR is not None:
        out["nablaR"] = data.nablaR.tolist()
    return out


def write_table_csv(header: Iterable[str], rows: Iterable[Iterable], fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(list(header))
    for row in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
