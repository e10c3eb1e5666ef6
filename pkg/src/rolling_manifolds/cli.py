"""Command-line front end: reports, rollings, sweeps and filtration tables.

Exit codes: 0 success, 2 usage error, 3 domain or verification failure.
"""
from __future__ import annotations

import argparse
import io
import itertools
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional

import numpy as np

from . import catalog
from .controllability import (
    ALL_TESTS,
    DET_TOL,
    RANK_TOL,
    analyze,
    curvature_gap,
    sectional_gap,
    verdict_from_filtration,
)
from .distribution import (
    closed_form_D2,
    closed_form_D3,
    filtration,
    orthonormal_span,
    principal_angles,
    rolling_basis,
    span_rows,
)
from .errors import DomainError, RollingError
from .io import dumps, read_base_curve_csv, rolling_csv, with_schema, write_table_csv
from .rolling import Configuration, haar_rotation, roll_along, verify_rolling

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 2, 3


class UsageError(Exception):
    pass


# -- argument helpers ---------------------------------------------------------


def parse_pair(text: str):
    parts = text.split("/")
    if len(parts) != 2:
        raise UsageError("--pair expects 'M/Mhat', e.g. 'sphere:n=2,r=1/euclidean:n=2'")
    try:
        M, Mh = (catalog.parse_spec(p) for p in parts)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc
    if M.n != Mh.n:
        raise UsageError(f"dimension mismatch: {M.n} vs {Mh.n}")
    return M, Mh


def _rotation_from(cfg: dict, n: int) -> np.ndarray:
    if "Q" in cfg:
        return np.asarray(cfg["Q"], dtype=float)
    if "angles" in cfg:
        if n != 3:
            raise UsageError("'angles' needs n = 3")
        return catalog.s2xr_rotation(*map(float, cfg["angles"]))
    if "angle" in cfg:
        if n != 2:
            raise UsageError("'angle' needs n = 2")
        a = float(cfg["angle"])
        return np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    return None


def parse_config(text: str, M, Mh, seed: int, x_default=None) -> Configuration:
    """``random`` or a JSON object (inline or a file path) with keys
    ``x``, ``xhat`` and one of ``Q``, ``angles`` (n=3), ``angle`` (n=2).
    Missing entries are drawn from the seeded generator."""
    rng = np.random.default_rng(seed)
    x = M.sample(rng)[0]
    xh = Mh.sample(rng)[0]
    if x_default is not None:
        x = np.asarray(x_default, dtype=float)
    Q = haar_rotation(M.n, rng)
    if text != "random":
        raw = text
        if os.path.exists(text):
            with open(text) as fh:
                raw = fh.read()
        try:
            cfg = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise UsageError(f"--config is neither 'random' nor JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise UsageError("--config JSON must be an object")
        x = np.asarray(cfg.get("x", x), dtype=float)
        xh = np.asarray(cfg.get("xhat", xh), dtype=float)
        R = _rotation_from(cfg, M.n)
        Q = Q if R is None else R
    try:
        return Configuration(x, xh, Q, M, Mh)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def parse_tests(text: Optional[str]) -> tuple:
    if not text or text == "all":
        return ALL_TESTS
    names = tuple(t.strip() for t in text.split(",") if t.strip())
    bad = [t for t in names if t not in ALL_TESTS]
    if bad:
        raise UsageError(f"unknown tests {bad}; choose from {list(ALL_TESTS)}")
    return names


def parse_grid(text: str) -> List[tuple]:
    """``name=lo:hi:count`` items separated by ``;``. Names: ``x<i>``,
    ``xhat<i>``, ``theta``, ``phi``, ``psi`` (n=3 rotation), ``angle`` (n=2)."""
    axes = []
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        name, eq, spec = item.partition("=")
        parts = spec.split(":")
        if not eq or len(parts) != 3:
            raise UsageError(f"bad grid item {item!r}; expected name=lo:hi:count")
        try:
            lo, hi, cnt = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError as exc:
            raise UsageError(f"bad grid item {item!r}") from exc
        if cnt < 1:
            raise UsageError("grid counts must be positive")
        axes.append((name.strip(), np.linspace(lo, hi, cnt)))
    if not axes:
        raise UsageError("empty grid")
    return axes


def _grid_config(base: Configuration, names, values) -> Configuration:
    x, xh, Q = base.x.copy(), base.xhat.copy(), base.Q.copy()
    angles = {}
    for name, v in zip(names, values):
        if name.startswith("xhat") and name[4:].isdigit():
            xh[int(name[4:])] = v
        elif name.startswith("x") and name[1:].isdigit():
            x[int(name[1:])] = v
        elif name in ("theta", "phi", "psi", "angle"):
            angles[name] = v
        else:
            raise UsageError(f"unknown grid variable {name!r}")
    if angles:
        n = base.n
        if "angle" in angles:
            Q = _rotation_from({"angle": angles["angle"]}, n)
        else:
            Q = _rotation_from({"angles": [angles.get(k, 0.0) for k in ("theta", "phi", "psi")]}, n)
    return Configuration(x, xh, Q, base.M, base.Mh)


def _emit(text: str, out: Optional[str]):
    if out and out != "-":
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# -- commands ---------------------------------------------------------------


def cmd_report(args) -> int:
    M, Mh = parse_pair(args.pair)
    q = parse_config(args.config, M, Mh, args.seed)
    rep = analyze(M, Mh, q, tests=parse_tests(args.tests), k_max=args.kmax,
                  svd_tol=args.tol_rank, det_tol=args.tol_det, seed=args.seed)
    payload = with_schema({"command": "report", "pair_spec": args.pair, **rep.as_dict()}, args.seed)
    _emit(dumps(payload), args.out)
    return EXIT_OK


def cmd_roll(args) -> int:
    M, Mh = parse_pair(args.pair)
    if not args.curve:
        raise UsageError("roll needs --curve")
    try:
        with open(args.curve) as fh:
            base = read_base_curve_csv(fh, M.n)
    except OSError as exc:
        raise UsageError(str(exc)) from exc
    except ValueError as exc:
        raise UsageError(f"bad curve file: {exc}") from exc
    q = parse_config(args.config, M, Mh, args.seed, x_default=base.position(0.0))
    rc = roll_along(M, Mh, base, q, steps=args.steps)
    rep = verify_rolling(rc, tol=args.tol_verify, seed=args.seed)
    _emit(rolling_csv(rc), args.out)
    summary = with_schema({"command": "roll", "pair_spec": args.pair,
                           "residuals": rep.as_dict(),
                           "final": {"x": rc.x[-1].tolist(), "xhat": rc.xhat[-1].tolist(),
                                     "Q": rc.Q[-1].tolist()}}, args.seed)
    stream = sys.stdout if args.out and args.out != "-" else sys.stderr
    stream.write(dumps(summary))
    return EXIT_OK if rep.passed else EXIT_FAIL


def _sweep_row(M, Mh, q, k_max, svd_tol, det_tol, seed):
    try:
        f = filtration(M, Mh, q, k_max=k_max, svd_tol=svd_tol)
        ranks, verdict = ";".join(map(str, f.ranks)), verdict_from_filtration(f)
    except DomainError:
        ranks, verdict = "", "domain-error"
    gap = curvature_gap(M, Mh, q, det_tol, svd_tol)
    lo, hi = sectional_gap(M, Mh, q, seed=seed).interval
    return [ranks, gap.determinant, gap.rank, lo, hi, verdict]


def cmd_sweep(args) -> int:
    M, Mh = parse_pair(args.pair)
    if not args.grid:
        raise UsageError("sweep needs --grid")
    axes = parse_grid(args.grid)
    base = parse_config(args.config, M, Mh, args.seed)
    names = [a[0] for a in axes]
    points = list(itertools.product(*[a[1] for a in axes]))
    configs = []
    for vals in points:
        try:
            configs.append(_grid_config(base, names, vals))
        except DomainError:
            configs.append(None)

    def work(q):
        if q is None:
            return ["", "", "", "", "", "outside-domain"]
        return _sweep_row(M, Mh, q, args.kmax, args.tol_rank, args.tol_det, args.seed)

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        results = list(pool.map(work, configs))  # map keeps grid order
    header = ["index"] + names + ["ranks", "det", "gap_rank", "kappa_min", "kappa_max", "verdict"]
    rows = [[i] + [float(v) for v in vals] + res for i, (vals, res) in enumerate(zip(points, results))]
    buf = io.StringIO()
    buf.write(f"# schema=1 seed={args.seed} pair={args.pair}\n")
    write_table_csv(header, rows, buf)
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_bracket_table(args) -> int:
    M, Mh = parse_pair(args.pair)
    q = parse_config(args.config, M, Mh, args.seed)
    f = filtration(M, Mh, q, k_max=args.kmax, svd_tol=args.tol_rank)
    base = np.vstack([e.at(q).vector() for e in rolling_basis(M, Mh)])
    d2 = np.vstack([base] + [t.vector()[None] for t in closed_form_D2(M, Mh, q)])
    d3 = np.vstack([d2] + [t.vector()[None] for t in closed_form_D3(M, Mh, q)])
    cross = {}
    for level, closed in ((2, d2), (3, d3)):
        if len(f.bases) < level:
            continue
        A, B = orthonormal_span(closed, args.tol_rank), orthonormal_span(span_rows(f, level), args.tol_rank)
        entry = {"closed_form_rank": int(A.shape[1]), "numeric_rank": int(B.shape[1])}
        if A.shape[1] == B.shape[1] and A.size:
            entry["max_principal_angle"] = float(np.max(principal_angles(A, B)))
        cross[f"D{level}"] = entry
    payload = with_schema({
        "command": "bracket-table",
        "pair_spec": args.pair,
        "configuration": {"x": q.x.tolist(), "xhat": q.xhat.tolist(), "Q": q.Q.tolist()},
        "filtration": f.as_dict(),
        "closed_form_check": cross,
    }, args.seed)
    _emit(dumps(payload), args.out)
    return EXIT_OK


def cmd_catalog(args) -> int:
    _emit(dumps(with_schema({"command": "catalog", "entries": catalog.describe()})), args.out)
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--pair", required=True,
                        help="manifold pair 'M/Mhat', e.g. 'sphere:n=2,r=1/euclidean:n=2'")
    common.add_argument("--config", default="random",
                        help="'random' or JSON with x, xhat and Q | angles | angle")
    common.add_argument("--seed", type=int, default=0, help="seed for random configurations and sampling")
    common.add_argument("--out", default=None, help="output file (default stdout)")
    common.add_argument("--kmax", type=int, default=4, help="deepest bracket level of the filtration")
    common.add_argument("--tol-rank", type=float, default=RANK_TOL,
                        help="relative singular-value cutoff for ranks")
    common.add_argument("--tol-det", type=float, default=DET_TOL,
                        help="relative determinant cutoff for the curvature gap")

    p = argparse.ArgumentParser(prog="rolling-manifolds",
                                description="Rolling of Riemannian manifolds and its controllability.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("report", parents=[common], help="controllability report (JSON)")
    r.add_argument("--tests", default="all", help=f"comma list from {','.join(ALL_TESTS)}")
    r.set_defaults(func=cmd_report)

    ro = sub.add_parser("roll", parents=[common], help="roll along a sampled base curve (CSV)")
    ro.add_argument("--curve", required=False, help="CSV with columns t, x0, ..., x{n-1}")
    ro.add_argument("--steps", type=int, default=None)
    ro.add_argument("--tol-verify", type=float, default=1e-5)
    ro.set_defaults(func=cmd_roll)

    s = sub.add_parser("sweep", parents=[common], help="verdict table over a grid (CSV)")
    s.add_argument("--grid", required=False, help="'name=lo:hi:count;...'")
    s.add_argument("--jobs", type=int, default=1, help="worker threads; row order is unaffected")
    s.set_defaults(func=cmd_sweep)

    b = sub.add_parser("bracket-table", parents=[common], help="filtration dump (JSON)")
    b.set_defaults(func=cmd_bracket_table)

    c = sub.add_parser("catalog", help="list catalog manifolds (JSON)")
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_catalog)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except RollingError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
