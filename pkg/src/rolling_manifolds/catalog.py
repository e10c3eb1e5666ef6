"""Built-in manifolds with explicit charts, frames and metadata.

Charts and frames:

``euclidean(n)``
    Cartesian coordinates, identity frame.
``sphere(n, r)``
    Stereographic projection from the south pole onto the equatorial plane,
    ``g = (2 r^2 / (r^2 + |y|^2))^2 I``; frame is the rescaled coordinate
    basis. The chart misses only the south pole.
``sphere_polar(r)``
    The 2-sphere in polar angles ``(theta, phi)``, ``0 < theta < pi``, with
    frame ``(d_theta / r, d_phi / (r sin theta))``.
``hyperbolic(n, r)``
    Upper half space ``y_n > 0`` with ``g = (r / y_n)^2 I``.
``sphere_times_line()``
    ``S^2 x R`` embedded as ``x0^2 + x1^2 + x2^2 = 1`` in R^4, chart
    ``(x0, x1, x3)`` on ``x2 > 0``. The frame is the one written in
    coordinates of R^4 as

        e1 = -s (-d_x0 + x0 / s^2 (x1 d_x1 + x2 d_x2)),
        e2 = x2 / s (-d_x1 + x1 / x2 d_x2),
        e3 = d_x3,        s = sqrt(x1^2 + x2^2).

``bump_surface()``
    Surface of revolution ``sqrt(x2^2 + x3^2) = 1 - f(x1)``, ``|x1| < 3/2``,
    with ``f = exp(-1/(|x1| - 1)^2)`` for ``|x1| > 1`` and 0 otherwise.
    Chart ``(x1, angle)``; frame ``e1 = d_x1 / sqrt(1 + f'^2)``,
    ``e2 = d_angle / (1 - f)``.

All derivatives in analytic mode come from symbolic differentiation of the
chart expressions, compiled to vectorized numpy functions.
"""
from __future__ import annotations

import functools
import itertools
from typing import Callable

import numpy as np
import sympy as sp

from .geometry import ChartManifold, Jets, is_locally_symmetric, riemann_batch

METADATA_TOL = 1e-6


def _compile(*tensors, syms):
    """Vectorized evaluator for object arrays of sympy expressions.

    Returns a function of a point batch ``X`` (B, n) that yields one float
    array per input tensor, each with a leading batch axis. A zero symbol is
    added to every entry so constants broadcast in a single ``np.array`` call.
    """
    zero = sp.Symbol("_zero", real=True)
    shapes = [t.shape for t in tensors]
    sizes = [int(np.prod(sh)) for sh in shapes]
    flat = [e + zero for t in tensors for e in t.reshape(-1)]
    fn = sp.lambdify(list(syms) + [zero], flat, modules="numpy", cse=True)
    bounds = np.cumsum([0] + sizes)

    def evaluate(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        B = X.shape[0]
        with np.errstate(all="ignore"):
            vals = np.array(fn(*X.T, np.zeros(B)), dtype=float).T
        out = tuple(
            vals[:, a:b].reshape((B,) + sh)
            for a, b, sh in zip(bounds[:-1], bounds[1:], shapes)
        )
        return out if len(out) > 1 else out[0]

    return evaluate


def _derivative_tensor(base: np.ndarray, syms, order: int) -> np.ndarray:
    """``T[k1..korder, ...] = d_k1 ... d_korder base[...]`` using symmetry."""
    n = len(syms)
    shape = (n,) * order + base.shape
    out = np.empty(shape, dtype=object)
    cache = {}
    for ks in itertools.product(range(n), repeat=order):
        key = tuple(sorted(ks))
        if key not in cache:
            cache[key] = np.empty(base.shape, dtype=object)
            for idx in np.ndindex(base.shape):
                e = base[idx]
                for k in key:
                    e = sp.diff(e, syms[k])
                cache[key][idx] = e
        out[ks] = cache[key]
    return out


def sympy_jets(syms, metric: sp.Matrix, frame: sp.Matrix) -> Jets:
    n = len(syms)
    g = np.array(metric.tolist(), dtype=object)
    E = np.array(frame.tolist(), dtype=object)
    derivs = [g] + [_derivative_tensor(g, syms, k) for k in (1, 2, 3)]
    dE = _derivative_tensor(E, syms, 1)
    fns = [_compile(d, syms=syms) for d in derivs]
    return Jets(
        g=fns[0],
        dg=fns[1],
        d2g=fns[2],
        d3g=fns[3],
        E=_compile(E, syms=syms),
        dE=_compile(dE, syms=syms),
        first=_compile(g, derivs[1], E, dE, syms=syms),
    )


def _make(name, syms, metric, frame, domain, params, box, **flags) -> ChartManifold:
    jets = sympy_jets(syms, metric, frame)
    M = ChartManifold(
        name=name,
        n=len(syms),
        metric=lambda x: jets.g(x[None])[0],
        frame=lambda x: jets.E(x[None])[0],
        domain=domain,
        derivative_mode="analytic",
        jets=jets,
        params=params,
        sample_box=box,
        **flags,
    )
    verify_metadata(M)
    return M


def verify_metadata(M: ChartManifold, samples: int = 20, seed: int = 0) -> dict:
    """Recompute the flat / locally-symmetric flags at random points.

    Raises ``AssertionError`` when a flag disagrees with the numbers.
    """
    pts = M.sample(np.random.default_rng(seed), samples)
    R, _ = riemann_batch(M, pts)
    flat_res = float(np.max(np.abs(R)))
    _, sym_res = is_locally_symmetric(M, pts)
    if M.flat and flat_res > METADATA_TOL:
        raise AssertionError(f"{M.name} flagged flat but |R| = {flat_res:.3g}")
    if M.locally_symmetric and sym_res > METADATA_TOL:
        raise AssertionError(
            f"{M.name} flagged locally symmetric but |nabla R| = {sym_res:.3g}"
        )
    return {"flat_residual": flat_res, "symmetric_residual": sym_res}


def _symbols(n, prefix="x"):
    return sp.symbols(f"{prefix}0:{n}", real=True)


@functools.lru_cache(maxsize=None)
def euclidean(n: int = 2) -> ChartManifold:
    """Flat R^n in Cartesian coordinates."""
    syms = _symbols(n)
    return _make(
        "euclidean",
        syms,
        sp.eye(n),
        sp.eye(n),
        lambda x: True,
        {"n": n},
        (-np.ones(n), np.ones(n)),
        complete=True,
        flat=True,
        locally_symmetric=True,
    )


@functools.lru_cache(maxsize=None)
def sphere(n: int = 2, r: float = 1.0) -> ChartManifold:
    """Round S^n(r) in stereographic coordinates (one pole is left out)."""
    if r <= 0:
        raise ValueError("radius must be positive")
    syms = _symbols(n)
    rr = sp.nsimplify(r)
    lam = 2 * rr**2 / (rr**2 + sum(s**2 for s in syms))
    return _make(
        "sphere",
        syms,
        lam**2 * sp.eye(n),
        sp.eye(n) / lam,
        lambda x: True,
        {"n": n, "r": r},
        (-r * np.ones(n), r * np.ones(n)),
        complete=True,
        locally_symmetric=True,
    )


@functools.lru_cache(maxsize=None)
def sphere_polar(r: float = 1.0) -> ChartManifold:
    """Round S^2(r) in polar angles (theta, phi), 0 < theta < pi."""
    th, ph = sp.symbols("theta phi", real=True)
    rr = sp.nsimplify(r)
    return _make(
        "sphere_polar",
        (th, ph),
        sp.diag(rr**2, rr**2 * sp.sin(th) ** 2),
        sp.diag(1 / rr, 1 / (rr * sp.sin(th))),
        lambda x: (0.0 < x[0]) & (x[0] < np.pi),
        {"r": r},
        (np.array([0.2, -np.pi]), np.array([np.pi - 0.2, np.pi])),
        complete=True,
        locally_symmetric=True,
    )


@functools.lru_cache(maxsize=None)
def hyperbolic(n: int = 2, r: float = 1.0) -> ChartManifold:
    """Hyperbolic space of curvature -1/r^2 in the upper half-space model."""
    if r <= 0:
        raise ValueError("radius must be positive")
    syms = _symbols(n)
    rr = sp.nsimplify(r)
    y = syms[-1]
    lo = -np.ones(n)
    hi = np.ones(n)
    lo[-1], hi[-1] = 0.5, 2.0
    return _make(
        "hyperbolic",
        syms,
        (rr / y) ** 2 * sp.eye(n),
        (y / rr) * sp.eye(n),
        lambda x: x[-1] > 0.0,
        {"n": n, "r": r},
        (lo, hi),
        complete=True,
        locally_symmetric=True,
    )


@functools.lru_cache(maxsize=None)
def sphere_times_line() -> ChartManifold:
    """S^2 x R in coordinates (x0, x1, x3) on the hemisphere x2 > 0."""
    x0, x1, x3 = sp.symbols("x0 x1 x3", real=True)
    x2 = sp.sqrt(1 - x0**2 - x1**2)
    s = sp.sqrt(1 - x0**2)
    J = sp.Matrix([[1, 0, 0], [0, 1, 0], [sp.diff(x2, x0), sp.diff(x2, x1), 0], [0, 0, 1]])
    g = sp.simplify(J.T * J)
    frame = sp.Matrix(
        [
            [s, 0, 0],
            [-x0 * x1 / s, -x2 / s, 0],
            [0, 0, 1],
        ]
    )
    return _make(
        "sphere_times_line",
        (x0, x1, x3),
        g,
        frame,
        lambda x: x[0] ** 2 + x[1] ** 2 < 1.0,
        {},
        (np.array([-0.6, -0.6, -1.0]), np.array([0.6, 0.6, 1.0])),
        complete=True,
        locally_symmetric=True,
    )


def _bump_expr(x):
    return sp.Piecewise(
        (sp.exp(-1 / (x - 1) ** 2), x > 1),
        (sp.exp(-1 / (x + 1) ** 2), x < -1),
        (0, True),
    )


def bump_profile(x1) -> tuple:
    """``(f, f', f'')`` of the bump profile, evaluated in closed form."""
    x1 = float(x1)
    a = abs(x1)
    if a <= 1.0:
        return 0.0, 0.0, 0.0
    u = a - 1.0
    sgn = np.sign(x1)
    f = np.exp(-1.0 / u**2)
    fp = sgn * 2.0 / u**3 * f
    fpp = (4.0 / u**6 - 6.0 / u**4) * f
    return f, fp, fpp


@functools.lru_cache(maxsize=None)
def bump_surface() -> ChartManifold:
    """Surface of revolution, flat for |x1| <= 1 and positively curved out to |x1| < 3/2."""
    x1, th = sp.symbols("x1 theta", real=True)
    f = _bump_expr(x1)
    fp = sp.diff(f, x1)
    return _make(
        "bump_surface",
        (x1, th),
        sp.diag(1 + fp**2, (1 - f) ** 2),
        sp.diag(1 / sp.sqrt(1 + fp**2), 1 / (1 - f)),
        lambda x: np.abs(x[0]) < 1.5,
        {},
        (np.array([-1.4, -np.pi]), np.array([1.4, np.pi])),
        complete=False,
    )


def s2xr_rotation(theta: float, phi: float, psi: float) -> np.ndarray:
    """Rotation ``Q`` in the angle coordinates used for S^2 x R on itself.

    ``Q = A(theta) B(phi) C(psi)`` with elementary rotations in the (1,2),
    (1,3) and (2,3) coordinate planes.
    """
    ct, st = np.cos(theta), np.sin(theta)
    cf, sf = np.cos(phi), np.sin(phi)
    cp, sp_ = np.cos(psi), np.sin(psi)
    A = np.array([[ct, st, 0], [-st, ct, 0], [0, 0, 1.0]])
    B = np.array([[cf, 0, sf], [0, 1.0, 0], [-sf, 0, cf]])
    C = np.array([[1.0, 0, 0], [0, cp, sp_], [0, -sp_, cp]])
    return A @ B @ C


CATALOG: dict[str, Callable[..., ChartManifold]] = {
    "euclidean": euclidean,
    "sphere": sphere,
    "sphere_polar": sphere_polar,
    "hyperbolic": hyperbolic,
    "sphere_times_line": sphere_times_line,
    "bump_surface": bump_surface,
}

_PARAM_TYPES = {"n": int, "r": float}


def load(name: str, **params) -> ChartManifold:
    try:
        ctor = CATALOG[name]
    except KeyError:
        raise ValueError(
            f"unknown manifold {name!r}; choose from {sorted(CATALOG)}"
        ) from None
    return ctor(**{k: _PARAM_TYPES.get(k, float)(v) for k, v in params.items()})


def parse_spec(text: str) -> ChartManifold:
    """Parse ``name`` or ``name:key=value,key=value`` into a manifold."""
    name, _, rest = text.strip().partition(":")
    params = {}
    if rest:
        for item in rest.split(","):
            key, eq, value = item.partition("=")
            if not eq:
                raise ValueError(f"bad parameter {item!r} in {text!r}")
            params[key.strip()] = value.strip()
    return load(name, **params)


def to_config(M: ChartManifold) -> dict:
    return {"name": M.name, "n": M.n, "params": dict(M.params)}


def from_config(cfg: dict) -> ChartManifold:
    return load(cfg["name"], **cfg.get("params", {}))


def describe() -> list[dict]:
    rows = []
    for name, ctor in CATALOG.items():
        doc = (ctor.__doc__ or "").strip().splitlines()
        M = ctor()
        rows.append(
            {
                "name": name,
                "n": M.n,
                "params": M.params,
                "complete": M.complete,
                "flat": M.flat,
                "locally_symmetric": M.locally_symmetric,
                "doc": doc[0] if doc else "",
            }
        )
    return rows
