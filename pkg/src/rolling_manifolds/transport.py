"""Parallel transport, development and geodesics along chart curves.

Vectors along a curve are carried in frame components: ``c`` with
``v = sum_b c_b e_b``. In these components parallel transport reads

    c' = -Gamma(w) c,    Gamma(w)[a, b] = sum_j w_j <e_a, nabla_{e_j} e_b>,

where ``w = E^-1 x'`` are the frame components of the velocity. ``Gamma(w)``
is antisymmetric, so the flow stays orthogonal; after every RK4 step frames
are projected back to SO(n) anyway.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .errors import BoundaryError
from .geometry import ChartManifold, christoffel_batch, frame_christoffel_batch

DEFAULT_STEPS = 1000


@dataclass
class BaseCurve:
    """A chart curve ``t -> x(t)`` on ``[0, tau]`` with its velocity."""

    position: Callable[[float], np.ndarray]
    velocity: Callable[[float], np.ndarray]
    tau: float
    nodes: Optional[np.ndarray] = None

    @classmethod
    def from_function(cls, position, tau, velocity=None, h=1e-6):
        if velocity is None:
            def velocity(t):
                a, b = max(t - h, 0.0), min(t + h, tau)
                return (np.asarray(position(b)) - np.asarray(position(a))) / (b - a)
        return cls(
            position=lambda t: np.asarray(position(t), dtype=float),
            velocity=lambda t: np.asarray(velocity(t), dtype=float),
            tau=float(tau),
        )

    @classmethod
    def from_samples(cls, times, points, velocities=None):
        """Interpolate sampled points; Hermite when velocities are known."""
        times = np.asarray(times, dtype=float)
        points = np.asarray(points, dtype=float)
        if times.ndim != 1 or times.size < 2 or np.any(np.diff(times) <= 0):
            raise ValueError("sample times must be strictly increasing")
        if velocities is None:
            spline = CubicSpline(times, points, axis=0)
        else:
            spline = CubicHermiteSpline(times, points, np.asarray(velocities, float), axis=0)
        deriv = spline.derivative()
        t0 = times[0]
        return cls(
            position=lambda t: spline(t + t0),
            velocity=lambda t: deriv(t + t0),
            tau=float(times[-1] - t0),
            nodes=times - t0,
        )

    @classmethod
    def constant(cls, x, tau=1.0):
        x = np.asarray(x, dtype=float)
        return cls(lambda t: x.copy(), lambda t: np.zeros_like(x), float(tau))

    def grid(self, steps: Optional[int] = None) -> np.ndarray:
        return np.linspace(0.0, self.tau, (steps or DEFAULT_STEPS) + 1)

    def sample(self, times) -> np.ndarray:
        return np.array([self.position(t) for t in times])

    def reversed(self) -> "BaseCurve":
        tau = self.tau
        return BaseCurve(
            lambda t: self.position(tau - t),
            lambda t: -self.velocity(tau - t),
            tau,
        )


@dataclass
class MovingFrame:
    """Frames along a curve; ``frames[k]`` has the frame vectors as columns
    in the coordinate basis, ``components[k]`` in the reference frame e."""

    times: np.ndarray
    frames: np.ndarray
    components: np.ndarray


def project_so(F: np.ndarray) -> np.ndarray:
    """Modified Gram-Schmidt on the columns, then fix the determinant sign."""
    F = np.array(F, dtype=float)
    n = F.shape[0]
    for j in range(n):
        for i in range(j):
            F[:, j] -= (F[:, i] @ F[:, j]) * F[:, i]
        F[:, j] /= np.linalg.norm(F[:, j])
    if np.linalg.det(F) < 0:
        F[:, -1] = -F[:, -1]
    return F


def _frame_velocity(M: ChartManifold, x, xdot):
    """Frame components of the velocity and the connection matrix Gamma(w)."""
    E = M.frame_at(x)
    w = np.linalg.solve(E, xdot)
    FC = frame_christoffel_batch(M, x[None])[0]
    return w, np.einsum("j,ajb->ab", w, FC), E


class _CurveConnection:
    """Velocity frame components and Gamma(w) at every RK4 stage time.

    The base curve is known in advance, so all stage evaluations are done in
    one vectorized batch.
    """

    def __init__(self, M: ChartManifold, curve: BaseCurve, times):
        stage = np.concatenate([times, times[:-1] + (times[1:] - times[:-1]) / 2])
        X = np.array([curve.position(t) for t in stage])
        V = np.array([curve.velocity(t) for t in stage])
        for t, x in sorted(zip(stage, X), key=lambda p: p[0]):
            _require(M, x, t)
        FC = frame_christoffel_batch(M, X)
        if M.analytic:
            E = M.jets.E(X)
        else:
            E = np.stack([M.frame_at(x) for x in X])
        W = np.linalg.solve(E, V[..., None])[..., 0]
        G = np.einsum("sj,sajb->sab", W, FC)
        self._table = {float(t): (w, g) for t, w, g in zip(stage, W, G)}

    def __call__(self, t):
        return self._table[float(t)]


def connection_matrix(M: ChartManifold, x, w) -> np.ndarray:
    """``Gamma(w)[a, b] = <e_a, nabla_w e_b>`` for ``w`` in frame components."""
    FC = frame_christoffel_batch(M, np.asarray(x, float)[None])[0]
    return np.einsum("j,ajb->ab", np.asarray(w, float), FC)


def _require(M, x, t):
    if not M.contains(x):
        raise BoundaryError(f"curve leaves the domain of {M.name} at t={t:.6g}", time=t)


def rk4(rhs, y0, times, project=None):
    """Fixed-step classical RK4; ``project`` is applied after every step."""
    ys = [np.asarray(y0, dtype=float)]
    y = ys[0]
    for t0, t1 in zip(times[:-1], times[1:]):
        h = t1 - t0
        k1 = rhs(t0, y)
        k2 = rhs(t0 + h / 2, y + h / 2 * k1)
        k3 = rhs(t0 + h / 2, y + h / 2 * k2)
        k4 = rhs(t1, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if project is not None:
            y = project(t1, y)
        ys.append(y)
    return np.array(ys)


def parallel_transport(M: ChartManifold, curve: BaseCurve, v0, steps=None):
    """Transport ``v0`` (frame components at the start) along ``curve``.

    Returns ``(times, C)`` with ``C[k]`` the frame components at ``times[k]``.
    """
    times = curve.grid(steps)
    _require(M, curve.position(0.0), 0.0)
    v0 = np.asarray(v0, dtype=float)
    conn = _CurveConnection(M, curve, times)

    def rhs(t, c):
        return -conn(t)[1] @ c

    return times, rk4(rhs, v0, times)


def transport_frame(M: ChartManifold, curve: BaseCurve, F0=None, steps=None) -> MovingFrame:
    """Parallel frame along ``curve``; ``F0`` gives its frame components at t=0."""
    n = M.n
    times = curve.grid(steps)
    F0 = np.eye(n) if F0 is None else project_so(F0)
    conn = _CurveConnection(M, curve, times)

    def rhs(t, y):
        return (-conn(t)[1] @ y.reshape(n, n)).ravel()

    ys = rk4(rhs, F0.ravel(), times, project=lambda t, y: project_so(y.reshape(n, n)).ravel())
    comps = ys.reshape(-1, n, n)
    frames = np.array([M.frame_at(curve.position(t)) @ F for t, F in zip(times, comps)])
    return MovingFrame(times=times, frames=frames, components=comps)


def _initial_components(M, x0, f0):
    if f0 is None:
        return np.eye(M.n)
    f0 = np.asarray(f0, dtype=float)
    F0 = np.linalg.solve(M.frame_at(x0), f0)
    if np.max(np.abs(F0.T @ F0 - np.eye(M.n))) > 1e-8 or np.linalg.det(F0) < 0:
        raise ValueError("initial frame must be oriented and orthonormal")
    return F0


def anti_develop(M: ChartManifold, curve: BaseCurve, f0=None, steps=None):
    """Anti-development ``u(t) = int_0^t f(s)^-1 m'(s) ds`` into R^n.

    ``f0`` is the initial frame in the coordinate basis (default: the
    reference frame). Returns ``(u_curve, moving_frame)`` where ``u_curve``
    is a :class:`BaseCurve` in R^n.
    """
    n = M.n
    x0 = curve.position(0.0)
    _require(M, x0, 0.0)
    times = curve.grid(steps)
    F0 = _initial_components(M, x0, f0)
    conn = _CurveConnection(M, curve, times)

    def rhs(t, y):
        w, Gw = conn(t)
        F = y[: n * n].reshape(n, n)
        return np.concatenate([(-Gw @ F).ravel(), F.T @ w])

    def project(t, y):
        return np.concatenate([project_so(y[: n * n].reshape(n, n)).ravel(), y[n * n:]])

    ys = rk4(rhs, np.concatenate([F0.ravel(), np.zeros(n)]), times, project)
    comps = ys[:, : n * n].reshape(-1, n, n)
    U = ys[:, n * n:]
    Udot = np.array([F.T @ conn(t)[0] for t, F in zip(times, comps)])
    frames = np.array([M.frame_at(curve.position(t)) @ F for t, F in zip(times, comps)])
    u_curve = BaseCurve.from_samples(times, U, Udot)
    return u_curve, MovingFrame(times=times, frames=frames, components=comps)


def develop_into(Mh: ChartManifold, u: BaseCurve, x0, f0=None, steps=None):
    """Develop an R^n curve ``u`` into ``Mh`` starting at ``x0`` with frame ``f0``.

    Returns ``(curve, moving_frame)``: the developed chart curve and the
    parallel frame carried along it.
    """
    n = Mh.n
    x0 = Mh.check(x0)
    times = u.grid(steps) if u.nodes is None or steps is not None else u.nodes
    F0 = _initial_components(Mh, x0, f0)

    def rhs(t, y):
        x = y[:n]
        _require(Mh, x, t)
        F = y[n:].reshape(n, n)
        w = F @ u.velocity(t)
        E = Mh.frame_at(x)
        Gw = connection_matrix(Mh, x, w)
        return np.concatenate([E @ w, (-Gw @ F).ravel()])

    def project(t, y):
        _require(Mh, y[:n], t)
        return np.concatenate([y[:n], project_so(y[n:].reshape(n, n)).ravel()])

    ys = rk4(rhs, np.concatenate([x0, F0.ravel()]), times, project)
    X = ys[:, :n]
    comps = ys[:, n:].reshape(-1, n, n)
    V = np.array([Mh.frame_at(x) @ F @ u.velocity(t) for x, F, t in zip(X, comps, times)])
    frames = np.array([Mh.frame_at(x) @ F for x, F in zip(X, comps)])
    curve = BaseCurve.from_samples(times, X, V)
    return curve, MovingFrame(times=times, frames=frames, components=comps)


def geodesic(M: ChartManifold, x0, v0, T: float, steps=None) -> BaseCurve:
    """Geodesic from ``x0`` with coordinate velocity ``v0`` on ``[0, T]``."""
    n = M.n
    x0 = M.check(x0)
    v0 = np.asarray(v0, dtype=float)
    times = np.linspace(0.0, T, (steps or DEFAULT_STEPS) + 1)

    def rhs(t, y):
        x, v = y[:n], y[n:]
        _require(M, x, t)
        G = christoffel_batch(M, x[None])[0]
        return np.concatenate([v, -np.einsum("kij,i,j->k", G, v, v)])

    def project(t, y):
        _require(M, y[:n], t)
        return y

    ys = rk4(rhs, np.concatenate([x0, v0]), times, project)
    return BaseCurve.from_samples(times, ys[:, :n], ys[:, n:])


def curve_length(M: ChartManifold, curve: BaseCurve, steps=None) -> float:
    """Riemannian length by Simpson's rule on the curve grid."""
    from scipy.integrate import simpson

    times = curve.grid(steps)
    speeds = []
    for t in times:
        x = curve.position(t)
        v = curve.velocity(t)
        speeds.append(np.sqrt(v @ M.metric_at(x) @ v))
    return float(simpson(speeds, x=times))


def speed_in_frame(M: ChartManifold, curve: BaseCurve, t) -> np.ndarray:
    x = curve.position(t)
    return np.linalg.solve(M.frame_at(x), curve.velocity(t))


__all__ = [
    "BaseCurve",
    "MovingFrame",
    "anti_develop",
    "connection_matrix",
    "curve_length",
    "develop_into",
    "geodesic",
    "parallel_transport",
    "project_so",
    "rk4",
    "transport_frame",
]
