"""Configurations of one manifold rolling on another, and rollings along curves.

A configuration is stored as ``(x, xhat, Q)`` with ``Q[i, j] = <ehat_i, q e_j>``
relative to the catalog frames of the two manifolds.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import CompositionError, DomainError
from .geometry import ChartManifold
from .transport import (
    BaseCurve,
    anti_develop,
    develop_into,
    parallel_transport,
    project_so,
)

SO_TOL = 1e-9


def haar_rotation(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed element of SO(n) via QR of a Gaussian matrix."""
    A = rng.standard_normal((n, n))
    Qm, R = np.linalg.qr(A)
    Qm = Qm * np.sign(np.diag(R))
    if np.linalg.det(Qm) < 0:
        Qm[:, 0] = -Qm[:, 0]
    return Qm


@dataclass
class Configuration:
    """A point of the configuration space.

    ``M`` and ``Mh`` are optional; when present, :func:`apply` accepts
    coordinate vectors, otherwise it works on frame components.
    """

    x: np.ndarray
    xhat: np.ndarray
    Q: np.ndarray
    M: Optional[ChartManifold] = field(default=None, repr=False, compare=False)
    Mh: Optional[ChartManifold] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).copy()
        self.xhat = np.asarray(self.xhat, dtype=float).copy()
        self.Q = np.asarray(self.Q, dtype=float).copy()
        n = self.x.shape[0]
        if self.xhat.shape != (n,) or self.Q.shape != (n, n):
            raise ValueError("x, xhat and Q must have shapes (n,), (n,), (n, n)")
        err = np.max(np.abs(self.Q.T @ self.Q - np.eye(n)))
        if err > SO_TOL or np.linalg.det(self.Q) < 0:
            raise ValueError(f"Q is not special orthogonal (||Q^T Q - I|| = {err:.2e})")
        if self.M is not None:
            self.M.check(self.x)
        if self.Mh is not None:
            self.Mh.check(self.xhat)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def point(self) -> np.ndarray:
        """Ambient coordinates ``(x, xhat, vec Q)``."""
        return np.concatenate([self.x, self.xhat, self.Q.ravel()])

    @classmethod
    def from_point(cls, p, n, M=None, Mh=None) -> "Configuration":
        p = np.asarray(p, dtype=float)
        return cls(p[:n], p[n:2 * n], p[2 * n:].reshape(n, n), M, Mh)

    def distance(self, other: "Configuration") -> float:
        return float(max(
            np.max(np.abs(self.x - other.x)),
            np.max(np.abs(self.xhat - other.xhat)),
            np.max(np.abs(self.Q - other.Q)),
        ))


def apply(config: Configuration, v, direction: str = "forward") -> np.ndarray:
    """Map a tangent vector by ``q`` (``forward``) or ``q^-1`` (``inverse``)."""
    v = np.asarray(v, dtype=float)
    M, Mh = config.M, config.Mh
    if direction == "forward":
        c = v if M is None else np.linalg.solve(M.frame_at(config.x), v)
        out = config.Q @ c
        return out if Mh is None else Mh.frame_at(config.xhat) @ out
    if direction == "inverse":
        c = v if Mh is None else np.linalg.solve(Mh.frame_at(config.xhat), v)
        out = config.Q.T @ c
        return out if M is None else M.frame_at(config.x) @ out
    raise ValueError("direction must be 'forward' or 'inverse'")


def random_configuration(M: ChartManifold, Mh: ChartManifold, rng) -> Configuration:
    if M.n != Mh.n:
        raise ValueError("manifolds must have equal dimension")
    rng = np.random.default_rng(rng)
    return Configuration(M.sample(rng)[0], Mh.sample(rng)[0], haar_rotation(M.n, rng), M, Mh)


@dataclass
class RollingCurve:
    """A rolling sampled on a time grid, with the curve that generated it."""

    times: np.ndarray
    x: np.ndarray
    xhat: np.ndarray
    Q: np.ndarray
    M: ChartManifold
    Mh: ChartManifold
    base: Optional[BaseCurve] = None
    hat_curve: Optional[BaseCurve] = None

    def __len__(self):
        return len(self.times)

    def config(self, k: int) -> Configuration:
        return Configuration(self.x[k], self.xhat[k], self.Q[k], self.M, self.Mh)

    @property
    def start(self) -> Configuration:
        return self.config(0)

    @property
    def end(self) -> Configuration:
        return self.config(-1)

    def so_drift(self) -> float:
        n = self.Q.shape[1]
        return float(np.max(np.abs(np.einsum("kji,kjl->kil", self.Q, self.Q) - np.eye(n))))


def roll_along(M: ChartManifold, Mh: ChartManifold, base: BaseCurve,
               q0: Configuration, steps: Optional[int] = None) -> RollingCurve:
    """Roll ``M`` on ``Mh`` along ``base`` starting from ``q0``.

    The path is anti-developed into R^n with the reference frame of ``M``,
    then developed into ``Mh`` from the frame ``q0 e``; the rolling is
    ``q(t) = fhat(t) f(t)^-1``. Leaving the chart of ``Mh`` raises
    :class:`BoundaryError`.
    """
    if M.n != Mh.n or q0.n != M.n:
        raise ValueError("dimension mismatch")
    x0 = base.position(0.0)
    if np.max(np.abs(x0 - q0.x)) > 1e-9:
        raise DomainError("base curve does not start at the configuration's contact point")
    u, frame = anti_develop(M, base, steps=steps)
    fhat0 = Mh.frame_at(q0.xhat) @ q0.Q
    hat_curve, hat_frame = develop_into(Mh, u, q0.xhat, fhat0)
    times = frame.times
    F, Fh = frame.components, hat_frame.components
    Q = np.array([project_so(a @ b.T) for a, b in zip(Fh, F)])
    Q[0] = q0.Q
    return RollingCurve(
        times=times,
        x=base.sample(times),
        xhat=hat_curve.sample(times),
        Q=Q,
        M=M,
        Mh=Mh,
        base=base,
        hat_curve=hat_curve,
    )


def sampled_derivative(times, values, edge: int = 3, degree: int = 6) -> np.ndarray:
    """Derivative of sampled values at the sample times.

    Interior nodes use a cubic spline. The spline's end conditions are only
    third-order accurate, so the first and last ``edge`` nodes use a
    one-sided interpolating polynomial of ``degree`` instead.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    out = CubicSpline(times, values, axis=0).derivative()(times)
    m = degree + 1
    if len(times) < 2 * m:
        return out
    for idx in (slice(0, m), slice(len(times) - m, len(times))):
        t = times[idx]
        c = 0.5 * (t[0] + t[-1])
        s = 0.5 * (t[-1] - t[0])
        V = np.polynomial.polynomial.polyvander((t - c) / s, degree)
        coef = np.linalg.solve(V, values[idx])
        dcoef = np.polynomial.polynomial.polyder(coef, axis=0) / s
        D = np.polynomial.polynomial.polyvander((t - c) / s, degree - 1)
        d = D @ dcoef
        if idx.start == 0:
            out[:edge] = d[:edge]
        else:
            out[-edge:] = d[-edge:]
    return out


@dataclass
class VerificationReport:
    no_slip: float
    no_twist: float
    so_drift: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.no_slip <= self.tol and self.no_twist <= self.tol

    def as_dict(self):
        return {"no_slip": self.no_slip, "no_twist": self.no_twist,
                "so_drift": self.so_drift, "tol": self.tol, "passed": self.passed}


def verify_rolling(rc: RollingCurve, tol: float = 1e-5, seed: int = 0) -> VerificationReport:
    """Residuals of the no-slip and no-twist conditions along ``rc``.

    No-slip compares the spline derivative of the sampled contact curve on
    ``Mh`` with ``q`` applied to the base velocity. No-twist transports a
    random vector along both contact curves and compares after mapping by
    ``q``. Both residuals are measured in frame components, i.e. in the
    Riemannian norm.
    """
    if len(rc) == 0:
        raise ValueError("empty rolling curve")
    M, Mh = rc.M, rc.Mh
    times = rc.times
    if len(times) < 4 or np.ptp(rc.x) == 0 and np.ptp(rc.xhat) == 0:
        return VerificationReport(0.0, 0.0, rc.so_drift(), tol)
    t0 = times[0]
    rel = times - t0
    if rc.base is not None:
        xdot = np.array([rc.base.velocity(t) for t in rel])
        base = rc.base
    else:
        base = BaseCurve.from_samples(times, rc.x)
        xdot = np.array([base.velocity(t) for t in rel])
    xhat_dot = sampled_derivative(times, rc.xhat)
    E = M.jets.E(rc.x) if M.analytic else np.array([M.frame_at(x) for x in rc.x])
    Eh = Mh.jets.E(rc.xhat) if Mh.analytic else np.array([Mh.frame_at(x) for x in rc.xhat])
    w = np.linalg.solve(E, xdot[..., None])[..., 0]
    wh = np.linalg.solve(Eh, xhat_dot[..., None])[..., 0]
    slip = np.linalg.norm(wh - np.einsum("kij,kj->ki", rc.Q, w), axis=1)

    rng = np.random.default_rng(seed)
    v = rng.standard_normal(M.n)
    v /= np.linalg.norm(v)
    steps = len(times) - 1
    _, C = parallel_transport(M, base, v, steps=steps)
    hat = BaseCurve.from_samples(times, rc.xhat)
    _, Ch = parallel_transport(Mh, hat, rc.Q[0] @ v, steps=steps)
    twist = np.linalg.norm(np.einsum("kij,kj->ki", rc.Q, C) - Ch, axis=1)
    return VerificationReport(float(slip.max()), float(twist.max()), rc.so_drift(), tol)


def compose(inner: RollingCurve, outer: RollingCurve, tol: float = 1e-6) -> RollingCurve:
    """Compose a rolling of M on R^n with a rolling of R^n on Mh.

    The contact curve of ``inner`` on R^n must coincide with the base curve
    of ``outer`` on the same time grid.
    """
    if not inner.Mh.flat or not outer.M.flat:
        raise CompositionError("the intermediate manifold must be flat")
    if inner.Mh.n != outer.M.n or len(inner) != len(outer):
        raise CompositionError("intermediate dimensions or time grids differ")
    if np.max(np.abs(inner.times - outer.times)) > tol:
        raise CompositionError("time grids differ")
    gap = float(np.max(np.abs(inner.xhat - outer.x)))
    if gap > tol:
        raise CompositionError(f"intermediate curves differ by {gap:.3e}")
    Q = np.einsum("kij,kjl->kil", outer.Q, inner.Q)
    return RollingCurve(
        times=inner.times,
        x=inner.x,
        xhat=outer.xhat,
        Q=Q,
        M=inner.M,
        Mh=outer.Mh,
        base=inner.base,
        hat_curve=outer.hat_curve,
    )
