"""Chart-based Riemannian manifolds and their curvature.

Every tensor returned by the public functions is expressed in the
orthonormal frame of the manifold, with index order matching the argument
order of the tensor (``R[a, b, c, d] = R(e_a, e_b, e_c, e_d)``). The curvature
convention is

    R(Y1, Y2) = nabla_1 nabla_2 - nabla_2 nabla_1 - nabla_[Y1, Y2],
    R(Y1, Y2, Y3, Y4) = <R(Y1, Y2) Y3, Y4>,

so the unit sphere has ``R(e1, e2, e2, e1) = +1``.

Internally all derivative arrays carry the differentiation indices first:
``dg[k, i, j] = d_k g_ij`` and ``d2g[a, b, i, j] = d_a d_b g_ij``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import BoundaryError, DegeneracyError, DomainError, RankError

ArrayFn = Callable[[np.ndarray], np.ndarray]

# Step multipliers for nested finite differences, innermost level first.
# Deeper levels amplify round-off by 1/h, so they take wider steps.
FD_LEVEL_SCALE = (1.0, 10.0, 100.0)


@dataclass(frozen=True)
class Jets:
    """Analytic, batch-vectorized evaluators for a chart.

    Every callable takes an array of points with shape ``(B, n)`` and returns
    the value with a leading batch axis.
    """

    g: ArrayFn
    dg: ArrayFn
    d2g: ArrayFn
    d3g: ArrayFn
    E: ArrayFn
    dE: ArrayFn
    first: Optional[Callable] = None  # (g, dg, E, dE) in one call


def _everywhere(x):
    return True


@dataclass(frozen=True, eq=False)
class ChartManifold:
    """An oriented Riemannian manifold covered by a single chart.

    At least one of ``metric`` and ``frame`` must be given. If only the frame
    is given the metric is ``E^-T E^-1``; if only the metric is given the
    frame comes from Gram-Schmidt of the coordinate basis in column order.
    """

    name: str
    n: int
    metric: Optional[ArrayFn] = None
    frame: Optional[ArrayFn] = None
    domain: Callable[[np.ndarray], bool] = _everywhere
    derivative_mode: str = "fd"
    h: float = 1e-4
    jets: Optional[Jets] = None
    params: dict = field(default_factory=dict)
    complete: bool = False
    flat: bool = False
    locally_symmetric: bool = False
    sample_box: Optional[tuple] = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("manifold dimension must be at least 2")
        if self.metric is None and self.frame is None and self.jets is None:
            raise ValueError("need a metric, a frame or analytic jets")
        if self.derivative_mode not in ("analytic", "fd"):
            raise ValueError(f"unknown derivative mode {self.derivative_mode!r}")
        if self.derivative_mode == "analytic" and self.jets is None:
            raise ValueError("analytic mode requires jets")

    # -- evaluation helpers -------------------------------------------------

    @property
    def analytic(self) -> bool:
        return self.derivative_mode == "analytic"

    def with_mode(self, mode: str, h: Optional[float] = None) -> "ChartManifold":
        kw = {"derivative_mode": mode}
        if h is not None:
            kw["h"] = h
        return dataclasses.replace(self, **kw)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(np.isfinite(x))) and bool(self.domain(x))

    def contains_batch(self, X) -> np.ndarray:
        """Vectorized :meth:`contains` for points stacked along axis 0.

        Domain predicates are written with elementwise operators, so they
        accept the transposed batch directly.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        finite = np.all(np.isfinite(X), axis=1)
        inside = np.broadcast_to(np.asarray(self.domain(X.T), dtype=bool), finite.shape)
        return finite & inside

    def check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"expected a point of shape ({self.n},), got {x.shape}")
        if not self.contains(x):
            raise DomainError(f"point {x} is outside the chart domain of {self.name}")
        return x

    def metric_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.metric is not None:
            return np.asarray(self.metric(x), dtype=float)
        if self.frame is not None:
            Einv = np.linalg.inv(np.asarray(self.frame(x), dtype=float))
            return Einv.T @ Einv
        return self.jets.g(x[None])[0]

    def frame_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.jets is not None:
            return self.jets.E(x[None])[0]
        if self.frame is not None:
            return np.asarray(self.frame(x), dtype=float)
        return gram_schmidt_frame(self.metric_at(x))

    def sample(self, rng: np.random.Generator, size: int = 1) -> np.ndarray:
        """Uniform samples from the catalog sampling box, shape ``(size, n)``."""
        if self.sample_box is None:
            lo, hi = -np.ones(self.n), np.ones(self.n)
        else:
            lo, hi = (np.asarray(b, dtype=float) for b in self.sample_box)
        out = []
        while len(out) < size:
            x = rng.uniform(lo, hi)
            if self.contains(x):
                out.append(x)
        return np.array(out)


def gram_schmidt_frame(g: np.ndarray) -> np.ndarray:
    """Orthonormalize the coordinate basis in the metric ``g``, column order.

    With ``g = L L^T`` the result is ``L^-T``, which is upper triangular, so
    the first frame vector is parallel to the first coordinate direction.
    """
    try:
        L = np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise DegeneracyError("metric is not positive definite") from exc
    return np.linalg.inv(L).T


# -- finite differences -----------------------------------------------------


def _fd_gradient(f, x, h, M):
    """4th-order central difference; derivative index first."""
    n = x.size
    step = h * max(1.0, float(np.max(np.abs(x))))
    cols = []
    for k in range(n):
        dx = np.zeros(n)
        dx[k] = step
        pts = (x + 2 * dx, x + dx, x - dx, x - 2 * dx)
        for p in pts:
            if not M.contains(p):
                raise BoundaryError(
                    f"finite-difference stencil at {x} leaves the domain of {M.name}"
                )
        fp2, fp1, fm1, fm2 = (f(p) for p in pts)
        cols.append((-fp2 + 8 * fp1 - 8 * fm1 + fm2) / (12 * step))
    return np.stack(cols)


def _fd_metric_derivs(M: ChartManifold, x, order):
    out = [M.metric_at(x)]
    f = M.metric_at
    for level in range(order):
        f = _nest(f, M.h * FD_LEVEL_SCALE[level], M)
        out.append(f(x))
    return out


def _nest(f, h, M):
    return lambda y: _fd_gradient(f, y, h, M)


def metric_derivs(M: ChartManifold, X: np.ndarray, order: int) -> list:
    """``[g, dg, ..., d^order g]`` at a batch of points ``X`` of shape (B, n)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if M.analytic:
        fns = (M.jets.g, M.jets.dg, M.jets.d2g, M.jets.d3g)
        return [fns[k](X) for k in range(order + 1)]
    per_point = [_fd_metric_derivs(M, x, order) for x in X]
    return [np.stack([p[k] for p in per_point]) for k in range(order + 1)]


def frame_derivs(M: ChartManifold, X: np.ndarray):
    """Frame ``E[:, i, j]`` (column j is e_j) and ``dE[:, k, i, j] = d_k E_ij``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if M.analytic:
        return M.jets.E(X), M.jets.dE(X)
    E = np.stack([M.frame_at(x) for x in X])
    dE = np.stack([_fd_gradient(M.frame_at, x, M.h, M) for x in X])
    return E, dE


# -- batched tensor algebra ------------------------------------------------


def _christoffel(g, dg):
    Ginv = np.linalg.inv(g)
    S = (
        np.einsum("...ijl->...lij", dg)
        + np.einsum("...jil->...lij", dg)
        - dg
    )
    return 0.5 * np.einsum("...kl,...lij->...kij", Ginv, S), Ginv, S


def _christoffel_d1(g, dg, d2g):
    Gam, Ginv, S = _christoffel(g, dg)
    dGinv = -np.einsum("...kp,...mpq,...ql->...mkl", Ginv, dg, Ginv)
    dS = (
        np.einsum("...mijl->...mlij", d2g)
        + np.einsum("...mjil->...mlij", d2g)
        - d2g
    )
    dGam = 0.5 * (
        np.einsum("...mkl,...lij->...mkij", dGinv, S)
        + np.einsum("...kl,...mlij->...mkij", Ginv, dS)
    )
    return Gam, dGam, (Ginv, S, dGinv, dS)


def _riemann_coords(Gam, dGam, g):
    # Rup[l, i, j, k]: R(d_i, d_j) d_k = Rup^l_ijk d_l
    Rup = (
        np.einsum("...iljk->...lijk", dGam)
        - np.einsum("...jlik->...lijk", dGam)
        + np.einsum("...lim,...mjk->...lijk", Gam, Gam)
        - np.einsum("...ljm,...mik->...lijk", Gam, Gam)
    )
    Rlow = np.einsum("...pijk,...pl->...ijkl", Rup, g)
    return Rup, Rlow


def _to_frame(T, E):
    """Contract every index of a covariant coordinate tensor with the frame."""
    out = T
    k = T.ndim - E.ndim + 2  # number of tensor indices
    letters = "abcdefgh"[:k]
    for pos in range(k):
        src = letters
        dst = letters[:pos] + "z" + letters[pos + 1:]
        out = np.einsum(f"...{src},...{letters[pos]}z->...{dst}", out, E)
    return out


def _check_points(M, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    for x in X:
        M.check(x)
    return X


def _check_metric(g):
    eig = np.linalg.eigvalsh(g)
    if np.any(~np.isfinite(eig)) or np.any(eig <= 0):
        raise DegeneracyError("metric is singular or not positive definite")


def christoffel_batch(M: ChartManifold, X) -> np.ndarray:
    g, dg = metric_derivs(M, X, 1)
    _check_metric(g)
    return _christoffel(g, dg)[0]


def frame_christoffel_batch(M: ChartManifold, X) -> np.ndarray:
    """``FC[:, a, j, b] = <e_a, nabla_{e_j} e_b>`` at a batch of points."""
    return frame_and_connection_batch(M, X)[1]


def frame_and_connection_batch(M: ChartManifold, X):
    """Frames ``E`` and frame Christoffels ``FC`` at a batch of points."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if M.analytic and M.jets.first is not None:
        g, dg, E, dE = M.jets.first(X)
    else:
        g, dg = metric_derivs(M, X, 1)
        E, dE = frame_derivs(M, X)
    Gam = _christoffel(g, dg)[0]
    # coordinate components of nabla_{e_j} e_b
    dirderiv = np.einsum("...kj,...kib->...ijb", E, dE)
    conn = np.einsum("...mkl,...kj,...lb->...mjb", Gam, E, E)
    return E, np.einsum("...ma,...mp,...pjb->...ajb", E, g, dirderiv + conn)


# -- public operations -----------------------------------------------------


def christoffel_coords(M: ChartManifold, x) -> np.ndarray:
    """Levi-Civita coefficients ``G[k, i, j] = Gamma^k_ij`` in chart coordinates."""
    x = M.check(x)
    return christoffel_batch(M, x[None])[0]


def frame_christoffel(M: ChartManifold, x) -> np.ndarray:
    """Connection coefficients of the frame, ``G[a, j, b] = <e_a, nabla_{e_j} e_b>``.

    Antisymmetric in ``(a, b)`` because the frame is orthonormal.
    """
    x = M.check(x)
    return frame_christoffel_batch(M, x[None])[0]


@dataclass
class CurvatureData:
    """Riemann tensor (and optionally its covariant derivative) in the frame."""

    R: np.ndarray
    nablaR: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.R.shape[0]

    def sectional(self, u, v) -> float:
        return sectional_from_tensor(self.R, u, v)

    def symmetry_residual(self) -> float:
        R = self.R
        return float(
            max(
                np.max(np.abs(R + R.transpose(1, 0, 2, 3))),
                np.max(np.abs(R + R.transpose(0, 1, 3, 2))),
                np.max(np.abs(R - R.transpose(2, 3, 0, 1))),
            )
        )

    def bianchi_residual(self) -> float:
        R = self.R
        cyc = R + np.einsum("bcad->abcd", R) + np.einsum("cabd->abcd", R)
        return float(np.max(np.abs(cyc)))

    def second_bianchi_residual(self) -> float:
        """Cyclic sum over (a, b, k) of nablaR[a, b, c, d, k]."""
        if self.nablaR is None:
            raise ValueError("nablaR was not computed")
        T = self.nablaR
        cyc = T + np.einsum("bkcda->abcdk", T) + np.einsum("kacdb->abcdk", T)
        return float(np.max(np.abs(cyc)))


def riemann_batch(M: ChartManifold, X, nabla: bool = False):
    """Frame Riemann tensors at a batch of points; optionally also nabla R."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    derivs = metric_derivs(M, X, 3 if nabla else 2)
    g, dg, d2g = derivs[:3]
    _check_metric(g)
    Gam, dGam, (Ginv, S, dGinv, dS) = _christoffel_d1(g, dg, d2g)
    Rup, Rlow = _riemann_coords(Gam, dGam, g)
    E = frame_derivs(M, X)[0] if M.analytic else np.stack([M.frame_at(x) for x in X])
    R = _to_frame(Rlow, E)
    if not nabla:
        return R, None
    d3g = derivs[3]
    d2Ginv = np.einsum(
        "...kp,...apq,...qr,...mrs,...sl->...amkl", Ginv, dg, Ginv, dg, Ginv
    )
    d2Ginv = d2Ginv + np.einsum("...amkl->...makl", d2Ginv)
    d2Ginv = d2Ginv - np.einsum("...kp,...ampq,...ql->...amkl", Ginv, d2g, Ginv)
    d2S = (
        np.einsum("...amijl->...amlij", d3g)
        + np.einsum("...amjil->...amlij", d3g)
        - d3g
    )
    d2Gam = 0.5 * (
        np.einsum("...amkl,...lij->...amkij", d2Ginv, S)
        + np.einsum("...mkl,...alij->...amkij", dGinv, dS)
        + np.einsum("...akl,...mlij->...amkij", dGinv, dS)
        + np.einsum("...kl,...amlij->...amkij", Ginv, d2S)
    )
    dRup = (
        np.einsum("...ailjk->...alijk", d2Gam)
        - np.einsum("...ajlik->...alijk", d2Gam)
        + np.einsum("...alim,...mjk->...alijk", dGam, Gam)
        + np.einsum("...lim,...amjk->...alijk", Gam, dGam)
        - np.einsum("...aljm,...mik->...alijk", dGam, Gam)
        - np.einsum("...ljm,...amik->...alijk", Gam, dGam)
    )
    dRlow = np.einsum("...apijk,...pl->...aijkl", dRup, g) + np.einsum(
        "...pijk,...apl->...aijkl", Rup, dg
    )
    nab = (
        np.einsum("...aijkl->...ijkla", dRlow)
        - np.einsum("...pai,...pjkl->...ijkla", Gam, Rlow)
        - np.einsum("...paj,...ipkl->...ijkla", Gam, Rlow)
        - np.einsum("...pak,...ijpl->...ijkla", Gam, Rlow)
        - np.einsum("...pal,...ijkp->...ijkla", Gam, Rlow)
    )
    return R, _to_frame(nab, E)


def riemann(M: ChartManifold, x, nabla: bool = False) -> CurvatureData:
    """Riemann tensor of ``M`` at ``x`` in the orthonormal frame."""
    x = M.check(x)
    R, nR = riemann_batch(M, x[None], nabla=nabla)
    return CurvatureData(R=R[0], nablaR=None if nR is None else nR[0])


def nabla_R(M: ChartManifold, x) -> np.ndarray:
    """Covariant derivative ``nablaR[a, b, c, d, k] = (nabla_{e_k} R)(e_a, e_b, e_c, e_d)``."""
    return riemann(M, x, nabla=True).nablaR


@dataclass
class IteratedCurvature:
    """``R^l`` as a dense array with ``2l + 2`` frame indices."""

    l: int
    tensor: np.ndarray


def r_power_from_tensor(R: np.ndarray, l: int) -> np.ndarray:
    if l < 1:
        raise ValueError("order l must be >= 1")
    T = R
    for _ in range(l - 1):
        # R^l(a, b, i1, ...) = sum_s R(a, b, i1, e_s) R^{l-1}(e_s, ...)
        T = np.tensordot(R, T, axes=([3], [0]))
    return T


def r_power(M: ChartManifold, x, l: int) -> IteratedCurvature:
    """Iterated curvature tensor of order ``l`` (``R^1 = R``)."""
    R = riemann(M, x).R
    return IteratedCurvature(l=l, tensor=r_power_from_tensor(R, l))


def sectional_from_tensor(R: np.ndarray, u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    area2 = (u @ u) * (v @ v) - (u @ v) ** 2
    if area2 <= 1e-14 * max((u @ u) * (v @ v), 1e-300):
        raise RankError("plane vectors are linearly dependent")
    return float(np.einsum("abcd,a,b,c,d->", R, u, v, v, u) / area2)


def sectional(M: ChartManifold, x, plane: Sequence) -> float:
    """Sectional curvature of the plane spanned by two frame-coordinate vectors."""
    u, v = plane
    return sectional_from_tensor(riemann(M, x).R, u, v)


def gaussian_curvature(M: ChartManifold, x) -> float:
    if M.n != 2:
        raise ValueError("Gaussian curvature needs a surface")
    return float(riemann(M, x).R[0, 1, 1, 0])


def is_locally_symmetric(M: ChartManifold, points, tol: float = 1e-6):
    """Return ``(max ||nabla R|| <= tol, max ||nabla R||)`` over sample points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise ValueError("need at least one sample point")
    pts = _check_points(M, pts)
    _, nab = riemann_batch(M, pts, nabla=True)
    worst = float(np.max(np.sqrt(np.sum(nab**2, axis=tuple(range(1, nab.ndim))))))
    return worst <= tol, worst


def gram_residual(M: ChartManifold, x) -> float:
    E = M.frame_at(x)
    g = M.metric_at(x)
    return float(np.max(np.abs(E.T @ g @ E - np.eye(M.n))))
