"""Vector fields on the configuration space, Lie brackets and the filtration.

Fields are represented ambiently: a configuration is the point
``p = (x, xhat, vec Q)`` of R^{2n + n^2}, and a field maps a batch of such
points of shape ``(B, D)`` to ambient velocities of the same shape. The
rolling fields extend polynomially in ``Q`` off SO(n), so brackets can be
taken by plain finite differences in the ambient space; the result does not
depend on the extension because every field is tangent to the configuration
space.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import BoundaryError, DomainError
from .geometry import ChartManifold, frame_and_connection_batch, riemann_batch
from .rolling import Configuration

SVD_TOL = 1e-6

# Bracket step per bracket depth, with two Richardson levels. Outer brackets
# differentiate fields that already carry finite-difference noise, so their
# step grows with depth to keep round-off amplification below truncation.
DEPTH_STEPS = {2: 5e-4, 3: 5e-3, 4: 1.5e-2, 5: 2.5e-2, 6: 3.5e-2}
DEPTH_RICHARDSON = 2


def dim_q(n: int) -> int:
    return 2 * n + n * (n - 1) // 2


def elementary_skew(n: int, a: int, b: int) -> np.ndarray:
    """``w_ab``: +1 at (a, b), -1 at (b, a), zero-based indices."""
    if not (0 <= a < n and 0 <= b < n):
        raise IndexError(f"indices ({a}, {b}) out of range for n={n}")
    if a == b:
        raise ValueError("w_aa vanishes; indices must differ")
    w = np.zeros((n, n))
    w[a, b], w[b, a] = 1.0, -1.0
    return w


def _split(P, n):
    X = P[:, :n]
    Xh = P[:, n:2 * n]
    Q = P[:, 2 * n:].reshape(-1, n, n)
    return X, Xh, Q


def _join(dx, dxh, V):
    return np.concatenate([dx, dxh, V.reshape(V.shape[0], -1)], axis=1)


@dataclass(frozen=True)
class TangentQ:
    """Intrinsic tangent vector: frame components ``u``, ``uh`` and the
    antisymmetric matrix ``A`` of left-invariant coefficients (``V = Q A``)."""

    u: np.ndarray
    uh: np.ndarray
    A: np.ndarray

    @property
    def n(self) -> int:
        return self.u.shape[0]

    def vector(self) -> np.ndarray:
        """Coordinates ``(u, uh, A[a, b] for a < b)`` of length ``dim Q``."""
        iu = np.triu_indices(self.n, 1)
        return np.concatenate([self.u, self.uh, self.A[iu]])

    @classmethod
    def from_vector(cls, v, n) -> "TangentQ":
        v = np.asarray(v, dtype=float)
        A = np.zeros((n, n))
        iu = np.triu_indices(n, 1)
        A[iu] = v[2 * n:]
        return cls(v[:n].copy(), v[n:2 * n].copy(), A - A.T)

    def ambient(self, config: Configuration, M: ChartManifold, Mh: ChartManifold) -> np.ndarray:
        dx = M.frame_at(config.x) @ self.u
        dxh = Mh.frame_at(config.xhat) @ self.uh
        return np.concatenate([dx, dxh, (config.Q @ self.A).ravel()])


class QVectorField:
    """A vector field on the configuration space of ``M`` rolling on ``Mh``."""

    def __init__(self, name: str, M: ChartManifold, Mh: ChartManifold,
                 fn: Callable[[np.ndarray], np.ndarray], depth: int = 1):
        self.name = name
        self.M = M
        self.Mh = Mh
        self.n = M.n
        self._fn = fn
        self.depth = depth

    def __repr__(self):
        return f"QVectorField({self.name})"

    def __call__(self, P) -> np.ndarray:
        P = np.atleast_2d(np.asarray(P, dtype=float))
        return self._fn(P)

    def at(self, config: Configuration) -> TangentQ:
        return to_tangent(self.M, self.Mh, config.point(), self(config.point()[None])[0])

    def evaluate(self, config: Configuration):
        """``(u, uh, V)`` with ``V`` the ambient fiber velocity."""
        p = config.point()
        v = self(p[None])[0]
        n = self.n
        t = to_tangent(self.M, self.Mh, p, v)
        return t.u, t.uh, v[2 * n:].reshape(n, n)


def _require_inside(M, Mh, P):
    n = M.n
    ok = M.contains_batch(P[:, :n]) & Mh.contains_batch(P[:, n:2 * n])
    if not np.all(ok):
        raise BoundaryError("finite-difference stencil leaves a chart domain", time=None)


def connection_matrices(FC, W):
    """``Gamma(w)[a, b] = sum_s w_s FC[a, s, b]`` for batched ``w``."""
    return np.einsum("ks,kasb->kab", W, FC)


def rolling_basis(M: ChartManifold, Mh: ChartManifold) -> List[QVectorField]:
    """The local orthonormal basis ``ebar_1, ..., ebar_n`` of the rolling distribution."""
    if M.n != Mh.n:
        raise ValueError("manifolds must have equal dimension")
    n = M.n

    def make(j):
        def fn(P):
            _require_inside(M, Mh, P)
            X, Xh, Q = _split(P, n)
            E, FC = frame_and_connection_batch(M, X)
            Eh, FCh = frame_and_connection_batch(Mh, Xh)
            qe = Q[:, :, j]
            A = FC[:, :, j, :] - np.einsum(
                "kia,kib,kbc->kac", Q, connection_matrices(FCh, qe), Q
            )
            return _join(E[:, :, j], np.einsum("kab,kb->ka", Eh, qe), Q @ A)

        return QVectorField(f"e{j + 1}", M, Mh, fn)

    return [make(j) for j in range(n)]


def _vertical_field(name, M, Mh, w, side):
    n = M.n

    def fn(P):
        Q = P[:, 2 * n:].reshape(-1, n, n)
        V = Q @ w if side == "left" else w @ Q
        return _join(np.zeros((len(P), n)), np.zeros((len(P), n)), V)

    return QVectorField(name, M, Mh, fn)


def w_left(M: ChartManifold, Mh: ChartManifold, a: int, b: int) -> QVectorField:
    """Left-invariant vertical field ``W^l_ab`` (``V = Q w_ab``); zero-based, ``a < b``."""
    if a >= b:
        raise ValueError("require a < b")
    return _vertical_field(f"Wl{a + 1}{b + 1}", M, Mh, elementary_skew(M.n, a, b), "left")


def w_right(M: ChartManifold, Mh: ChartManifold, a: int, b: int) -> QVectorField:
    """Right-invariant vertical field ``W^r_ab`` (``V = w_ab Q``); zero-based, ``a < b``."""
    if a >= b:
        raise ValueError("require a < b")
    return _vertical_field(f"Wr{a + 1}{b + 1}", M, Mh, elementary_skew(M.n, a, b), "right")


def to_tangent(M: ChartManifold, Mh: ChartManifold, p, v) -> TangentQ:
    """Project an ambient vector at ``p`` to :class:`TangentQ` coordinates."""
    n = M.n
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    Q = p[2 * n:].reshape(n, n)
    V = v[2 * n:].reshape(n, n)
    u = np.linalg.solve(M.frame_at(p[:n]), v[:n])
    uh = np.linalg.solve(Mh.frame_at(p[n:2 * n]), v[n:2 * n])
    B = Q.T @ V
    return TangentQ(u, uh, 0.5 * (B - B.T))


def _offsets(h, richardson):
    return [h * 2.0**m for m in range(richardson + 1)]


def _directional(F, P, D, h, richardson):
    """Richardson-extrapolated central difference of ``F`` at ``P`` along ``D``."""
    steps = _offsets(h, richardson)
    B = len(P)
    stencil = np.concatenate([P + s * D for s in steps] + [P - s * D for s in steps])
    vals = F(stencil)
    m = len(steps)
    table = [
        (vals[k * B:(k + 1) * B] - vals[(m + k) * B:(m + k + 1) * B]) / (2 * steps[k])
        for k in range(m)
    ]
    # eliminate h^2, h^4, ... (step doubles each level)
    for level in range(1, m):
        fac = 4.0**level
        table = [(fac * table[k] - table[k + 1]) / (fac - 1) for k in range(len(table) - 1)]
    return table[0]


def bracket_field(X: QVectorField, Y: QVectorField, h: float = 1e-5,
                  richardson: int = 1, name: Optional[str] = None) -> QVectorField:
    """The field ``[X, Y](p) = DY(p)[X(p)] - DX(p)[Y(p)]``."""
    if X is Y:
        return QVectorField(name or f"[{X.name},{X.name}]", X.M, X.Mh,
                            lambda P: np.zeros_like(P), depth=2 * X.depth)

    def fn(P):
        XP = X(P)
        YP = Y(P)
        return _directional(Y, P, XP, h, richardson) - _directional(X, P, YP, h, richardson)

    return QVectorField(name or f"[{X.name},{Y.name}]", X.M, X.Mh, fn, depth=X.depth + Y.depth)


def lie_bracket(X: QVectorField, Y: QVectorField, at: Configuration,
                h: float = 1e-5, richardson: int = 1) -> TangentQ:
    """Lie bracket ``[X, Y]`` at a configuration, in :class:`TangentQ` form.

    Antisymmetry is exact: the same two directional derivatives are
    computed for ``[Y, X]`` and subtracted in the opposite order.
    """
    p = at.point()
    try:
        v = bracket_field(X, Y, h, richardson)(p[None])[0]
    except BoundaryError as exc:
        raise DomainError(str(exc)) from exc
    return to_tangent(X.M, X.Mh, p, v)


# -- closed forms -----------------------------------------------------------


def _pullback(T, Q):
    """Pull a frame tensor on Mh back through ``Q`` in every slot."""
    out = T
    letters = "abcdefgh"[: T.ndim]
    for pos in range(T.ndim):
        dst = letters[:pos] + "z" + letters[pos + 1:]
        out = np.einsum(f"{letters},{letters[pos]}z->{dst}", out, Q)
    return out


def curvature_difference(M: ChartManifold, Mh: ChartManifold, at: Configuration, nabla=False):
    """``Rbar = R - q^* Rhat`` (and optionally its covariant derivative)."""
    R, nR = riemann_batch(M, at.x[None], nabla=nabla)
    Rh, nRh = riemann_batch(Mh, at.xhat[None], nabla=nabla)
    Rbar = R[0] - _pullback(Rh[0], at.Q)
    if not nabla:
        return Rbar, None
    return Rbar, nR[0] - _pullback(nRh[0], at.Q)


def _hat_lift(Mh, at, wh):
    """TangentQ of the horizontal lift of ``wh`` (Mh frame components) that
    keeps the contact point on M fixed."""
    FCh = frame_and_connection_batch(Mh, at.xhat[None])[1][0]
    G = np.einsum("s,asb->ab", wh, FCh)
    A = -at.Q.T @ G @ at.Q
    return A


def closed_form_D2(M: ChartManifold, Mh: ChartManifold, at: Configuration) -> List[TangentQ]:
    """Vertical fields ``sum Rbar(e_a, e_b, e_i, e_j) W^l_ab`` for ``i < j``."""
    n = M.n
    Rbar, _ = curvature_difference(M, Mh, at)
    zero = np.zeros(n)
    return [TangentQ(zero, zero, Rbar[:, :, i, j].copy()) for i in range(n) for j in range(i + 1, n)]


def closed_form_D3(M: ChartManifold, Mh: ChartManifold, at: Configuration) -> List[TangentQ]:
    """Generators ``[ebar_k, sum Rbar_ij W^l]`` modulo D^2.

    Vertical part: ``nabla_k Rbar(., ., e_i, e_j)``. Horizontal part: the
    lift of ``q R(e_i, e_j) e_k - Rhat(q e_i, q e_j) q e_k`` to the Mh side.
    """
    n = M.n
    Rbar, nRbar = curvature_difference(M, Mh, at, nabla=True)
    out = []
    zero = np.zeros(n)
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(n):
                wh = at.Q @ Rbar[i, j, k, :]
                A = nRbar[:, :, i, j, k] + _hat_lift(Mh, at, wh)
                out.append(TangentQ(zero, wh, A))
    return out


# -- filtration ---------------------------------------------------------------


def numerical_rank(Mat, svd_tol=SVD_TOL):
    """``(rank, singular values)`` with the relative threshold ``svd_tol``."""
    Mat = np.atleast_2d(Mat)
    if Mat.size == 0:
        return 0, np.zeros(0)
    s = np.linalg.svd(Mat, compute_uv=False)
    if s[0] == 0:
        return 0, s
    return int(np.sum(s > svd_tol * s[0])), s


def principal_angles(A, B) -> np.ndarray:
    """Principal angles between the column spans of ``A`` and ``B`` (radians)."""
    return scipy.linalg.subspace_angles(np.atleast_2d(A), np.atleast_2d(B))


def orthonormal_span(Mat, svd_tol=SVD_TOL) -> np.ndarray:
    """Orthonormal basis (columns) of the numerical row span of ``Mat``."""
    Mat = np.atleast_2d(Mat)
    if Mat.size == 0:
        return np.zeros((0, 0))
    U, s, Vt = np.linalg.svd(Mat, full_matrices=False)
    r = int(np.sum(s > svd_tol * s[0])) if s[0] > 0 else 0
    return Vt[:r].T


@dataclass
class Filtration:
    """Ranks of ``D^1 <= D^2 <= ...`` at one configuration."""

    config: Configuration
    n: int
    ranks: List[int]
    spectra: List[np.ndarray]
    bases: List[np.ndarray]
    provenance: List[List[str]]
    dim: int
    bracket_generating: bool
    stabilized: bool
    step: Optional[int]

    @property
    def orbit_dim_lower_bound(self) -> int:
        return self.ranks[-1]

    def as_dict(self) -> dict:
        return {
            "ranks": list(self.ranks),
            "step": self.step,
            "dim_Q": self.dim,
            "bracket_generating": self.bracket_generating,
            "stabilized": self.stabilized,
            "spectra": [s.tolist() for s in self.spectra],
            "provenance": self.provenance,
        }


def filtration(M: ChartManifold, Mh: ChartManifold, at: Configuration, k_max: int = 4,
               svd_tol: float = SVD_TOL, h_scale: float = 1.0) -> Filtration:
    """Rank filtration of the rolling distribution at ``at``.

    Level ``k`` adds ``[ebar_i, G]`` for every generator ``G`` that was new at
    level ``k - 1``; candidates that do not raise the rank at this point are
    dropped (pivoted QR), which is sound at regular points of the filtration.
    Stops at full rank, at the first level that adds nothing, or at ``k_max``.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    n = M.n
    D = dim_q(n)
    p = at.point()
    basis = rolling_basis(M, Mh)

    def vectors(fields):
        if not fields:
            return np.zeros((0, D))
        try:
            return np.array([to_tangent(M, Mh, p, f(p[None])[0]).vector() for f in fields])
        except BoundaryError as exc:
            raise DomainError(
                f"bracket stencil left the chart domain at {at.x}, {at.xhat}: {exc}"
            ) from exc

    rows = vectors(basis)
    rank, s = numerical_rank(rows, svd_tol)
    ranks, spectra, bases, prov = [rank], [s], [rows], [[f.name for f in basis]]
    new = list(basis)
    step = 1 if rank == D else None
    stabilized = False
    k = 1
    while rank < D and k < k_max:
        k += 1
        h = DEPTH_STEPS.get(k, DEPTH_STEPS[max(DEPTH_STEPS)]) * h_scale
        cands = [
            bracket_field(e, g, h=h, richardson=DEPTH_RICHARDSON)
            for e in basis for g in new if e is not g
        ]
        crow = vectors(cands)
        allrows = np.vstack([rows, crow]) if len(crow) else rows
        new_rank, s = numerical_rank(allrows, svd_tol)
        kept = []
        if new_rank > rank and len(crow):
            Qb = orthonormal_span(rows, svd_tol)
            resid = crow - (crow @ Qb) @ Qb.T if Qb.size else crow
            _, Rr, piv = scipy.linalg.qr(resid.T, mode="economic", pivoting=True)
            kept = [int(i) for i in piv[: new_rank - rank]]
        new = [cands[i] for i in kept]
        rows = np.vstack([rows, crow[kept]]) if kept else rows
        ranks.append(new_rank)
        spectra.append(s)
        bases.append(crow[kept] if kept else np.zeros((0, D)))
        prov.append([cands[i].name for i in kept])
        if new_rank == rank:
            stabilized = True
            step = k - 1
            break
        rank = new_rank
        if rank == D:
            step = k
    return Filtration(
        config=at,
        n=n,
        ranks=ranks,
        spectra=spectra,
        bases=bases,
        provenance=prov,
        dim=D,
        bracket_generating=ranks[-1] == D,
        stabilized=stabilized,
        step=step,
    )


def span_rows(filt: Filtration, level: int) -> np.ndarray:
    """Rows spanning ``D^level`` at the filtration's configuration."""
    return np.vstack(filt.bases[:level])
