"""Curvature-based sufficient conditions for controllability of rolling.

Every test returns a :class:`TestOutcome` carrying its numeric witness;
:func:`analyze` combines them with the bracket filtration into a
:class:`ControllabilityReport`. Sufficient conditions are combined by OR:
an inconclusive test never overrides a generating verdict from another.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import BoundaryError, DomainError
from .geometry import (
    ChartManifold,
    is_locally_symmetric,
    r_power_from_tensor,
    riemann_batch,
    sectional_from_tensor,
)
from .distribution import Filtration, curvature_difference, dim_q, filtration
from .rolling import Configuration, haar_rotation, roll_along
from .transport import BaseCurve

DET_TOL = 1e-8
RANK_TOL = 1e-6
ABS_TOL = 1e-9  # below this every curvature quantity counts as zero

ALL_TESTS = (
    "curvature_gap",
    "sectional_gap",
    "xi_rank_bound",
    "flat_partner",
    "locally_symmetric",
    "two_dim",
    "promote_complete",
)


def pair_indices(n: int):
    return list(combinations(range(n), 2))


def _rank(s: np.ndarray, rel_tol: float) -> int:
    if s.size == 0 or s[0] <= ABS_TOL:
        return 0
    return int(np.sum(s > max(rel_tol * s[0], ABS_TOL)))


@dataclass
class CurvatureGap:
    """The ``N x N`` matrix of ``Rbar`` over ordered index pairs.

    Entry ``[(a, b), (i, j)]`` is ``Rbar(e_a, e_b, e_j, e_i)``, so the diagonal
    of a plane holds its sectional-curvature gap.
    """

    matrix: np.ndarray
    det_tol: float = DET_TOL
    rank_tol: float = RANK_TOL

    @property
    def N(self) -> int:
        return self.matrix.shape[0]

    @property
    def determinant(self) -> float:
        return float(np.linalg.det(self.matrix))

    @property
    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.matrix, compute_uv=False)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.T))

    @property
    def rank(self) -> int:
        return _rank(self.singular_values, self.rank_tol)

    @property
    def nonzero(self) -> bool:
        smax = self.singular_values[0]
        if smax <= ABS_TOL:
            return False
        return abs(self.determinant) > self.det_tol * smax**self.N

    def symmetry_residual(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.T)))

    def definiteness(self) -> str:
        ev = self.eigenvalues
        scale = max(np.max(np.abs(ev)), ABS_TOL)
        tol = max(self.rank_tol * scale, ABS_TOL)
        if np.all(ev > tol):
            return "positive"
        if np.all(ev < -tol):
            return "negative"
        if np.all(np.abs(ev) <= tol):
            return "zero"
        if np.all(ev > -tol):
            return "positive-semidefinite"
        if np.all(ev < tol):
            return "negative-semidefinite"
        return "indefinite"

    def as_dict(self) -> dict:
        return {
            "matrix": self.matrix.tolist(),
            "determinant": self.determinant,
            "singular_values": self.singular_values.tolist(),
            "rank": self.rank,
            "nonzero": self.nonzero,
        }


def gap_matrix_from_tensor(Rbar: np.ndarray) -> np.ndarray:
    pairs = pair_indices(Rbar.shape[0])
    return np.array([[Rbar[a, b, j, i] for (i, j) in pairs] for (a, b) in pairs])


def curvature_gap(M: ChartManifold, Mh: ChartManifold, at: Configuration,
                  det_tol: float = DET_TOL, rank_tol: float = RANK_TOL) -> CurvatureGap:
    Rbar, _ = curvature_difference(M, Mh, at)
    return CurvatureGap(gap_matrix_from_tensor(Rbar), det_tol, rank_tol)


@dataclass
class TestOutcome:
    name: str
    status: str  # pass | fail | inconclusive | not-applicable
    evidence: dict = field(default_factory=dict)
    condition: str = ""

    def as_dict(self) -> dict:
        return {"name": self.name, "status": self.status,
                "condition": self.condition, "evidence": _jsonable(self.evidence)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


# -- individual tests ---------------------------------------------------------


def curvature_gap_test(M, Mh, at, det_tol=DET_TOL, rank_tol=RANK_TOL) -> TestOutcome:
    gap = curvature_gap(M, Mh, at, det_tol, rank_tol)
    return TestOutcome(
        "curvature_gap",
        "pass" if gap.nonzero else "inconclusive",
        gap.as_dict(),
        "curvature-gap determinant nonzero implies bracket generating of step 3",
    )


@dataclass
class SectionalGap:
    interval: tuple
    definiteness: str
    planes: int

    @property
    def passed(self) -> bool:
        return self.definiteness in ("positive", "negative")


def sectional_gap(M: ChartManifold, Mh: ChartManifold, at: Configuration,
                  n_random: int = 64, seed: int = 0) -> SectionalGap:
    """Interval of sectional-curvature gaps over sampled planes.

    All coordinate planes are included, plus ``n_random`` seeded random
    planes. The interval is evidence only; pass/fail comes from the
    definiteness of the curvature-gap matrix.
    """
    n = M.n
    Rbar, _ = curvature_difference(M, Mh, at)
    eye = np.eye(n)
    planes = [(eye[i], eye[j]) for i, j in pair_indices(n)]
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        u, v = rng.standard_normal((2, n))
        planes.append((u, v))
    vals = [sectional_from_tensor(Rbar, u, v) for u, v in planes]
    gap = CurvatureGap(gap_matrix_from_tensor(Rbar))
    return SectionalGap((float(min(vals)), float(max(vals))), gap.definiteness(), len(planes))


def sectional_gap_test(M, Mh, at, n_random=64, seed=0) -> TestOutcome:
    sg = sectional_gap(M, Mh, at, n_random, seed)
    return TestOutcome(
        "sectional_gap",
        "pass" if sg.passed else "inconclusive",
        {"interval": list(sg.interval), "definiteness": sg.definiteness, "planes": sg.planes},
        "sectional-curvature gap of one sign on every plane implies controllability",
    )


@dataclass
class XiBound:
    n: int
    rank_gap: int
    rank_xi: int

    @property
    def bound(self) -> int:
        return self.n + self.rank_gap + self.rank_xi


def xi_rank_bound(M: ChartManifold, Mh: ChartManifold, at: Configuration,
                  rank_tol: float = RANK_TOL) -> XiBound:
    """Lower bound ``n + rank(gap) + rank(Xi)`` for ``dim D^3``.

    ``Xi`` sends ``(e_k, e_i ^ e_j)`` to the covector ``Rbar(e_i, e_j, e_k, .)``.
    """
    n = M.n
    Rbar, _ = curvature_difference(M, Mh, at)
    gap = CurvatureGap(gap_matrix_from_tensor(Rbar), rank_tol=rank_tol)
    xi = Rbar.reshape(n**3, n)
    s = np.linalg.svd(xi, compute_uv=False)
    return XiBound(n, gap.rank, _rank(s, rank_tol))


def _symmetric(M, x, tol=1e-6):
    try:
        return is_locally_symmetric(M, [x], tol)
    except DomainError:
        return False, float("nan")


def flat_partner_test(M, Mh, at, det_tol=DET_TOL) -> TestOutcome:
    """With a flat partner and locally symmetric ``M``, nonzero gap is an iff."""
    sym, worst = _symmetric(M, at.x)
    Rh, _ = riemann_batch(Mh, at.xhat[None])
    flat = bool(Mh.flat or np.max(np.abs(Rh)) < 1e-10)
    gap = curvature_gap(M, Mh, at, det_tol)
    evidence = {"determinant": gap.determinant, "rank": gap.rank,
                "max_nabla_R": worst, "partner_flat": flat}
    cond = "flat partner and locally symmetric M: generating iff the curvature map is an isomorphism"
    if not (sym and flat):
        evidence["reason"] = "M is not locally symmetric" if flat else "partner is not flat"
        return TestOutcome("flat_partner", "inconclusive", evidence, cond)
    return TestOutcome("flat_partner", "pass" if gap.nonzero else "fail", evidence, cond)


def vertical_span_rank(Rbar: np.ndarray, l_max: int = 3, rank_tol: float = RANK_TOL):
    """Ranks of the accumulated vertical spans of ``Rbar^l`` for ``l = 1..l_max``."""
    n = Rbar.shape[0]
    iu = np.triu_indices(n, 1)
    rows = []
    ranks = []
    for l in range(1, l_max + 1):
        T = r_power_from_tensor(Rbar, l)
        rows.append(T.reshape(n, n, -1)[iu[0], iu[1], :].T)
        s = np.linalg.svd(np.vstack(rows), compute_uv=False)
        ranks.append(_rank(s, rank_tol))
    return ranks


def locally_symmetric_test(M, Mh, at, l_max: int = 3) -> TestOutcome:
    sym_m, wm = _symmetric(M, at.x)
    sym_h, wh = _symmetric(Mh, at.xhat)
    Rbar, _ = curvature_difference(M, Mh, at)
    ranks = vertical_span_rank(Rbar, l_max)
    N = M.n * (M.n - 1) // 2
    evidence = {"vertical_ranks": ranks, "N": N, "max_nabla_R": wm, "max_nabla_Rhat": wh}
    cond = "both locally symmetric: generating iff iterated curvature spans the fiber"
    if not (sym_m and sym_h):
        evidence["reason"] = "a manifold is not locally symmetric"
        return TestOutcome("locally_symmetric", "inconclusive", evidence, cond)
    return TestOutcome("locally_symmetric", "pass" if ranks[-1] == N else "fail", evidence, cond)


def _kappa_bar_along(rc):
    R, _ = riemann_batch(rc.M, rc.x)
    Rh, _ = riemann_batch(rc.Mh, rc.xhat)
    return R[:, 0, 1, 1, 0] - Rh[:, 0, 1, 1, 0]


def two_dim_test(M, Mh, at, sweeps: int = 8, seed: int = 0, steps: int = 200,
                 tol: float = 1e-8) -> TestOutcome:
    """Surface case: nonzero gap gives a 5-dimensional orbit.

    A zero value at one configuration is inconclusive, so rollings along
    chart-straight segments toward random points of ``M`` are sampled to
    look for a reachable configuration with nonzero gap.
    """
    cond = "surfaces: orbit dimension 5 iff the curvature gap is not identically zero on the orbit"
    if M.n != 2:
        return TestOutcome("two_dim", "not-applicable", {"n": M.n}, cond)
    Rbar, _ = curvature_difference(M, Mh, at)
    kbar = float(Rbar[0, 1, 1, 0])
    evidence = {"kappa_bar": kbar}
    if abs(kbar) > tol:
        evidence["orbit_dim"] = 5
        return TestOutcome("two_dim", "pass", evidence, cond)
    rng = np.random.default_rng(seed)
    targets = M.sample(rng, sweeps)
    best = 0.0
    tried = 0
    for y in targets:
        x0 = at.x.copy()
        d = y - x0
        base = BaseCurve(lambda t, x0=x0, d=d: x0 + t * d, lambda t, d=d: d.copy(), 1.0)
        try:
            rc = roll_along(M, Mh, base, at, steps=steps)
        except DomainError:
            continue
        tried += 1
        k = _kappa_bar_along(rc)
        best = max(best, float(np.max(np.abs(k))))
    evidence.update({"sweeps": tried, "max_reached_kappa_bar": best})
    if best > tol:
        evidence["orbit_dim"] = 5
        return TestOutcome("two_dim", "pass", evidence, cond)
    evidence["orbit_dim"] = 2
    evidence["reason"] = "gap vanished on every sampled rolling; evidence only"
    return TestOutcome("two_dim", "inconclusive", evidence, cond)


def promote_complete(M, Mh, m, samples: int = 50, seed: int = 0, k_max: int = 4,
                     det_tol=DET_TOL, svd_tol=RANK_TOL) -> TestOutcome:
    """Sampled evidence that every configuration over ``m`` is generating.

    With a complete partner this promotes local to complete controllability.
    The fiber is sampled with random partner points and Haar rotations.
    """
    cond = "complete partner and a base point whose whole fiber is generating"
    if not Mh.complete:
        return TestOutcome("promote_complete", "not-applicable",
                           {"reason": "partner not flagged complete"}, cond)
    rng = np.random.default_rng(seed)
    m = M.check(m)
    generating = 0
    tested = 0
    for _ in range(samples):
        q = Configuration(m, Mh.sample(rng)[0], haar_rotation(M.n, rng), M, Mh)
        tested += 1
        if curvature_gap(M, Mh, q, det_tol).nonzero:
            generating += 1
            continue
        try:
            f = filtration(M, Mh, q, k_max=k_max, svd_tol=svd_tol)
        except DomainError:
            break
        if f.bracket_generating:
            generating += 1
        else:
            break
    evidence = {"fiber_samples": tested, "generating": generating, "base_point": m.tolist()}
    if generating == samples:
        evidence["claim"] = f"completely controllable (sampled evidence, {samples} fiber points)"
        return TestOutcome("promote_complete", "pass", evidence, cond)
    return TestOutcome("promote_complete", "fail", evidence, cond)


# -- report -------------------------------------------------------------------


def verdict_from_filtration(f: Filtration) -> str:
    if f.bracket_generating:
        return "bracket-generating-step-3" if f.step == 3 else f"bracket-generating-step-{f.step}"
    if f.ranks[-1] == f.n and f.stabilized:
        return "involutive-evidence"
    return "rank-deficient"


@dataclass
class ControllabilityReport:
    config: Configuration
    pair: tuple
    filtration: Filtration
    verdict: str
    tests: List[TestOutcome]
    promoted: bool
    notes: List[str] = field(default_factory=list)

    def test(self, name: str) -> Optional[TestOutcome]:
        for t in self.tests:
            if t.name == name:
                return t
        return None

    def as_dict(self) -> dict:
        return _jsonable({
            "pair": list(self.pair),
            "configuration": {
                "x": self.config.x,
                "xhat": self.config.xhat,
                "Q": self.config.Q,
            },
            "verdict": self.verdict,
            "promoted_complete": self.promoted,
            "filtration": self.filtration.as_dict(),
            "tests": [t.as_dict() for t in self.tests],
            "notes": self.notes,
        })


def analyze(M: ChartManifold, Mh: ChartManifold, at: Configuration,
            tests: Sequence[str] = ALL_TESTS, k_max: int = 4,
            svd_tol: float = RANK_TOL, det_tol: float = DET_TOL, seed: int = 0,
            fiber_samples: int = 50) -> ControllabilityReport:
    """Filtration plus the selected sufficient-condition tests at ``at``."""
    unknown = set(tests) - set(ALL_TESTS)
    if unknown:
        raise ValueError(f"unknown tests: {sorted(unknown)}")
    f = filtration(M, Mh, at, k_max=k_max, svd_tol=svd_tol)
    verdict = verdict_from_filtration(f)
    outcomes: List[TestOutcome] = []
    notes: List[str] = []
    for name in tests:
        if name == "curvature_gap":
            outcomes.append(curvature_gap_test(M, Mh, at, det_tol, svd_tol))
        elif name == "sectional_gap":
            outcomes.append(sectional_gap_test(M, Mh, at, seed=seed))
        elif name == "xi_rank_bound":
            xb = xi_rank_bound(M, Mh, at, svd_tol)
            r3 = f.ranks[2] if len(f.ranks) > 2 else f.ranks[-1]
            ok = xb.bound <= r3
            outcomes.append(TestOutcome(
                "xi_rank_bound", "pass" if ok else "fail",
                {"n": xb.n, "rank_gap": xb.rank_gap, "rank_xi": xb.rank_xi,
                 "bound": xb.bound, "measured_r3": r3},
                "dim D^3 is at least n + rank of the curvature map + rank of Xi",
            ))
        elif name == "flat_partner":
            outcomes.append(flat_partner_test(M, Mh, at, det_tol))
        elif name == "locally_symmetric":
            outcomes.append(locally_symmetric_test(M, Mh, at))
        elif name == "two_dim":
            outcomes.append(two_dim_test(M, Mh, at, seed=seed))
    gap_t = next((t for t in outcomes if t.name == "curvature_gap"), None)
    if gap_t is not None and gap_t.status == "pass" and verdict != "bracket-generating-step-3":
        notes.append("curvature gap is nonzero but the filtration did not reach full rank at level 3")
    promoted = False
    if "promote_complete" in tests:
        if f.bracket_generating:
            pt = promote_complete(M, Mh, at.x, fiber_samples, seed, k_max, det_tol, svd_tol)
        else:
            pt = TestOutcome("promote_complete", "not-applicable",
                             {"reason": "configuration is not bracket generating"},
                             "complete partner and a base point whose whole fiber is generating")
        outcomes.append(pt)
        promoted = pt.status == "pass"
    return ControllabilityReport(at, (M.name, Mh.name), f, verdict, outcomes, promoted, notes)
