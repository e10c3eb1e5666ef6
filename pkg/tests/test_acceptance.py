"""Acceptance criteria 1-9, one test per criterion.

Each test prints a single ``criterion k PASS|FAIL`` line; the lines are also
repeated in the terminal summary of the pytest run.
"""
import time

import numpy as np
import pytest
import sympy as sp

from curves import chart_loop, octant_loop, wiggle
from rolling_manifolds import catalog
from rolling_manifolds.controllability import (
    curvature_gap,
    two_dim_test,
    verdict_from_filtration,
    xi_rank_bound,
)
from rolling_manifolds.distribution import (
    SVD_TOL,
    closed_form_D2,
    closed_form_D3,
    dim_q,
    elementary_skew,
    filtration,
    orthonormal_span,
    principal_angles,
    rolling_basis,
    span_rows,
    w_left,
    w_right,
)
from rolling_manifolds.geometry import gaussian_curvature, riemann
from rolling_manifolds.rolling import (
    Configuration,
    haar_rotation,
    random_configuration,
    roll_along,
    verify_rolling,
)
from rolling_manifolds.transport import BaseCurve, parallel_transport

from conftest import ALL_ENTRIES

S1, S2r2, P2 = catalog.sphere(2, 1.0), catalog.sphere(2, 2.0), catalog.euclidean(2)
SR, R3 = catalog.sphere_times_line(), catalog.euclidean(3)
BUMP = catalog.bump_surface()

SWEEP_LOG = []  # (label, xi bound, r3) for every configuration filtered below


def _log_bound(label, M, Mh, q, f):
    r3 = f.ranks[2] if len(f.ranks) > 2 else f.ranks[-1]
    SWEEP_LOG.append((label, xi_rank_bound(M, Mh, q).bound, r3))


def reference_gap(f, p):
    cf, sf, cp, sp_ = np.cos(f), np.sin(f), np.cos(p), np.sin(p)
    return np.array([
        [1 - cf**2 * cp**2, -cf**2 * sp_ * cp, cf * sf * cp],
        [-cf**2 * sp_ * cp, -cf**2 * sp_**2, cf * sf * sp_],
        [cf * sf * cp, cf * sf * sp_, -sf**2],
    ])


def test_criterion_1_sphere_on_plane(criterion):
    with criterion(1, "sphere(2,1) on euclidean(2): ranks (2,3,5), det = 1") as c:
        rng = np.random.default_rng(1)
        t0 = time.perf_counter()
        worst = 0.0
        for _ in range(10):
            q = random_configuration(S1, P2, rng)
            f = filtration(S1, P2, q)
            det = curvature_gap(S1, P2, q).determinant
            worst = max(worst, abs(det - 1.0))
            c.check(f.ranks == [2, 3, 5], f"ranks {f.ranks}")
            _log_bound("sphere/plane", S1, P2, q, f)
        elapsed = time.perf_counter() - t0
        c.check(worst <= 1e-6, f"|det - 1| = {worst:.2e}")
        c.check(elapsed < 5.0, f"runtime {elapsed:.2f} s")
        c.note(f"10 configs, max |det-1| {worst:.1e}, {elapsed:.2f} s")


def test_criterion_2_equal_and_unequal_spheres(criterion):
    with criterion(2, "equal spheres involutive, unequal spheres det 0.75") as c:
        rng = np.random.default_rng(2)
        for _ in range(5):
            q = random_configuration(S1, S1, rng)
            gap = curvature_gap(S1, S1, q)
            f = filtration(S1, S1, q)
            c.check(np.linalg.norm(gap.matrix) < 1e-9, f"equal gap norm {np.linalg.norm(gap.matrix):.1e}")
            c.check(f.ranks[:2] == [2, 2] and f.stabilized and f.ranks[-1] == 2, f"equal ranks {f.ranks}")
            _log_bound("equal spheres", S1, S1, q, f)

            q = random_configuration(S1, S2r2, rng)
            det = curvature_gap(S1, S2r2, q).determinant
            f = filtration(S1, S2r2, q)
            c.check(abs(det - 0.75) <= 1e-6, f"unequal det {det}")
            c.check(f.ranks == [2, 3, 5], f"unequal ranks {f.ranks}")
            _log_bound("unequal spheres", S1, S2r2, q, f)
        c.note("5 configs per pair")


def test_criterion_3_sphere_times_line_on_flat_space(criterion):
    with criterion(3, "S2xR on R3: ranks (3,4,6) stabilizing at 6 < 9") as c:
        rng = np.random.default_rng(3)
        worst_tail = 0.0
        for _ in range(10):
            q = random_configuration(SR, R3, rng)
            f = filtration(SR, R3, q, k_max=4)
            c.check(f.ranks == [3, 4, 6, 6] and f.stabilized and f.dim == 9, f"ranks {f.ranks}")
            for s in f.spectra[2:]:
                worst_tail = max(worst_tail, s[6] / s[0] if len(s) > 6 else 0.0)
            _log_bound("S2xR/R3", SR, R3, q, f)
        c.check(worst_tail < 1e-6, f"tail ratio {worst_tail:.1e}")
        c.note(f"10 configs, worst sigma_7/sigma_1 {worst_tail:.1e}")


def test_criterion_4_sphere_times_line_on_itself(criterion):
    with criterion(4, "S2xR on itself: reference gap matrix, ranks 2/0, filtration (3,5,8)") as c:
        rng = np.random.default_rng(4)
        worst = 0.0
        for th, ph, ps in rng.uniform(-np.pi, np.pi, (10, 3)):
            q = Configuration(SR.sample(rng)[0], SR.sample(rng)[0], catalog.s2xr_rotation(th, ph, ps), SR, SR)
            gap = curvature_gap(SR, SR, q)
            worst = max(worst, np.max(np.abs(gap.matrix - reference_gap(ph, ps))))
            c.check(gap.rank == 2, f"generic gap rank {gap.rank}")
            f = filtration(SR, SR, q, k_max=4)
            c.check(f.ranks[:3] == [3, 5, 8] and f.ranks[-1] == 8, f"ranks {f.ranks}")
            _log_bound("S2xR/S2xR", SR, SR, q, f)
        for th in (0.0, 1.1, -2.5):
            q = Configuration(SR.sample(rng)[0], SR.sample(rng)[0], catalog.s2xr_rotation(th, 0.0, 0.0), SR, SR)
            c.check(curvature_gap(SR, SR, q).rank == 0, "gap rank on phi = psi = 0")
        c.check(worst < 1e-8, f"matrix mismatch {worst:.1e}")
        c.note(f"max entry mismatch {worst:.1e}")


def _bump_oracle():
    x = sp.Symbol("x", positive=True)
    f = sp.exp(-1 / (x - 1) ** 2)
    kappa = sp.diff(f, x, 2) / ((1 + sp.diff(f, x) ** 2) ** 2 * (1 - f))
    fn = sp.lambdify(x, kappa, "mpmath")
    return lambda x1: 0.0 if abs(x1) <= 1 else float(fn(sp.Float(abs(x1), 30)))


def test_criterion_5_bump_surface(criterion):
    with criterion(5, "bump surface: curvature formula, flat centre, positive rim, two_dim sweep") as c:
        oracle = _bump_oracle()
        worst = 0.0
        for x1 in np.linspace(-1.4, 1.4, 113):
            k = gaussian_curvature(BUMP, np.array([x1, 0.3]))
            worst = max(worst, abs(k - oracle(x1)))
        c.check(worst < 1e-6, f"curvature error {worst:.1e}")
        rng = np.random.default_rng(5)
        for x1 in np.linspace(-1.4, 1.4, 29):
            q = Configuration(np.array([x1, 0.1]), rng.uniform(-1, 1, 2), haar_rotation(2, rng), BUMP, P2)
            det = curvature_gap(BUMP, P2, q).determinant
            f = filtration(BUMP, P2, q)
            if abs(x1) <= 1.0 + 1e-12:
                c.check(det == 0.0 and verdict_from_filtration(f) == "involutive-evidence",
                        f"x1={x1:.2f}: det {det}, {verdict_from_filtration(f)}")
            else:
                c.check(det > 0.0, f"x1={x1:.2f}: det {det}")
            _log_bound(f"bump/plane x1={x1:+.2f}", BUMP, P2, q, f)
        t = two_dim_test(BUMP, P2, Configuration(np.zeros(2), np.zeros(2), np.eye(2), BUMP, P2),
                         sweeps=8, steps=100)
        c.check(t.status == "pass" and t.evidence.get("orbit_dim") == 5, f"two_dim {t.status}")
        c.note(f"curvature error {worst:.1e}, two_dim reached kappa {t.evidence['max_reached_kappa_bar']:.2e}")


ORACLE_PAIRS = [
    ("sphere/euclidean", S1, P2, None),
    ("sphere/sphere", S1, S1, None),
    ("sphere/sphere(r=2)", S1, S2r2, None),
    ("hyperbolic/sphere", catalog.hyperbolic(2), S1, None),
    ("sphere_polar/hyperbolic", catalog.sphere_polar(), catalog.hyperbolic(2), None),
    ("bump_surface/euclidean", BUMP, P2, "rim"),
    ("euclidean/euclidean", P2, P2, None),
    ("sphere_times_line/euclidean", SR, R3, None),
    ("sphere_times_line/sphere_times_line", SR, SR, None),
    ("sphere(n=3)/euclidean", catalog.sphere(3, 1.0), R3, None),
    ("sphere(n=3)/hyperbolic(n=3,r=2)", catalog.sphere(3, 1.0), catalog.hyperbolic(3, 2.0), None),
    ("sphere_times_line/hyperbolic(n=3)", SR, catalog.hyperbolic(3), None),
]


def _closed_rows(M, Mh, q, level):
    rows = [np.vstack([e.at(q).vector() for e in rolling_basis(M, Mh)])]
    rows += [t.vector()[None] for t in closed_form_D2(M, Mh, q)]
    if level == 3:
        rows += [t.vector()[None] for t in closed_form_D3(M, Mh, q)]
    return np.vstack(rows)


def test_criterion_6_bracket_oracle_equivalence(criterion):
    with criterion(6, "numeric brackets vs closed forms, principal angles < 1e-4") as c:
        rng = np.random.default_rng(6)
        worst = 0.0
        count = 0
        for label, M, Mh, mode in ORACLE_PAIRS:
            for _ in range(20):
                q = random_configuration(M, Mh, rng)
                if mode == "rim":
                    x1 = rng.choice([-1, 1]) * rng.uniform(1.25, 1.45)
                    q = Configuration(np.array([x1, q.x[1]]), q.xhat, q.Q, M, Mh)
                f = filtration(M, Mh, q, k_max=3)
                _log_bound(label if mode is None else f"{label} x1={q.x[0]:+.3f}", M, Mh, q, f)
                for level in (2, 3):
                    numeric = span_rows(f, min(level, len(f.bases)))
                    A = orthonormal_span(_closed_rows(M, Mh, q, level), SVD_TOL)
                    B = orthonormal_span(numeric, SVD_TOL)
                    if not c.check(A.shape[1] == B.shape[1],
                                   f"{label} D{level}: dims {A.shape[1]} vs {B.shape[1]}"):
                        continue
                    angle = float(np.max(principal_angles(A, B)))
                    worst = max(worst, angle)
                    c.check(angle < 1e-4, f"{label} D{level}: angle {angle:.1e}")
                count += 1
        c.note(f"{len(ORACLE_PAIRS)} pairs x 20 configs = {count}, worst angle {worst:.1e}")


def test_criterion_7_rolling_verification(criterion):
    with criterion(7, "rollings verify at 1e-5, closed loop returns, octant holonomy pi/2") as c:
        rng = np.random.default_rng(7)
        worst = 0.0
        runs = [(S1, P2), (S1, S2r2), (SR, R3), (SR, SR), (catalog.hyperbolic(2), S1),
                (catalog.sphere(3, 1.0), catalog.hyperbolic(3, 2.0))]
        for M, Mh in runs:
            q0 = random_configuration(M, Mh, rng)
            rc = roll_along(M, Mh, wiggle(q0.x, 0.15), q0, steps=300)
            rep = verify_rolling(rc, tol=1e-5)
            worst = max(worst, rep.no_slip, rep.no_twist)
            c.check(rep.passed, f"{M.name}/{Mh.name}: {rep.as_dict()}")
        base = octant_loop()
        q0 = Configuration(base.position(0), base.position(0), np.eye(2), S1, S1)
        rc = roll_along(S1, S1, base, q0, steps=1200)
        err = rc.end.distance(rc.start)
        c.check(err < 1e-5, f"closed-loop return {err:.1e}")
        c.check(verify_rolling(rc).passed, "equal-sphere loop verification")
        q0 = Configuration(base.position(0), np.zeros(2), np.eye(2), S1, P2)
        rc = roll_along(S1, P2, base, q0, steps=1200)
        rep = verify_rolling(rc)
        worst = max(worst, rep.no_slip, rep.no_twist)
        c.check(rep.passed, f"octant verification {rep.as_dict()}")
        angle = abs(np.arctan2(rc.Q[-1][1, 0], rc.Q[-1][0, 0]))
        c.check(abs(angle - np.pi / 2) < 1e-4, f"holonomy {angle}")
        c.note(f"worst residual {worst:.1e}, return error {err:.1e}, holonomy error {abs(angle - np.pi / 2):.1e}")


def test_criterion_8_xi_bound_validity(criterion):
    with criterion(8, "xi bound <= measured r3 everywhere, equality on sphere-on-plane") as c:
        rng = np.random.default_rng(8)
        for _ in range(5):
            q = random_configuration(S1, P2, rng)
            _log_bound("sphere/plane", S1, P2, q, filtration(S1, P2, q))
        bad = [(label, bound, r3) for label, bound, r3 in SWEEP_LOG if bound > r3]
        for label, bound, r3 in bad:
            c.check(False, f"{label}: bound {bound} > r3 {r3}")
        for label, bound, r3 in SWEEP_LOG:
            if label == "sphere/plane":
                c.check(bound == r3 == 5, f"sphere/plane: bound {bound}, r3 {r3}")
        c.note(f"{len(SWEEP_LOG)} configurations checked, {len(bad)} violations")


def _short_curve(M, rng):
    x0 = M.sample(rng)[0]
    return chart_loop(x0, 0.05)


def test_criterion_9_property_suites(criterion):
    with criterion(9, "property suites on every catalog entry") as c:
        rng = np.random.default_rng(9)
        for name, params in ALL_ENTRIES:
            M = catalog.load(name, **params)
            n = M.n
            for x in M.sample(rng, 3):
                data = riemann(M, x, nabla=True)
                c.check(data.symmetry_residual() < 1e-10, f"{name} symmetries")
                c.check(data.bianchi_residual() < 1e-10, f"{name} first Bianchi")
                c.check(data.second_bianchi_residual() < 1e-8, f"{name} second Bianchi")
            v = rng.standard_normal(n)
            _, C = parallel_transport(M, _short_curve(M, rng), v, steps=150)
            c.check(np.max(np.abs(np.linalg.norm(C, axis=1) - np.linalg.norm(v))) < 1e-10,
                    f"{name} transport norm")
            flat = catalog.euclidean(n)
            q0 = random_configuration(M, flat, rng)
            rc = roll_along(M, flat, _short_curve_at(q0.x), q0, steps=150)
            c.check(rc.so_drift() < 1e-9, f"{name} SO drift {rc.so_drift():.1e}")
        for n in (2, 3, 4):
            M = catalog.euclidean(n)
            for _ in range(20):
                Q = haar_rotation(n, rng)
                q = Configuration(np.zeros(n), np.zeros(n), Q)
                for a in range(n):
                    for b in range(a + 1, n):
                        Vr = w_right(M, M, a, b).evaluate(q)[2]
                        combo = sum(Q[a, l] * Q[b, s] * w_left(M, M, min(l, s), max(l, s)).evaluate(q)[2]
                                    * (1 if l < s else -1)
                                    for l in range(n) for s in range(n) if l != s)
                        c.check(np.max(np.abs(Vr - combo)) < 1e-12, f"W relation n={n}")
        c.note(f"{len(ALL_ENTRIES)} entries; runtime budget checked at session end")


def _short_curve_at(x0):
    return chart_loop(x0, 0.05)
