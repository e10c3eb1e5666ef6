import numpy as np
import pytest

from curves import chart_loop, octant_loop, wiggle
from rolling_manifolds import catalog
from rolling_manifolds.errors import BoundaryError, CompositionError, DomainError
from rolling_manifolds.rolling import (
    Configuration,
    RollingCurve,
    apply,
    compose,
    haar_rotation,
    random_configuration,
    roll_along,
    verify_rolling,
)
from rolling_manifolds.transport import BaseCurve, curve_length

S1 = catalog.sphere(2, 1.0)
S2 = catalog.sphere(2, 2.0)
P2 = catalog.euclidean(2)


def test_configuration_requires_special_orthogonal_q():
    with pytest.raises(ValueError):
        Configuration(np.zeros(2), np.zeros(2), np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        Configuration(np.zeros(2), np.zeros(2), 2 * np.eye(2))
    with pytest.raises(DomainError):
        Configuration(np.zeros(2), np.array([0.0, -1.0]), np.eye(2), S1, catalog.hyperbolic(2))


def test_apply_identity_preserves_components():
    q = Configuration(np.zeros(2), np.zeros(2), np.eye(2))
    v = np.array([0.3, -1.2])
    assert np.array_equal(apply(q, v), v)


def test_apply_is_an_isometry_and_invertible(rng):
    M, Mh = catalog.sphere_times_line(), catalog.hyperbolic(3, 2.0)
    q = random_configuration(M, Mh, rng)
    gM, gH = M.metric_at(q.x), Mh.metric_at(q.xhat)
    for v in rng.standard_normal((100, 3)):
        w = apply(q, v)
        assert np.sqrt(w @ gH @ w) == pytest.approx(np.sqrt(v @ gM @ v), rel=1e-12)
        assert np.allclose(apply(q, w, "inverse"), v, atol=1e-12)
    with pytest.raises(ValueError):
        apply(q, v, "sideways")


def test_haar_rotation_is_special_orthogonal(rng):
    for n in (2, 3, 5):
        Q = haar_rotation(n, rng)
        assert np.max(np.abs(Q.T @ Q - np.eye(n))) < 1e-12
        assert np.linalg.det(Q) == pytest.approx(1.0)


def test_flat_on_flat_copies_the_base_curve(rng):
    M = catalog.euclidean(3)
    base = wiggle(np.zeros(3))
    q0 = Configuration(np.zeros(3), np.array([0.5, 0.1, -0.2]), np.eye(3), M, M)
    rc = roll_along(M, M, base, q0, steps=200)
    assert np.max(np.abs(rc.Q - np.eye(3))) < 1e-12
    assert np.max(np.abs(rc.xhat - rc.x - q0.xhat)) < 1e-10


def test_equal_spheres_closed_loop_returns():
    base = octant_loop()
    q0 = Configuration(base.position(0), base.position(0), np.eye(2), S1, S1)
    rc = roll_along(S1, S1, base, q0, steps=1500)
    assert rc.end.distance(rc.start) < 1e-5
    assert verify_rolling(rc).passed


def test_octant_holonomy_on_the_plane():
    base = octant_loop()
    q0 = Configuration(base.position(0), np.zeros(2), np.eye(2), S1, P2)
    rc = roll_along(S1, P2, base, q0, steps=1500)
    Qf = rc.Q[-1]
    assert abs(np.arctan2(Qf[1, 0], Qf[0, 0])) == pytest.approx(np.pi / 2, abs=1e-4)
    assert verify_rolling(rc, tol=1e-5).passed


@pytest.mark.parametrize("pair", [
    ("sphere_times_line", "euclidean"),
    ("sphere_times_line", "sphere_times_line"),
    ("hyperbolic", "sphere"),
    ("sphere", "bump_surface"),
])
def test_roll_along_passes_verification(pair, rng):
    a, b = pair
    n = 3 if "sphere_times_line" in pair else 2
    M = catalog.load(a) if a == "sphere_times_line" else catalog.load(a, n=n)
    Mh = catalog.load(b) if b in ("sphere_times_line", "bump_surface") else catalog.load(b, n=n)
    q0 = random_configuration(M, Mh, rng)
    if b == "bump_surface":
        q0 = Configuration(q0.x, np.array([1.25, 0.0]), q0.Q, M, Mh)
    base = wiggle(q0.x, 0.15)
    rc = roll_along(M, Mh, base, q0, steps=400)
    rep = verify_rolling(rc, tol=1e-5)
    assert rep.passed, rep
    assert rep.so_drift < 1e-8
    assert np.array_equal(rc.Q[0], q0.Q)
    hat_len = curve_length(Mh, rc.hat_curve, steps=400)
    assert hat_len == pytest.approx(curve_length(M, base, steps=400), abs=1e-6)


def test_isometry_along_rolling(rng):
    M, Mh = catalog.sphere_times_line(), catalog.euclidean(3)
    q0 = random_configuration(M, Mh, rng)
    rc = roll_along(M, Mh, wiggle(q0.x, 0.1), q0, steps=200)
    for k in range(0, len(rc), 50):
        q = rc.config(k)
        v = rng.standard_normal(3)
        w = apply(q, v)
        nv = np.sqrt(v @ M.metric_at(q.x) @ v)
        nw = np.sqrt(w @ Mh.metric_at(q.xhat) @ w)
        assert abs(nw - nv) < 1e-9


def test_frozen_rotation_is_flagged_as_twisting():
    base = chart_loop([0.3, 0.0], 0.4)
    q0 = Configuration(base.position(0), np.zeros(2), np.eye(2), S1, P2)
    good = roll_along(S1, P2, base, q0, steps=400)
    frozen = RollingCurve(good.times, good.x, good.xhat,
                          np.repeat(np.eye(2)[None], len(good), axis=0), S1, P2, base)
    rep = verify_rolling(frozen)
    assert rep.no_twist > 1e-2 and not rep.passed


def test_constant_curve_has_zero_residuals():
    x = np.array([0.1, 0.2])
    base = BaseCurve.constant(x)
    q0 = Configuration(x, np.zeros(2), np.eye(2), S1, P2)
    rc = roll_along(S1, P2, base, q0, steps=50)
    rep = verify_rolling(rc)
    assert rep.no_slip == 0.0 and rep.no_twist == 0.0


def test_start_point_must_match():
    base = chart_loop([0.3, 0.0], 0.1)
    with pytest.raises(DomainError):
        roll_along(S1, P2, base, Configuration(np.zeros(2), np.zeros(2), np.eye(2), S1, P2))


def test_incomplete_partner_raises_boundary_error():
    base = BaseCurve(lambda t: np.array([t, 0.0]), lambda t: np.array([1.0, 0.0]), 1.0)
    Mh = catalog.bump_surface()
    q0 = Configuration(np.zeros(2), np.array([1.3, 0.0]), np.eye(2), P2, Mh)
    with pytest.raises(BoundaryError) as info:
        roll_along(P2, Mh, base, q0, steps=200)
    assert info.value.time is not None and info.value.time < 0.25


def test_compose_with_identity_is_the_original(rng):
    base = wiggle([0.1, -0.2], 0.3)
    q0 = Configuration(base.position(0), np.zeros(2), haar_rotation(2, rng), S1, P2)
    rc = roll_along(S1, P2, base, q0, steps=300)
    ident = roll_along(P2, P2, rc.hat_curve,
                       Configuration(rc.xhat[0], rc.xhat[0], np.eye(2), P2, P2), steps=300)
    comp = compose(rc, ident)
    assert np.max(np.abs(comp.Q - rc.Q)) < 1e-12
    assert np.max(np.abs(comp.xhat - rc.xhat)) < 1e-12


def test_compose_through_the_plane_matches_direct_rolling(rng):
    base = octant_loop()
    x0 = base.position(0)
    Q0 = haar_rotation(2, rng)
    xh = np.array([0.3, -0.2])
    inner = roll_along(S1, P2, base, Configuration(x0, np.zeros(2), Q0, S1, P2), steps=600)
    outer = roll_along(P2, S2, inner.hat_curve,
                       Configuration(np.zeros(2), xh, np.eye(2), P2, S2), steps=600)
    comp = compose(inner, outer)
    direct = roll_along(S1, S2, base, Configuration(x0, xh, Q0, S1, S2), steps=600)
    assert np.max(np.abs(comp.xhat - direct.xhat)) < 1e-6
    assert np.max(np.abs(comp.Q - direct.Q)) < 1e-6
    assert verify_rolling(comp).passed


def test_compose_rejects_mismatched_intermediate_curves(rng):
    base = wiggle([0.1, -0.2], 0.3)
    inner = roll_along(S1, P2, base, Configuration(base.position(0), np.zeros(2), np.eye(2), S1, P2),
                       steps=100)
    other = roll_along(P2, S2, wiggle([0.5, 0.5], 0.3),
                       Configuration(np.array([0.5, 0.5]), np.zeros(2), np.eye(2), P2, S2), steps=100)
    with pytest.raises(CompositionError):
        compose(inner, other)
    with pytest.raises(CompositionError):
        compose(other, inner)


def test_reversed_path_undoes_the_rolling(rng):
    M, Mh = S1, catalog.hyperbolic(2)
    q0 = random_configuration(M, Mh, rng)
    base = wiggle(q0.x, 0.2)
    fwd = roll_along(M, Mh, base, q0, steps=400)
    back = roll_along(M, Mh, base.reversed(), fwd.end, steps=400)
    assert back.end.distance(q0) < 1e-8
    assert np.max(np.abs(back.Q[::-1] - fwd.Q)) < 1e-6
