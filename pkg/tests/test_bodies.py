import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from bmlab import bodies as B
from bmlab.errors import (ConfigurationError, DegenerateError, InvalidInputError, UnsupportedError)


def _all_bodies(n):
    iso = B.isotropic_cube(n)
    return [
        B.Box.cube(n, 1.0),
        B.Box(np.linspace(0.5, 2.0, n), np.linspace(-1, 1, n)),
        B.Ellipsoid.ball(n, 1.5),
        B.Ellipsoid.from_shape(np.diag(np.linspace(1, 4, n))),
        B.LpBall(1.5, 2.0, n),
        B.LpBall("inf", 1.0, n),
        B.CrossPolytope(2.0, n),
        B.Simplex(np.vstack([np.zeros(n), np.eye(n)])),
        B.intersect_ball(iso, 1.2 * math.sqrt(n)),
        B.MinkowskiAverage(B.CrossPolytope(2.0, n), B.Ellipsoid.ball(n, 1.0)),
        B.AffineImage(B.CrossPolytope(1.0, n), B.AffineMap(np.eye(n) + 0.3 * np.eye(n, k=1), np.ones(n))),
    ]


def _uniform_in_bbox(body, rng, m):
    lo, hi = body.bounding_box()
    pts = lo + (hi - lo) * rng.random((m, body.dim))
    return pts[body.contains(pts)]


@pytest.mark.parametrize("idx", range(11))
def test_membership_convex_and_bounded(idx):
    n = 3
    body = _all_bodies(n)[idx]
    rng = np.random.default_rng(idx)
    pts = _uniform_in_bbox(body, rng, 4000)
    assert len(pts) > 20
    x, y = pts[rng.integers(len(pts), size=2000)], pts[rng.integers(len(pts), size=2000)]
    assert body.contains(0.5 * (x + y)).all()
    assert body.contains(body.interior_point()[None])[0]
    d = rng.standard_normal((2000, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    far = d * 1.01 * body.bounding_radius
    assert not body.contains(far).any()


@pytest.mark.parametrize("idx", range(11))
def test_chord_endpoints_on_boundary(idx):
    n = 3
    body = _all_bodies(n)[idx]
    rng = np.random.default_rng(100 + idx)
    x = _uniform_in_bbox(body, rng, 2000)[:200]
    d = rng.standard_normal(x.shape)
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    lo, hi = body.chord(x, d)
    assert np.all(lo < 0) and np.all(hi > 0)
    shrink = 1e-6 * (hi - lo)
    assert body.contains(x + (hi - shrink)[:, None] * d).all()
    assert body.contains(x + (lo + shrink)[:, None] * d).all()
    assert not body.contains(x + (hi + 1e-4 + shrink)[:, None] * d).any()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.sampled_from([0, 2, 3, 4, 5, 6, 8]))
def test_unconditional_symmetry(seed, idx):
    n = 4
    body = _all_bodies(n)[idx]
    rng = np.random.default_rng(seed)
    if not body.unconditional:
        return
    lo, hi = body.bounding_box()
    pts = lo + (hi - lo) * rng.random((200, n))
    inside = body.contains(pts)
    signs = rng.choice([-1.0, 1.0], size=pts.shape)
    assert np.array_equal(body.contains(pts * signs), inside)


def test_membership_examples():
    assert B.Box.cube(4, 1.0).contains(np.zeros((1, 4)))[0]
    assert not B.Box.cube(4, 1.0).contains(np.array([[1.5, 0, 0, 0]]))[0]
    avg = B.MinkowskiAverage(B.Box.cube(3, 1.0), B.Box.cube(3, 3.0))
    assert avg.contains(np.full((1, 3), 1.9))[0]
    assert not avg.contains(np.full((1, 3), 2.05))[0]
    assert B.minkowski_average(B.Box.cube(3, 1.0), B.Box.cube(3, 3.0)) == B.Box.cube(3, 2.0)
    with pytest.raises(InvalidInputError):
        B.Box.cube(3, 1.0).contains(np.zeros((1, 4)))


def test_minkowski_average_membership_against_sampling():
    # points (x + y)/2 with x, y in the parts are inside; points beyond the support function are outside
    rng = np.random.default_rng(5)
    a, b = B.CrossPolytope(1.0, 3), B.Ellipsoid.ball(3, 0.5)
    avg = B.MinkowskiAverage(a, b)
    xa = _uniform_in_bbox(a, rng, 5000)[:500]
    xb = _uniform_in_bbox(b, rng, 5000)[:500]
    assert avg.contains(0.5 * (xa + xb)).all()
    u = rng.standard_normal((300, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    support = 0.5 * (np.max(np.abs(u), axis=1) + 0.5)
    assert not avg.contains(u * (support * 1.01)[:, None]).any()


def test_volume_examples():
    assert B.volume(B.Box.cube(4, 1.0)).value == pytest.approx(16.0, abs=1e-12)
    v = B.volume(B.Ellipsoid.ball(3, 1.0))
    assert v.value == pytest.approx(4 * math.pi / 3, abs=1e-12) and v.method == "exact"
    assert B.volume(B.CrossPolytope(1.0, 3)).value == pytest.approx(4 / 3, abs=1e-12)
    n = 5
    assert B.unit_ball_volume(n) == pytest.approx(math.pi ** (n / 2) / special.gamma(n / 2 + 1), rel=1e-14)


def test_volume_monte_carlo_ci_and_cap():
    body = B.intersect_ball(B.Box.cube(3, 1.0), 1.2)
    v = B.volume(body, np.random.default_rng(1))
    assert v.method == "monte_carlo" and v.rel_ci <= 0.02
    # cube intersected with ball of radius 1.2: inclusion-exclusion oracle by fine grid
    g = (np.arange(400) + 0.5) / 400 * 2 - 1
    X = np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)
    grid = 8.0 * np.mean(np.sum(X * X, 1) < 1.44)
    assert abs(v.value - grid) <= 2 * v.ci_halfwidth
    big = B.intersect_ball(B.Box.cube(17, 1.0), 3.0)
    with pytest.raises(UnsupportedError):
        B.volume(big)


def test_bm_ratio_examples():
    K = B.Box.cube(4, 1.0)
    assert B.bm_ratio(K, K).R == 1.0
    assert B.bm_ratio(K, B.Box.cube(4, 3.0)).R == pytest.approx(16 / 9, abs=1e-12)
    shifted = B.Box(np.ones(4), np.full(4, 0.7))
    assert B.bm_ratio(K, shifted).R == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(0.3, 3.0), st.integers(1, 6))
def test_bm_ratio_at_least_one(s, t, n):
    K = B.Box(np.full(n, s))
    T = B.Box(np.linspace(t, 2 * t, n))
    assert B.bm_ratio(K, T).R >= 1 - 1e-12


def test_inertia_examples():
    box = B.exact_inertia(B.Box.cube(3, 1.0))
    assert box.q(np.array([1.0, 0, 0])) == pytest.approx(1 / 3, abs=1e-15)
    iso = B.exact_inertia(B.isotropic_cube(4))
    assert np.allclose(iso.cov, np.eye(4), atol=1e-15)
    x = np.random.default_rng(0).normal(size=(10, 4))
    assert np.allclose(iso.p(x), np.sum(x * x, 1))
    ball = B.exact_inertia(B.isotropic_ball(5))
    assert np.allclose(ball.cov, np.eye(5), atol=1e-12)
    with pytest.raises(UnsupportedError):
        B.exact_inertia(B.CrossPolytope(1.0, 3))


def test_isotropic_normalize_examples():
    body, amap = B.isotropic_normalize(B.Box.cube(3, 2.0), B.exact_inertia(B.Box.cube(3, 2.0)))
    assert isinstance(body, B.Box) and np.allclose(body.a, math.sqrt(3), rtol=1e-15)
    assert np.allclose(amap.linear, np.eye(3) * math.sqrt(3) / 2)
    iso = B.isotropic_cube(3)
    _, m = B.isotropic_normalize(iso, B.exact_inertia(iso))
    assert np.allclose(m.linear, np.eye(3)) and np.allclose(m.translation, 0)
    E = B.Ellipsoid.from_shape(np.diag([1.0, 4.0]))
    body, m = B.isotropic_normalize(E, B.exact_inertia(E))
    assert np.allclose(B.exact_inertia(body).cov, np.eye(2), atol=1e-12)
    assert m.linear[0, 0] / m.linear[1, 1] == pytest.approx(2.0)
    flat = B.InertiaData(np.zeros(2), np.diag([1.0, 0.0]))
    with pytest.raises(DegenerateError):
        B.isotropic_normalize(B.Box.cube(2, 1.0), flat)


def test_covariance_comparability_examples():
    K = B.Box.cube(3, 1.0)
    assert B.covariance_comparability(K, K, 1.0)[0] == pytest.approx(1.0)
    R = (2 / math.sqrt(3)) ** 3
    assert B.covariance_comparability(K, B.Box.cube(3, 3.0), R)[0] == pytest.approx(9.0)
    mr, w = B.covariance_comparability(B.Box.cube(2, 1.0), B.Box.cube(2, 2.0), 9 / 8)
    assert mr == pytest.approx(4.0) and w == pytest.approx(4 / (9 / 8) ** 4)


def test_eigenvalue_count_examples():
    assert B.eigenvalue_deviation_count(B.exact_inertia(B.isotropic_cube(5)), 0.3) == 0
    assert B.eigenvalue_deviation_count(np.array([2.0, 1, 1, 1]), 0.5) == 1
    box3 = B.Box.cube(4, 3.0)
    _, amap = B.isotropic_normalize(B.isotropic_cube(4), B.exact_inertia(B.isotropic_cube(4)))
    lam = B.exact_inertia(B.affine_image(box3, amap))
    assert B.eigenvalue_deviation_count(lam, 0.5) == 4
    with pytest.raises(InvalidInputError):
        B.eigenvalue_deviation_count(lam, 1.5)


def test_spec_roundtrip_and_errors():
    for body in _all_bodies(3):
        text = body.to_json()
        again = B.body_from_json(text)
        assert again == body
        assert again.to_json() == text
    with pytest.raises(ConfigurationError, match="family"):
        B.body_from_spec({"family": "dodecahedron", "params": {}, "dim": 3})
    with pytest.raises(ConfigurationError, match="half_width"):
        B.body_from_spec({"family": "box", "params": {}, "dim": 3})
    with pytest.raises(ConfigurationError, match="unconditional"):
        B.body_from_spec({"family": "simplex", "params": {"vertices": [[0, 0], [1, 0], [0, 1]]},
                          "unconditional": True})


def test_project_is_nearest_point():
    rng = np.random.default_rng(8)
    for body in (B.Box.cube(3, 1.0), B.Ellipsoid.from_shape(np.diag([1.0, 2.0, 5.0])), B.LpBall(1, 1.0, 3)):
        x = 3 * rng.normal(size=(50, 3))
        p = body.project(x)
        assert body.contains(p * (1 - 1e-9)).all() or np.allclose(body.project(p), p, atol=1e-9)
        inside = _uniform_in_bbox(body, rng, 3000)[:200]
        for xi, pi in zip(x[:10], p[:10]):
            assert np.linalg.norm(xi - pi) <= np.min(np.linalg.norm(inside - xi, axis=1)) + 1e-9
