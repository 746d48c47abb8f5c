import numpy as np
import pytest

from bmlab import bodies as B
from bmlab.errors import DegenerateError, InsufficientSamplesError, InvalidInputError
from bmlab.sampling import (SampleBatch, SamplerConfig, batch_se, batch_to_csv, estimate_moments, hit_and_run,
                            load_batch, save_batch)


@pytest.fixture(scope="module")
def box_batch():
    return hit_and_run(B.Box.cube(3, 1.0), SamplerConfig(seed=11), 100000)


def test_box_first_and_second_moments(box_batch):
    m = estimate_moments(box_batch)
    assert np.all(np.abs(m.mean) <= 4 * m.se_mean)
    assert np.all(np.abs(np.diag(m.cov) - 1 / 3) <= 4 * np.diag(m.se_cov))
    off = m.cov[~np.eye(3, dtype=bool)]
    assert np.all(np.abs(off) <= 4 * m.se_cov[~np.eye(3, dtype=bool)])


def test_ball_second_moment():
    pts = hit_and_run(B.Ellipsoid.ball(3, 1.0), SamplerConfig(seed=12), 100000)
    m = estimate_moments(pts)
    assert abs(m.mean_sqnorm - 0.6) <= 4 * m.se_mean_sqnorm


def test_isotropic_cube_var_sqnorm():
    n = 6
    m = estimate_moments(hit_and_run(B.isotropic_cube(n), SamplerConfig(seed=13), 100000))
    assert abs(m.var_of_sqnorm - 0.8 * n) <= 4 * m.se_var_of_sqnorm


def test_cross_polytope_mean_zero():
    m = estimate_moments(hit_and_run(B.CrossPolytope(2.0, 4), SamplerConfig(seed=14), 50000))
    assert np.all(np.abs(m.mean) <= 4 * m.se_mean)


def test_simplex_barycenter():
    # barycenter of the standard simplex is 1/(n+1) in each coordinate
    n = 3
    S = B.Simplex(np.vstack([np.zeros(n), np.eye(n)]))
    m = estimate_moments(hit_and_run(S, SamplerConfig(seed=15), 50000))
    assert np.all(np.abs(m.mean - 1 / (n + 1)) <= 4 * m.se_mean)


def test_all_points_inside_and_layout(box_batch):
    assert box_batch.points.shape == (100000, 3)
    assert B.Box.cube(3, 1.0).contains(box_batch.points).all()
    parts = box_batch.split(4)
    assert sum(len(p) for p in parts) == len(box_batch)


def test_determinism_and_seed_sensitivity(monkeypatch):
    body = B.Ellipsoid.from_shape(np.diag([1.0, 2.0]))
    a = hit_and_run(body, SamplerConfig(seed=5), 3000).points
    monkeypatch.setenv("BMLAB_THREADS", "1")
    b = hit_and_run(body, SamplerConfig(seed=5), 3000).points
    c = hit_and_run(body, SamplerConfig(seed=6), 3000).points
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_config_defaults_and_validation():
    r = SamplerConfig().resolved(5)
    assert r.burn_in == 250 and r.thinning == 5
    with pytest.raises(InvalidInputError):
        SamplerConfig(seed=-1)
    with pytest.raises(InvalidInputError):
        SamplerConfig(thinning=0)
    with pytest.raises(InvalidInputError):
        hit_and_run(B.Box.cube(2, 1.0), SamplerConfig(), 0)


class _Empty(B.Box):
    def contains(self, x):
        x = np.atleast_2d(x)
        return np.zeros(x.shape[0], dtype=bool)


def test_degenerate_body_raises():
    with pytest.raises(DegenerateError):
        hit_and_run(_Empty(np.ones(2)), SamplerConfig(), 10)


def test_insufficient_samples():
    with pytest.raises(InsufficientSamplesError):
        estimate_moments(np.zeros((50, 2)))


def test_batch_se_matches_iid_formula():
    x = np.random.default_rng(0).normal(size=200000)
    assert batch_se(x) == pytest.approx(1 / np.sqrt(len(x)), rel=0.5)


def test_binary_roundtrip(tmp_path, box_batch):
    p = tmp_path / "s.bmls"
    save_batch(p, box_batch)
    back = load_batch(p)
    assert np.array_equal(back.points, box_batch.points)
    assert back.body_id == box_batch.body_id and back.config == box_batch.config
    raw = p.read_bytes()
    (tmp_path / "bad").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(InvalidInputError):
        load_batch(tmp_path / "bad")
    (tmp_path / "short").write_bytes(raw[:-8])
    with pytest.raises(InvalidInputError):
        load_batch(tmp_path / "short")


def test_csv_export():
    b = SampleBatch(np.array([[0.5, -0.25], [0.1, 0.2]]), "x", SamplerConfig())
    text = batch_to_csv(b)
    assert text.splitlines()[0] == "x1,x2"
    assert np.allclose(np.loadtxt(text.splitlines()[1:], delimiter=","), b.points)
