import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmlab import logconcave1d as L
from bmlab import supconv_nd as S
from bmlab.errors import DegenerateError, InvalidInputError

# the lambda-integral of (1 + 2 lam) 3^(-lam), the interval sup-convolution mass
INTERVAL_K_TOTAL = 4 / (3 * math.log(3) ** 2)


def _grid(d, cells=1024):
    return S.GridDensity.from_density1d(d, cells)


def _cov(p):
    m0, m1, m2 = p.moments()
    mu = m1 / m0
    return m2 / m0 - np.outer(mu, mu)


def test_self_supconvolution_is_identity():
    f = _grid(L.Gaussian(1.0), 513)
    h = S.sup_convolve(f, f, 0.5)
    assert np.max(np.abs(h.values - f.pdf(h.mesh()))) <= 1e-9


def test_gaussian_headline():
    h = S.sup_convolve(S.gaussian_grid(1), S.gaussian_grid(1, std=2.0), 0.5)
    assert h.mass == pytest.approx(math.sqrt(1.25), abs=2e-3)


def test_interval_average():
    h = S.sup_convolve(_grid(L.Uniform(1.0)), _grid(L.Uniform(3.0)), 0.5)
    assert h.mass == pytest.approx(2 / math.sqrt(3), abs=2e-3)


@pytest.mark.parametrize("lam", [0.1, 0.3, 0.7, 0.9])
def test_interval_mass_depends_on_lambda(lam):
    h = S.sup_convolve(_grid(L.Uniform(1.0)), _grid(L.Uniform(3.0)), lam)
    assert h.mass == pytest.approx((1 + 2 * lam) * 3 ** -lam, abs=2e-3)


def test_summary_gaussian_self():
    g = S.gaussian_grid(2)
    s = S.summarize(g, g, 5)
    assert s.K_total == pytest.approx(1.0, abs=2e-3)
    assert np.allclose(s.b, 0, atol=1e-3)
    assert np.allclose(s.D, np.eye(2), atol=5e-3)


def test_summary_shifted_gaussian_barycenter():
    s = S.summarize(_grid(L.Gaussian(1.0)), _grid(L.Gaussian(1.0, 2.0)), 9)
    assert s.b[0] == pytest.approx(1.0, abs=2e-3)


def test_summary_intervals():
    s = S.summarize(_grid(L.Uniform(1.0)), _grid(L.Uniform(3.0)), 33)
    assert s.K_total == pytest.approx(INTERVAL_K_TOTAL, abs=2e-3)
    assert s.log_concavity_defect() <= 1e-6


def test_normalized_profile_examples():
    f = _grid(L.Gaussian(1.0), 1024)
    l = S.normalized_profile(S.summarize(f, f, 5))
    x = l.axes[0]
    assert np.max(np.abs(l.values - np.exp(-x * x / 2) / math.sqrt(2 * math.pi))) <= 1e-2
    for a, b in ((L.Uniform(1.0), L.Uniform(3.0)), (L.Gaussian(1.0), L.Uniform(2.0))):
        prof = S.normalized_profile(S.summarize(_grid(a), _grid(b), 9))
        assert prof.mass == pytest.approx(1.0, abs=2e-3)
        assert _cov(prof)[0, 0] == pytest.approx(1.0, abs=2e-2)


def test_normalized_profile_degenerate():
    s = S.summarize(_grid(L.Gaussian(1.0)), _grid(L.Gaussian(2.0)), 5)
    s.D[:] = 0.0
    with pytest.raises(DegenerateError):
        S.normalized_profile(s)


def test_closed_form_examples():
    for k in (1, 2, 5):
        assert S.gaussian_supconv_integral_closed_form(k, 1.0) == pytest.approx(1.0)
    assert S.gaussian_supconv_integral_closed_form(1, 2.0) == pytest.approx(math.sqrt(1.25))
    assert S.gaussian_supconv_integral_closed_form(4, 2.0) == pytest.approx(1.5625)


def test_amgm_examples():
    g = S.amgm_gap(1.0)
    assert g.value == 1.0 and g.holds(1.0)
    g4 = S.amgm_gap(4.0)
    assert g4.value == pytest.approx(1.25) and g4.middle == pytest.approx(1.25) and g4.holds(4.0)
    g9 = S.amgm_gap(9.0)
    assert g9.value == pytest.approx(10 / 6) and g9.holds(9.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_amgm_bounds_hold(a):
    assert S.amgm_gap(a).holds(a)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.floats(0.2, 5.0))
def test_gaussian_gap_lower_bound(k, alpha):
    assert S.gaussian_supconv_integral_closed_form(k, alpha) >= S.gaussian_gap_lower_bound(k, alpha)


def test_variance_decomposition_examples():
    v = S.variance_decomposition([1.0, 2.0], [1.0, 2.0])
    assert v.v == pytest.approx(0.0, abs=1e-15)
    assert S.variance_decomposition([1.0, 0.0], [0.0, 0.0]).v == pytest.approx(4 / 45, abs=1e-15)
    r = S.variance_decomposition([1.0, 0.0], [-1.0, 0.0])
    assert r.v == pytest.approx(16 / 180, abs=1e-15) and r.c1_term == 0.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3), st.lists(st.floats(-10, 10), min_size=3, max_size=3))
def test_variance_decomposition_property(x, y):
    d = S.variance_decomposition(x, y)
    assert d.v == pytest.approx(d.c1_term + d.c2_term, rel=1e-12, abs=1e-12)
    # Monte-Carlo-free oracle: Gauss-Legendre in lambda is exact for the quartic
    lam, w = np.polynomial.legendre.leggauss(6)
    lam, w = 0.5 * (lam + 1), 0.5 * w
    q = np.array([np.sum((l * np.array(x) + (1 - l) * np.array(y)) ** 2) for l in lam])
    assert d.v == pytest.approx(np.sum(w * q * q) - np.sum(w * q) ** 2, rel=1e-9, abs=1e-9)


def test_transport_variance_bound_examples():
    lhs, rhs = S.verify_transport_variance_bound_1d(L.Gaussian(1.0), L.Gaussian(1.0), cells=512, lambda_count=5)
    assert rhs == pytest.approx(0.0, abs=1e-9) and lhs >= 0
    lhs, rhs = S.verify_transport_variance_bound_1d(L.Uniform(1.0), L.Uniform(2.0), cells=1024, lambda_count=9)
    assert lhs >= rhs
    lhs, rhs = S.verify_transport_variance_bound_1d(L.Gaussian(1.0), L.Gaussian(2.0), cells=1024, lambda_count=9)
    assert lhs >= rhs - 5e-3


def test_grid_validation():
    with pytest.raises(InvalidInputError):
        S.GridDensity([np.array([0.0, 1.0, 3.0])], np.ones(3))
    with pytest.raises(InvalidInputError):
        S.GridDensity([np.linspace(0, 1, 5)], -np.ones(5))
    f = S.gaussian_grid(1)
    with pytest.raises(InvalidInputError):
        S.sup_convolve(f, S.gaussian_grid(2), 0.5)
    bad = S.GridDensity(f.axes, f.values, log_concave=False)
    with pytest.raises(InvalidInputError):
        S.sup_convolve(f, bad, 0.5)
    with pytest.raises(InvalidInputError):
        S.summarize(f, f, 3)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_prekopa_leindler_random(seed):
    rng = np.random.default_rng(seed)
    f, g = _grid(L.random_logconcave(rng), 512), _grid(L.random_logconcave(rng), 512)
    lam = rng.uniform(0.05, 0.95)
    h = S.sup_convolve(f, g, lam)
    assert h.mass >= 1 - 2e-3
    assert h.is_log_concave(1e-9)
