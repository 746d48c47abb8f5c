"""Composite Gauss-Legendre helpers used by the 1D and grid modules."""

import numpy as np

_ORDER = 12
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_ORDER)


def panel_nodes(edges):
    """Nodes and weights of the composite Gauss-Legendre rule on ``edges``.

    ``edges`` is an increasing array of panel boundaries; zero-width panels
    contribute nothing.
    """
    edges = np.asarray(edges, dtype=float)
    a, b = edges[:-1], edges[1:]
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    x = (mid[:, None] + half[:, None] * _GL_X).ravel()
    w = (half[:, None] * _GL_W).ravel()
    return x, w


def expm1_over(d):
    """(exp(d) - 1) / d with the removable singularity at 0 filled in."""
    d = np.asarray(d, dtype=float)
    small = np.abs(d) < 1e-6
    safe = np.where(small, 1.0, d)
    return np.where(small, 1.0 + d / 2.0 + d * d / 6.0, np.expm1(safe) / safe)


def log1p_over(x):
    """log1p(x) / x, equal to 1 at x = 0."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-6
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 - x / 2.0 + x * x / 3.0, np.log1p(safe) / safe)


def golden_max(fun, lo, hi, iters=80):
    """Vectorized golden-section search for the max of concave ``fun`` on [lo, hi].

    Returns (argmax, max). ``fun`` maps an array of points (same shape as lo) to
    values; the endpoints are also tried so boundary maxima are not missed.
    """
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a = np.array(lo, dtype=float, copy=True)
    b = np.array(hi, dtype=float, copy=True)
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = fun(c)
    fd = fun(d)
    for _ in range(iters):
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - invphi * (b - a)
        new_d = a + invphi * (b - a)
        # reuse one evaluation per side
        c_next = np.where(left, new_c, d)
        d_next = np.where(left, c, new_d)
        fc_re = np.where(left, np.nan, fd)
        fd_re = np.where(left, fc, np.nan)
        need_c = left
        need_d = ~left
        fc = np.where(need_c, fun(c_next), fc_re)
        fd = np.where(need_d, fun(d_next), fd_re)
        c, d = c_next, d_next
    cands = [(c, fc), (d, fd), (np.asarray(lo, float), fun(np.asarray(lo, float))),
             (np.asarray(hi, float), fun(np.asarray(hi, float)))]
    best_x, best_f = cands[0]
    for x, f in cands[1:]:
        better = f > best_f
        best_x = np.where(better, x, best_x)
        best_f = np.where(better, f, best_f)
    return best_x, best_f
