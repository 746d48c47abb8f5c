"""One-dimensional log-concave densities and monotone transport.

Densities are immutable objects exposing ``pdf``, ``cdf``, ``quantile`` and
moments. Integrals against a density go through :meth:`Density1D.expect`, a
composite Gauss-Legendre rule over panels that respect the density's kinks.
The second half of the module holds the one-dimensional inequalities
(Poincare, Grunbaum, conditioned-variance monotonicity, transport stability)
as functions returning the two sides of each inequality.
"""

import csv
import math
from collections import namedtuple
from dataclasses import dataclass

import numpy as np
from scipy import special

from ._quad import expm1_over, golden_max, log1p_over, panel_nodes
from .errors import (
    DomainError,
    EmptyConditioningError,
    InvalidInputError,
    UnsupportedTargetError,
)

__all__ = [
    "Density1D", "Uniform", "Gaussian", "Exponential", "Tabulated", "Conditioned",
    "TransportMap1D", "cdf", "quantile", "variance", "condition",
    "monotone_transport", "w2_1d", "supconv_1d_integral", "refined_supconv_integral",
    "check_bobkov_poincare", "check_density_envelope", "check_grunbaum",
    "check_conditioned_variance_monotone", "check_prop_transport_stability",
    "check_prop_pl_stability", "crude_w2_bounds", "random_logconcave",
    "density_from_spec", "read_tabulated_csv", "write_tabulated_csv",
]

DENSITY_FLOOR = 1e-300


class Density1D:
    """Base class for a probability density on the real line."""

    kind = "abstract"
    mass = 1.0

    # subclasses implement pdf, cdf, _ppf, support, breakpoints

    def logpdf(self, t):
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(t))

    def sf(self, t):
        return 1.0 - self.cdf(t)

    def _isf(self, p):
        return self._ppf(1.0 - np.asarray(p, dtype=float))

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(~(u > 0.0)) or np.any(~(u < 1.0)):
            raise DomainError("quantile level must lie in the open interval (0, 1)")
        return self._ppf(u)

    def expect(self, func):
        """Integral of ``func`` against the density."""
        x, w = panel_nodes(self.breakpoints())
        return float(np.sum(w * self.pdf(x) * func(x)))

    def mean(self):
        return self.expect(lambda t: t)

    def variance(self):
        m = self.mean()
        return self.expect(lambda t: (t - m) ** 2)

    def effective_support(self):
        bp = self.breakpoints()
        return float(bp[0]), float(bp[-1])

    def is_even(self, tol=1e-9):
        lo, hi = self.effective_support()
        if abs(lo + hi) > tol * max(1.0, hi - lo):
            return False
        t = np.linspace(0.0, hi, 257)
        a, b = self.pdf(t), self.pdf(-t)
        return bool(np.all(np.abs(a - b) <= tol * np.maximum(1.0, np.abs(a))))

    def is_log_concave(self):
        return True

    def bobkov_profile(self, n=1000):
        """The isoperimetric profile I(u) = rho(quantile(u)) on an interior grid."""
        u = (np.arange(n) + 0.5) / n
        return u, self.pdf(self._ppf(u))

    def bobkov_concave(self, n=1000, rtol=1e-7):
        u, prof = self.bobkov_profile(n)
        second = prof[:-2] - 2.0 * prof[1:-1] + prof[2:]
        return bool(np.all(second <= rtol * max(1.0, float(np.max(prof)))))


class Uniform(Density1D):
    kind = "uniform"

    def __init__(self, a, center=0.0):
        if not a > 0:
            raise InvalidInputError("uniform half-width must be positive")
        self.a = float(a)
        self.center = float(center)

    def __repr__(self):
        return f"Uniform(a={self.a:g}, center={self.center:g})"

    @property
    def support(self):
        return self.center - self.a, self.center + self.a

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        lo, hi = self.support
        return np.where((t >= lo) & (t <= hi), 0.5 / self.a, 0.0)

    def cdf(self, t):
        lo, _ = self.support
        return np.clip((np.asarray(t, dtype=float) - lo) / (2 * self.a), 0.0, 1.0)

    def sf(self, t):
        _, hi = self.support
        return np.clip((hi - np.asarray(t, dtype=float)) / (2 * self.a), 0.0, 1.0)

    def _ppf(self, u):
        return self.center - self.a + 2 * self.a * np.asarray(u, dtype=float)

    def _isf(self, p):
        return self.center + self.a - 2 * self.a * np.asarray(p, dtype=float)

    def breakpoints(self):
        lo, hi = self.support
        return np.linspace(lo, hi, 17)

    def mean(self):
        return self.center

    def variance(self):
        return self.a ** 2 / 3.0

    def is_even(self, tol=1e-9):
        return abs(self.center) <= tol


class Gaussian(Density1D):
    kind = "gaussian"

    def __init__(self, std, mean=0.0):
        if not std > 0:
            raise InvalidInputError("gaussian std must be positive")
        self.std = float(std)
        self.mu = float(mean)

    def __repr__(self):
        return f"Gaussian(std={self.std:g}, mean={self.mu:g})"

    support = (-math.inf, math.inf)

    def logpdf(self, t):
        z = (np.asarray(t, dtype=float) - self.mu) / self.std
        return -0.5 * z * z - math.log(self.std) - 0.5 * math.log(2 * math.pi)

    def pdf(self, t):
        return np.exp(self.logpdf(t))

    def cdf(self, t):
        return special.ndtr((np.asarray(t, dtype=float) - self.mu) / self.std)

    def sf(self, t):
        return special.ndtr(-(np.asarray(t, dtype=float) - self.mu) / self.std)

    def _ppf(self, u):
        return self.mu + self.std * special.ndtri(np.asarray(u, dtype=float))

    def _isf(self, p):
        return self.mu - self.std * special.ndtri(np.asarray(p, dtype=float))

    def breakpoints(self):
        return self.mu + self.std * np.linspace(-12.0, 12.0, 97)

    def mean(self):
        return self.mu

    def variance(self):
        return self.std ** 2

    def is_even(self, tol=1e-9):
        return abs(self.mu) <= tol


class Exponential(Density1D):
    """rate * exp(-rate (t - loc)) on [loc, inf)."""

    kind = "exponential"

    def __init__(self, rate=1.0, loc=0.0):
        if not rate > 0:
            raise InvalidInputError("exponential rate must be positive")
        self.rate = float(rate)
        self.loc = float(loc)

    def __repr__(self):
        return f"Exponential(rate={self.rate:g}, loc={self.loc:g})"

    @property
    def support(self):
        return self.loc, math.inf

    def logpdf(self, t):
        t = np.asarray(t, dtype=float)
        out = math.log(self.rate) - self.rate * (t - self.loc)
        return np.where(t >= self.loc, out, -np.inf)

    def pdf(self, t):
        return np.exp(self.logpdf(t))

    def cdf(self, t):
        s = np.maximum(np.asarray(t, dtype=float) - self.loc, 0.0)
        return -np.expm1(-self.rate * s)

    def sf(self, t):
        s = np.maximum(np.asarray(t, dtype=float) - self.loc, 0.0)
        return np.exp(-self.rate * s)

    def _ppf(self, u):
        return self.loc - np.log1p(-np.asarray(u, dtype=float)) / self.rate

    def _isf(self, p):
        with np.errstate(divide="ignore"):
            return self.loc - np.log(np.asarray(p, dtype=float)) / self.rate

    def breakpoints(self):
        return self.loc + np.linspace(0.0, 45.0 / self.rate, 181)

    def mean(self):
        return self.loc + 1.0 / self.rate

    def variance(self):
        return 1.0 / self.rate ** 2


class Tabulated(Density1D):
    """Density given at uniformly spaced nodes t0 + i*h.

    Between nodes log(rho) is interpolated linearly; a segment touching a zero
    node is interpolated linearly in rho instead. Outside the grid the density
    is zero.
    """

    kind = "tabulated"

    def __init__(self, t0, h, rho, normalize=False):
        rho = np.asarray(rho, dtype=float)
        if rho.ndim != 1 or rho.size < 2:
            raise InvalidInputError("tabulated density needs at least two nodes")
        if not h > 0:
            raise InvalidInputError("grid spacing must be positive")
        if np.any(rho < 0) or not np.all(np.isfinite(rho)):
            raise InvalidInputError("density values must be finite and non-negative")
        self.t0 = float(t0)
        self.h = float(h)
        r0, r1 = rho[:-1], rho[1:]
        loglin = (r0 > 0) & (r1 > 0)
        with np.errstate(divide="ignore"):
            logr = np.log(rho)
        delta = np.where(loglin, np.diff(np.where(np.isfinite(logr), logr, 0.0)), 0.0)
        seg = np.where(loglin, self.h * r0 * expm1_over(delta), 0.5 * self.h * (r0 + r1))
        mass = float(np.sum(seg))
        if not mass > 0:
            raise InvalidInputError("tabulated density has zero mass")
        if normalize:
            rho = rho / mass
            seg = seg / mass
            mass = 1.0
            with np.errstate(divide="ignore"):
                logr = np.log(rho)
        self.rho = rho
        self.rho.setflags(write=False)
        self._logr = logr
        self._loglin = loglin
        self._delta = delta
        self._cum = np.concatenate([[0.0], np.cumsum(seg)])
        self.mass = mass

    def __repr__(self):
        return f"Tabulated(t0={self.t0:g}, h={self.h:g}, nodes={self.rho.size})"

    @property
    def nodes(self):
        return self.t0 + self.h * np.arange(self.rho.size)

    @property
    def support(self):
        return self.t0, self.t0 + self.h * (self.rho.size - 1)

    def _locate(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.floor((t - self.t0) / self.h).astype(np.int64), 0, self.rho.size - 2)
        s = t - (self.t0 + idx * self.h)
        return t, idx, s

    def pdf(self, t):
        t, idx, s = self._locate(t)
        lo, hi = self.support
        r0, r1 = self.rho[idx], self.rho[idx + 1]
        ll = r0 * np.exp(self._delta[idx] * s / self.h)
        lin = r0 + (r1 - r0) * s / self.h
        val = np.where(self._loglin[idx], ll, lin)
        return np.where((t >= lo) & (t <= hi), np.maximum(val, 0.0), 0.0)

    def _partial(self, idx, s):
        r0, r1 = self.rho[idx], self.rho[idx + 1]
        d = self._delta[idx]
        ll = r0 * s * expm1_over(d * s / self.h)
        lin = r0 * s + (r1 - r0) * s * s / (2 * self.h)
        return np.where(self._loglin[idx], ll, lin)

    def cdf(self, t):
        t, idx, s = self._locate(t)
        lo, hi = self.support
        s = np.clip(s, 0.0, self.h)
        val = (self._cum[idx] + self._partial(idx, s)) / self.mass
        val = np.where(t <= lo, 0.0, np.where(t >= hi, 1.0, val))
        return np.clip(val, 0.0, 1.0)

    def _ppf(self, u):
        u = np.asarray(u, dtype=float)
        target = u * self.mass
        idx = np.clip(np.searchsorted(self._cum, target, side="right") - 1, 0, self.rho.size - 2)
        rr = np.maximum(target - self._cum[idx], 0.0)
        r0, r1 = self.rho[idx], self.rho[idx + 1]
        d = self._delta[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            x = np.maximum(d * rr / (r0 * self.h), -1.0 + 1e-16)
            s_ll = rr / r0 * log1p_over(x)
            a = (r1 - r0) / (2 * self.h)
            disc = np.sqrt(np.maximum(r0 * r0 + 4 * a * rr, 0.0))
            s_lin = 2 * rr / (r0 + disc)
        s = np.where(self._loglin[idx], s_ll, s_lin)
        s = np.clip(np.nan_to_num(s, nan=0.0), 0.0, self.h)
        return self.t0 + idx * self.h + s

    def breakpoints(self):
        return self.nodes

    def variance(self):
        if abs(self.mass - 1.0) > 1e-6:
            raise InvalidInputError(f"tabulated density has mass {self.mass:.9g}, expected 1")
        return super().variance()

    def is_log_concave(self, tol=1e-9):
        pos = self.rho > 0
        idx = np.flatnonzero(pos)
        if idx.size == 0:
            return False
        # zeros are allowed only at the two ends of the grid
        if idx[-1] - idx[0] + 1 != idx.size:
            return False
        lr = self._logr[idx[0]: idx[-1] + 1]
        if lr.size >= 3 and np.any(lr[:-2] - 2 * lr[1:-1] + lr[2:] > tol):
            return False
        # a linear segment down to a zero node has log-slope 1/h at its positive end
        if idx[0] > 0 and lr.size >= 2 and lr[1] - lr[0] > 1.0 + tol:
            return False
        if idx[-1] < self.rho.size - 1 and lr.size >= 2 and lr[-2] - lr[-1] > 1.0 + tol:
            return False
        return True

    def vanishes_inside(self):
        idx = np.flatnonzero(self.rho > 0)
        return idx.size == 0 or idx[-1] - idx[0] + 1 != idx.size


class Conditioned(Density1D):
    """``base`` restricted to [lo, hi] and renormalized."""

    kind = "conditioned"

    def __init__(self, base, lo, hi):
        blo, bhi = base.support
        self.base = base
        self.lo = max(float(lo), blo)
        self.hi = min(float(hi), bhi)
        if not self.hi > self.lo:
            raise EmptyConditioningError("conditioning interval misses the support")
        self._plo = float(base.cdf(self.lo))
        self._slo = float(base.sf(self.lo))
        z_low = float(base.cdf(self.hi)) - self._plo
        z_high = self._slo - float(base.sf(self.hi))
        self._right = self._plo > 0.5
        self.z = z_high if self._right else z_low
        if not self.z > 0:
            raise EmptyConditioningError("conditioning interval has zero mass")

    def __repr__(self):
        return f"Conditioned({self.base!r}, [{self.lo:g}, {self.hi:g}])"

    @property
    def support(self):
        return self.lo, self.hi

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t >= self.lo) & (t <= self.hi)
        return np.where(inside, self.base.pdf(t) / self.z, 0.0)

    def cdf(self, t):
        tc = np.clip(np.asarray(t, dtype=float), self.lo, self.hi)
        if self._right:
            val = (self._slo - self.base.sf(tc)) / self.z
        else:
            val = (self.base.cdf(tc) - self._plo) / self.z
        return np.clip(val, 0.0, 1.0)

    def sf(self, t):
        tc = np.clip(np.asarray(t, dtype=float), self.lo, self.hi)
        if self._right:
            val = (self.base.sf(tc) - (self._slo - self.z)) / self.z
        else:
            val = (self._plo + self.z - self.base.cdf(tc)) / self.z
        return np.clip(val, 0.0, 1.0)

    def _ppf(self, u):
        u = np.asarray(u, dtype=float)
        if self._right:
            out = self.base._isf(np.maximum(self._slo - u * self.z, 0.0))
        else:
            out = self.base._ppf(np.minimum(self._plo + u * self.z, 1.0))
        return np.clip(out, self.lo, self.hi)

    def breakpoints(self):
        bp = self.base.breakpoints()
        lo = max(self.lo, bp[0])
        hi = min(self.hi, bp[-1])
        inner = bp[(bp > lo) & (bp < hi)]
        if inner.size < 16:
            inner = np.union1d(inner, np.linspace(lo, hi, 18)[1:-1])
        return np.concatenate([[lo], inner, [hi]])

    def is_log_concave(self):
        return self.base.is_log_concave()

    def is_even(self, tol=1e-9):
        return abs(self.lo + self.hi) <= tol * max(1.0, self.hi - self.lo) and self.base.is_even(tol)


# ----------------------------------------------------------------------------
# operations


def cdf(d, t):
    return d.cdf(t)


def quantile(d, u):
    return d.quantile(u)


def variance(d):
    return d.variance()


def condition(d, J):
    """Restrict ``d`` to the interval ``J = (lo, hi)`` (rays allowed)."""
    lo, hi = J
    if isinstance(d, Uniform):
        slo, shi = d.support
        lo, hi = max(lo, slo), min(hi, shi)
        if not hi > lo:
            raise EmptyConditioningError("conditioning interval misses the support")
        return Uniform((hi - lo) / 2.0, (hi + lo) / 2.0)
    if isinstance(d, Conditioned):
        return Conditioned(d.base, max(lo, d.lo), min(hi, d.hi))
    return Conditioned(d, lo, hi)


@dataclass(frozen=True)
class TransportMap1D:
    """The non-decreasing map F = Phi_target^{-1} o Phi_source."""

    source: Density1D
    target: Density1D

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        u = self.source.cdf(t)
        p = self.source.sf(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            left = self.target._ppf(np.minimum(u, 0.5))
            right = self.target._isf(np.minimum(p, 0.5))
        return np.where(u <= 0.5, left, right)

    def derivative(self, t):
        """F'(t) = rho_source(t) / rho_target(F(t)); target density floored at 1e-300."""
        t = np.asarray(t, dtype=float)
        return self.source.pdf(t) / np.maximum(self.target.pdf(self(t)), DENSITY_FLOOR)

    def underflow_mask(self, t):
        """True where the target density at F(t) underflowed the floor."""
        return self.target.pdf(self(np.asarray(t, dtype=float))) < DENSITY_FLOOR

    def midpoint(self, t):
        return 0.5 * (self(t) + np.asarray(t, dtype=float))


def monotone_transport(d1, d2):
    if isinstance(d2, Tabulated) and d2.vanishes_inside():
        raise UnsupportedTargetError("target density vanishes inside its support")
    return TransportMap1D(d1, d2)


def w2_1d(d1, d2):
    F = monotone_transport(d1, d2)
    return math.sqrt(max(d1.expect(lambda t: (F(t) - t) ** 2), 0.0))


def _require_log_concave(*ds):
    for d in ds:
        if not d.is_log_concave():
            raise InvalidInputError(f"{d!r} is not log-concave")


def supconv_1d_integral(f, g, n_grid=4096):
    """Integral of h(t) = sup_s sqrt(f(t+s) g(t-s)).

    For each t on an (n_grid+1)-point grid over (supp f + supp g)/2 the
    concave objective log f(x) + log g(2t - x) is maximized over the feasible
    x-interval by golden section; the t-integral is a trapezoid sum with one
    Richardson step against the half-resolution grid.
    """
    _require_log_concave(f, g)
    flo, fhi = f.effective_support()
    glo, ghi = g.effective_support()
    n_grid += n_grid % 2
    t = np.linspace((flo + glo) / 2, (fhi + ghi) / 2, n_grid + 1)
    lo = np.maximum(flo, 2 * t - ghi)
    hi = np.minimum(fhi, 2 * t - glo)
    lo, hi = np.minimum(lo, hi), np.maximum(lo, hi)

    def obj(x):
        with np.errstate(divide="ignore", invalid="ignore"):
            v = f.logpdf(x) + g.logpdf(2 * t - x)
        return np.where(np.isnan(v), -np.inf, v)

    _, best = golden_max(obj, lo, hi, iters=70)
    h = np.exp(0.5 * best)
    dt = t[1] - t[0]
    fine = dt * (h.sum() - 0.5 * (h[0] + h[-1]))
    hc = h[::2]
    coarse = 2 * dt * (hc.sum() - 0.5 * (hc[0] + hc[-1]))
    return float(fine + (fine - coarse) / 3.0)


def refined_supconv_integral(f, g, mf=1.0, mg=1.0):
    """Integral of h with h(S(x)) = sqrt(f(x) g(F(x))), S = (F + id)/2.

    ``f`` and ``g`` are probability densities; ``mf`` and ``mg`` are the masses
    of the unnormalized functions they stand for. Computed through the change
    of variables y = S(x).
    """
    F = monotone_transport(f, g)
    x, w = panel_nodes(f.breakpoints())
    fx = f.pdf(x)
    keep = fx > 0
    x, w, fx = x[keep], w[keep], fx[keep]
    integrand = np.sqrt(fx * g.pdf(F(x))) * (F.derivative(x) + 1.0) / 2.0
    return float(np.sum(w * integrand) * math.sqrt(mf * mg))


# ----------------------------------------------------------------------------
# inequality witnesses

PoincareSides = namedtuple("PoincareSides", "lhs rhs")
EnvelopeWitness = namedtuple("EnvelopeWitness", "sup_violation_a inf_margin_b")
TwoSides = namedtuple("TwoSides", "lhs rhs")


def check_bobkov_poincare(d, test_fn, test_deriv):
    """Both sides of  int f^2 dmu <= 12 Var(mu) int f'^2 dmu  (f centered)."""
    lhs = d.expect(lambda t: test_fn(t) ** 2)
    rhs = 12.0 * d.variance() * d.expect(lambda t: test_deriv(t) ** 2)
    return PoincareSides(lhs, rhs)


def check_density_envelope(d, c=1.0 / 32.0, n_grid=1000):
    b = d.mean()
    sigma = math.sqrt(d.variance())
    lo, hi = d.effective_support()
    t = np.linspace(lo, hi, n_grid)
    a_part = float(np.max(sigma * d.pdf(t) * np.exp(c * np.abs(t - b) / sigma)))
    r = sigma / 32.0
    near = np.linspace(max(b - r, lo), min(b + r, hi), n_grid)
    b_part = float(np.min(sigma * d.pdf(near)))
    return EnvelopeWitness(a_part, b_part)


def check_grunbaum(d):
    """Mass to the right of the barycenter."""
    return float(d.sf(d.mean()))


def check_conditioned_variance_monotone(d, J1, J2):
    if J1[0] < J2[0] or J1[1] > J2[1]:
        raise InvalidInputError("J1 must be contained in J2")
    return condition(d, J1).variance(), condition(d, J2).variance()


def _require_even(*ds):
    for d in ds:
        if not d.is_even():
            raise InvalidInputError(f"{d!r} is not even")


def check_prop_transport_stability(d1, d2):
    """W2^2 and sigma^2 * int min{(F'-1)^2, 1} dmu_1."""
    _require_even(d1, d2)
    F = monotone_transport(d1, d2)
    lhs = w2_1d(d1, d2) ** 2
    x, w = panel_nodes(d1.breakpoints())
    px = d1.pdf(x)
    keep = px > 0
    x, w, px = x[keep], w[keep], px[keep]
    integrand = np.minimum((F.derivative(x) - 1.0) ** 2, 1.0)
    sigma2 = d1.variance() + d2.variance()
    return TwoSides(lhs, sigma2 * float(np.sum(w * px * integrand)))


def check_prop_pl_stability(f, g):
    """W2^2 and sigma^2 * (int h - 1) for the refined sup-convolution h."""
    _require_even(f, g)
    lhs = w2_1d(f, g) ** 2
    sigma2 = f.variance() + g.variance()
    return TwoSides(lhs, sigma2 * (refined_supconv_integral(f, g) - 1.0))


def crude_w2_bounds(d1, d2, mode="even", A=None, B=None):
    v = d1.variance() + d2.variance()
    if mode == "even":
        _require_even(d1, d2)
        return math.sqrt(2.0 * v)
    if mode == "rays":
        for d, start in ((d1, A), (d2, B)):
            if start is None or not math.isclose(d.support[0], start, abs_tol=1e-12):
                raise InvalidInputError("rays mode needs supports [A, inf) and [B, inf)")
            if not math.isinf(d.support[1]) and not isinstance(d, Tabulated):
                raise InvalidInputError("rays mode needs ray supports")
            lo, hi = d.effective_support()
            vals = d.pdf(np.linspace(lo, hi, 1001))
            if np.any(np.diff(vals) > 1e-12 * max(1.0, float(vals.max()))):
                raise InvalidInputError("rays mode needs non-increasing densities")
        return abs(B - A) + 10.0 * math.sqrt(v)
    raise InvalidInputError(f"unknown mode {mode!r}")


# ----------------------------------------------------------------------------
# construction helpers


def random_logconcave(rng, n_nodes=257, knots=8, even=False):
    """exp(-phi) for a random convex piecewise-linear phi, tabulated and normalized."""
    if even:
        hi = rng.uniform(0.5, 4.0)
        lo = -hi
        kpos = np.sort(rng.uniform(0.0, hi, knots))
        slopes = np.sort(np.abs(rng.normal(0.0, 3.0, knots + 1)))
        slopes[0] = 0.0

        def phi(t):
            a = np.abs(t)
            out = slopes[0] * a
            for k, ds in zip(kpos, np.diff(slopes)):
                out = out + ds * np.maximum(a - k, 0.0)
            return out
    else:
        lo = -rng.uniform(0.5, 4.0)
        hi = rng.uniform(0.5, 4.0)
        kpos = np.sort(rng.uniform(lo, hi, knots))
        slopes = np.sort(rng.normal(0.0, 3.0, knots + 1))

        def phi(t):
            out = slopes[0] * (t - lo)
            for k, ds in zip(kpos, np.diff(slopes)):
                out = out + ds * np.maximum(t - k, 0.0)
            return out

    t = np.linspace(lo, hi, n_nodes)
    vals = phi(t)
    rho = np.exp(-(vals - vals.min()))
    return Tabulated(lo, (hi - lo) / (n_nodes - 1), rho, normalize=True)


def density_from_spec(spec):
    """Build a density from a descriptor such as {"kind": "gaussian", "std": 2}."""
    kind = spec.get("kind")
    if kind == "uniform":
        return Uniform(spec["a"], spec.get("center", 0.0))
    if kind == "gaussian":
        return Gaussian(spec.get("std", 1.0), spec.get("mean", 0.0))
    if kind == "exponential":
        return Exponential(spec.get("rate", 1.0), spec.get("loc", 0.0))
    if kind == "tabulated":
        if "path" in spec:
            return read_tabulated_csv(spec["path"])
        return Tabulated(spec["t0"], spec["h"], spec["rho"], normalize=spec.get("normalize", True))
    raise InvalidInputError(f"unknown density kind {kind!r}")


def read_tabulated_csv(path, normalize=False):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [c.strip() for c in header] != ["t", "rho"]:
            raise InvalidInputError("tabulated CSV must have header 't,rho'")
        rows = [(float(a), float(b)) for a, b in reader]
    t = np.array([r[0] for r in rows])
    rho = np.array([r[1] for r in rows])
    if t.size < 2:
        raise InvalidInputError("tabulated CSV needs at least two rows")
    h = (t[-1] - t[0]) / (t.size - 1)
    if np.any(np.abs(np.diff(t) - h) > 1e-9 * abs(h)):
        raise InvalidInputError("tabulated CSV grid is not uniformly spaced")
    return Tabulated(t[0], h, rho, normalize=normalize)


def write_tabulated_csv(d, path):
    with open(path, "w", newline="") as fh:
        fh.write("t,rho\n")
        for t, r in zip(d.nodes, d.rho):
            fh.write(f"{float(t)!r},{float(r)!r}\n")
