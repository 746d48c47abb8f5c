"""Sup-convolutions of densities on regular grids in dimension k <= 3.

H_lam(f, g)(x) = sup_y f(x + lam y)^(1 - lam) g(x - (1 - lam) y)^lam.

Writing u = x + lam y and v = x - (1 - lam) y gives x = (1 - lam) u + lam v,
so the supremum runs over pairs (u, v) with that combination. On grids it is
taken exhaustively: u ranges over the cells of f with g interpolated at the
matching v, and symmetrically v over the cells of g.
"""

import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DegenerateError, InvalidInputError

MAX_DIM = 3
_CHUNK = 1 << 22


class GridDensity:
    """Nonnegative values on a regular grid of cells.

    ``axes`` lists cell centers per axis (uniform spacing). Outside the
    extreme centers the density is extended as a constant for half a cell
    and is zero beyond. ``log_fn``, when given, is used for off-grid
    evaluation inside that extent instead of log-linear interpolation.
    """

    def __init__(self, axes, values, mass=None, log_concave=True, log_fn=None):
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.k = len(self.axes)
        if not 1 <= self.k <= MAX_DIM:
            raise InvalidInputError(f"grid dimension must be 1..{MAX_DIM}")
        self.values = np.asarray(values, dtype=float)
        shape = tuple(a.size for a in self.axes)
        if self.values.shape != shape:
            raise InvalidInputError(f"values shape {self.values.shape} does not match axes {shape}")
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise InvalidInputError("grid values must be finite and nonnegative")
        self.h = np.empty(self.k)
        for i, a in enumerate(self.axes):
            if a.size < 2:
                raise InvalidInputError("each axis needs at least two cells")
            d = np.diff(a)
            if np.any(d <= 0) or np.ptp(d) > 1e-9 * d.mean():
                raise InvalidInputError(f"axis {i} is not uniformly spaced")
            self.h[i] = (a[-1] - a[0]) / (a.size - 1)
        self.cell = float(np.prod(self.h))
        self.log_concave = bool(log_concave)
        self.log_fn = log_fn
        with np.errstate(divide="ignore"):
            self._log = np.log(self.values)
        if mass is not None and abs(self.mass - mass) > 1e-6 * max(1.0, abs(mass)):
            raise InvalidInputError(f"declared mass {mass} differs from grid mass {self.mass}")

    @classmethod
    def from_function(cls, log_fn, lo, hi, cells, log_concave=True, keep_fn=True):
        """Sample exp(log_fn) at the centers of ``cells`` cells tiling [lo, hi]."""
        lo, hi = np.atleast_1d(lo).astype(float), np.atleast_1d(hi).astype(float)
        cells = np.broadcast_to(np.atleast_1d(cells), lo.shape)
        axes = [a + (b - a) * (np.arange(m) + 0.5) / m for a, b, m in zip(lo, hi, cells)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        vals = np.exp(log_fn(mesh))
        return cls(axes, vals, log_concave=log_concave, log_fn=log_fn if keep_fn else None)

    @classmethod
    def from_density1d(cls, d, cells=2048):
        lo, hi = d.effective_support()
        return cls.from_function(lambda p: d.logpdf(p[..., 0]), lo, hi, cells,
                                 log_concave=d.is_log_concave())

    @property
    def shape(self):
        return self.values.shape

    @property
    def mass(self):
        return float(self.values.sum() * self.cell)

    @property
    def lo(self):
        return np.array([a[0] for a in self.axes]) - 0.5 * self.h

    @property
    def hi(self):
        return np.array([a[-1] for a in self.axes]) + 0.5 * self.h

    def mesh(self):
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def logpdf(self, pts):
        """log density at points of shape (..., k)."""
        pts = np.asarray(pts, dtype=float)
        shp = pts.shape[:-1]
        p = pts.reshape(-1, self.k)
        slack = 1e-9 * self.h
        outside = np.any((p < self.lo - slack) | (p > self.hi + slack), axis=1)
        if self.log_fn is not None:
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.asarray(self.log_fn(p), dtype=float)
        else:
            out = self._interp(p)
        out = np.where(outside, -np.inf, out)
        return out.reshape(shp)

    def _interp(self, p):
        idx = np.empty_like(p)
        base = np.empty(p.shape, dtype=int)
        for i, a in enumerate(self.axes):
            s = np.clip((p[:, i] - a[0]) / self.h[i], 0.0, a.size - 1.0)
            b = np.minimum(np.floor(s).astype(int), a.size - 2)
            base[:, i] = b
            idx[:, i] = s - b
        out = np.zeros(p.shape[0])
        for corner in itertools.product((0, 1), repeat=self.k):
            w = np.ones(p.shape[0])
            ix = []
            for i, c in enumerate(corner):
                w = w * (idx[:, i] if c else 1.0 - idx[:, i])
                ix.append(base[:, i] + c)
            L = self._log[tuple(ix)]
            out = out + np.where(w > 0, w * np.where(np.isinf(L), -np.inf, L), 0.0)
        return out

    def pdf(self, pts):
        return np.exp(self.logpdf(pts))

    def moments(self):
        """(mass, first moment, second moment matrix) by cell summation."""
        m = self.mesh().reshape(-1, self.k)
        w = self.values.ravel() * self.cell
        return float(w.sum()), m.T @ w, (m * w[:, None]).T @ m

    def is_log_concave(self, tol=1e-9):
        """Second differences of log values along axis lines and planar diagonals."""
        L = self._log
        pos = self.values > 0
        directions = []
        for i in range(self.k):
            e = [0] * self.k
            e[i] = 1
            directions.append(e)
        for i, j in itertools.combinations(range(self.k), 2):
            for sgn in (1, -1):
                e = [0] * self.k
                e[i], e[j] = 1, sgn
                directions.append(e)
        for e in directions:
            a, b, c = _shifted_triples(L, e)
            pa, pb, pc = _shifted_triples(pos, e)
            # zeros may only occur outside a contiguous positive run
            if np.any(pa & pc & ~pb):
                return False
            ok = pa & pb & pc
            if np.any((a + c - 2.0 * b)[ok] > tol):
                return False
        return True


def _shifted_triples(arr, e):
    """Views arr[x - e], arr[x], arr[x + e] over all x where all three exist."""
    sl = [[], [], []]
    for d in e:
        if d == 0:
            for s in sl:
                s.append(slice(None))
        else:
            lo = [slice(None, -2), slice(1, -1), slice(2, None)]
            if d < 0:
                lo = lo[::-1]
            for s, piece in zip(sl, lo):
                s.append(piece)
    return arr[tuple(sl[0])], arr[tuple(sl[1])], arr[tuple(sl[2])]


def _check_pair(f, g):
    if f.k != g.k:
        raise InvalidInputError("grids of different dimensions")
    if not (f.log_concave and g.log_concave):
        raise InvalidInputError("sup-convolution needs both inputs flagged log-concave")


def _combination_axes(f, g, lam):
    axes = []
    for i in range(f.k):
        lo = (1 - lam) * f.lo[i] + lam * g.lo[i]
        hi = (1 - lam) * f.hi[i] + lam * g.hi[i]
        m = max(f.axes[i].size, g.axes[i].size)
        axes.append(lo + (hi - lo) * (np.arange(m) + 0.5) / m)
    return axes


def _side_max(x, src, other, w_src, w_other):
    """Best u over src cells of w_src log src(u) + w_other log other((x - w_src u) / w_other)."""
    u = src.mesh().reshape(-1, src.k)
    lu = src._log.ravel()
    keep = np.isfinite(lu)
    u, lu = u[keep], lu[keep]
    best = np.full(x.shape[0], -np.inf)
    arg = np.zeros((x.shape[0], src.k))
    step = max(1, _CHUNK // max(1, u.shape[0] * src.k))
    for s in range(0, x.shape[0], step):
        xs = x[s:s + step]
        v = (xs[:, None, :] - w_src * u[None, :, :]) / w_other
        val = w_src * lu[None, :] + w_other * other.logpdf(v)
        j = val.argmax(axis=1)
        best[s:s + step] = val[np.arange(xs.shape[0]), j]
        arg[s:s + step] = u[j]
    return best, arg


def _objective(x, u, f, g, lam):
    return (1 - lam) * f.logpdf(u) + lam * g.logpdf((x - (1 - lam) * u) / lam)


def _refine(x, u, val, f, g, lam, rounds=40):
    # coordinate pattern search with halving steps; the objective is concave in u
    for r in range(rounds):
        delta = f.h / 2 ** (r + 1)
        for i in range(f.k):
            for sgn in (1.0, -1.0):
                cand = u.copy()
                cand[:, i] += sgn * delta[i]
                cv = _objective(x, cand, f, g, lam)
                better = cv > val
                u = np.where(better[:, None], cand, u)
                val = np.where(better, cv, val)
    return val


def sup_convolve(f, g, lam):
    """Grid of H_lam(f, g) over the lam-combination of the two supports."""
    _check_pair(f, g)
    lam = float(lam)
    if not 0.0 < lam < 1.0:
        raise InvalidInputError("lambda must lie in (0, 1)")
    axes = _combination_axes(f, g, lam)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    x = mesh.reshape(-1, f.k)
    with np.errstate(divide="ignore", invalid="ignore"):
        a, ua = _side_max(x, f, g, 1.0 - lam, lam)
        b, vb = _side_max(x, g, f, lam, 1.0 - lam)
        # express the g-side winner through its u so one refinement serves both
        ub = (x - lam * vb) / (1.0 - lam)
        u = np.where((a >= b)[:, None], ua, ub)
        val = np.maximum(a, b)
        finite = np.isfinite(val)
        val[finite] = _refine(x[finite], u[finite], val[finite], f, g, lam)
    logh = val.reshape(mesh.shape[:-1])
    return GridDensity(axes, np.exp(logh), log_concave=True)


# ----------------------------------------------------------------------------
# lambda summaries


@dataclass
class SupConvSummary:
    lambda_grid: np.ndarray
    K_lambda: np.ndarray
    K_total: float
    b: np.ndarray
    D: np.ndarray
    normalized: bool
    # full lambda grid including the endpoints 0 and 1, with H_0 = f, H_1 = g
    lambdas: np.ndarray = field(repr=False, default=None)
    profiles: list = field(repr=False, default=None)

    def log_concavity_defect(self):
        """Largest positive second difference of log K over the full lambda grid."""
        lam = self.lambdas
        K = np.array([p.mass for p in self.profiles])
        logk = np.log(K)
        h1, h2 = np.diff(lam)[:-1], np.diff(lam)[1:]
        second = (logk[2:] - logk[1:-1]) / h2 - (logk[1:-1] - logk[:-2]) / h1
        return float(max(0.0, second.max()))


def summarize(f, g, lambda_count=33):
    if lambda_count < 5:
        raise InvalidInputError("lambda_count must be at least 5")
    _check_pair(f, g)
    interior = np.linspace(0.0, 1.0, lambda_count + 2)[1:-1]
    lambdas = np.concatenate([[0.0], interior, [1.0]])
    profiles = [f] + [sup_convolve(f, g, lam) for lam in interior] + [g]
    m0, m1, m2 = [], [], []
    for p in profiles:
        a, b1, c = p.moments()
        m0.append(a)
        m1.append(b1)
        m2.append(c)
    K = float(np.trapezoid(m0, lambdas))
    b = np.trapezoid(np.array(m1), lambdas, axis=0) / K
    D = np.trapezoid(np.array(m2), lambdas, axis=0) / K - np.outer(b, b)
    D = 0.5 * (D + D.T)
    normalized = abs(f.mass - 1.0) <= 1e-6 and abs(g.mass - 1.0) <= 1e-6
    return SupConvSummary(interior, np.array(m0[1:-1]), K, b, D, normalized, lambdas, profiles)


def _sqrt_and_isqrt(D):
    w, Q = np.linalg.eigh(D)
    if w.min() <= 1e-12 * max(w.max(), 1e-300):
        raise DegenerateError("D is not positive-definite")
    return (Q * np.sqrt(w)) @ Q.T, (Q / np.sqrt(w)) @ Q.T


def normalized_profile(summary, f=None, g=None, cells=None):
    """The lambda-marginal of the normalized sup-convolution family, in isotropic coordinates.

    l(y) = sqrt(det D) / K * int_0^1 H_lam(D^(1/2) y + b) dlam.
    """
    Dh, Dih = _sqrt_and_isqrt(summary.D)
    k = summary.b.size
    profs = summary.profiles
    corners = []
    for p in profs:
        for c in itertools.product(*zip(p.lo, p.hi)):
            corners.append(Dih @ (np.array(c) - summary.b))
    corners = np.array(corners)
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    m = cells or max(a.size for p in profs for a in p.axes)
    axes = [a + (c - a) * (np.arange(m) + 0.5) / m for a, c in zip(lo, hi)]
    y = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    x = y @ Dh.T + summary.b
    vals = np.stack([p.pdf(x) for p in profs])
    l = np.trapezoid(vals, summary.lambdas, axis=0) * math.sqrt(np.linalg.det(summary.D)) / summary.K_total
    return GridDensity(axes, l, log_concave=True)


# ----------------------------------------------------------------------------
# closed forms


def gaussian_supconv_integral_closed_form(k, alpha):
    """Integral of sup_y sqrt(gamma_1(x + y) gamma_alpha(x - y)) over R^k."""
    if not alpha > 0:
        raise InvalidInputError("alpha must be positive")
    a = 1.0 / alpha ** 2
    return ((1.0 + a) / (2.0 * math.sqrt(a))) ** (k / 2.0)


def gaussian_grid(k, std=1.0, cells=None, width=9.0):
    cells = cells or {1: 2001, 2: 61, 3: 21}[k]
    return GridDensity.from_function(
        lambda p: -0.5 * np.sum(p * p, axis=-1) / std ** 2 - k * math.log(std * math.sqrt(2 * math.pi)),
        [-width * std] * k, [width * std] * k, cells)


class AMGMGap(NamedTuple):
    value: float
    middle: float
    lower_bound_smalla: float
    lower_bound_biga: float

    def holds(self, a):
        bound = self.lower_bound_smalla if a <= 4 else self.lower_bound_biga
        return self.value >= bound - 1e-15 and abs(self.value - self.middle) <= 1e-12 * self.value


def amgm_gap(a):
    """(1 + a) / (2 sqrt a) with its lower bounds.

    value - 1 = (a - 1)^2 / (2 sqrt(a) (sqrt(a) + 1)^2), and the denominator
    is at most 36 on (0, 4]; for a > 4 the value exceeds 5/4.
    """
    if not a > 0:
        raise InvalidInputError("a must be positive")
    ra = math.sqrt(a)
    value = (1.0 + a) / (2.0 * ra)
    middle = 1.0 + (ra - 1.0) ** 2 / (2.0 * ra)
    return AMGMGap(value, middle, 1.0 + (a - 1.0) ** 2 / 36.0, 1.25)


def gaussian_gap_lower_bound(k, alpha, c=1.0 / 360.0):
    """(1/2) (1 + c min{(alpha - 1)^2, 1})^(k/4).

    The default c combines the 1/36 small-a constant with the factor 10 lost
    when passing from a to alpha = a^(-1/2).
    """
    return 0.5 * (1.0 + c * min((alpha - 1.0) ** 2, 1.0)) ** (k / 4.0)


class VarianceDecomposition(NamedTuple):
    v: float
    c1_term: float
    c2_term: float


def variance_decomposition(x, y):
    """Var over L ~ U[0,1] of |L x + (1 - L) y|^2 and its two-term split.

    |L x + (1 - L) y|^2 = p + q L + r L^2 with p = |y|^2, r = |x - y|^2 and
    q = |x|^2 - |y|^2 - r, so v follows from Var L = 1/12, Var L^2 = 4/45
    and Cov(L, L^2) = 1/12.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx, ny = np.sum(x * x, axis=-1), np.sum(y * y, axis=-1)
    r = np.sum((x - y) ** 2, axis=-1)
    q = nx - ny - r
    v = q * q / 12.0 + r * r * (4.0 / 45.0) + q * r / 6.0
    c1 = (nx - ny) ** 2 / 12.0
    c2 = r * r / 180.0
    if np.ndim(v) == 0:
        return VarianceDecomposition(float(v), float(c1), float(c2))
    return VarianceDecomposition(v, c1, c2)


def verify_transport_variance_bound_1d(f, g, cells=2048, lambda_count=33):
    """(lhs, rhs) of the variance lower bound for the normalized profile.

    lhs = Var |X|^2 for X distributed by the profile, read off the (lam, x) grid.
    rhs = (1/K) int f(x) Var_L |D^(-1/2)((1 - L) x + L F(x) - b)|^2 dx with F
    the monotone map from f to g.
    """
    from .logconcave1d import monotone_transport

    fg = GridDensity.from_density1d(f, cells)
    gg = GridDensity.from_density1d(g, cells)
    s = summarize(fg, gg, lambda_count)
    b, D = float(s.b[0]), float(s.D[0, 0])
    e1, e2 = [], []
    for p in s.profiles:
        z = (p.axes[0] - b) ** 2 / D
        w = p.values * p.cell
        e1.append(np.sum(w * z))
        e2.append(np.sum(w * z * z))
    ez = np.trapezoid(e1, s.lambdas) / s.K_total
    ez2 = np.trapezoid(e2, s.lambdas) / s.K_total
    lhs = float(ez2 - ez * ez)
    F = monotone_transport(f, g)
    sd = math.sqrt(D)

    def integrand(t):
        xs = (np.asarray(t) - b) / sd
        ys = (F(t) - b) / sd
        return variance_decomposition(xs[..., None], ys[..., None]).v

    rhs = f.expect(integrand) / s.K_total
    return lhs, float(rhs)
