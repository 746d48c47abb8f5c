"""Wasserstein-2 distances between point clouds and Knothe maps between bodies.

Exact W2 solves the assignment problem; the entropic variant runs log-domain
Sinkhorn with epsilon scaling. Knothe maps between uniform measures on
unconditional bodies come in two forms: a product of 1D monotone maps when
both bodies are boxes, and a grid form for everything else, where each
conditional density is a row of a rasterized marginal.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from . import bodies as B
from .errors import ConvergenceError, InvalidInputError
from .logconcave1d import Uniform, monotone_transport, w2_1d

MAX_EXACT_N = 2048
MAX_ENTROPIC_N = 20000


def _pair(src, tgt):
    src = np.atleast_2d(np.asarray(src, dtype=float))
    tgt = np.atleast_2d(np.asarray(tgt, dtype=float))
    if src.shape != tgt.shape:
        raise InvalidInputError(f"point clouds differ in shape: {src.shape} vs {tgt.shape}")
    return src, tgt


def _sqdist(a, b):
    d = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * a @ b.T
    return np.maximum(d, 0.0)


@dataclass(frozen=True)
class EmpiricalCoupling:
    source: np.ndarray
    target: np.ndarray
    plan: np.ndarray  # permutation (exact) or N x N matrix (entropic)
    cost: float  # mean squared displacement under the plan
    eps: float = 0.0
    gap_bound: float = 0.0

    @property
    def w2(self):
        return math.sqrt(self.cost)


def exact_coupling(src, tgt):
    src, tgt = _pair(src, tgt)
    if src.shape[0] > MAX_EXACT_N:
        raise InvalidInputError(f"exact assignment limited to N <= {MAX_EXACT_N}")
    C = _sqdist(src, tgt)
    rows, cols = linear_sum_assignment(C)
    # recompute from differences: the expanded form above loses exact zeros
    cost = float(np.mean(np.sum((src[rows] - tgt[cols]) ** 2, axis=1)))
    return EmpiricalCoupling(src, tgt, cols, cost)


def w2_exact(src, tgt):
    return exact_coupling(src, tgt).w2


def default_eps(src, tgt):
    C = _sqdist(src[:512], tgt[:512])
    return 0.01 * float(np.median(C))


def _round_to_marginals(P, a, b):
    """Feasible plan with marginals exactly (a, b), changing P by at most 2x its marginal error in l1."""
    r = P.sum(axis=1)
    P = P * np.minimum(1.0, a / np.maximum(r, 1e-300))[:, None]
    c = P.sum(axis=0)
    P = P * np.minimum(1.0, b / np.maximum(c, 1e-300))[None, :]
    er = a - P.sum(axis=1)
    ec = b - P.sum(axis=0)
    s = er.sum()
    if s > 0:
        P = P + np.outer(er, ec) / s
    return P


def entropic_coupling(src, tgt, eps=None, tol=1e-8, max_iter=10000, omega=1.5):
    """Sinkhorn plan with uniform marginals.

    Iterates in the log domain with epsilon scaling and over-relaxation at the
    final level, then rounds the plan onto the exact marginals. The optimal
    cost is bounded below by the plan cost minus ``gap_bound``: eps log N from
    the entropy term (the entropy of a plan with uniform marginals lies in
    [log N, 2 log N]) plus the cost of the rounding step.
    """
    src, tgt = _pair(src, tgt)
    N = src.shape[0]
    if N > MAX_ENTROPIC_N:
        raise InvalidInputError(f"entropic solver limited to N <= {MAX_ENTROPIC_N}")
    eps = default_eps(src, tgt) if eps is None else float(eps)
    if not eps > 0:
        raise InvalidInputError("eps must be positive")
    C = _sqdist(src, tgt)
    cmax = max(float(C.max()), 1e-300)
    loga = np.full(N, -math.log(N))
    f = np.zeros(N)
    g = np.zeros(N)
    # stop once rounding costs at most a quarter of the entropic slack
    final_tol = max(tol, eps * math.log(N) / (4.0 * cmax))
    e = max(eps, cmax)
    it = 0
    while True:
        final = e <= eps
        level_tol = final_tol if final else max(final_tol, 1e-4)
        w = omega if final else 1.0
        while True:
            f = (1 - w) * f + w * e * (loga - logsumexp((g[None, :] - C) / e, axis=1))
            g = (1 - w) * g + w * e * (loga - logsumexp((f[:, None] - C) / e, axis=0))
            it += 1
            if it % 10 == 0 or it >= max_iter:
                logP = (f[:, None] + g[None, :] - C) / e
                err = float(np.abs(np.exp(logsumexp(logP, axis=1)) - 1.0 / N).sum())
                if err <= level_tol or it >= max_iter:
                    break
        if final or it >= max_iter:
            break
        e = max(eps, e / 4.0)
    if err > final_tol or e > eps:
        raise ConvergenceError(f"Sinkhorn stalled after {it} iterations", residual=err)
    P = np.exp((f[:, None] + g[None, :] - C) / eps)
    col_err = float(np.abs(P.sum(axis=0) - 1.0 / N).sum())
    P = _round_to_marginals(P, np.full(N, 1.0 / N), np.full(N, 1.0 / N))
    cost = float(np.sum(P * C))
    gap = eps * math.log(N) + 2.0 * cmax * (err + col_err)
    return EmpiricalCoupling(src, tgt, P, cost, eps, gap)


def w2_entropic(src, tgt, eps=None):
    """(value, gap): the exact W2 lies in [value - gap, value]."""
    cp = entropic_coupling(src, tgt, eps)
    value = cp.w2
    lower = math.sqrt(max(cp.cost - cp.gap_bound, 0.0))
    return value, value - lower


# ----------------------------------------------------------------------------
# Knothe maps


class KnotheMap:
    """Triangular monotone map pushing uniform(source) to uniform(target)."""

    form = "abstract"

    def __init__(self, source, target):
        self.source, self.target = source, target
        self.dim = source.dim

    def __call__(self, x):
        return self.evaluate(np.atleast_2d(np.asarray(x, dtype=float)))[0]

    def diag_derivatives(self, x):
        return self.evaluate(np.atleast_2d(np.asarray(x, dtype=float)))[1]

    def jacobian(self, x):
        return np.prod(self.diag_derivatives(x), axis=1)

    def midpoint(self, x):
        """S(x) = (x + F(x)) / 2."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return 0.5 * (x + self(x))

    def midpoint_jacobian(self, x):
        return np.prod(0.5 * (1.0 + self.diag_derivatives(x)), axis=1)

    def evaluate(self, x):
        raise NotImplementedError


class IdentityKnothe(KnotheMap):
    form = "identity"

    def evaluate(self, x):
        return x.copy(), np.ones_like(x)


class ProductKnothe(KnotheMap):
    """Box to box: coordinate j moves by the 1D monotone map of the j-th marginals."""

    form = "product"

    def __init__(self, source, target):
        super().__init__(source, target)
        self.src_marginals = [Uniform(a, c) for a, c in zip(source.a, source.c)]
        self.tgt_marginals = [Uniform(a, c) for a, c in zip(target.a, target.c)]
        self.maps = [monotone_transport(s, t) for s, t in zip(self.src_marginals, self.tgt_marginals)]

    def evaluate(self, x):
        y = np.column_stack([m(x[:, j]) for j, m in enumerate(self.maps)])
        lam = np.column_stack([m.derivative(x[:, j]) for j, m in enumerate(self.maps)])
        return y, lam


def _grid_cells(n):
    return {1: 512, 2: 128, 3: 64, 4: 32, 5: 16}.get(n, 12)


class _Raster:
    """Occupancy grid of a body with cumulative marginals over trailing axes."""

    def __init__(self, body, m):
        n = body.dim
        lo, hi = body.bounding_box()
        self.lo, self.h, self.m = lo, (hi - lo) / m, m
        sub = 2 if n <= 4 else 1
        offs = (np.arange(sub) + 0.5) / sub
        if m ** n > 1 << 22:
            raise InvalidInputError("grid too large for the Knothe raster")
        occ = np.zeros((m,) * n)
        cells = np.array(list(itertools.product(range(m), repeat=n)), dtype=float)
        for o in itertools.product(offs, repeat=n):
            pts = lo + (cells + np.array(o)) * self.h
            hit = np.zeros(len(pts))
            for s in range(0, len(pts), 1 << 18):
                hit[s:s + (1 << 18)] = body.contains(pts[s:s + (1 << 18)])
            occ += hit.reshape((m,) * n)
        occ /= sub ** n
        # marginals[j] has j+1 axes: prefix coordinates and coordinate j
        self.marginals = [occ.sum(axis=tuple(range(j + 1, n))) for j in range(n)]

    def rows(self, prefix, j):
        """Conditional histogram rows for coordinate j at continuous prefixes."""
        N = prefix.shape[0]
        M = self.marginals[j]
        if j == 0:
            return np.broadcast_to(M, (N, self.m)).copy()
        s = np.clip((prefix[:, :j] - self.lo[:j]) / self.h[:j] - 0.5, 0.0, self.m - 1.0)
        base = np.minimum(np.floor(s).astype(int), self.m - 2)
        frac = s - base
        out = np.zeros((N, self.m))
        for corner in itertools.product((0, 1), repeat=j):
            w = np.ones(N)
            idx = []
            for i, c in enumerate(corner):
                w = w * (frac[:, i] if c else 1.0 - frac[:, i])
                idx.append(base[:, i] + c)
            out += w[:, None] * M[tuple(idx)]
        return out

    def safe_rows(self, prefix, j):
        r = self.rows(prefix, j)
        empty = r.sum(axis=1) <= 0
        p = prefix.copy()
        # unconditional bodies: slices grow as the prefix shrinks toward 0
        for _ in range(60):
            if not empty.any():
                break
            p[empty] *= 0.9
            r[empty] = self.rows(p[empty], j)
            empty = r.sum(axis=1) <= 0
        return r

    def cdf(self, rows, t, j):
        s = np.clip((t - self.lo[j]) / self.h[j], 0.0, float(self.m))
        i = np.minimum(np.floor(s).astype(int), self.m - 1)
        frac = s - i
        cum = np.concatenate([np.zeros((rows.shape[0], 1)), np.cumsum(rows, axis=1)], axis=1)
        ar = np.arange(rows.shape[0])
        total = cum[:, -1]
        u = (cum[ar, i] + frac * rows[ar, i]) / total
        dens = rows[ar, i] / (self.h[j] * total)
        return u, dens

    def quantile(self, rows, u, j):
        cum = np.concatenate([np.zeros((rows.shape[0], 1)), np.cumsum(rows, axis=1)], axis=1)
        target = u * cum[:, -1]
        i = np.minimum(np.sum(cum[:, 1:] < target[:, None], axis=1), self.m - 1)
        ar = np.arange(rows.shape[0])
        r = rows[ar, i]
        frac = np.where(r > 0, (target - cum[ar, i]) / np.where(r > 0, r, 1.0), 0.0)
        y = self.lo[j] + (i + np.clip(frac, 0.0, 1.0)) * self.h[j]
        dens = r / (self.h[j] * cum[:, -1])
        return y, dens


class GridKnothe(KnotheMap):
    form = "grid"

    def __init__(self, source, target, cells=None):
        super().__init__(source, target)
        m = cells or _grid_cells(self.dim)
        self.src = _Raster(source, m)
        self.tgt = _Raster(target, m)

    def evaluate(self, x):
        N, n = x.shape
        y = np.empty_like(x)
        lam = np.empty_like(x)
        for j in range(n):
            u, fd = self.src.cdf(self.src.safe_rows(x, j), x[:, j], j)
            y[:, j], gd = self.tgt.quantile(self.tgt.safe_rows(y, j), u, j)
            lam[:, j] = fd / np.where(gd > 0, gd, np.inf)
        return y, lam


def knothe_build(source, target, cells=None):
    if source.dim != target.dim:
        raise InvalidInputError("bodies must share the dimension")
    if not (source.unconditional and target.unconditional):
        raise InvalidInputError("Knothe maps are built for unconditional bodies only")
    if source == target:
        return IdentityKnothe(source, target)
    if isinstance(source, B.Box) and isinstance(target, B.Box):
        return ProductKnothe(source, target)
    return GridKnothe(source, target, cells)


@dataclass(frozen=True)
class KnotheCost:
    value: float
    se: float
    exact: bool


def knothe_cost(kmap, source=None, samples=None):
    """Integral of |F(x) - x|^2 against the uniform measure on the source.

    Product maps integrate per axis exactly; grid maps average over source
    samples (a SampleBatch or array) with a batch-means standard error.
    """
    if isinstance(kmap, IdentityKnothe):
        return KnotheCost(0.0, 0.0, True)
    if isinstance(kmap, ProductKnothe):
        total = sum(w2_1d(s, t) ** 2 for s, t in zip(kmap.src_marginals, kmap.tgt_marginals))
        return KnotheCost(float(total), 0.0, True)
    if samples is None:
        raise InvalidInputError("grid Knothe cost needs source samples")
    from .sampling import batch_se

    pts = getattr(samples, "points", samples)
    d = np.sum((kmap(pts) - pts) ** 2, axis=1)
    return KnotheCost(float(d.mean()), float(batch_se(d)), False)


# ----------------------------------------------------------------------------
# the unconditional transport-cost bound


@dataclass(frozen=True)
class UncondResult:
    lhs: float  # Knothe transport cost
    gap: float  # bm_ratio - 1
    M: float
    ratio: float  # lhs / (M^2 gap)
    lhs_se: float = 0.0
    gap_rel_ci: float = 0.0

    @property
    def rhs_unit(self):
        return self.M ** 2 * self.gap


def _inside_cube(body, M):
    lo, hi = body.bounding_box()
    return bool(np.all(lo >= -M * (1 + 1e-12)) and np.all(hi <= M * (1 + 1e-12)))


def verify_uncond_theorem(f_body, g_body, M, samples=None, rng=None):
    for b in (f_body, g_body):
        if not b.unconditional:
            raise InvalidInputError("both bodies must be unconditional")
        if not _inside_cube(b, M):
            raise InvalidInputError(f"body escapes the cube [-{M}, {M}]^n")
    kmap = knothe_build(f_body, g_body)
    cost = knothe_cost(kmap, f_body, samples)
    bm = B.bm_ratio(f_body, g_body, rng)
    gap = bm.R - 1.0
    denom = M * M * gap
    if denom > 0:
        ratio = cost.value / denom
    else:
        ratio = 0.0 if cost.value == 0 else math.inf
    return UncondResult(cost.value, gap, float(M), ratio, cost.se, bm.rel_ci)


@dataclass(frozen=True)
class CubeCut:
    K: object
    T: object
    alpha: float
    beta: float
    mass_K: float
    mass_T: float


def _cut_level(body, points, gamma, n):
    r = np.max(np.abs(points), axis=1)
    lo, hi = body.bounding_box()
    reach = float(np.max(np.maximum(np.abs(lo), np.abs(hi))))
    t = float(np.quantile(r, 1.0 - gamma, method="higher"))
    if t >= reach or np.mean(r > t) == 0.0:
        return reach / math.log(n), body, 0.0
    return t / math.log(n), B.intersect_cube(body, t), float(np.mean(r > t))


def cut_with_cube(K, T, gamma, samples_K, samples_T):
    """Cut both bodies with centered cubes of half-width alpha log n (resp. beta log n).

    The cube level is the smallest one whose sampled outside mass is at most
    gamma; a body already inside its cube comes back unchanged with mass 0.
    """
    if not 0 < gamma <= 0.5:
        raise InvalidInputError("gamma must lie in (0, 1/2]")
    n = K.dim
    if n < 2:
        raise InvalidInputError("cube cutting needs n >= 2")
    if not (K.unconditional and T.unconditional):
        raise InvalidInputError("both bodies must be unconditional")
    pk = getattr(samples_K, "points", samples_K)
    pt = getattr(samples_T, "points", samples_T)
    a, Kc, mk = _cut_level(K, pk, gamma, n)
    b, Tc, mt = _cut_level(T, pt, gamma, n)
    return CubeCut(Kc, Tc, a, b, mk, mt)


def knothe_w2_check(K, T, cfg, N=1024):
    """Empirical W2 between samples against sqrt(Knothe cost).

    Returns (w2, sqrt_cost, ci) where ci is the sampling noise floor: the mean
    of the empirical W2 between two independent clouds from each body.
    """
    from .sampling import hit_and_run

    xs = hit_and_run(K, cfg.with_seed(cfg.seed), 2 * N).points
    ys = hit_and_run(T, cfg.with_seed(cfg.seed + 1), 2 * N).points
    x1, x2, y1 = xs[:N], xs[N:], ys[:N]
    y2 = ys[N:]
    w2 = w2_exact(x1, y1)
    ci = 0.5 * (w2_exact(x1, x2) + w2_exact(y1, y2))
    kmap = knothe_build(K, T)
    cost = knothe_cost(kmap, K, xs)
    root = math.sqrt(cost.value)
    return w2, root, ci + cost.se / max(2.0 * root, 1e-300)
