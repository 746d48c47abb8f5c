"""Convex bodies as membership oracles with exact metadata.

Every body answers ``contains`` for a batch of points (rows), reports a
bounding box, and computes chords ``{t : x + t d in K}`` used by the
hit-and-run sampler. Closed forms are used wherever a family has one;
otherwise chords fall back to bisection against the membership oracle.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import (
    ConfigurationError,
    DegenerateError,
    InvalidInputError,
    UnsupportedError,
)

MC_MAX_DIM = 16
_CHORD_BISECTIONS = 32  # 2R / 2**32 < 1e-9 R


def unit_ball_volume(n):
    return math.exp(0.5 * n * math.log(math.pi) - special.gammaln(0.5 * n + 1.0))


def _as_points(x, n):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != n:
        raise InvalidInputError(f"point dimension {x.shape[-1]} does not match body dimension {n}")
    return x


@dataclass(frozen=True)
class AffineMap:
    """x -> linear @ x + translation."""

    linear: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        L = np.array(self.linear, dtype=float)
        t = np.array(self.translation, dtype=float)
        if L.ndim != 2 or L.shape[0] != L.shape[1] or t.shape != (L.shape[0],):
            raise InvalidInputError("affine map needs an n x n matrix and an n-vector")
        scale = max(float(np.max(np.abs(L))), 1e-300)
        if abs(np.linalg.det(L)) <= 1e-12 * scale ** L.shape[0]:
            raise DegenerateError("affine map is not invertible")
        L.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "linear", L)
        object.__setattr__(self, "translation", t)

    @property
    def dim(self):
        return self.linear.shape[0]

    def __call__(self, x):
        return np.asarray(x, dtype=float) @ self.linear.T + self.translation

    def inverse(self):
        Linv = np.linalg.inv(self.linear)
        return AffineMap(Linv, -Linv @ self.translation)

    def compose(self, inner):
        """self o inner."""
        return AffineMap(self.linear @ inner.linear, self.linear @ inner.translation + self.translation)

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n), np.zeros(n))


class ConvexBody:
    """Open, bounded convex set in R^n."""

    family = "abstract"

    def __init__(self, dim):
        self.dim = int(dim)
        if self.dim < 1:
            raise InvalidInputError("dimension must be positive")

    # -- oracle ---------------------------------------------------------

    def contains(self, x):
        raise NotImplementedError

    def __contains__(self, x):
        return bool(self.contains(np.asarray(x, dtype=float)[None, :])[0])

    def bounding_box(self):
        raise NotImplementedError

    @property
    def bounding_radius(self):
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi))))

    def interior_point(self):
        lo, hi = self.bounding_box()
        return 0.5 * (lo + hi)

    @property
    def unconditional(self):
        return False

    def chord(self, x, d):
        """Interval (tmin, tmax) of t with x + t d inside; x must be inside."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = np.atleast_2d(np.asarray(d, dtype=float))
        return -self._exit_time(x, -d), self._exit_time(x, d)

    def _exit_time(self, x, d):
        lo = np.zeros(x.shape[0])
        hi = np.full(x.shape[0], 2.0 * self.bounding_radius / np.maximum(np.linalg.norm(d, axis=1), 1e-300))
        for _ in range(_CHORD_BISECTIONS):
            mid = 0.5 * (lo + hi)
            inside = self.contains(x + mid[:, None] * d)
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
        return lo

    def project(self, x):
        raise UnsupportedError(f"no Euclidean projection for family {self.family!r}")

    def exact_volume(self):
        raise UnsupportedError(f"no closed-form volume for family {self.family!r}")

    # -- serialization -------------------------------------------------

    def params(self):
        raise NotImplementedError

    def to_spec(self):
        return {
            "dim": self.dim,
            "family": self.family,
            "params": self.params(),
            "unconditional": bool(self.unconditional),
        }

    def to_json(self):
        return json.dumps(self.to_spec(), sort_keys=True, separators=(",", ":"))

    def __repr__(self):
        return f"{type(self).__name__}({self.to_json()})"

    def __eq__(self, other):
        return isinstance(other, ConvexBody) and self.to_json() == other.to_json()

    def __hash__(self):
        return hash(self.to_json())


def _floats(a):
    return [float(v) for v in np.ravel(a)]


class Box(ConvexBody):
    family = "box"

    def __init__(self, half_widths, center=None):
        a = np.array(half_widths, dtype=float).ravel()
        super().__init__(a.size)
        if np.any(a <= 0):
            raise InvalidInputError("box half-widths must be positive")
        self.a = a
        self.c = np.zeros(self.dim) if center is None else np.array(center, dtype=float).ravel()
        if self.c.shape != (self.dim,):
            raise InvalidInputError("box center has wrong dimension")

    @classmethod
    def cube(cls, n, half_width):
        return cls(np.full(n, float(half_width)))

    def contains(self, x):
        x = _as_points(x, self.dim)
        return np.all(np.abs(x - self.c) < self.a, axis=-1)

    def bounding_box(self):
        return self.c - self.a, self.c + self.a

    @property
    def unconditional(self):
        return not np.any(self.c)

    def chord(self, x, d):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = np.atleast_2d(np.asarray(d, dtype=float))
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (self.c - self.a - x) / d
            t2 = (self.c + self.a - x) / d
        lo = np.where(d != 0, np.minimum(t1, t2), -np.inf)
        hi = np.where(d != 0, np.maximum(t1, t2), np.inf)
        return lo.max(axis=1), hi.min(axis=1)

    def project(self, x):
        return np.clip(x, self.c - self.a, self.c + self.a)

    def exact_volume(self):
        return float(np.prod(2.0 * self.a))

    def params(self):
        p = {"half_widths": _floats(self.a)}
        if np.any(self.c):
            p["center"] = _floats(self.c)
        return p


class Ellipsoid(ConvexBody):
    """center + A B_2^n for a symmetric positive-definite A."""

    family = "ellipsoid"

    def __init__(self, matrix, center=None):
        A = np.array(matrix, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise InvalidInputError("ellipsoid matrix must be square")
        super().__init__(A.shape[0])
        # A B and sqrt(A A^T) B are the same set; keep the symmetric root
        w, Q = np.linalg.eigh(A @ A.T)
        if w.min() <= 1e-24 * max(w.max(), 1e-300):
            raise DegenerateError("ellipsoid matrix is singular")
        s = np.sqrt(w)
        self.A = (Q * s) @ Q.T
        self._Q, self._s = Q, s
        self._Ainv = (Q / s) @ Q.T
        self.c = np.zeros(self.dim) if center is None else np.array(center, dtype=float).ravel()

    @classmethod
    def from_shape(cls, shape, center=None):
        """Body {x : (x-c)^T shape^{-1} (x-c) < 1}."""
        w, Q = np.linalg.eigh(np.asarray(shape, dtype=float))
        return cls((Q * np.sqrt(w)) @ Q.T, center)

    @classmethod
    def ball(cls, n, radius=1.0):
        return cls(radius * np.eye(n))

    def contains(self, x):
        x = _as_points(x, self.dim)
        y = (x - self.c) @ self._Ainv.T
        return np.sum(y * y, axis=-1) < 1.0

    def bounding_box(self):
        half = np.sqrt(np.sum(self.A * self.A, axis=1))
        return self.c - half, self.c + half

    @property
    def unconditional(self):
        off = self.A - np.diag(np.diag(self.A))
        return not np.any(self.c) and not np.any(np.abs(off) > 1e-14 * np.abs(self.A).max())

    def chord(self, x, d):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = np.atleast_2d(np.asarray(d, dtype=float))
        y = (x - self.c) @ self._Ainv.T
        e = d @ self._Ainv.T
        a = np.sum(e * e, axis=1)
        b = np.sum(y * e, axis=1)
        c = np.sum(y * y, axis=1) - 1.0
        disc = np.sqrt(np.maximum(b * b - a * c, 0.0))
        return (-b - disc) / a, (-b + disc) / a

    def project(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if np.ptp(self._s) <= 1e-15 * self._s[0]:
            r = self._s[0]
            y = x - self.c
            nrm = np.linalg.norm(y, axis=1, keepdims=True)
            return np.where(nrm > r, y * (r / np.maximum(nrm, 1e-300)), y) + self.c
        z = (x - self.c) @ self._Q
        s2 = self._s ** 2
        outside = np.sum(z * z / s2, axis=1) > 1.0
        mu = np.zeros(x.shape[0])
        for _ in range(100):
            den = s2 + mu[:, None]
            g = np.sum(s2 * z * z / den ** 2, axis=1) - 1.0
            dg = -2.0 * np.sum(s2 * z * z / den ** 3, axis=1)
            step = np.where(outside & (dg < 0), g / dg, 0.0)
            mu = np.maximum(mu - step, 0.0)
            if np.all(np.abs(step) <= 1e-15 * (1.0 + mu)):
                break
        y = s2 * z / (s2 + mu[:, None])
        y = np.where(outside[:, None], y, z)
        return y @ self._Q.T + self.c

    def exact_volume(self):
        return float(abs(np.linalg.det(self.A)) * unit_ball_volume(self.dim))

    def params(self):
        p = {"matrix": [_floats(row) for row in self.A]}
        if np.any(self.c):
            p["center"] = _floats(self.c)
        return p


class LpBall(ConvexBody):
    family = "lp_ball"

    def __init__(self, p, radius, dim):
        super().__init__(dim)
        p = math.inf if p in ("inf", math.inf) else float(p)
        if not p >= 1:
            raise InvalidInputError("lp ball needs p >= 1")
        if not radius > 0:
            raise InvalidInputError("lp ball radius must be positive")
        self.p = p
        self.radius = float(radius)

    def norm(self, x):
        x = np.asarray(x, dtype=float)
        if math.isinf(self.p):
            return np.max(np.abs(x), axis=-1)
        if self.p == 1:
            return np.sum(np.abs(x), axis=-1)
        if self.p == 2:
            return np.sqrt(np.sum(x * x, axis=-1))
        return np.sum(np.abs(x) ** self.p, axis=-1) ** (1.0 / self.p)

    def contains(self, x):
        return self.norm(_as_points(x, self.dim)) < self.radius

    def bounding_box(self):
        r = np.full(self.dim, self.radius)
        return -r, r

    @property
    def bounding_radius(self):
        if self.p <= 2:
            return self.radius
        return super().bounding_radius

    @property
    def unconditional(self):
        return True

    def chord(self, x, d):
        if self.p == 2:
            return Ellipsoid.ball(self.dim, self.radius).chord(x, d)
        if math.isinf(self.p):
            return Box.cube(self.dim, self.radius).chord(x, d)
        return super().chord(x, d)

    def project(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r = self.radius
        if math.isinf(self.p):
            return np.clip(x, -r, r)
        if self.p == 2:
            nrm = np.linalg.norm(x, axis=1, keepdims=True)
            return np.where(nrm > r, x * (r / np.maximum(nrm, 1e-300)), x)
        if self.p == 1:
            ax = np.abs(x)
            inside = ax.sum(axis=1) <= r
            srt = -np.sort(-ax, axis=1)
            css = np.cumsum(srt, axis=1)
            k = np.arange(1, self.dim + 1)
            cond = srt - (css - r) / k > 0
            rho = self.dim - 1 - np.argmax(cond[:, ::-1], axis=1)
            theta = (css[np.arange(x.shape[0]), rho] - r) / (rho + 1)
            y = np.sign(x) * np.maximum(ax - theta[:, None], 0.0)
            return np.where(inside[:, None], x, y)
        return super().project(x)

    def exact_volume(self):
        n, r = self.dim, self.radius
        if math.isinf(self.p):
            return (2.0 * r) ** n
        logv = n * math.log(2.0 * r) + n * special.gammaln(1.0 + 1.0 / self.p) - special.gammaln(1.0 + n / self.p)
        return math.exp(logv)

    def params(self):
        return {"p": "inf" if math.isinf(self.p) else self.p, "radius": self.radius}


class CrossPolytope(LpBall):
    """The l1 ball of radius ``scale``."""

    family = "cross_polytope"

    def __init__(self, scale, dim):
        super().__init__(1.0, scale, dim)

    def params(self):
        return {"scale": self.radius}


class Simplex(ConvexBody):
    family = "simplex"

    def __init__(self, vertices):
        V = np.array(vertices, dtype=float)
        if V.ndim != 2 or V.shape[0] != V.shape[1] + 1:
            raise InvalidInputError("simplex needs n+1 vertices in R^n")
        super().__init__(V.shape[1])
        self.V = V
        M = (V[1:] - V[0]).T
        if abs(np.linalg.det(M)) <= 1e-12 * max(np.abs(M).max(), 1e-300) ** self.dim:
            raise DegenerateError("simplex vertices are affinely dependent")
        self._Minv = np.linalg.inv(M)

    def _bary(self, x):
        b = (np.asarray(x, dtype=float) - self.V[0]) @ self._Minv.T
        return np.concatenate([1.0 - b.sum(axis=-1, keepdims=True), b], axis=-1)

    def contains(self, x):
        return np.all(self._bary(_as_points(x, self.dim)) > 0, axis=-1)

    def bounding_box(self):
        return self.V.min(axis=0), self.V.max(axis=0)

    def interior_point(self):
        return self.V.mean(axis=0)

    def chord(self, x, d):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = np.atleast_2d(np.asarray(d, dtype=float))
        b = self._bary(x)
        db = d @ self._Minv.T
        db = np.concatenate([-db.sum(axis=1, keepdims=True), db], axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = -b / db
        lo = np.where(db > 0, t, -np.inf).max(axis=1)
        hi = np.where(db < 0, t, np.inf).min(axis=1)
        return lo, hi

    def exact_volume(self):
        return float(abs(np.linalg.det(self.V[1:] - self.V[0])) / math.factorial(self.dim))

    def params(self):
        return {"vertices": [_floats(v) for v in self.V]}


class Intersection(ConvexBody):
    family = "intersection"

    def __init__(self, body, other):
        if body.dim != other.dim:
            raise InvalidInputError("intersection of bodies of different dimensions")
        super().__init__(body.dim)
        self.body, self.other = body, other

    def contains(self, x):
        return self.body.contains(x) & self.other.contains(x)

    def bounding_box(self):
        a, b = self.body.bounding_box(), self.other.bounding_box()
        return np.maximum(a[0], b[0]), np.minimum(a[1], b[1])

    @property
    def bounding_radius(self):
        return min(super().bounding_radius, self.body.bounding_radius, self.other.bounding_radius)

    def interior_point(self):
        for p in (self.body.interior_point(), self.other.interior_point()):
            if p in self:
                return p
        return super().interior_point()

    @property
    def unconditional(self):
        return self.body.unconditional and self.other.unconditional

    def chord(self, x, d):
        a0, a1 = self.body.chord(x, d)
        b0, b1 = self.other.chord(x, d)
        return np.maximum(a0, b0), np.minimum(a1, b1)

    def project(self, x):
        # Dykstra's algorithm
        y = np.atleast_2d(np.asarray(x, dtype=float)).copy()
        p = np.zeros_like(y)
        q = np.zeros_like(y)
        for _ in range(100):
            z = self.body.project(y + p)
            p = y + p - z
            y_new = self.other.project(z + q)
            q = z + q - y_new
            if np.max(np.abs(y_new - y)) < 1e-13:
                y = y_new
                break
            y = y_new
        return y

    def params(self):
        o = self.other
        if isinstance(o, LpBall) and o.p == 2:
            return {"body": self.body.to_spec(), "radius": o.radius}
        if isinstance(o, Box) and not np.any(o.c) and np.all(o.a == o.a[0]):
            return {"body": self.body.to_spec(), "cube": float(o.a[0])}
        return {"body": self.body.to_spec(), "other": o.to_spec()}


class MinkowskiAverage(ConvexBody):
    """(A + B) / 2; membership by alternating projections."""

    family = "minkowski_average"
    iterations = 200
    gap_tol = 1e-9

    def __init__(self, a, b):
        if a.dim != b.dim:
            raise InvalidInputError("Minkowski average of bodies of different dimensions")
        super().__init__(a.dim)
        self.a, self.b = a, b

    def contains(self, x):
        # projected gradient with Nesterov momentum on u -> dist(2x - u, B)^2 / 2
        # over u in A; plain alternating projections is the momentum-free case
        x = np.atleast_2d(_as_points(x, self.dim))
        target = 2.0 * x
        tol = self.gap_tol * self.bounding_radius
        ca = self.a.interior_point()
        inside = np.zeros(x.shape[0], dtype=bool)
        active = np.arange(x.shape[0])
        u = self.a.project(x)
        y = u
        best = np.full(x.shape[0], np.inf)
        stall = np.zeros(x.shape[0], dtype=int)
        for k in range(self.iterations):
            t = target[active]
            w = t - self.b.project(t - y)
            u_new = self.a.project(w)
            # nudge toward the interior of A for a strict witness
            cand = u_new + 1e-9 * (ca - u_new)
            hit = self.a.contains(cand) & self.b.contains(t - cand)
            gap = np.linalg.norm(t - u_new - self.b.project(t - u_new), axis=1)
            hit |= gap <= tol
            inside[active[hit]] = True
            improved = gap < best[active] * (1 - 1e-6)
            best[active] = np.minimum(best[active], gap)
            stall[active] = np.where(improved, 0, stall[active] + 1)
            keep = ~hit & (stall[active] < 20)
            y = u_new + (k / (k + 3.0)) * (u_new - u)
            active, u, y = active[keep], u_new[keep], y[keep]
            if active.size == 0:
                break
        return inside

    def bounding_box(self):
        (a0, a1), (b0, b1) = self.a.bounding_box(), self.b.bounding_box()
        return 0.5 * (a0 + b0), 0.5 * (a1 + b1)

    def interior_point(self):
        return 0.5 * (self.a.interior_point() + self.b.interior_point())

    @property
    def unconditional(self):
        return self.a.unconditional and self.b.unconditional

    def params(self):
        return {"a": self.a.to_spec(), "b": self.b.to_spec()}


class AffineImage(ConvexBody):
    family = "affine_image"

    def __init__(self, body, amap):
        if amap.dim != body.dim:
            raise InvalidInputError("affine map dimension does not match the body")
        super().__init__(body.dim)
        self.body, self.map = body, amap
        self._inv = amap.inverse()

    def contains(self, x):
        return self.body.contains(self._inv(_as_points(x, self.dim)))

    def bounding_box(self):
        lo, hi = self.body.bounding_box()
        c, h = 0.5 * (lo + hi), 0.5 * (hi - lo)
        cc = self.map(c)
        hh = np.abs(self.map.linear) @ h
        return cc - hh, cc + hh

    def interior_point(self):
        return self.map(self.body.interior_point())

    @property
    def unconditional(self):
        L = self.map.linear
        diag = not np.any(L - np.diag(np.diag(L)))
        return diag and not np.any(self.map.translation) and self.body.unconditional

    def chord(self, x, d):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = np.atleast_2d(np.asarray(d, dtype=float))
        return self.body.chord(self._inv(x), d @ self._inv.linear.T)

    def exact_volume(self):
        return float(abs(np.linalg.det(self.map.linear)) * self.body.exact_volume())

    def params(self):
        return {
            "body": self.body.to_spec(),
            "linear": [_floats(r) for r in self.map.linear],
            "translation": _floats(self.map.translation),
        }


# ----------------------------------------------------------------------------
# factories that keep closed forms closed


def affine_image(body, amap):
    L, t = amap.linear, amap.translation
    is_diag = not np.any(L - np.diag(np.diag(L)))
    if isinstance(body, Box) and is_diag:
        return Box(np.abs(np.diag(L)) * body.a, L @ body.c + t)
    if isinstance(body, Ellipsoid):
        return Ellipsoid(L @ body.A, L @ body.c + t)
    if isinstance(body, AffineImage):
        return affine_image(body.body, amap.compose(body.map))
    return AffineImage(body, amap)


def minkowski_average(a, b):
    if a.dim != b.dim:
        raise InvalidInputError("Minkowski average of bodies of different dimensions")
    if a == b:
        return a
    if isinstance(a, Box) and isinstance(b, Box):
        return Box(0.5 * (a.a + b.a), 0.5 * (a.c + b.c))
    if isinstance(a, Ellipsoid) and isinstance(b, Ellipsoid):
        ratio = np.trace(b.A) / np.trace(a.A)
        if np.allclose(b.A, ratio * a.A, rtol=1e-12, atol=0.0):
            return Ellipsoid(0.5 * (a.A + b.A), 0.5 * (a.c + b.c))
    return MinkowskiAverage(a, b)


def intersect_ball(body, s):
    return Intersection(body, LpBall(2, s, body.dim))


def intersect_cube(body, half_width):
    if isinstance(body, Box) and not np.any(body.c):
        return Box(np.minimum(body.a, half_width))
    return Intersection(body, Box.cube(body.dim, half_width))


def isotropic_cube(n):
    return Box.cube(n, math.sqrt(3.0))


def isotropic_ball(n):
    return Ellipsoid.ball(n, math.sqrt(n + 2.0))


# ----------------------------------------------------------------------------
# volumes


@dataclass(frozen=True)
class Volume:
    value: float
    method: str
    ci_halfwidth: float = 0.0

    @property
    def rel_ci(self):
        return self.ci_halfwidth / self.value if self.value else math.inf


def volume(body, rng=None, rel_ci=0.02, max_samples=1 << 24, batch=1 << 16):
    """Exact volume when the family has a closed form, else rejection sampling.

    The Monte Carlo fallback draws uniform points in the bounding box until
    the 99% confidence half-width is at most ``rel_ci`` of the estimate.
    """
    try:
        return Volume(body.exact_volume(), "exact")
    except UnsupportedError:
        pass
    if body.dim > MC_MAX_DIM:
        raise UnsupportedError(f"Monte Carlo volume unsupported above n={MC_MAX_DIM}")
    rng = np.random.default_rng(0) if rng is None else rng
    lo, hi = body.bounding_box()
    box_vol = float(np.prod(hi - lo))
    hits = total = 0
    z = 2.5758293035489004
    while total < max_samples:
        pts = lo + (hi - lo) * rng.random((batch, body.dim))
        hits += int(np.count_nonzero(body.contains(pts)))
        total += batch
        if hits >= 30:
            p = hits / total
            half = z * math.sqrt(p * (1 - p) / total)
            if half <= rel_ci * p:
                return Volume(box_vol * p, "monte_carlo", box_vol * half)
    raise UnsupportedError("Monte Carlo volume did not reach the requested precision")


@dataclass(frozen=True)
class BMRatio:
    R: float
    rel_ci: float
    method: str


def bm_ratio(K, T, rng=None):
    """Vol((K+T)/2) / sqrt(Vol K Vol T)."""
    if K.dim != T.dim:
        raise InvalidInputError("bodies must share the dimension")
    if K == T:
        return BMRatio(1.0, 0.0, "exact")
    vk, vt = volume(K, rng), volume(T, rng)
    vm = volume(minkowski_average(K, T), rng)
    R = vm.value / math.sqrt(vk.value * vt.value)
    rel = vm.rel_ci + 0.5 * (vk.rel_ci + vt.rel_ci)
    method = "exact" if rel == 0 else "monte_carlo"
    return BMRatio(R, rel, method)


# ----------------------------------------------------------------------------
# inertia


@dataclass(frozen=True)
class InertiaData:
    barycenter: np.ndarray
    cov: np.ndarray
    se_cov: np.ndarray = None
    se_mean: np.ndarray = None
    exact: bool = True
    eigenvalues: np.ndarray = field(init=False)

    def __post_init__(self):
        cov = np.array(self.cov, dtype=float)
        cov = 0.5 * (cov + cov.T)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "barycenter", np.array(self.barycenter, dtype=float))
        object.__setattr__(self, "eigenvalues", np.linalg.eigvalsh(cov))

    @property
    def dim(self):
        return self.cov.shape[0]

    def q(self, x):
        """Inertia form x^T Cov x."""
        x = np.asarray(x, dtype=float)
        return np.einsum("...i,ij,...j->...", x, self.cov, x)

    def p(self, x):
        """Dual form sup{<x,y>^2 : q(y) <= 1} = x^T Cov^{-1} x."""
        x = np.asarray(x, dtype=float)
        return np.einsum("...i,ij,...j->...", x, np.linalg.inv(self.cov), x)

    def is_isotropic(self, nse=3.0, atol=1e-9):
        dev = np.abs(self.cov - np.eye(self.dim))
        bdev = np.abs(self.barycenter)
        if self.exact or self.se_cov is None:
            return bool(dev.max() <= atol and bdev.max() <= atol)
        tol_c = nse * self.se_cov + atol
        tol_b = nse * self.se_mean + atol
        return bool(np.all(dev <= tol_c) and np.all(bdev <= tol_b))


def exact_inertia(body):
    if isinstance(body, Box):
        return InertiaData(body.c.copy(), np.diag(body.a ** 2 / 3.0))
    if isinstance(body, Ellipsoid):
        return InertiaData(body.c.copy(), body.A @ body.A.T / (body.dim + 2.0))
    if isinstance(body, AffineImage):
        inner = exact_inertia(body.body)
        L = body.map.linear
        return InertiaData(body.map(inner.barycenter), L @ inner.cov @ L.T)
    raise UnsupportedError(f"no exact inertia for family {body.family!r}")


def inertia(body, samples=None):
    """Exact inertia when ``samples`` is None, else empirical from a sample batch."""
    if samples is None:
        return exact_inertia(body)
    from .sampling import estimate_moments

    m = estimate_moments(samples)
    return InertiaData(m.mean, m.cov, se_cov=m.se_cov, se_mean=m.se_mean, exact=False)


def isotropic_normalize(body, inertia_data):
    """Affine image of ``body`` with barycenter 0 and identity covariance."""
    w, Q = np.linalg.eigh(inertia_data.cov)
    if w.min() <= 1e-9 * w.max():
        raise DegenerateError("covariance is degenerate: the body is flat")
    W = (Q / np.sqrt(w)) @ Q.T
    amap = AffineMap(W, -W @ inertia_data.barycenter)
    return affine_image(body, amap), amap


def _as_inertia(x):
    return x if isinstance(x, InertiaData) else exact_inertia(x)


def covariance_comparability(K, T, R, rng=None, n_dirs=64):
    """Max over random directions of the two-sided variance ratio, and its ratio to R^4."""
    ik, it = _as_inertia(K), _as_inertia(T)
    rng = np.random.default_rng(0) if rng is None else rng
    theta = rng.standard_normal((n_dirs, ik.dim))
    theta /= np.linalg.norm(theta, axis=1, keepdims=True)
    qk, qt = ik.q(theta), it.q(theta)
    max_ratio = float(np.max(np.maximum(qk / qt, qt / qk)))
    return max_ratio, max_ratio / R ** 4


def eigenvalue_deviation_count(inertia_data, delta):
    if not 0 < delta < 1:
        raise InvalidInputError("delta must lie in (0, 1)")
    lam = inertia_data.eigenvalues if isinstance(inertia_data, InertiaData) else np.asarray(inertia_data)
    return int(np.count_nonzero(np.abs(lam - 1.0) >= delta))


# ----------------------------------------------------------------------------
# JSON specs


def _need(params, key, family):
    if key not in params:
        raise ConfigurationError(f"body family {family!r} is missing params.{key}")
    return params[key]


def body_from_spec(spec, dim=None):
    """Parse a body specification dict; ``dim`` fills in a missing "dim"."""
    if not isinstance(spec, dict):
        raise ConfigurationError("body spec must be a JSON object")
    family = spec.get("family")
    params = spec.get("params", {})
    n = spec.get("dim", dim)
    try:
        body = _build(family, params, n)
    except (InvalidInputError, DegenerateError, TypeError, KeyError) as exc:
        raise ConfigurationError(f"invalid params for family {family!r}: {exc}") from exc
    if n is not None and body.dim != n:
        raise ConfigurationError(f"field 'dim' is {n} but params describe dimension {body.dim}")
    if "unconditional" in spec and bool(spec["unconditional"]) and not body.unconditional:
        raise ConfigurationError("field 'unconditional' is true but the body is not unconditional")
    return body


def _build(family, params, n):
    if family == "box":
        if "half_widths" in params:
            return Box(params["half_widths"], params.get("center"))
        return Box.cube(_need_dim(n, family), _need(params, "half_width", family))
    if family == "ellipsoid":
        if "matrix" in params:
            return Ellipsoid(params["matrix"], params.get("center"))
        if "shape" in params:
            return Ellipsoid.from_shape(params["shape"], params.get("center"))
        if "axes" in params:
            return Ellipsoid(np.diag(params["axes"]), params.get("center"))
        return Ellipsoid.ball(_need_dim(n, family), _need(params, "radius", family))
    if family == "lp_ball":
        return LpBall(_need(params, "p", family), _need(params, "radius", family), _need_dim(n, family))
    if family == "cross_polytope":
        return CrossPolytope(_need(params, "scale", family), _need_dim(n, family))
    if family == "simplex":
        return Simplex(_need(params, "vertices", family))
    if family == "intersection":
        inner = body_from_spec(_need(params, "body", family), n)
        if "radius" in params:
            return intersect_ball(inner, params["radius"])
        if "cube" in params:
            return Intersection(inner, Box.cube(inner.dim, params["cube"]))
        return Intersection(inner, body_from_spec(_need(params, "other", family), n))
    if family == "minkowski_average":
        return MinkowskiAverage(body_from_spec(_need(params, "a", family), n),
                                body_from_spec(_need(params, "b", family), n))
    if family == "affine_image":
        inner = body_from_spec(_need(params, "body", family), n)
        return AffineImage(inner, AffineMap(_need(params, "linear", family),
                                            params.get("translation", np.zeros(inner.dim))))
    raise ConfigurationError(f"unknown body family {family!r} in field 'family'")


def _need_dim(n, family):
    if n is None:
        raise ConfigurationError(f"body family {family!r} needs field 'dim'")
    return int(n)


def body_from_json(text, dim=None):
    return body_from_spec(json.loads(text), dim)
