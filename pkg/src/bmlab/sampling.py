"""Hit-and-run sampling of the uniform measure on a convex body.

Each chain owns a Philox substream spawned from the single seed and drives
a block of independent walkers in lockstep. Output rows are ordered chain by
chain and, within a chain, walker by walker, so contiguous row blocks are
nearly independent and batch means give honest standard errors.
"""

import hashlib
import io
import json
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateError, InsufficientSamplesError, InvalidInputError

MAGIC = b"BMLS"
MIN_MOMENT_SAMPLES = 100
N_BATCHES = 20


@dataclass(frozen=True)
class SamplerConfig:
    seed: int = 0
    burn_in: int = None  # default 10 n^2
    thinning: int = None  # default n
    chain_count: int = 4
    walkers: int = 256

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InvalidInputError("seed must be a 64-bit unsigned integer")
        if self.burn_in is not None and self.burn_in < 0:
            raise InvalidInputError("burn_in must be >= 0")
        if self.thinning is not None and self.thinning < 1:
            raise InvalidInputError("thinning must be >= 1")
        if self.chain_count < 1 or self.walkers < 1:
            raise InvalidInputError("chain_count and walkers must be >= 1")

    def resolved(self, n):
        return SamplerConfig(
            seed=int(self.seed),
            burn_in=10 * n * n if self.burn_in is None else int(self.burn_in),
            thinning=n if self.thinning is None else int(self.thinning),
            chain_count=int(self.chain_count),
            walkers=int(self.walkers),
        )

    def with_seed(self, seed):
        d = asdict(self)
        d["seed"] = int(seed)
        return SamplerConfig(**d)


def body_id(body):
    return hashlib.sha256(body.to_json().encode()).hexdigest()[:16]


@dataclass(frozen=True)
class SampleBatch:
    points: np.ndarray
    body_id: str
    config: SamplerConfig

    @property
    def n(self):
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]

    def split(self, k):
        """k contiguous sub-batches (whole chains when k divides chain_count)."""
        return [SampleBatch(p, self.body_id, self.config) for p in np.array_split(self.points, k)]


def chain_generators(seed, count):
    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


def _start_point(body, rng):
    x0 = np.asarray(body.interior_point(), dtype=float)
    if body.contains(x0[None, :])[0]:
        return x0
    lo, hi = body.bounding_box()
    for _ in range(100):
        pts = lo + (hi - lo) * rng.random((100, body.dim))
        ok = body.contains(pts)
        if ok.any():
            return pts[np.argmax(ok)]
    raise DegenerateError("no interior starting point found after 1e4 rejection trials")


def _run_chain(body, cfg, per_walker, walkers, rng):
    n = body.dim
    x = np.tile(_start_point(body, rng), (walkers, 1))
    out = np.empty((walkers, per_walker, n))
    total = cfg.burn_in + per_walker * cfg.thinning
    k = 0
    for step in range(total):
        d = rng.standard_normal((walkers, n))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        lo, hi = body.chord(x, d)
        # stay strictly inside the open body
        pad = 1e-12 * (hi - lo)
        t = rng.uniform(lo + pad, hi - pad)
        x = x + t[:, None] * d
        if step >= cfg.burn_in and (step - cfg.burn_in + 1) % cfg.thinning == 0:
            out[:, k] = x
            k += 1
    return out.reshape(walkers * per_walker, n)


def _pool_size(jobs):
    cap = os.environ.get("BMLAB_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, jobs))


def hit_and_run(body, cfg, N):
    """N approximately uniform points in ``body``."""
    N = int(N)
    if N < 1:
        raise InvalidInputError("N must be positive")
    cfg = cfg.resolved(body.dim)
    per_chain = -(-N // cfg.chain_count)
    walkers = min(cfg.walkers, per_chain)
    per_walker = -(-per_chain // walkers)
    rngs = chain_generators(cfg.seed, cfg.chain_count)
    with ThreadPoolExecutor(_pool_size(cfg.chain_count)) as pool:
        chains = list(pool.map(lambda r: _run_chain(body, cfg, per_walker, walkers, r), rngs))
    # deterministic merge by chain index, each chain trimmed to its share
    shares = [per_chain] * cfg.chain_count
    shares[-1] = N - per_chain * (cfg.chain_count - 1)
    pts = np.concatenate([c[:max(s, 0)] for c, s in zip(chains, shares)])[:N]
    inside = body.contains(pts)
    if not inside.all():
        raise DegenerateError(f"{np.count_nonzero(~inside)} sampled points left the body")
    return SampleBatch(pts, body_id(body), cfg)


# ----------------------------------------------------------------------------
# moments


def batch_se(values, n_batches=N_BATCHES):
    """Batch-means standard error of the mean of ``values`` along axis 0."""
    values = np.asarray(values, dtype=float)
    means = np.stack([b.mean(axis=0) for b in np.array_split(values, n_batches)])
    return means.std(axis=0, ddof=1) / np.sqrt(n_batches)


@dataclass(frozen=True)
class Moments:
    mean: np.ndarray
    cov: np.ndarray
    var_of_sqnorm: float
    mean_sqnorm: float
    se_mean: np.ndarray
    se_cov: np.ndarray
    se_var_of_sqnorm: float
    se_mean_sqnorm: float
    N: int


def estimate_moments(batch, n_batches=N_BATCHES):
    pts = batch.points if isinstance(batch, SampleBatch) else np.asarray(batch, dtype=float)
    N = pts.shape[0]
    if N < MIN_MOMENT_SAMPLES:
        raise InsufficientSamplesError(f"need at least {MIN_MOMENT_SAMPLES} samples, got {N}")
    mean = pts.mean(axis=0)
    c = pts - mean
    cov = c.T @ c / (N - 1)
    sq = np.sum(pts * pts, axis=1)
    var_sq = float(sq.var(ddof=1))
    blocks = np.array_split(np.arange(N), n_batches)
    b_mean = np.stack([pts[i].mean(axis=0) for i in blocks])
    b_cov = np.stack([np.cov(pts[i], rowvar=False).reshape(pts.shape[1], -1) for i in blocks])
    b_var = np.array([sq[i].var(ddof=1) for i in blocks])
    root = np.sqrt(n_batches)
    return Moments(
        mean=mean,
        cov=cov,
        var_of_sqnorm=var_sq,
        mean_sqnorm=float(sq.mean()),
        se_mean=b_mean.std(axis=0, ddof=1) / root,
        se_cov=b_cov.std(axis=0, ddof=1) / root,
        se_var_of_sqnorm=float(b_var.std(ddof=1) / root),
        se_mean_sqnorm=float(batch_se(sq, n_batches)),
        N=N,
    )


# ----------------------------------------------------------------------------
# persistence: magic, uint32 header length, JSON header, float64 row-major data


def save_batch(path, batch):
    header = json.dumps(
        {"body_id": batch.body_id, "config": asdict(batch.config), "N": len(batch), "n": batch.n},
        sort_keys=True,
    ).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(batch.points, dtype="<f8").tobytes())


def load_batch(path):
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise InvalidInputError(f"{path} is not a sample batch file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen))
        data = np.frombuffer(fh.read(), dtype="<f8")
    N, n = header["N"], header["n"]
    if data.size != N * n:
        raise InvalidInputError(f"{path}: expected {N * n} values, found {data.size}")
    return SampleBatch(data.reshape(N, n).astype(float), header["body_id"], SamplerConfig(**header["config"]))


def batch_to_csv(batch):
    buf = io.StringIO()
    buf.write(",".join(f"x{i + 1}" for i in range(batch.n)) + "\n")
    np.savetxt(buf, batch.points, delimiter=",", fmt="%.17g")
    return buf.getvalue()
