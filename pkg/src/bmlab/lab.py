"""Experiment harness: scenario parsing, the comparison checks, and reports.

A scenario names two bodies, a list of dimensions and a subset of checks.
Every (dimension, check) pair produces one record; a failing or crashing
check is recorded and the run continues. Wall times go to a sidecar file so
that the report itself is a pure function of (scenario, seed).
"""

import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bodies as B
from . import transport_nd as TN
from .errors import BMLabError, ConfigurationError, InvalidInputError
from .recipes import fixed_R_pair
from .sampling import SamplerConfig, batch_se, estimate_moments, hit_and_run

SCHEMA_VERSION = 1
CHECKS = ("ratio", "inertia_compare", "w2_compare", "thin_shell", "eigencount",
          "uncond_theorem", "conditioning")
CONDITIONING_LEVELS = (0.25, 0.75, 0.875)


# ----------------------------------------------------------------------------
# records


@dataclass
class Record:
    name: str
    n: int = None
    values: dict = field(default_factory=dict)
    ci: dict = field(default_factory=dict)
    passed: bool = True
    error: str = None
    inputs: dict = field(default_factory=dict)
    wall_time: float = field(default=0.0, compare=False)

    def to_dict(self):
        d = {
            "name": self.name,
            "n": self.n,
            "inputs_digest": digest(self.inputs),
            "values": self.values,
            "ci": self.ci,
            "passed": bool(self.passed),
        }
        if self.error is not None:
            d["error"] = self.error
        return d


def digest(obj):
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float("%.12g" % x)
    return obj


def canonical_json(obj):
    return json.dumps(_clean(obj), sort_keys=True, separators=(",", ":"))


def _timed(fn, name, n, inputs):
    t0 = time.perf_counter()
    try:
        rec = fn()
    except (BMLabError, ValueError, ArithmeticError) as exc:
        rec = Record(name, n, passed=False, error=f"{type(exc).__name__}: {exc}")
    rec.name, rec.n, rec.inputs = name, n, inputs
    rec.wall_time = time.perf_counter() - t0
    return rec


def _sub_seed(seed, *key):
    return int(np.random.SeedSequence([int(seed), *key]).generate_state(1, np.uint64)[0])


# ----------------------------------------------------------------------------
# checks


def _inertia_of(body, cfg, N):
    try:
        return B.exact_inertia(body)
    except BMLabError:
        return B.inertia(body, hit_and_run(body, cfg, N))


def _require_isotropic(inertia_data, what="K"):
    if not inertia_data.is_isotropic():
        raise InvalidInputError(f"{what} is not isotropic within tolerance")


def ratio_check(K, T, rng=None):
    bm = B.bm_ratio(K, T, rng)
    ci = bm.R * bm.rel_ci
    return Record("ratio", values={"R": bm.R}, ci={"R": ci}, passed=bm.R >= 1.0 - 3.0 * ci - 1e-12)


def inertia_compare(iK, iT):
    """(ratio_deviation, hs_norm) of the inertia comparison for isotropic K."""
    _require_isotropic(iK)
    # each measure centered at its own barycenter
    Kinv = np.linalg.inv(iK.cov)
    dev = abs(np.trace(Kinv @ iT.cov) / np.trace(Kinv @ iK.cov) - 1.0)
    hs = float(np.linalg.norm(iT.cov - iK.cov))
    return float(dev), hs


def inertia_check(K, T, cfg, N):
    iK, iT = _inertia_of(K, cfg, N), _inertia_of(T, cfg.with_seed(cfg.seed + 1), N)
    dev, hs = inertia_compare(iK, iT)
    n = K.dim
    exact = iK.exact and iT.exact
    slack = 1e-9 if exact else 3.0 * float(np.max(iT.se_cov if iT.se_cov is not None else 0.0)) * n
    return Record("inertia_compare", values={"ratio_deviation": dev, "hs_norm": hs,
                                             "hs_over_sqrt_n": hs / math.sqrt(n), "exact": exact},
                  passed=dev <= hs / math.sqrt(n) + slack)


def eigencount_check(K, T, cfg, N, delta):
    iK, iT = _inertia_of(K, cfg, N), _inertia_of(T, cfg.with_seed(cfg.seed + 1), N)
    _require_isotropic(iK)
    count = B.eigenvalue_deviation_count(iT, delta)
    hs_id = float(np.linalg.norm(iT.cov - np.eye(K.dim)))
    return Record("eigencount", values={"count": count, "delta": delta, "hs_from_identity": hs_id,
                                        "eigenvalues": np.sort(iT.eigenvalues)})


@dataclass(frozen=True)
class ThinShellRecord:
    n: int
    var_sqnorm: float
    sigma_proxy: float
    A: float
    levels: tuple  # radii s
    masses: tuple
    tail_low: float
    tail_high: float
    tail_ci: float
    var_se: float

    @property
    def tails_hold(self):
        return (self.tail_low <= 0.25 + 3 * self.tail_ci
                and self.tail_high <= 0.25 + 3 * self.tail_ci)


def thin_shell_conditioning(K, cfg, N, iK=None):
    """Thin-shell proxy and the radial conditioning check on samples of isotropic K.

    Conditioning levels are radii s whose ball caps carry the masses in
    CONDITIONING_LEVELS; A is the largest relative change of the second
    moment under conditioning, and the two tails |x|^2/n <= 1 - A and
    |x|^2/n >= 1 + 13 A are each expected to carry at most 1/4.
    """
    iK = iK or _inertia_of(K, cfg, N)
    _require_isotropic(iK)
    n = K.dim
    pts = hit_and_run(K, cfg, N).points
    m = estimate_moments(pts)
    sq = np.sum(pts * pts, axis=1)
    r = np.sqrt(sq)
    total = sq.mean()
    levels, masses, ratios = [], [], []
    for p in CONDITIONING_LEVELS:
        s = float(np.quantile(r, p))
        inside = r < s
        levels.append(s)
        masses.append(float(inside.mean()))
        ratios.append(sq[inside].mean() / total)
    A = float(max(abs(x - 1.0) for x in ratios))
    low = sq / n <= 1.0 - A
    high = sq / n >= 1.0 + 13.0 * A
    ci = float(max(batch_se(low.astype(float)), batch_se(high.astype(float)), 1.0 / N))
    return ThinShellRecord(n, m.var_of_sqnorm, math.sqrt(m.var_of_sqnorm / n), A, tuple(levels),
                           tuple(masses), float(low.mean()), float(high.mean()), ci,
                           m.se_var_of_sqnorm)


def thin_shell_check(K, cfg, N):
    ts = thin_shell_conditioning(K, cfg, N)
    return Record("thin_shell", values={"var_sqnorm": ts.var_sqnorm, "sigma_proxy": ts.sigma_proxy},
                  ci={"var_sqnorm": 3 * ts.var_se}, passed=ts.var_sqnorm >= 0)


def conditioning_check(K, cfg, N):
    ts = thin_shell_conditioning(K, cfg, N)
    c_report = (ts.var_sqnorm / ts.n ** 2) / ts.A ** 2 if ts.A > 0 else math.inf
    return Record("conditioning",
                  values={"A": ts.A, "levels": ts.levels, "masses": ts.masses,
                          "tail_low": ts.tail_low, "tail_high": ts.tail_high,
                          "var_sqnorm_over_n": ts.var_sqnorm / ts.n, "C_report": c_report},
                  ci={"tail": 3 * ts.tail_ci}, passed=ts.tails_hold)


def _w2_median(K, T, cfg, N, reps=3):
    vals, floors = [], []
    for r in range(reps):
        x = hit_and_run(K, cfg.with_seed(_sub_seed(cfg.seed, r, 0)), 2 * N).points
        y = hit_and_run(T, cfg.with_seed(_sub_seed(cfg.seed, r, 1)), N).points
        vals.append(TN.w2_exact(x[:N], y))
        floors.append(TN.w2_exact(x[:N], x[N:]))
    return float(np.median(vals)), float(np.median(floors)), x[:N], y


def w2_compare(K, T, cfg, N, R):
    """W2/sqrt(n) on samples against n^(-1/4) sqrt(sigma_proxy) R^(5/2)."""
    if N > TN.MAX_EXACT_N:
        raise InvalidInputError(f"w2_compare needs N <= {TN.MAX_EXACT_N}")
    n = K.dim
    w2, floor, x, y = _w2_median(K, T, cfg, N)
    mk, mt = estimate_moments(x), estimate_moments(y)
    sigma = math.sqrt(mk.var_of_sqnorm / n)
    shape = n ** -0.25 * math.sqrt(sigma) * R ** 2.5
    # |E_K phi - E_T phi| <= W2 sqrt(max E |grad phi|^2) for phi = |x|^2
    phi_gap = abs(mk.mean_sqnorm - mt.mean_sqnorm)
    phi_bound = w2 * math.sqrt(4.0 * max(mk.mean_sqnorm, mt.mean_sqnorm))
    phi_ci = 3.0 * (mk.se_mean_sqnorm + mt.se_mean_sqnorm) + 2.0 * floor * math.sqrt(4.0 * mk.mean_sqnorm)
    return w2 / math.sqrt(n), shape, floor / math.sqrt(n), phi_gap, phi_bound, phi_ci


def w2_check(K, T, cfg, N, R):
    w, shape, ci, gap, bound, gci = w2_compare(K, T, cfg, N, R)
    ratio = w / shape if shape > 0 else math.inf
    return Record("w2_compare",
                  values={"w2_per_sqrt_n": w, "bound_shape": shape, "ratio": ratio,
                          "phi_gap": gap, "phi_bound": bound},
                  ci={"w2_per_sqrt_n": ci, "phi": gci},
                  passed=math.isfinite(ratio) and gap <= bound + gci)


def uncond_suite(K, T, cfg, N, R, gamma=0.125):
    """Cube cut, transport-cost bound and second-moment gap for an unconditional pair."""
    n = K.dim
    iK = _inertia_of(K, cfg, N)
    _require_isotropic(iK)
    xs = hit_and_run(K, cfg, N).points
    ys = hit_and_run(T, cfg.with_seed(cfg.seed + 1), N).points
    cut = TN.cut_with_cube(K, T, gamma, xs, ys)
    M = max(cut.alpha, cut.beta) * math.log(n)
    res = TN.verify_uncond_theorem(cut.K, cut.T, M, samples=xs[cut.K.contains(xs)])
    if isinstance(K, B.Box) and isinstance(T, B.Box):
        w2 = math.sqrt(TN.knothe_cost(TN.knothe_build(K, T)).value)
        w2_ci = 0.0
    else:
        m = min(N, TN.MAX_EXACT_N)
        w2 = TN.w2_exact(xs[:m], ys[:m])
        w2_ci = TN.w2_exact(xs[:m // 2], xs[m // 2:2 * (m // 2)])
    g = max(R - 1.0, 0.0)
    shape_log = g ** 2.5 * math.log(n)
    shape_plain = g ** 2.5
    second_gap = abs(np.mean(np.sum(xs * xs, axis=1)) - np.mean(np.sum(ys * ys, axis=1)))
    second_shape = math.sqrt(n) * math.log(n) * g ** 5
    values = {
        "R": R, "alpha": cut.alpha, "beta": cut.beta, "cut_mass_K": cut.mass_K,
        "cut_mass_T": cut.mass_T, "M": M, "knothe_cost": res.lhs, "bm_gap": res.gap,
        "cost_ratio": res.ratio, "w2": w2, "shape_log": shape_log, "shape_plain": shape_plain,
        "ratio_log": w2 / shape_log if shape_log > 0 else (0.0 if w2 == 0 else math.inf),
        "ratio_plain": w2 / shape_plain if shape_plain > 0 else (0.0 if w2 == 0 else math.inf),
        "w2_over_sqrt_gap": w2 / math.sqrt(g) if g > 0 else 0.0,
        "second_moment_gap": second_gap, "second_moment_shape": second_shape,
    }
    return Record("uncond_theorem", values=values, ci={"w2": w2_ci, "knothe_cost": res.lhs_se},
                  passed=math.isfinite(res.ratio))


# ----------------------------------------------------------------------------
# trends


@dataclass(frozen=True)
class TrendRow:
    n: int
    R: float
    deviation: float
    ci: float


def dimensional_trend(recipe, dims, R):
    """Inertia deviation across dimensions for pairs built at fixed R."""
    rows = []
    for n in dims:
        K, T, actual = fixed_R_pair(recipe, n, R)
        dev, _ = inertia_compare(B.exact_inertia(K), B.exact_inertia(T))
        rows.append(TrendRow(n, actual, dev, 0.0))
    return rows


def trend_non_increasing(rows):
    return all(b.deviation <= a.deviation + 3.0 * (a.ci + b.ci) + 1e-12 for a, b in zip(rows, rows[1:]))


def trend_csv(rows):
    buf = io.StringIO()
    buf.write("n,R,deviation,ci\n")
    for r in rows:
        buf.write(f"{r.n},{r.R:.12g},{r.deviation:.12g},{r.ci:.12g}\n")
    return buf.getvalue()


# ----------------------------------------------------------------------------
# scenarios


@dataclass
class Scenario:
    id: str
    K: dict
    T: dict
    dims: list
    sampler: SamplerConfig
    checks: list
    params: dict
    outputs: dict
    raw: dict = field(repr=False, default=None)

    @property
    def hash(self):
        return digest(self.raw)


def parse_scenario(doc):
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"scenario is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigurationError("scenario must be a JSON object")
    for key in ("id", "K", "T", "checks"):
        if key not in doc:
            raise ConfigurationError(f"scenario is missing field {key!r}")
    checks = doc["checks"]
    if not isinstance(checks, list) or not checks:
        raise ConfigurationError("field 'checks' must be a non-empty list")
    for c in checks:
        if c not in CHECKS:
            raise ConfigurationError(f"unknown check {c!r} in field 'checks'")
    dims = doc.get("dims")
    if dims is None:
        d = doc["K"].get("dim") if isinstance(doc["K"], dict) else None
        if d is None:
            raise ConfigurationError("scenario needs field 'dims' or a body 'dim'")
        dims = [d]
    if not all(isinstance(n, int) and n >= 1 for n in dims):
        raise ConfigurationError("field 'dims' must list positive integers")
    try:
        sampler = SamplerConfig(**doc.get("sampler", {}))
    except (TypeError, InvalidInputError) as exc:
        raise ConfigurationError(f"invalid field 'sampler': {exc}") from exc
    sc = Scenario(str(doc["id"]), doc["K"], doc["T"], list(dims), sampler, list(checks),
                  dict(doc.get("params", {})), dict(doc.get("outputs", {})), doc)
    for n in sc.dims:  # bodies must parse up front
        _bodies_for(sc, n)
    return sc


def load_scenario(path):
    with open(path) as fh:
        return parse_scenario(fh.read())


def _bodies_for(sc, n):
    K = B.body_from_spec(sc.K, n)
    T = B.body_from_spec(sc.T, n)
    mode = sc.params.get("normalize", "none")
    if mode == "K":
        _, amap = B.isotropic_normalize(K, B.exact_inertia(K))
        K, T = B.affine_image(K, amap), B.affine_image(T, amap)
    elif mode == "both":
        K = B.isotropic_normalize(K, B.exact_inertia(K))[0]
        T = B.isotropic_normalize(T, B.exact_inertia(T))[0]
    elif mode != "none":
        raise ConfigurationError(f"unknown value {mode!r} in field 'params.normalize'")
    return K, T


def _check_job(sc, n, idx, name, seed):
    p = sc.params
    N = int(p.get("N", 2048))
    cfg = sc.sampler.with_seed(_sub_seed(seed, n, idx))
    rng = np.random.default_rng(_sub_seed(seed, n, idx, 99))
    K, T = _bodies_for(sc, n)

    def run():
        if name == "ratio":
            return ratio_check(K, T, rng)
        if name == "inertia_compare":
            return inertia_check(K, T, cfg, N)
        if name == "eigencount":
            return eigencount_check(K, T, cfg, N, float(p.get("delta", 0.1)))
        if name == "thin_shell":
            return thin_shell_check(K, cfg, N)
        if name == "conditioning":
            return conditioning_check(K, cfg, N)
        R = B.bm_ratio(K, T, rng).R
        if name == "w2_compare":
            return w2_check(K, T, cfg, min(N, TN.MAX_EXACT_N), R)
        if name == "uncond_theorem":
            return uncond_suite(K, T, cfg, N, R, float(p.get("gamma", 0.125)))
        raise ConfigurationError(f"unknown check {name!r}")

    inputs = {"scenario": sc.hash, "n": n, "check": name, "seed": cfg.seed}
    return _timed(run, name, n, inputs)


def pool_size(jobs):
    cap = os.environ.get("BMLAB_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, jobs))


@dataclass
class Report:
    scenario_id: str
    scenario_hash: str
    seed: int
    records: list = field(default_factory=list)

    @property
    def passed(self):
        return all(r.passed for r in self.records)

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "scenario_id": self.scenario_id,
            "scenario_hash": self.scenario_hash,
            "seed": self.seed,
            "records": [r.to_dict() for r in self.records],
            "passed": self.passed,
        }

    def timings(self):
        return {"scenario_id": self.scenario_id,
                "records": [{"name": r.name, "n": r.n, "wall_time": r.wall_time} for r in self.records]}


def run_scenario(sc, seed=None):
    seed = sc.sampler.seed if seed is None else int(seed)
    jobs = [(n, i, c) for n in sc.dims for i, c in enumerate(sc.checks)]
    with ThreadPoolExecutor(pool_size(len(jobs))) as pool:
        records = list(pool.map(lambda j: _check_job(sc, j[0], j[1], j[2], seed), jobs))
    return Report(sc.id, sc.hash, seed, records)


def report_json(report):
    return json.dumps(_clean(report.to_dict()), sort_keys=True, indent=1) + "\n"


def report_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "n", "key", "value", "ci", "passed"])
    for r in report.records:
        d = _clean(r.to_dict())
        for k in sorted(d["values"]):
            w.writerow([d["name"], d["n"], k, json.dumps(d["values"][k]),
                        json.dumps(d["ci"].get(k, "")), d["passed"]])
        if not d["values"]:
            w.writerow([d["name"], d["n"], "", "", "", d["passed"]])
    return buf.getvalue()


def emit_report(report, out_dir, fmt="json", trends=None):
    """Write the report (and trend CSVs) under ``out_dir``; returns written paths."""
    os.makedirs(out_dir, exist_ok=True)
    base = os.path.join(out_dir, report.scenario_id)
    paths = []
    if fmt == "json":
        text = report_json(report)
        path = base + ".json"
    elif fmt == "csv":
        text = report_csv(report)
        path = base + ".csv"
    else:
        raise ConfigurationError(f"unknown report format {fmt!r}")
    with open(path, "w") as fh:
        fh.write(text)
    paths.append(path)
    with open(base + ".timings.json", "w") as fh:
        json.dump(_clean(report.timings()), fh, sort_keys=True, indent=1)
    paths.append(base + ".timings.json")
    for name, rows in (trends or {}).items():
        tp = os.path.join(out_dir, f"{report.scenario_id}.{name}.csv")
        with open(tp, "w") as fh:
            fh.write(trend_csv(rows))
        paths.append(tp)
    return paths
