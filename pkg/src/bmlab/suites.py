"""Built-in check suites for ``bmlab check``.

Each suite is a function of the seed returning a list of records; the
suites exercise closed forms first and randomized property batteries second.
"""

import math
import time

import numpy as np

from . import bodies as B
from . import logconcave1d as L
from . import supconv_nd as S
from . import transport_nd as TN
from .errors import BMLabError, RecipeError
from .lab import Record, Report, digest, dimensional_trend, thin_shell_conditioning, \
    trend_non_increasing
from .recipes import fixed_R_pair
from .sampling import SamplerConfig


def _rec(name, values, passed, ci=None):
    return Record(name, values=values, ci=ci or {}, passed=bool(passed))


# ----------------------------------------------------------------------------
# 1D property batteries, shared with the test suite


def poincare_case(d, rng):
    """Both sides of the Poincare bound for a random centered trigonometric test function."""
    w = rng.uniform(0.2, 3.0) / math.sqrt(d.variance())
    phase = rng.uniform(0, 2 * math.pi)
    shift = d.expect(lambda t: np.sin(w * t + phase))
    return L.check_bobkov_poincare(d, lambda t: np.sin(w * t + phase) - shift,
                                   lambda t: w * np.cos(w * t + phase))


def nested_case(d, rng):
    lo, hi = d.effective_support()
    a, b = np.sort(rng.uniform(lo, hi, 2))
    width = b - a
    c = a + width * rng.uniform(0.0, 0.5)
    e = c + (b - c) * rng.uniform(0.3, 1.0)
    return L.check_conditioned_variance_monotone(d, (c, e), (a, b))


def lemma_battery(seed, count):
    """(worst Poincare slack, min Grunbaum mass, worst nested-variance slack) over random densities."""
    rng = np.random.default_rng(seed)
    worst_p, min_g, worst_v = -math.inf, math.inf, -math.inf
    for i in range(count):
        d = L.random_logconcave(rng, even=bool(i % 2))
        lhs, rhs = poincare_case(d, rng)
        worst_p = max(worst_p, (lhs - rhs) / max(rhs, 1e-300))
        min_g = min(min_g, L.check_grunbaum(d))
        v1, v2 = nested_case(d, rng)
        worst_v = max(worst_v, (v1 - v2) / max(v2, 1e-300))
    return worst_p, min_g, worst_v


def lemmas1d(seed):
    """1D transport, Poincare, Grunbaum and nested-variance checks."""
    out = []
    w = L.w2_1d(L.Uniform(1.0), L.Uniform(2.0))
    out.append(_rec("w2_uniform_pair", {"w2": w, "expected": 1 / math.sqrt(3)},
                    abs(w - 1 / math.sqrt(3)) <= 1e-6))
    wg = L.w2_1d(L.Gaussian(1.0), L.Gaussian(3.0, 1.0))
    out.append(_rec("w2_gaussian_pair", {"w2": wg, "expected": math.sqrt(5.0)},
                    abs(wg - math.sqrt(5.0)) <= 1e-6))
    p, g, v = lemma_battery(seed, 200)
    out.append(_rec("poincare_factor_12", {"worst_rel_slack": p}, p <= 1e-9))
    out.append(_rec("grunbaum", {"min_mass": g, "bound": 1 / math.e}, g >= 1 / math.e - 1e-9))
    out.append(_rec("nested_variance", {"worst_rel_slack": v}, v <= 1e-9))
    for s in (1.0, 2.0, 4.0, 10.0, 100.0):
        val = L.supconv_1d_integral(L.Uniform(1.0), L.Uniform(s))
        exp = (1 + s) / (2 * math.sqrt(s))
        out.append(_rec(f"supconv_uniform_s{s:g}", {"integral": val, "expected": exp},
                        abs(val - exp) <= 2e-3))
    return out


def supconv(seed):
    """Sup-convolution closed forms and the variance identity."""
    out = []
    for k in (1, 2):
        f = S.gaussian_grid(k)
        for alpha in (1.0, 1.5, 2.0, 4.0):
            g = S.gaussian_grid(k, std=alpha, width=9.0)
            val = S.sup_convolve(f, g, 0.5).mass
            exp = S.gaussian_supconv_integral_closed_form(k, alpha)
            out.append(_rec(f"gaussian_k{k}_alpha{alpha:g}", {"integral": val, "expected": exp},
                            abs(val - exp) <= 2e-3))
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(2, 10000, 3))
    dec = S.variance_decomposition(x, y)
    err = float(np.max(np.abs(dec.v - dec.c1_term - dec.c2_term) / np.maximum(1.0, dec.v)))
    out.append(_rec("variance_decomposition", {"max_rel_err": err}, err <= 1e-12))
    pairs = [(L.Uniform(1.0), L.Uniform(2.0)), (L.Gaussian(1.0), L.Gaussian(2.0)),
             (L.Uniform(1.0), L.Gaussian(0.7))]
    for i, (a, b) in enumerate(pairs):
        s = S.summarize(S.GridDensity.from_density1d(a, 1024), S.GridDensity.from_density1d(b, 1024), 9)
        kmin = float(s.K_lambda.min())
        out.append(_rec(f"prekopa_leindler_pair{i}", {"min_K_lambda": kmin}, kmin >= 1 - 2e-3))
    return out


def knothe(seed):
    """Knothe costs and empirical W2 against them."""
    out = []
    kmap = TN.knothe_build(B.Box.cube(2, 1.0), B.Box.cube(2, 2.0))
    c = TN.knothe_cost(kmap).value
    out.append(_rec("box_cost_n2", {"cost": c, "expected": 2 / 3}, abs(c - 2 / 3) <= 1e-9))
    cfg = SamplerConfig(seed=seed)
    for name, K, T in knothe_pairs(4):
        w2, root, ci = TN.knothe_w2_check(K, T, cfg, 1024)
        out.append(_rec(f"w2_vs_knothe_{name}", {"w2": w2, "sqrt_cost": root},
                        w2 <= root + 3 * ci, {"w2": ci}))
    return out


def knothe_pairs(n):
    iso = B.isotropic_cube(n)
    ball = B.isotropic_ball(n)
    return [
        ("cube_scaled", iso, B.Box(iso.a * 1.3)),
        ("cube_aniso", iso, B.Box(iso.a * np.linspace(0.8, 1.4, n))),
        ("cube_ball", iso, ball),
        ("ball_cross", ball, B.CrossPolytope(2.0 * math.sqrt(n), n)),
        ("cube_l1cut", iso, B.intersect_cube(B.CrossPolytope(1.2 * n ** 0.5 * 1.7, n), 1.6)),
    ]


def trends(seed):
    """Inertia deviation across dimensions at fixed R."""
    out = []
    dims = [4, 8, 16, 32, 64]
    rows = dimensional_trend("ellipsoid_stretch", dims, 1.25)
    ok = trend_non_increasing(rows) and rows[-1].deviation * 4 <= rows[0].deviation
    out.append(_rec("ellipsoid_trend", {"n": [r.n for r in rows], "R": [r.R for r in rows],
                                        "deviation": [r.deviation for r in rows]}, ok))
    rows = dimensional_trend("box_scale", dims, 1.25)
    out.append(_rec("box_trend", {"n": [r.n for r in rows], "deviation": [r.deviation for r in rows]},
                    trend_non_increasing(rows)))
    rows = dimensional_trend("identical", dims, 1.0)
    out.append(_rec("identical_trend", {"deviation": [r.deviation for r in rows]},
                    all(r.deviation == 0 for r in rows)))
    try:
        for n in dims:
            fixed_R_pair("box_fixed_ratio", n, 1.25, 1.5)
        rejected = False
    except RecipeError:
        rejected = True
    out.append(_rec("fixed_ratio_rejected", {"rejected": rejected}, rejected))
    return out


def thinshell(seed):
    """Thin-shell and radial conditioning on the cube in dimension 16."""
    n = 16
    K = B.isotropic_cube(n)
    ts = thin_shell_conditioning(K, SamplerConfig(seed=seed), 200000, B.exact_inertia(K))
    exact = 0.8 * n
    return [
        _rec("cube_tails", {"A": ts.A, "tail_low": ts.tail_low, "tail_high": ts.tail_high,
                            "masses": ts.masses}, ts.tails_hold, {"tail": 3 * ts.tail_ci}),
        _rec("cube_var_sqnorm", {"var_sqnorm": ts.var_sqnorm, "expected": exact},
             abs(ts.var_sqnorm / exact - 1) <= 0.05),
    ]


SUITES = {"lemmas1d": lemmas1d, "supconv": supconv, "knothe": knothe, "trends": trends,
          "thinshell": thinshell}


def run_suite(name, seed=0):
    t0 = time.perf_counter()
    try:
        records = SUITES[name](seed)
    except (BMLabError, ValueError, ArithmeticError) as exc:
        records = [Record(name, passed=False, error=f"{type(exc).__name__}: {exc}")]
    share = (time.perf_counter() - t0) / max(len(records), 1)
    for r in records:
        r.wall_time = share
        r.inputs = {"suite": name, "seed": int(seed), "record": r.name}
    return Report(f"suite-{name}", digest({"suite": name}), int(seed), records)
