"""Acceptance criteria, each at its stated tolerance and time budget."""

import math
import subprocess
import sys
import time

import numpy as np

from bmlab import bodies as B
from bmlab import logconcave1d as L
from bmlab import supconv_nd as S
from bmlab import transport_nd as TN
from bmlab.lab import dimensional_trend, thin_shell_conditioning, trend_non_increasing, uncond_suite
from bmlab.recipes import ellipsoid_stretch_for, fixed_R_pair
from bmlab.sampling import SamplerConfig, hit_and_run
from bmlab.suites import knothe_pairs, lemma_battery


def test_c01_uniform_w2_exact(verdict):
    t0 = time.perf_counter()
    w = L.w2_1d(L.Uniform(1.0), L.Uniform(2.0))
    dt = time.perf_counter() - t0
    err = abs(w - 1 / math.sqrt(3))
    verdict("C1 W2(U[-1,1], U[-2,2]) = 1/sqrt3", err <= 1e-6 and dt < 1.0, f"err={err:.2e} t={dt:.3f}s")


def test_c02_gaussian_supconv(verdict):
    t0 = time.perf_counter()
    errs = {}
    for k in (1, 2):
        f = S.gaussian_grid(k)
        for alpha in (1.0, 1.5, 2.0, 4.0):
            val = S.sup_convolve(f, S.gaussian_grid(k, std=alpha), 0.5).mass
            errs[(k, alpha)] = abs(val - S.gaussian_supconv_integral_closed_form(k, alpha))
    dt = time.perf_counter() - t0
    headline = errs[(1, 2.0)]
    closed = abs(S.gaussian_supconv_integral_closed_form(1, 2.0) - math.sqrt(1.25))
    worst = max(errs.values())
    ok = headline <= 2e-3 and closed <= 1e-15 and worst <= 2e-3 and dt < 30
    verdict("C2 Gaussian sup-convolution closed form", ok,
            f"headline err={headline:.2e} worst={worst:.2e} t={dt:.1f}s")


def test_c03_variance_identity(verdict):
    rng = np.random.default_rng(3)
    x = rng.normal(size=(10000, 5)) * rng.uniform(0.1, 3.0, (10000, 1))
    y = rng.normal(size=(10000, 5)) * rng.uniform(0.1, 3.0, (10000, 1))
    t0 = time.perf_counter()
    dec = S.variance_decomposition(x, y)
    dt = time.perf_counter() - t0
    nx, ny = np.sum(x * x, 1), np.sum(y * y, 1)
    target = (nx - ny) ** 2 / 12 + np.sum((x - y) ** 2, 1) ** 2 / 180
    # independent route: moments of U[0,1] applied to the quadratic in L
    lam = np.linspace(0, 1, 2001)
    sample = np.sum((lam[:, None, None] * x[:50] + (1 - lam[:, None, None]) * y[:50]) ** 2, axis=2)
    quad = np.trapezoid(sample ** 2, lam, axis=0) - np.trapezoid(sample, lam, axis=0) ** 2
    rel = float(np.max(np.abs(dec.v - target) / np.maximum(1.0, target)))
    quad_rel = float(np.max(np.abs(quad - target[:50]) / np.maximum(1.0, target[:50])))
    verdict("C3 variance identity 1/12, 1/180", rel <= 1e-12 and quad_rel <= 1e-5 and dt < 1.0,
            f"rel={rel:.1e} quadrature={quad_rel:.1e} t={dt:.3f}s")


def test_c04_prekopa_leindler(verdict):
    rng = np.random.default_rng(4)
    pairs = [(L.Uniform(1.0), L.Uniform(2.0)), (L.Gaussian(1.0), L.Gaussian(3.0, 1.0)),
             (L.Uniform(1.0, 0.5), L.Exponential(1.0))]
    pairs += [(L.random_logconcave(rng), L.random_logconcave(rng)) for _ in range(3)]
    kmin = math.inf
    for f, g in pairs:
        s = S.summarize(S.GridDensity.from_density1d(f, 1024), S.GridDensity.from_density1d(g, 1024), 9)
        kmin = min(kmin, float(s.K_lambda.min()))
    g2 = S.summarize(S.gaussian_grid(2), S.gaussian_grid(2, std=1.5), 5)
    kmin = min(kmin, float(g2.K_lambda.min()))
    errs = []
    for s in (1.0, 2.0, 4.0, 10.0, 100.0):
        val = L.supconv_1d_integral(L.Uniform(1.0), L.Uniform(s))
        errs.append(abs(val - (1 + s) / (2 * math.sqrt(s))))
    ok = kmin >= 1 - 2e-3 and max(errs) <= 2e-3
    verdict("C4 Prekopa-Leindler suite", ok, f"min K_lambda={kmin:.5f} uniform err={max(errs):.1e}")


def test_c05_lemma_suites(verdict):
    t0 = time.perf_counter()
    p, g, v = lemma_battery(5, 1000)
    dt = time.perf_counter() - t0
    ok = p <= 1e-9 and g >= 1 / math.e - 1e-12 and v <= 1e-9 and dt < 120
    verdict("C5 Poincare/Grunbaum/nested variance on 1000 densities", ok,
            f"poincare slack={p:.3f} grunbaum min={g:.4f} variance slack={v:.3f} t={dt:.1f}s")


def test_c06_transport_lower_bound_1d(verdict):
    rng = np.random.default_rng(6)
    pairs = [(L.Uniform(1.0), L.Uniform(s)) for s in (1.5, 2.0, 3.0)]
    pairs += [(L.Gaussian(1.0), L.Gaussian(s, m)) for s, m in ((1.5, 0.0), (2.0, 0.5), (0.7, -0.3))]
    pairs += [(L.Uniform(1.0), L.Gaussian(0.8)), (L.Gaussian(1.0), L.Uniform(2.0, 0.3))]
    while len(pairs) < 20:
        pairs.append((L.random_logconcave(rng), L.random_logconcave(rng)))
    t0 = time.perf_counter()
    worst = math.inf
    for f, g in pairs:
        lhs, rhs = S.verify_transport_variance_bound_1d(f, g, cells=1024, lambda_count=17)
        worst = min(worst, lhs - rhs)
    dt = time.perf_counter() - t0
    verdict("C6 1D transport variance lower bound on 20 pairs", worst >= -5e-3 and dt < 300,
            f"min(lhs-rhs)={worst:.4f} t={dt:.1f}s")


def _triangular_monotone(kmap, x, rng):
    y = kmap(x)
    n = x.shape[1]
    tri = 0.0
    for j in range(n - 1):
        xp = x.copy()
        xp[:, j + 1:] *= rng.uniform(0.2, 0.9, (x.shape[0], 1))
        tri = max(tri, float(np.max(np.abs(kmap(xp)[:, :j + 1] - y[:, :j + 1]))))
    mono = True
    for j in range(n):
        xp = x.copy()
        xp[:, j] = x[:, j] + 0.05 * np.sign(-x[:, j]) * np.abs(x[:, j])
        step = np.sign(xp[:, j] - x[:, j]) * (kmap(xp)[:, j] - y[:, j])
        mono &= bool(np.all(step >= -1e-12))
    return tri, mono


def test_c07_knothe_suite(verdict):
    c = TN.knothe_cost(TN.knothe_build(B.Box.cube(2, 1.0), B.Box.cube(2, 2.0))).value
    rng = np.random.default_rng(7)
    cfg = SamplerConfig(seed=7)
    # invariants: a product pair and a raster pair, 1e4 points each
    K = B.isotropic_cube(4)
    prod = TN.knothe_build(K, B.Box(K.a * np.array([0.8, 1.0, 1.2, 1.5])))
    x = hit_and_run(K, cfg, 10000).points
    tri_p, mono_p = _triangular_monotone(prod, x, rng)
    jac_p = float(np.max(np.abs(prod.jacobian(x) - 0.8 * 1.2 * 1.5)))
    ball = B.isotropic_ball(4)
    grid = TN.knothe_build(K, ball)
    tri_g, mono_g = _triangular_monotone(grid, x, rng)
    ratio = ball.exact_volume() / K.exact_volume()
    jac_g = abs(float(np.median(grid.jacobian(x))) / ratio - 1)
    # raster maps resolve the target only to one cell
    y = grid(x)
    excess = float(np.max(np.linalg.norm(y - ball.project(y), axis=1)))
    cell = float(np.linalg.norm(grid.tgt.h))
    inv_ok = (tri_p == 0 and tri_g == 0 and mono_p and mono_g and jac_p <= 1e-12 and jac_g <= 0.1
              and excess <= cell)
    w2_ok, worst = True, -math.inf
    for name, A, T in knothe_pairs(4):
        w2, root, ci = TN.knothe_w2_check(A, T, cfg, 1024)
        w2_ok &= w2 <= root + 3 * ci
        worst = max(worst, (w2 - root) / ci)
    ok = abs(c - 2 / 3) <= 1e-9 and inv_ok and w2_ok
    verdict("C7 Knothe suite", ok,
            f"cost err={abs(c - 2 / 3):.1e} grid jac dev={jac_g:.3f} excess={excess:.3f}<=cell {cell:.3f} "
            f"max (w2-sqrt cost)/CI={worst:.2f}")


def test_c08_dimensional_trend(verdict):
    dims = [4, 8, 16, 32, 64]
    t0 = time.perf_counter()
    rows = dimensional_trend("ellipsoid_stretch", dims, 1.25)
    dt = time.perf_counter() - t0
    closed = max(abs(r.deviation - (ellipsoid_stretch_for(1.25, r.n) ** 2 - 1) / r.n) for r in rows)
    ok = (trend_non_increasing(rows) and rows[0].deviation >= 4 * rows[-1].deviation
          and closed <= 1e-12 and all(abs(r.R / 1.25 - 1) <= 0.02 for r in rows) and dt < 120)
    verdict("C8 dimensional trend at fixed R=1.25", ok,
            "deviation=" + ",".join(f"{r.deviation:.4f}" for r in rows) + f" t={dt:.1f}s")


def test_c09_conditioning_cube(verdict):
    n = 16
    K = B.isotropic_cube(n)
    t0 = time.perf_counter()
    ts = thin_shell_conditioning(K, SamplerConfig(seed=9), 200000, B.exact_inertia(K))
    dt = time.perf_counter() - t0
    rel = abs(ts.var_sqnorm / (0.8 * n) - 1)
    ok = ts.tails_hold and rel <= 0.05 and dt < 180
    verdict("C9 conditioning tails on the cube, n=16", ok,
            f"A={ts.A:.4f} tails=({ts.tail_low:.4f},{ts.tail_high:.4f}) ci={ts.tail_ci:.4f} "
            f"Var|X|^2 rel err={rel:.4f} t={dt:.1f}s")


def test_c10_shape_tracking(verdict):
    t0 = time.perf_counter()
    ratios, diag = [], []
    cfg = SamplerConfig(seed=10, walkers=32)
    for n in (4, 16, 64):
        for gap in (0.05, 0.1, 0.2):
            K, T, R = fixed_R_pair("box_scale", n, 1 + gap)
            rec = uncond_suite(K, T, cfg, 1024, R)
            ratios.append(rec.values["ratio_log"])
            diag.append(rec.values["w2_over_sqrt_gap"])
    dt = time.perf_counter() - t0
    finite = all(math.isfinite(r) and r > 0 for r in ratios)
    spread = max(ratios) / min(ratios) if finite else math.inf
    ok = finite and spread < 10 and dt < 600
    verdict("C10 W2/((R-1)^(5/2) log n) stable within 10x", ok,
            f"max={max(ratios):.1f} spread={spread:.1f}x W2/sqrt(R-1) in "
            f"[{min(diag):.2f},{max(diag):.2f}] t={dt:.0f}s")


def test_c11_determinism(verdict, tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        proc = subprocess.run([sys.executable, "-m", "bmlab.cli", "check", "lemmas1d", "--seed", "11",
                               "--out", str(d)], capture_output=True, text=True)
        outs.append((proc.returncode, (d / "suite-lemmas1d.json").read_bytes()))
    same = outs[0][1] == outs[1][1]
    verdict("C11 byte-identical lemmas1d reports", same and outs[0][0] == 0,
            f"exit codes {outs[0][0]},{outs[1][0]}")
