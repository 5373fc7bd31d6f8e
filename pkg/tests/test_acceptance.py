"""Acceptance gate. Each test is one criterion; the terminal summary prints
one PASS/FAIL line per criterion."""

import math
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import integrate

from gspyramid.cloud_io import Camera, write_cameras, write_ply
from gspyramid.codec import QuantSpec, build_freq_table, compress, decode_container, decompress, quantize, stats
from gspyramid.ggd import GGDParams, cdf, pdf, rate_bits, sample
from gspyramid.perception import PerceptionParams, coverage_scores, depth_factor, level_from_distance
from gspyramid.pyramid import PyramidConfig, build_pyramid, cumulative_set, reconstruct
from gspyramid.rangecoder import decode, encode

from conftest import max_error_ratio, random_cloud, ring_cameras

pytestmark = pytest.mark.acceptance


def report(name, ok, detail):
    print(f"{name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


def test_A1_lossless_partition():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    sizes = [0, 1, 1_000, 100_000]
    failures = []
    for k in range(200):
        n = sizes[k % 4]
        levels = int(rng.integers(1, 9))
        cloud = random_cloud(rng, n, names=("opacity", "f_dc_0"), extent=float(rng.uniform(1, 50)))
        rho = float(rng.uniform(0.5, 8.0))
        pyr = build_pyramid(cloud, PyramidConfig(rho, levels, seed=k))
        joined = np.concatenate(pyr.levels) if pyr.levels else np.zeros(0, np.int64)
        disjoint = len(joined) == len(np.unique(joined))
        complete = np.array_equal(np.sort(joined), np.arange(n))
        if not (disjoint and complete and reconstruct(pyr) == cloud
                and np.array_equal(cumulative_set(pyr, pyr.num_levels - 1), np.arange(n))):
            failures.append((k, n, levels))
    elapsed = time.perf_counter() - start
    report("A1", not failures and elapsed < 60, f"200 clouds, {len(failures)} failures, {elapsed:.1f}s")


def test_A2_ggd_normalization():
    rng = np.random.default_rng(202)
    start = time.perf_counter()
    worst_mass = worst_cdf = 0.0
    for beta in (0.5, 1.0, 2.0, 4.0):
        for alpha in (0.1, 1.0, 10.0):
            p = GGDParams(float(rng.uniform(-3, 3)), alpha, beta)
            left, _ = integrate.quad(lambda t: pdf(t, p), -np.inf, p.mu, epsabs=1e-12)
            right, _ = integrate.quad(lambda t: pdf(t, p), p.mu, np.inf, epsabs=1e-12)
            worst_mass = max(worst_mass, abs(left + right - 1))
            for x in p.mu + alpha * rng.uniform(-8, 8, 100):
                lo, hi = sorted((p.mu, x))
                mass, _ = integrate.quad(lambda t: pdf(t, p), lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)
                ref = 0.5 + math.copysign(mass, x - p.mu)
                worst_cdf = max(worst_cdf, abs(cdf(x, p) - ref))
    elapsed = time.perf_counter() - start
    ok = worst_mass <= 1e-6 and worst_cdf <= 1e-8 and elapsed < 30
    report("A2", ok, f"max |mass-1|={worst_mass:.2e}, max cdf err={worst_cdf:.2e}, {elapsed:.1f}s")


def test_A3_closed_forms():
    worst = 0.0
    anchors = [
        abs(pdf(0.0, GGDParams(0, 1, 2)) - 1 / math.sqrt(math.pi)),
        abs(cdf(1.0, GGDParams(0, 1, 1)) - (1 - math.exp(-1) / 2)),
    ]
    for mu, alpha in [(0.0, 1.0), (2.0, 0.25), (-1.0, 5.0)]:
        sigma = alpha / math.sqrt(2)
        for x in mu + alpha * np.linspace(-6, 6, 121):
            z = (x - mu) / sigma
            worst = max(
                worst,
                abs(pdf(x, GGDParams(mu, alpha, 2)) - math.exp(-z * z / 2) / (sigma * math.sqrt(2 * math.pi))),
                abs(cdf(x, GGDParams(mu, alpha, 2)) - 0.5 * (1 + math.erf(z / math.sqrt(2)))),
                abs(pdf(x, GGDParams(mu, alpha, 1)) - math.exp(-abs(x - mu) / alpha) / (2 * alpha)),
                abs(cdf(x, GGDParams(mu, alpha, 1))
                    - (0.5 * math.exp((x - mu) / alpha) if x < mu else 1 - 0.5 * math.exp(-(x - mu) / alpha))),
            )
    ok = worst <= 1e-9 and max(anchors) <= 1e-9
    report("A3", ok, f"max err={worst:.2e}, anchor err={max(anchors):.2e}")


def test_A4_codec_round_trip():
    rng = np.random.default_rng(404)
    start = time.perf_counter()
    total = 0
    bad = []
    for k in range(50):
        p = GGDParams(float(rng.uniform(-2, 2)), float(rng.uniform(0.1, 5)), float(rng.choice([0.5, 1, 1.5, 2, 4])))
        q = float(rng.uniform(0.02, 1.0)) * p.alpha
        x = sample(p, 20_000, rng)
        sym = quantize(x, q)
        pad = int(rng.integers(0, 50))
        table = build_freq_table(p, q, int(sym.min()) - pad, int(sym.max()) + pad)
        stream = encode(sym, table)
        ideal = rate_bits(sym * q, q, p) / 8
        exact = np.array_equal(decode(stream, sym.size, table), sym)
        if not exact or len(stream) > 1.01 * ideal + 16:
            bad.append((k, exact, len(stream), ideal))
        total += sym.size
    elapsed = time.perf_counter() - start
    ok = not bad and total == 1_000_000 and elapsed < 120
    report("A4", ok, f"{total} symbols, 50 configs, {len(bad)} failures, {elapsed:.1f}s")


def test_A5_distortion_bound():
    rng = np.random.default_rng(505)
    worst = 0.0
    structure = True
    for k in range(20):
        n = int(rng.integers(0, 5000))
        cloud = random_cloud(rng, n, extent=float(rng.uniform(1, 100)))
        pyr = build_pyramid(cloud, PyramidConfig(float(rng.uniform(0.5, 10)), int(rng.integers(1, 8))))
        data = compress(pyr, QuantSpec(q_scale=float(rng.uniform(0.5, 8))))
        dec, rec = decompress(data)
        structure &= (rec.n == n and rec.names == cloud.names and rec.tags == cloud.tags
                      and dec.num_levels == pyr.num_levels
                      and all(np.array_equal(a, b) for a, b in zip(dec.levels, pyr.levels)))
        if n:
            worst = max(worst, max_error_ratio(data, cloud))
    report("A5", structure and worst <= 1.0, f"20 clouds, max error / (q/2) = {worst:.6f}")


def test_A6_perception_formulas():
    rng = np.random.default_rng(606)
    params = PerceptionParams(50.0, 0.7)
    exact = depth_factor(100.0, params) == 1.7
    flat = all(depth_factor(s, params) == 1.0 for s in np.linspace(0, 50, 501))
    halving = 0.0
    for _ in range(1000):
        d, f, d_std = rng.uniform(1e-3, 1e3), rng.uniform(1, 3), rng.uniform(1e-2, 1e4)
        a, _ = level_from_distance(d, f, d_std, 8)
        b, _ = level_from_distance(d / 2, f, d_std, 8)
        halving = max(halving, abs(b - a - 1.0))
    cloud = random_cloud(rng, 50)
    pyr = build_pyramid(cloud, PyramidConfig(2.5, 4))
    cams = ring_cameras(10, radius=12.0)
    identity = True
    for level in range(4):
        cov, counts = coverage_scores(pyr, cams, level, PerceptionParams(d_std=40.0))
        n_vis = np.rint(cov * len(cams) / 0.5).astype(int)
        identity &= int(n_vis.sum()) == int(counts.sum())
    ok = exact and flat and halving <= 1e-12 and identity
    report("A6", ok, f"f_depth exact={exact}, flat={flat}, halving err={halving:.1e}, identity={identity}")


def test_A7_rate_distortion_trend():
    rng = np.random.default_rng(707)
    start = time.perf_counter()
    cloud = random_cloud(rng, 100_000)
    pyr = build_pyramid(cloud, PyramidConfig(10.0 / 16, 6))
    rows = []
    for s in (1, 2, 4, 8):
        data = compress(pyr, QuantSpec(q_scale=s))
        rows.append((len(data), stats(data, cloud)["attribute_mse"]))
    elapsed = time.perf_counter() - start
    sizes, mses = zip(*rows)
    ok = (all(a > b for a, b in zip(sizes, sizes[1:])) and all(a < b for a, b in zip(mses, mses[1:]))
          and elapsed < 60)
    report("A7", ok, f"sizes={list(sizes)}, mse={[f'{m:.3e}' for m in mses]}, {elapsed:.1f}s")


def test_A8_cli_determinism(tmp_path):
    rng = np.random.default_rng(808)
    ply = tmp_path / "in.ply"
    write_ply(random_cloud(rng, 3000), ply)
    cams = tmp_path / "cams.json"
    write_cameras(ring_cameras(5, radius=15.0), cams)

    def cli(*args):
        res = subprocess.run([sys.executable, "-m", "gspyramid.cli", *map(str, args)],
                             capture_output=True, check=False)
        assert res.returncode == 0, res.stderr
        return res.stdout

    outputs = []
    for run in range(2):
        d = tmp_path / f"run{run}"
        d.mkdir()
        got = {
            "build": cli("build", "--input", ply, "--levels", "auto", "--seed", 7),
            "perceive": cli("perceive", "--input", ply, "--cameras", cams, "--seed", 7,
                            "--level-csv", d / "levels.csv"),
        }
        cli("compress", "--input", ply, "--output", d / "c.pyrgs", "--seed", 7)
        cli("decompress", "--input", d / "c.pyrgs", "--output", d / "out.ply")
        got["stats"] = cli("stats", "--input", d / "c.pyrgs", "--original", ply)
        for name in ("levels.csv", "c.pyrgs", "out.ply"):
            got[name] = (d / name).read_bytes()
        outputs.append(got)
    same = [k for k in outputs[0] if outputs[0][k] == outputs[1][k]]
    report("A8", len(same) == len(outputs[0]), f"identical: {same}")
