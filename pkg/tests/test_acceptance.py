"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line
(see the terminal summary hook in conftest)."""

import json
import math
import time

import numpy as np
import pytest

from breathlink.cli import compare_channels, main
from breathlink.dispersion import Impulse, MediumParams, SourceSpec, field_snapshot, puff_concentration
from breathlink.eulerian import GridSolverConfig, max_stable_dt, solve
from breathlink.fields import GridSpec
from breathlink.io import sha256_file
from breathlink.lagrangian import simulate
from breathlink.receiver import ReceiverSpec, poisson_tails
from breathlink.scenarios import SymbolFrame, isi_profile, run_scenario

from .conftest import CASE_K, CASE_Q, CASE_U, H

pytestmark = pytest.mark.acceptance


def detail(record_property, text):
    record_property("detail", text)
    print(text)


@pytest.fixture
def med():
    return MediumParams(CASE_U, CASE_K)


@pytest.fixture
def src():
    return SourceSpec(Impulse(CASE_Q), height_H=H)


def test_criterion_1_snapshot_reproduction(src, med, record_property):
    start = time.perf_counter()
    times = [0.05, 0.2, 0.4, 0.8]
    h = 0.005
    grid = GridSpec.plane((-0.5, 2.2, h), (-1.2, 1.2, h), H)
    ratios, spreads, locs = [], [], []
    p0 = puff_concentration(src, med, (CASE_U * times[0], 0.0, H), times[0])
    for t in times:
        f = field_snapshot(src, med, grid, t)
        _, (x, y, _) = f.peak()
        locs.append((x, y))
        assert abs(x - CASE_U * t) <= grid.dx
        assert abs(y) <= grid.dy
        peak = puff_concentration(src, med, (CASE_U * t, 0.0, H), t)
        ratios.append(peak / p0)
        # lateral moment fit on the plane
        marg = f.values[:, :, 0].sum(axis=0)
        mean = np.sum(marg * grid.y) / marg.sum()
        std = math.sqrt(np.sum(marg * (grid.y - mean) ** 2) / marg.sum())
        spreads.append(std / math.sqrt(2 * CASE_K * t))
    elapsed = time.perf_counter() - start
    expected = [1.0, 1 / 8, 1 / 22.627416997969522, 1 / 64]
    for r, e in zip(ratios, expected):
        assert r == pytest.approx(e, rel=1e-9)
    assert expected[2] == pytest.approx((0.05 / 0.4) ** 1.5, rel=1e-15)
    for s in spreads:
        assert abs(s - 1) <= 0.01
    assert elapsed < 5.0
    detail(record_property, f"ratios {['%.6g' % r for r in ratios]} std/sqrt(2Kt) "
           f"{['%.5f' % s for s in spreads]} in {elapsed:.2f}s")


@pytest.mark.slow
def test_criterion_2_oracle_triangle(record_property):
    cfg = {
        "Q": CASE_Q, "wind_u": CASE_U, "diffusivity_K": CASE_K, "height_H": H, "reflect_ground": False,
        "t": 0.2, "n_particles": 10**6, "dt": 1e-3, "dx": 0.005, "bin": 0.04, "t0": 0.01,
        "threads": 1, "seed": 7,
    }
    start = time.perf_counter()
    table = compare_channels(cfg)
    elapsed = time.perf_counter() - start
    detail(record_property, " ".join(f"{k}={v:.4f}" for k, v in table.items()) + f" in {elapsed:.0f}s")
    for pair, v in table.items():
        assert v <= 0.07, pair
    assert elapsed < 300


def test_criterion_3_conservation(src, med, record_property):
    # grid solver in a closed box: mass change per step at rounding level
    h = 0.01
    grid = GridSpec.centered((0.1, 0.0, H), (0.2, 0.2, 0.2), (h, h, h))
    cfg = GridSolverConfig(grid, max_stable_dt(grid, med), med, boundary="closed")
    f = field_snapshot(src, med, grid, 0.05)
    worst = 0.0
    for k in range(1, 201):
        before = f.total()
        f = solve(f, cfg, 0.05 + k * cfg.dt)
        worst = max(worst, abs(f.total() - before) / before)
    assert worst <= 1e-12

    # particles with an absorbing floor
    low = SourceSpec(Impulse(CASE_Q), height_H=0.05)
    n = 200_000
    snaps = simulate(low, MediumParams(CASE_U, 0.1), n, seed=11, dt=0.01, t_end=1.0,
                     boundary="absorb_ground", record_times=[0.1, 0.5, 1.0])
    for s in snaps:
        assert s.n_alive + s.n_absorbed == n
    assert snaps[-1].n_absorbed > 0

    # analytic puff by Gauss-Legendre quadrature over an 8 sigma box
    t = 0.2
    hw = 8 * math.sqrt(2 * CASE_K * t)
    x, w = np.polynomial.legendre.leggauss(80)
    X, Y, Z = np.meshgrid(CASE_U * t + hw * x, hw * x, H + hw * x, indexing="ij")
    vals = puff_concentration(src, med, (X, Y, Z), t)
    mass = np.einsum("ijk,i,j,k->", vals, hw * w, hw * w, hw * w)
    assert mass >= 0.999 * CASE_Q
    detail(record_property, f"grid drift/step {worst:.2e}; absorbed {snaps[-1].n_absorbed}/{n}; "
           f"quadrature mass {mass / CASE_Q:.12f} Q")


def _sf(k, lam):
    # independent of scipy: upward summation of the Poisson pmf
    if k <= 0:
        return 1.0
    terms = [math.exp(n * math.log(lam) - lam - math.lgamma(n + 1)) for n in range(k, k + int(10 * lam) + 200)]
    return math.fsum(terms)


def test_criterion_4_detection_exactness(record_property):
    rng = np.random.default_rng(20240601)
    n = 10**6
    grid = [(2.0, 10.0, 6), (0.5, 4.0, 2), (5.0, 15.0, 9), (20.0, 35.0, 27)]
    worst = 0.0
    for lam0, lam1, tau in grid:
        p_fa, p_md = poisson_tails(lam0, lam1, tau)
        assert p_fa == pytest.approx(_sf(tau, lam0), rel=1e-10)
        assert p_md == pytest.approx(1 - _sf(tau, lam1), rel=1e-9)
        mc_fa = np.mean(rng.poisson(lam0, n) >= tau)
        mc_md = np.mean(rng.poisson(lam1, n) < tau)
        for p, est in ((p_fa, mc_fa), (p_md, mc_md)):
            se = math.sqrt(p * (1 - p) / n)
            z = abs(est - p) / se
            worst = max(worst, z)
            assert z <= 3
    p_fa, p_md = poisson_tails(2.0, 10.0, 6)
    assert round(p_fa, 5) == 0.01656
    assert round(p_md, 5) == 0.06709
    detail(record_property, f"(2,10,6) p_fa={p_fa:.6f} p_md={p_md:.6f}; worst MC deviation {worst:.2f} SE")


def test_criterion_5_isi(src, med, record_property):
    position = (1.0, 0.0, H)
    sweep = np.linspace(0.0, 5.0, 20)
    tails = [isi_profile(src, med, position, T).tail_fraction for T in sweep]
    assert all(b <= a for a, b in zip(tails, tails[1:]))
    peak_time = isi_profile(src, med, position, 1.0).peak_time
    assert 0.9 <= peak_time <= 1.0
    long_tail = isi_profile(src, med, position, peak_time).tail_fraction
    assert long_tail > 0.3
    detail(record_property, f"peak time {peak_time:.4f}s; tail at peak {long_tail:.4f}; "
           f"tail(T={sweep[-1]:.0f}s)={tails[-1]:.2e}")


def test_criterion_6_determinism(tmp_path, src, med, record_property):
    argv = ["lagrangian", "--Q", "40000", "--n", "300000", "--dt", "0.005", "--t-end", "0.1",
            "--bin", "0.02", "--seed", "7"]
    sums = []
    for threads in (1, 2, 4):
        out = tmp_path / f"t{threads}"
        assert main(argv + ["--threads", str(threads), "--out", str(out)]) == 0
        sums.append(tuple(sha256_file(out / name) for name in ("lagrangian_t0.100.csv", "lagrangian_report.json")))
    assert len(set(sums)) == 1
    positions = {
        simulate(src, med, 200_000, seed=3, dt=0.01, t_end=0.05, workers=w)[-1].checksum() for w in (1, 3, 8)
    }
    assert len(positions) == 1
    report = json.loads((tmp_path / "t1" / "lagrangian_report.json").read_text())
    detail(record_property, f"threads 1/2/4 files identical; positions sha256 {report['positions_sha256'][:16]}")


def test_criterion_7_end_to_end(med, record_property):
    bits = tuple(np.random.default_rng(7).integers(0, 2, 100).tolist())
    T = 5.0
    tx = [(SourceSpec(Impulse(1.0), height_H=H), SymbolFrame(bits, T, Q=4e6))]
    rx = ReceiverSpec(position=(1.0, 0.0, H), window_T=T)
    clean = run_scenario(tx, med, rx, seed=5, background=10.0)
    assert clean.lambda1 / clean.lambda0 >= 100
    assert clean.bit_errors == 0
    shifted = run_scenario(tx, med, rx, seed=5, background=10.0, sync_offset=T / 2)
    assert shifted.bit_errors > clean.bit_errors
    detail(record_property, f"errors {clean.bit_errors}/100 aligned, {shifted.bit_errors}/100 at T/2 offset; "
           f"lambda1/lambda0 {clean.lambda1 / clean.lambda0:.0f}")
