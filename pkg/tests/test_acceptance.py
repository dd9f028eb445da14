"""Acceptance criteria, one test per criterion.

Each test prints ``ACCEPTANCE <id>: PASS|FAIL <measurements>`` at the
criterion's own tolerance and then asserts it.
"""

import math
import time

import numpy as np
import pytest

from lcflow.cli import main
from lcflow.diagnostics import blowup_monitor, energy_monitor, scaling_check
from lcflow.evolution import PicardConfig, integrate, picard_iterate, sharp_split, split_initial_data
from lcflow.fields import Grid, StateUF
from lcflow.io import decode_snapshot, encode_snapshot, read_snapshot, write_snapshot
from lcflow.littlewood_paley import DyadicSystem, verify_bernstein, verify_product_law, verify_trilinear
from lcflow.random_fields import random_band_state, random_coefficients, shear_state
from lcflow.stability import difference_fields, difference_residual, gronwall_verify

from oracles import brute_force_split, critical_data_norm

G32 = Grid(2, 32)


def spread(values):
    return max(values) / min(values) - 1.0


# 1 -------------------------------------------------------------------------

def test_harmonic_analysis_suite(accept):
    start = time.perf_counter()
    partition = ortho = recon = 0.0
    constants = {"Bernstein": [], "product": [], "trilinear": []}
    for m in (32, 64, 128):
        g = Grid(2, m)
        lp = DyadicSystem(g)
        partition = max(partition, lp.partition_defect())
        for a in lp.js:
            for b in lp.js:
                if abs(a - b) >= 2:
                    ortho = max(ortho, float(np.max(lp.multiplier(int(a)) * lp.multiplier(int(b)))))
        constants["Bernstein"].append(verify_bernstein(g, trials=100).constant)
        constants["product"].append(verify_product_law(g, trials=100).constant)
        constants["trilinear"].append(verify_trilinear(g, trials=50).constant)
    lp = DyadicSystem(Grid(2, 64))
    for seed in range(100):
        f = random_coefficients(lp.grid, seed, kmax=31)[0]
        f[0, 0] = 0.0
        back = sum(lp.multiplier(int(j)) * f for j in lp.js)
        recon = max(recon, float(np.max(np.abs(back - f)) / np.max(np.abs(f))))
    elapsed = time.perf_counter() - start
    worst = max(spread(v) for v in constants.values())
    finite = all(math.isfinite(c) and c > 0 for v in constants.values() for c in v)
    ok = (partition <= 1e-12 and ortho <= 1e-12 and recon <= 1e-12 and finite and worst <= 0.20
          and elapsed <= 60)
    summary = ", ".join(f"{k} {min(v):.4g}..{max(v):.4g}" for k, v in constants.items())
    accept("1", ok, f"partition {partition:.1e}, |j-j'|>=2 overlap {ortho:.1e}, reconstruction {recon:.1e}; "
                    f"{summary}; max spread {worst:.1%} (<=20%); {elapsed:.1f}s (<=60s)")
    assert ok


# 2 -------------------------------------------------------------------------

def test_shear_exact_solution(accept):
    a = 0.5
    start = time.perf_counter()
    tr = integrate(shear_state(Grid(2, 64), a), 1.0, snapshots=65)
    elapsed = time.perf_counter() - start
    norm_sin_sq = 0.5                        # averaged measure
    kin = np.sum(np.abs(tr.u) ** 2, axis=(1, 2, 3))
    exact = a * a * np.exp(-2 * tr.times) * norm_sin_sq
    dev = float(np.max(np.abs(kin - exact) / exact))
    rec = energy_monitor(tr)
    e0 = rec[0].kinetic + rec[0].elastic
    budget = max(abs(r.budget_residual) for r in rec) / e0
    ok = dev <= 1e-6 and budget <= 1e-6
    accept("2", ok, f"kinetic energy deviation {dev:.2e} (<=1e-6), budget residual {budget:.2e}*E0 (<=1e-6), "
                    f"{len(tr)} snapshots, {elapsed:.1f}s")
    assert ok


# 3 -------------------------------------------------------------------------

def test_picard_contraction(accept):
    start = time.perf_counter()
    cfg = PicardConfig(T=0.25, K=64)
    probe = picard_iterate(random_band_state(G32, 11, 1, 2, 1e-3), cfg)
    C0 = probe.C0
    target = 0.5 / (4 * C0)
    amp = 1e-3 * target / probe.heat_norm          # the heat part's norm is linear in the data
    data = random_band_state(G32, 11, 1, 2, amp)
    res = picard_iterate(data, cfg)
    first_small = next((i + 1 for i, r in enumerate(res.ratios) if r < 0.5), None)
    ref = integrate(data, cfg.T, times=res.trajectory.times)
    agree = max(float(np.sqrt(np.sum(np.abs(x - y) ** 2) / np.sum(np.abs(y) ** 2)))
                for x, y in zip(res.trajectory.data[1:], ref.data[1:]))
    big = picard_iterate(random_band_state(G32, 11, 1, 2, 100 * amp), cfg)
    elapsed = time.perf_counter() - start
    ok = (res.converged and first_small is not None and first_small <= 6 and agree <= max(1e-6, cfg.tol)
          and big.non_contraction and elapsed <= 120)
    accept("3", ok, f"C0 {C0:.4g}, heat norm {res.heat_norm:.4g} = 0.5/(4 C0); ratios "
                    f"{', '.join(f'{r:.3f}' for r in res.ratios[:6])} (first <1/2 at iteration {first_small}); "
                    f"converged in {res.iterations}; integrator agreement {agree:.1e} (<=1e-6); "
                    f"x100 non-contraction {big.non_contraction} (ratios {big.ratios[0]:.3g}, ...); {elapsed:.1f}s")
    assert ok


# 4 -------------------------------------------------------------------------

def test_local_existence_split(accept):
    rng = np.random.Generator(np.random.Philox(key=2024))
    mismatches = []
    exact_recon = True
    levels = set()
    for trial in range(20):
        kmin = int(rng.integers(1, 4))
        kmax = int(rng.integers(kmin + 4, 16))
        state = random_band_state(G32, 500 + trial, kmin, kmax, float(rng.uniform(0.1, 10.0)))
        total = critical_data_norm(state.packed())
        eps = float(rng.uniform(0.05, 1.5)) * total
        high, low, rep = split_initial_data(state, eps)
        N, T = brute_force_split(state.packed(), eps)
        levels.add(rep.N)
        if rep.N != N or abs(rep.T_local - T) > 1e-12 * T:
            mismatches.append((trial, rep.N, N, rep.T_local, T))
        z = state.packed()
        hi, lo = sharp_split(G32, z, rep.N)
        exact_recon &= np.array_equal(high.packed() + low.packed(), z) and np.array_equal(hi + lo, z)
    ok = not mismatches and exact_recon
    accept("4", ok, f"20 data sets, (N, T_local) mismatches {len(mismatches)} (N exact, T to 1e-12 rel), "
                    f"levels seen {sorted(levels)}, high+low bit-exact {exact_recon}")
    assert ok


# 5 -------------------------------------------------------------------------

def test_scaling_equivariance(accept):
    worst = 0.0
    worst_rich = 0.0
    for trial in range(10):
        rep = scaling_check(random_band_state(G32, 100 + trial, 1, 4, 0.1), 2, 0.1, samples=5)
        worst = max(worst, rep.discrepancy)
        worst_rich = max(worst_rich, rep.richardson)
    shear = scaling_check(shear_state(G32, 0.5), 2, 0.1, samples=5).discrepancy
    ok = worst <= 1e-5 and shear <= 1e-8
    accept("5", ok, f"10 random trials, max discrepancy {worst:.1e} (<=1e-5; Richardson estimate "
                    f"{worst_rich:.1e}); shear {shear:.1e} (<=1e-8)")
    assert ok


# 6 -------------------------------------------------------------------------

def _pair(grid, amp, seeds, times, rel=0.01, kmax=3):
    a = random_band_state(grid, seeds[0], 1, kmax, amp)
    bump = random_band_state(grid, seeds[1], 1, kmax, rel * amp)
    b = StateUF(grid, a.u + bump.u, a.F + bump.F)
    return integrate(a, times[-1], times=times), integrate(b, times[-1], times=times)


def test_gronwall_stability(accept):
    times = np.linspace(0.0, 0.5, 17)
    ta = integrate(random_band_state(G32, 2, 1, 6, 1.0), 0.5, times=times)
    same = gronwall_verify(ta, ta)
    identical = float(np.max(np.abs(same.lhs)))

    stable = []
    for seeds, amp in (((1, 2), 0.3), ((7, 8), 1.0)):
        c = [gronwall_verify(*_pair(Grid(2, m), amp, seeds, times)).C_used for m in (32, 64)]
        stable.append((seeds, amp, c, math.isfinite(c[0]) and abs(c[1] - c[0]) <= 0.25 * c[0] and c[0] > 0))

    common = np.linspace(0, 0.5, 9)[1:-1]
    res = []
    for K in (9, 17, 33, 65):
        pa, pb = _pair(G32, 0.5, (5, 6), np.linspace(0, 0.5, K), rel=0.2)
        trace = difference_residual(difference_fields(pa, pb), pa, pb)
        keep = np.isin(np.round(trace.times, 12), np.round(common, 12))
        res.append(max(trace.residual_w[keep].max(), trace.residual_E[keep].max()))
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))

    ok = identical <= 1e-12 and all(s[-1] for s in stable) and bool(np.all((orders >= 1.6) & (orders <= 2.4)))
    cs = "; ".join(f"seeds {s[0]} amp {s[1]}: C_used {s[2][0]:.5g} (m=32) / {s[2][1]:.5g} (m=64)" for s in stable)
    accept("6", ok, f"identical-data lhs {identical:.1e} (<=1e-12); {cs} (+-25%); residual orders "
                    f"{', '.join(f'{o:.2f}' for o in orders)} (in [1.6, 2.4])")
    assert ok


# 7 -------------------------------------------------------------------------

def test_blowup_dichotomy(accept):
    decaying = blowup_monitor(integrate(random_band_state(G32, 1, 1, 4, 0.2), 5.0, snapshots=41))
    below = np.nonzero(decaying.increments < 1e-8)[0]
    t_small = float(decaying.times[below[0] + 1]) if below.size else math.inf
    aborting = blowup_monitor(integrate(random_band_state(G32, 3, 1, 4, 200.0), 5.0, snapshots=11, dt=0.05))
    ok = (t_small < 5.0 and decaying.saturated and not decaying.growth
          and aborting.growth and aborting.failed_at is not None)
    accept("7", ok, f"decaying run: increments < 1e-8 from t={t_small:.3g} (< 5), accumulator "
                    f"{decaying.running_integral:.4g}; aborting run: growth {aborting.growth}, "
                    f"failure at t={aborting.failed_at}")
    assert ok


# 8 -------------------------------------------------------------------------

def test_infrastructure(accept, tmp_path, capsys):
    state = random_band_state(Grid(2, 32), 9, 1, 15, 2.0)
    state.t = 0.125
    path = tmp_path / "s.nlcf"
    write_snapshot(path, state)
    back = read_snapshot(path)
    round_trip = back.packed().tobytes() == state.packed().tobytes() and back.t == state.t
    round_trip &= encode_snapshot(decode_snapshot(path.read_bytes())) == path.read_bytes()

    runs = []
    for name in ("a", "b"):
        args = ["simulate", "--set", "m = 32", "--set", "preset = random-band 4 1 8 0.5", "--set", "T = 0.2",
                "--set", "snapshots = 5", "-o", str(tmp_path / name)]
        code = main(args)
        runs.append((code, {p.name: p.read_bytes() for p in sorted((tmp_path / name).iterdir())}))
    deterministic = runs[0][0] == runs[1][0] == 0 and runs[0][1] == runs[1][1]
    verify_code = main(["verify"])
    capsys.readouterr()
    ok = round_trip and deterministic and verify_code == 0
    accept("8", ok, f"snapshot round trip bit-exact {round_trip}; reruns byte-identical {deterministic} "
                    f"({len(runs[0][1])} files); verify exit code {verify_code}")
    assert ok
