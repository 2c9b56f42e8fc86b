"""End-to-end acceptance checks, one test per criterion.

Each test records a ``criterion N: PASS|FAIL`` line that is printed in the
terminal summary.
"""

import functools
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

from conftest import ACCEPTANCE_LINES
from oracles import greedy_sets, phi_monte_carlo, random_cache_ops, run_cache_ops
from richcache.cache import EdgeCache
from richcache.optimize import optimize_thresholds
from richcache.pdf import DiscretePdf
from richcache.policy import ThresholdProfile, netpredict_plan, rich_plan
from richcache.probmodel import PhiMatrix, RadioParams, estimate_chunk_count_dist, phi_general, phi_iid
from richcache.scenarios import (
    bimodal_three_en_config,
    bimodal_three_en_trace,
    toy_traffic_light_config,
    toy_traffic_light_trace,
)
from richcache.sim import DwellError, run
from richcache.trace import significant_paths
from test_trace import REFERENCE_COUNTS, reference_trace

EVAL_SEEDS = (0, 1, 2, 3, 4)
CALIBRATION_SEED = 100
GRID = (0.1, 0.3, 0.5, 0.7, 0.9)


def record(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[n])


def random_pdf(rng, max_support=15):
    w = rng.random(int(rng.integers(1, max_support + 2)))
    w[rng.random(w.size) < 0.3] = 0.0
    if w.sum() == 0:
        w[-1] = 1.0
    return DiscretePdf.from_weights(w)


def test_criterion_01_chunk_sums_equal_means():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        laws = [random_pdf(rng) for _ in range(int(rng.integers(1, 6)))]
        k = sum(p.max_support for p in laws) + 1
        phi = phi_general(laws, k)
        worst = max(worst, float(np.max(np.abs(phi.phi.sum(axis=1) - [p.mean() for p in laws]))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 10
    record(1, ok, f"max |sum_k phi - mean| = {worst:.2e} over 200 instances in {elapsed:.2f}s")
    assert ok


def test_criterion_02_iid_recursion_matches_general():
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        f = random_pdf(rng, 20)
        n = int(rng.integers(1, 7))
        k = int(rng.integers(1, 120))
        worst = max(worst, float(np.max(np.abs(phi_iid(f, n, k).phi - phi_general([f] * n, k).phi))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 10
    record(2, ok, f"max elementwise gap {worst:.2e} over 100 instances in {elapsed:.2f}s")
    assert ok


def test_criterion_03_monte_carlo_triangular():
    t0 = time.perf_counter()
    tri = DiscretePdf.triangular(10, 9)
    k = 4 * tri.max_support
    phi = phi_iid(tri, 4, k).phi
    mc = phi_monte_carlo([tri.probs] * 4, k, 1_000_000, np.random.default_rng(11))
    gap = float(np.max(np.abs(mc - phi)))
    zero_tail = bool(np.all(phi[0, 19:] == 0))
    peak = int(np.argmax(phi[1])) + 1
    elapsed = time.perf_counter() - t0
    ok = gap <= 0.005 and zero_tail and peak in (14, 15, 16) and elapsed < 60
    record(3, ok, f"max |MC - analytic| = {gap:.4f}, phi_1 zero from 20: {zero_tail}, argmax phi_2 = {peak}, {elapsed:.1f}s")
    assert ok


def test_criterion_04_traffic_light_toy():
    radio = RadioParams(5.2e6, 520_000, (1.0,))
    # 1.05 s and 10.05 s dwells land in the 1 s and 10 s bins
    x = estimate_chunk_count_dist(DiscretePdf.from_mapping({1: 0.8, 10: 0.2}), radio, 0)
    mean = x.mean()
    trace = toy_traffic_light_trace(1000)
    net = run(toy_traffic_light_config("netpredict"), trace)
    rich = run(toy_traffic_light_config("rich", taus=(0.0,)), trace)
    ok = (
        round(mean, 9) == 28.0
        and abs(net.cache_hit_probability - 0.48) <= 0.02
        and rich.misses == 0
        and rich.cache_hit_probability == 1.0
    )
    record(4, ok, f"mean chunks {mean:g}, netPredict hit {net.cache_hit_probability:.4f}, "
                  f"store-100 hit {rich.cache_hit_probability:.4f} (misses {rich.misses})")
    assert ok


def _random_phi(rng, n, k):
    raw = rng.random((n, k))
    raw[rng.random((n, k)) < 0.25] = 0.0
    slack = np.where(rng.random(k) < 0.4, 0.0, rng.random(k))
    total = raw.sum(axis=0) + slack
    p = raw / np.where(total > 0, total, 1.0)
    return PhiMatrix(phi=p, per_en_mean=p.sum(axis=1))


def test_criterion_05_extreme_thresholds():
    rng = np.random.default_rng(5)
    bad = 0
    for _ in range(50):
        n, k = int(rng.integers(1, 7)), 40
        phi = _random_phi(rng, n, k)
        p = phi.phi
        for tau in (0.0, 1.0):
            plan = rich_plan(phi, ThresholdProfile.single(tau))
            got = [plan.ens_for(j + 1) for j in range(k)]
            if got != greedy_sets(p, np.full(k, tau)):
                bad += 1
            for j in range(k):
                col = p[:, j]
                if tau == 0.0:
                    want = [int(np.argmax(col))] if col.max() > 0 else []
                else:
                    want = [int(i) for i in np.flatnonzero(col > 0)] if col.sum() >= 1 - 1e-9 else []
                bad += got[j] != want
    record(5, bad == 0, f"{bad} mismatches over 50 random matrices at tau 0 and 1")
    assert bad == 0


def test_criterion_06_point_masses_reduce_to_netpredict():
    rng = np.random.default_rng(6)
    bad = 0
    for _ in range(30):
        sizes = rng.integers(0, 25, size=int(rng.integers(1, 5))).tolist()
        k = sum(sizes) + 10
        phi = phi_general([DiscretePdf.point(s) for s in sizes], k)
        net = netpredict_plan([float(s) for s in sizes], k)
        for tau in (0.1, 0.5, 0.9):
            bad += not np.array_equal(rich_plan(phi, ThresholdProfile.single(tau)).members, net.members)
    record(6, bad == 0, f"{bad} differing plans over 30 point-mass paths x 3 thresholds")
    assert bad == 0


@functools.lru_cache(maxsize=None)
def tuned_profile() -> tuple[float, ...]:
    """Thresholds tuned on a calibration trace that is not used for evaluation."""
    trace = bimodal_three_en_trace(CALIBRATION_SEED)
    res = optimize_thresholds(bimodal_three_en_config(seed=CALIBRATION_SEED), trace, GRID)
    return res.profile.taus


@functools.lru_cache(maxsize=None)
def synthetic_trace(seed):
    return bimodal_three_en_trace(seed)


def averaged(policy, taus=(0.5,), **kw):
    reps = [run(bimodal_three_en_config(policy, taus, seed=s, **kw), synthetic_trace(s)) for s in EVAL_SEEDS]
    return (
        float(np.mean([r.cache_hit_probability for r in reps])),
        float(np.mean([r.backhaul_traffic for r in reps])),
        float(np.mean([r.cache_throughput for r in reps])),
    )


def test_criterion_07_policy_ordering():
    t0 = time.perf_counter()
    taus = tuned_profile()
    rich = averaged("rich", taus)
    net = averaged("netpredict")
    pop = averaged("pop")
    elapsed = time.perf_counter() - t0
    ok = rich[0] > net[0] > pop[0] and rich[1] < net[1] < pop[1] and elapsed < 300
    record(7, ok, f"hit RICH{taus} {rich[0]:.4f} > netPredict {net[0]:.4f} > POP {pop[0]:.4f}; "
                  f"backhaul Mbit/s {rich[1] / 1e6:.3f} < {net[1] / 1e6:.3f} < {pop[1] / 1e6:.3f}; {elapsed:.0f}s")
    assert ok


def test_criterion_08_eviction_order_random_sequences():
    rng = np.random.default_rng(8)
    failures = 0
    for _ in range(10_000):
        cache = EdgeCache("A", int(rng.integers(0, 8)))
        try:
            run_cache_ops(cache, random_cache_ops(rng, 25, n_keys=8))
        except AssertionError:
            failures += 1
    record(8, failures == 0, f"{failures} violating sequences out of 10^4")
    assert failures == 0


def test_criterion_09_mobility_error_trends():
    taus = tuned_profile()
    by_mu = {mu: averaged("rich", taus, dwell_error=DwellError(mu, 0.0)) for mu in (-30.0, 0.0, 30.0)}
    base = by_mu[0.0]
    skipped = averaged("rich", taus, path_skip=0.2)
    hits = [by_mu[m][0] for m in (-30.0, 0.0, 30.0)]
    bh = [by_mu[m][1] for m in (-30.0, 0.0, 30.0)]
    ok = hits[2] <= hits[1] and bh[0] <= bh[1] <= bh[2] and skipped[2] < base[2]
    record(9, ok, f"hit at mu -30/0/+30: {hits[0]:.4f}/{hits[1]:.4f}/{hits[2]:.4f}; backhaul Mbit/s "
                  f"{bh[0] / 1e6:.3f}/{bh[1] / 1e6:.3f}/{bh[2] / 1e6:.3f}; path skip throughput "
                  f"{base[2] / 1e6:.3f} -> {skipped[2] / 1e6:.3f} Mbit/s")
    assert ok


def test_criterion_10_simulate_is_byte_identical(tmp_path):
    cfg = {
        "trace": {"synthetic": {"preset": "bimodal-3en", "n_cars": 150, "seed": 3}},
        "simulation": {
            "catalog": {"n_contents": 10, "chunks_per_content": 300, "chunk_bits": 520000},
            "c_hat": 0.1,
            "bandwidth_b": 2.08e6,
            "eval_positions": 2,
            "taus": [0.3, 0.5],
        },
        "sweep": {"policies": ["rich", "netpredict", "pop"], "dwell_mu": [0, 10]},
    }
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(cfg))
    outputs = []
    for hash_seed in ("1", "2"):
        out = tmp_path / f"run{hash_seed}"
        env = dict(os.environ, PYTHONHASHSEED=hash_seed)
        cmd = [sys.executable, "-m", "richcache", "simulate", "--config", str(path), "--seed", "5", "--out-dir", str(out)]
        subprocess.run(cmd, check=True, env=env)
        outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    ok = outputs[0] == outputs[1] and set(outputs[0]) == {"results.csv", "reports.json"}
    record(10, ok, f"files {sorted(outputs[0])} identical across two processes: {outputs[0] == outputs[1]}")
    assert ok


def test_criterion_11_reference_significant_paths():
    found = significant_paths(reference_trace(), path_len=3, min_cars=45)
    got = {sp.en_sequence: sp.car_count for sp in found}
    ok = got == REFERENCE_COUNTS and len(found) == 7
    record(11, ok, f"{len(found)} paths with counts {sorted(got.values())}")
    assert ok
