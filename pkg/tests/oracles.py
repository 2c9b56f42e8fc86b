"""Slow, obviously-correct reference implementations used by the tests."""

from __future__ import annotations

import numpy as np


def phi_by_enumeration(x_probs: list[np.ndarray], n_chunks: int) -> np.ndarray:
    """phi_i(k) = P(Y_{i-1} < k <= Y_i) by explicit double loops over pmfs."""
    n = len(x_probs)
    phi = np.zeros((n, n_chunks))
    y = {0: 1.0}  # law of chunks already received
    for i, px in enumerate(x_probs):
        nxt: dict[int, float] = {}
        for have, py in y.items():
            for x, p in enumerate(px):
                if p == 0:
                    continue
                total = have + x
                for k in range(have + 1, min(total, n_chunks) + 1):
                    phi[i, k - 1] += py * p
                nxt[total] = nxt.get(total, 0.0) + py * p
        y = nxt
    return phi


def phi_monte_carlo(x_probs: list[np.ndarray], n_chunks: int, n_cars: int, rng) -> np.ndarray:
    """Empirical share of cars receiving chunk k at EN i."""
    n = len(x_probs)
    counts = np.zeros((n, n_chunks + 2))
    have = np.zeros(n_cars, dtype=np.int64)
    for i, px in enumerate(x_probs):
        x = rng.choice(px.size, size=n_cars, p=px)
        lo = np.minimum(have + 1, n_chunks + 1)
        hi = np.minimum(have + x + 1, n_chunks + 1)
        # chunk range [lo, hi) gets +1 via a difference array
        np.add.at(counts[i], lo, 1)
        np.add.at(counts[i], hi, -1)
        have = have + x
    return np.cumsum(counts, axis=1)[:, 1 : n_chunks + 1] / n_cars


def greedy_sets(phi: np.ndarray, taus: np.ndarray) -> list[list[int]]:
    """Literal greedy loop: add ENs in decreasing phi while the sum is <= tau."""
    n, k_max = phi.shape
    out = []
    for k in range(k_max):
        tau = taus[k]
        cand = sorted([i for i in range(n) if phi[i, k] > 0], key=lambda i: (-phi[i, k], i))
        chosen, p = [], 0.0
        for i in cand:
            if p > tau + 1e-9:
                break
            chosen.append(i)
            p += phi[i, k]
        out.append(sorted(chosen) if p >= tau - 1e-9 else [])
    return out


def run_cache_ops(cache, ops) -> None:
    """Apply ``ops`` and assert the eviction-order and capacity invariants after each.

    Each op is ``("insert", content, k, prob, cars)``, ``("lookup", content, k, car)``,
    ``("release", car)`` or ``("evict", n)``.
    """
    from richcache.cache import CachedChunk

    for op in ops:
        before = {key: e.delivered for key, e in cache.entries.items()}
        if op[0] == "insert":
            _, c, k, prob, cars = op
            cache.insert(CachedChunk(c, k, download_prob=prob, pending_cars=set(cars)))
        elif op[0] == "lookup":
            cache.lookup(op[1], op[2], op[3])
        elif op[0] == "release":
            cache.release_car(op[1])
        else:
            cache.evict_for(op[1])
        removed = set(before) - set(cache.entries)
        if any(not before[key] for key in removed):
            survivors = [key for key, d in before.items() if d and key not in removed]
            assert not survivors, f"undelivered evicted while delivered {survivors} remained"
        assert len(cache) <= cache.capacity


def random_cache_ops(rng, n_ops: int, n_keys: int = 12, n_cars: int = 4) -> list[tuple]:
    ops = []
    for _ in range(n_ops):
        r = rng.random()
        c, k = 1 + int(rng.integers(0, 2)), 1 + int(rng.integers(0, n_keys))
        car = f"c{int(rng.integers(0, n_cars))}"
        if r < 0.45:
            cars = [f"c{j}" for j in range(n_cars) if rng.random() < 0.3]
            ops.append(("insert", c, k, round(float(rng.random()), 2), cars))
        elif r < 0.75:
            ops.append(("lookup", c, k, car))
        elif r < 0.9:
            ops.append(("release", car))
        else:
            ops.append(("evict", int(rng.integers(0, 5))))
    return ops
