import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import random_cache_ops, run_cache_ops
from richcache.cache import PREFETCH, STANDARD, CachedChunk, EdgeCache


def chunk(k, prob=0.5, cars=(), content=1, **kw):
    return CachedChunk(content, k, download_prob=prob, pending_cars=set(cars), **kw)


def delivered(cache, k, prob, content=1):
    cache.insert(chunk(k, prob, cars=["x"], content=content))
    cache.lookup(content, k, "x")


def test_insert_into_empty():
    c = EdgeCache("A", 10)
    assert c.insert(chunk(1))
    assert (1, 1) in c and len(c) == 1 and c.free == 9


def test_full_of_likely_undelivered_rejects():
    c = EdgeCache("A", 3)
    for k in range(1, 4):
        c.insert(chunk(k, 0.9, cars=["a"]))
    assert not c.insert(chunk(9, 0.1, cars=["b"]))
    assert c.rejected == 1 and (1, 9) not in c
    # an equally likely newcomer does not displace either
    assert not c.insert(chunk(9, 0.9, cars=["b"]))


def test_lower_probability_undelivered_is_displaced():
    c = EdgeCache("A", 2)
    c.insert(chunk(1, 0.2, cars=["a"]))
    c.insert(chunk(2, 0.6, cars=["a"]))
    assert c.insert(chunk(3, 0.5, cars=["b"]))
    assert sorted(c.entries) == [(1, 2), (1, 3)]


def test_delivered_entries_go_first():
    c = EdgeCache("A", 4)
    for k, p in zip((1, 2, 3), (0.9, 0.2, 0.5)):
        delivered(c, k, p)
    c.insert(chunk(4, 0.1, cars=["a"]))
    for k in (5, 6, 7):
        assert c.insert(chunk(k, 0.05, cars=["b"]))
    assert sorted(c.entries) == [(1, 4), (1, 5), (1, 6), (1, 7)]


def test_evict_for_order():
    c = EdgeCache("A", 3)
    delivered(c, 1, 0.3)
    delivered(c, 2, 0.8)
    c.insert(chunk(3, 0.5, cars=["a"]))
    assert c.evict_for(1) == [(1, 1)]
    c = EdgeCache("A", 4)
    delivered(c, 1, 0.3)
    delivered(c, 2, 0.8)
    c.insert(chunk(3, 0.5, cars=["a"]))
    c.insert(chunk(4, 0.4, cars=["a"]))
    assert c.evict_for(3) == [(1, 1), (1, 2), (1, 4)]
    assert EdgeCache("A", 5).evict_for(3) == []


def test_lookup_hit_and_miss():
    c = EdgeCache("A", 5)
    c.insert(chunk(1, cars=["a"]))
    c.insert(chunk(2, partition=STANDARD))
    assert c.lookup(1, 1, "a") == PREFETCH
    assert c.lookup(1, 2, "a") == STANDARD
    assert c.lookup(1, 3, "a") is None
    # repeated lookups give the same answer
    assert c.lookup(1, 1, "a") == PREFETCH


def test_delivered_after_last_pending_car():
    c = EdgeCache("A", 5)
    c.insert(chunk(1, cars=["a", "b"]))
    c.lookup(1, 1, "a")
    assert not c.entries[(1, 1)].delivered
    c.lookup(1, 1, "b")
    assert c.entries[(1, 1)].delivered


def test_release_car():
    c = EdgeCache("A", 10)
    for k in range(1, 6):
        c.insert(chunk(k, cars=["a"]))
    c.insert(chunk(6, cars=["a", "b"]))
    c.release_car("a")
    assert all(c.entries[(1, k)].delivered for k in range(1, 6))
    assert not c.entries[(1, 6)].delivered
    c.release_car("nobody")
    assert c.evict_for(10) == [(1, k) for k in range(1, 6)] + [(1, 6)]


def test_duplicate_insert_merges():
    c = EdgeCache("A", 2)
    delivered(c, 1, 0.3)
    assert c.insert(chunk(1, 0.7, cars=["b"]))
    e = c.entries[(1, 1)]
    assert len(c) == 1 and not e.delivered and e.download_prob == 0.7 and e.pending_cars == {"b"}


def test_zero_capacity_and_validation():
    c = EdgeCache("A", 0)
    assert not c.insert(chunk(1))
    with pytest.raises(ValueError):
        EdgeCache("A", -1)


def test_large_cache_never_rejects():
    rng = np.random.default_rng(1)
    c = EdgeCache("A", 2 * 12)
    for op in random_cache_ops(rng, 2000):
        if op[0] == "insert":
            assert c.insert(chunk(op[2], op[3], cars=op[4], content=op[1]))
    assert c.rejected == 0


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 8), st.integers(0, 2**32 - 1))
def test_random_sequences_keep_invariants(capacity, seed):
    rng = np.random.default_rng(seed)
    run_cache_ops(EdgeCache("A", capacity), random_cache_ops(rng, 60))
