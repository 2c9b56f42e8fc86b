"""Bounded per-EN chunk store with probability-aware eviction.

Eviction takes delivered chunks first, lowest download probability first;
only then undelivered ones in the same order.  An insertion into a full
cache holding no delivered chunk may only displace an undelivered chunk of
strictly lower probability, otherwise it is rejected.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Hashable

PREFETCH = "prefetch"
STANDARD = "standard"

Key = tuple[int, int]  # (content_id, chunk)


@dataclass
class CachedChunk:
    content_id: int
    k: int
    partition: str = PREFETCH
    download_prob: float = 0.0
    pending_cars: set = field(default_factory=set)
    delivered: bool = False
    seq: int = 0
    stamp: int = 0

    @property
    def key(self) -> Key:
        return (self.content_id, self.k)


class EdgeCache:
    def __init__(self, en_id: Hashable, capacity: int):
        if capacity < 0:
            raise ValueError("capacity must be non-negative")
        self.en_id = en_id
        self.capacity = int(capacity)
        self.entries: dict[Key, CachedChunk] = {}
        self._by_car: dict[Hashable, set[Key]] = {}
        # lazy min-heaps of (prob, seq, key, stamp); stale stamps are skipped
        self._delivered: list = []
        self._undelivered: list = []
        self._seq = itertools.count()
        self.rejected = 0
        self.evicted = 0

    def __len__(self):
        return len(self.entries)

    def __contains__(self, key: Key):
        return key in self.entries

    @property
    def free(self) -> int:
        return self.capacity - len(self.entries)

    # heap bookkeeping ---------------------------------------------------

    def _touch(self, e: CachedChunk):
        e.stamp += 1
        heap = self._delivered if e.delivered else self._undelivered
        heapq.heappush(heap, (e.download_prob, e.seq, e.key, e.stamp))

    def _peek(self, heap, delivered: bool) -> CachedChunk | None:
        while heap:
            prob, seq, key, stamp = heap[0]
            e = self.entries.get(key)
            if e is not None and e.stamp == stamp and e.delivered == delivered:
                return e
            heapq.heappop(heap)
        return None

    def _remove(self, e: CachedChunk):
        del self.entries[e.key]
        for car in e.pending_cars:
            keys = self._by_car.get(car)
            if keys is not None:
                keys.discard(e.key)
                if not keys:
                    del self._by_car[car]
        self.evicted += 1

    def _add(self, chunk: CachedChunk):
        chunk.seq = next(self._seq)
        chunk.pending_cars = set(chunk.pending_cars)
        if chunk.pending_cars:
            chunk.delivered = False
        self.entries[chunk.key] = chunk
        for car in chunk.pending_cars:
            self._by_car.setdefault(car, set()).add(chunk.key)
        self._touch(chunk)

    # operations ---------------------------------------------------------

    def insert(self, chunk: CachedChunk) -> bool:
        """Store ``chunk``; returns False when the policy rejects it."""
        e = self.entries.get(chunk.key)
        if e is not None:
            for car in chunk.pending_cars:
                if car not in e.pending_cars:
                    e.pending_cars.add(car)
                    self._by_car.setdefault(car, set()).add(e.key)
            e.download_prob = max(e.download_prob, chunk.download_prob)
            if e.pending_cars:
                e.delivered = False
            self._touch(e)
            return True
        if self.capacity == 0:
            self.rejected += 1
            return False
        if len(self.entries) >= self.capacity:
            victim = self._peek(self._delivered, True)
            if victim is None:
                victim = self._peek(self._undelivered, False)
                if victim is None or victim.download_prob >= chunk.download_prob:
                    self.rejected += 1
                    return False
            self._remove(victim)
        self._add(chunk)
        return True

    def evict_for(self, space_needed: int) -> list[Key]:
        """Free ``space_needed`` slots: delivered first, then undelivered."""
        evicted = []
        for heap, delivered in ((self._delivered, True), (self._undelivered, False)):
            while self.free < space_needed:
                victim = self._peek(heap, delivered)
                if victim is None:
                    break
                self._remove(victim)
                evicted.append(victim.key)
        return evicted

    def lookup(self, content_id: int, k: int, car_id: Hashable) -> str | None:
        """Partition name on a hit, None on a miss."""
        e = self.entries.get((content_id, k))
        if e is None:
            return None
        if car_id in e.pending_cars:
            e.pending_cars.discard(car_id)
            keys = self._by_car.get(car_id)
            if keys is not None:
                keys.discard(e.key)
                if not keys:
                    del self._by_car[car_id]
        if not e.pending_cars and not e.delivered:
            e.delivered = True
            self._touch(e)
        return e.partition

    def release_car(self, car_id: Hashable) -> None:
        """The car left coverage: it no longer holds any chunk here."""
        for key in sorted(self._by_car.pop(car_id, ())):
            e = self.entries[key]
            e.pending_cars.discard(car_id)
            if not e.pending_cars and not e.delivered:
                e.delivered = True
                self._touch(e)

    def occupancy(self) -> int:
        return len(self.entries)
