"""Discrete-event simulation of cars streaming content through edge caches.

Radio: every EN shares ``bandwidth_b`` equally among the cars currently
pulling a chunk from it (processor sharing).  Each EN has its own FIFO link
to the Data Store carrying prefetch batches and data-recovery windows.
Prefetched chunks land in the cache one by one at their transfer completion
times; landings are applied lazily, in time order, before any other cache
operation at the same EN.
"""

from __future__ import annotations

import heapq
import itertools
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from richcache.cache import PREFETCH, STANDARD, CachedChunk, EdgeCache
from richcache.metrics import EnCounters, MetricsReport, RunCounters, finalize
from richcache.pdf import DiscretePdf
from richcache.policy import (
    CarPlanState,
    PlanRequest,
    ThresholdProfile,
    netpredict_plan,
    pop_plan,
    refresh_decision,
    rich_plan,
)
from richcache.probmodel import RadioParams, chunk_pdfs_for_path, phi_general
from richcache.sim.config import SimulationConfig
from richcache.sim.perturb import apply_dwell_error, apply_path_skip
from richcache.sim.workload import draw_content_request
from richcache.trace import (
    CarPath,
    TraceError,
    events_from_paths,
    filter_to_paths,
    significant_paths,
    trace_dwell_stats,
)

log = logging.getLogger(__name__)

# event kinds, in tie-break order at equal times
CHUNK_DELIVERED = 0
CAR_EXIT = 1
CAR_ENTER = 2
PLAN_COMPUTED = 3
PREFETCH_FETCH_COMPLETE = 4
RECOVERY_FETCH_COMPLETE = 5

KIND_NAMES = {
    CHUNK_DELIVERED: "ChunkDelivered",
    CAR_EXIT: "CarExit",
    CAR_ENTER: "CarEnter",
    PLAN_COMPUTED: "PlanComputed",
    PREFETCH_FETCH_COMPLETE: "PrefetchFetchComplete",
    RECOVERY_FETCH_COMPLETE: "RecoveryFetchComplete",
}

_V_TOL = 1e-6  # slack, as a fraction of a chunk, when matching completions


@dataclass
class _Landing:
    t: float
    key: tuple[int, int]
    prob: float
    pending: set


@dataclass
class _En:
    en_id: str
    cache: EdgeCache
    counters: EnCounters
    link_free: float = 0.0
    landings: deque = field(default_factory=deque)
    inflight: dict = field(default_factory=dict)
    departed: set = field(default_factory=set)
    # processor-sharing radio state
    active: dict = field(default_factory=dict)  # car -> virtual finish
    vheap: list = field(default_factory=list)
    vtime: float = 0.0
    vlast: float = 0.0
    version: int = 0
    # occupancy and coverage accounting
    occ_len: int = 0
    occ_last: float = 0.0
    counted_present: int = 0
    covered_since: float = 0.0


@dataclass
class _Car:
    path: CarPath
    background: bool
    content: int | None = None
    next_chunk: int = 1
    event_idx: int = 0
    pos_ptr: int = 0
    position: int | None = None
    en: str | None = None
    counted: bool = False
    source: str | None = None
    token: int = 0
    awaiting_plan: bool = False
    pipeline: dict = field(default_factory=dict)
    plan: CarPlanState = field(default_factory=CarPlanState)
    classes: dict = field(default_factory=dict)  # EN -> "fast" | "slow"


class Simulation:
    """One run over a fixed trace; ``run()`` returns the metrics report."""

    def __init__(self, config: SimulationConfig, trace: Sequence[CarPath], verbose: bool = False):
        self.cfg = config
        self.verbose = verbose
        self.K = config.catalog.chunks_per_content
        self.s = config.catalog.chunk_bits
        self.capacity = config.capacity

        paths = list(trace)
        background: set[str] = set()
        if config.significant_min_cars is not None:
            sig = significant_paths(paths, config.path_len, config.significant_min_cars)
            keep = {p.car_id for p in filter_to_paths(paths, sig)}
            if config.background_cars:
                background = {p.car_id for p in paths if p.car_id not in keep}
            else:
                paths = [p for p in paths if p.car_id in keep]
        self.background = background

        # Prefetcher knowledge comes from the unperturbed trace
        self.stats = trace_dwell_stats(paths, config.stats_bin_width, config.fast_slow_boundary) if paths else {}
        self.classes = {
            p.car_id: {ev.en_id: ("slow" if ev.dwell > config.fast_slow_boundary else "fast") for ev in p.events}
            for p in paths
        }

        seeds = np.random.SeedSequence(config.seed).spawn(3)
        self.rng_workload, rng_dwell, rng_skip = (np.random.default_rng(s) for s in seeds)
        actual = paths
        if config.dwell_error is not None:
            w_min = {en: st.min_dwell for en, st in self.stats.items()}
            actual = apply_dwell_error(actual, config.dwell_error.mu, config.dwell_error.sigma, w_min, rng_dwell)
        if config.path_skip:
            actual = apply_path_skip(actual, config.path_skip, rng_skip)
        self.paths = actual

        en_ids = sorted({ev.en_id for p in actual for ev in p.events} | set(self.stats))
        self.ens = {en: _En(en, EdgeCache(en, self.capacity), EnCounters()) for en in en_ids}
        self.cars = {p.car_id: _Car(p, p.car_id in background) for p in actual}
        for car in self.cars.values():
            car.classes = self.classes.get(car.path.car_id, {})

        self._queue: list = []
        self._seq = itertools.count()
        self._phi_cache: dict = {}
        self._plan_cache: dict = {}
        self.counted_present = 0
        self.covered_since = 0.0
        self.covered_time = 0.0
        self.plans = 0
        self.requests = 0
        self.deliveries: list[tuple[float, str, int, str, str]] = []
        self.landed_at: dict = {}
        self.now = 0.0

    # event queue ----------------------------------------------------------

    def _push(self, t: float, kind: int, car: str = "", en: str = "", payload=None):
        heapq.heappush(self._queue, (t, kind, car, en, next(self._seq), payload))

    # occupancy --------------------------------------------------------------

    def _occ(self, st: _En, t: float):
        st.counters.occupancy_integral += st.occ_len * (t - st.occ_last)
        st.occ_last = t
        st.occ_len = len(st.cache)

    def _insert(self, st: _En, chunk: CachedChunk, t: float) -> bool:
        self._occ(st, t)
        ok = st.cache.insert(chunk)
        if not ok:
            st.counters.rejected_inserts += 1
        st.occ_len = len(st.cache)
        return ok

    def _materialize(self, st: _En, t: float):
        while st.landings and st.landings[0].t <= t:
            land = st.landings.popleft()
            st.inflight.pop(land.key, None)
            pending = {c for c in land.pending if c not in st.departed}
            chunk = CachedChunk(land.key[0], land.key[1], PREFETCH, land.prob, pending)
            if self._insert(st, chunk, land.t) and self.cfg.record_deliveries:
                self.landed_at.setdefault((st.en_id, land.key), land.t)

    # Data Store link --------------------------------------------------------

    def _fetch(self, st: _En, t: float, n: int) -> list[float]:
        """Queue ``n`` chunks on the FIFO link; returns their arrival times at the EN."""
        d = self.cfg.backhaul.datastore_delay
        tx = self.s / self.cfg.backhaul.datastore_rate
        start = max(t + d, st.link_free)
        st.link_free = start + n * tx
        return [start + (j + 1) * tx + d for j in range(n)]

    # radio ------------------------------------------------------------------

    def _advance(self, st: _En, t: float):
        if st.active:
            st.vtime += (t - st.vlast) * self.cfg.bandwidth_b / len(st.active)
        st.vlast = t

    def _reschedule(self, st: _En, t: float):
        st.version += 1
        while st.vheap and st.active.get(st.vheap[0][1]) != st.vheap[0][0]:
            heapq.heappop(st.vheap)
        if st.vheap:
            dv = max(0.0, st.vheap[0][0] - st.vtime)
            when = t + dv * len(st.active) / self.cfg.bandwidth_b
            self._push(when, CHUNK_DELIVERED, "", st.en_id, st.version)

    def _radio_add(self, st: _En, car_id: str, t: float):
        self._advance(st, t)
        finish = st.vtime + self.s
        st.active[car_id] = finish
        heapq.heappush(st.vheap, (finish, car_id))
        self._reschedule(st, t)

    def _radio_remove(self, st: _En, car_id: str, t: float):
        if car_id in st.active:
            self._advance(st, t)
            del st.active[car_id]
            self._reschedule(st, t)

    # planning ---------------------------------------------------------------

    def _path_pdfs(self, car: _Car, ens: tuple[str, ...]) -> tuple:
        key = []
        for en in ens:
            cls = car.classes.get(en) if self.cfg.fast_slow_knowledge else None
            key.append((en, cls))
        return tuple(key)

    def _phi(self, key: tuple):
        phi = self._phi_cache.get(key)
        if phi is None:
            dwell = []
            users = []
            for en, cls in key:
                st = self.stats[en]
                pdf = st.dwell_pdf
                if cls == "fast" and st.fast_pdf is not None:
                    pdf = st.fast_pdf
                elif cls == "slow" and st.slow_pdf is not None:
                    pdf = st.slow_pdf
                dwell.append(pdf)
                users.append(st.avg_concurrent_users)
            radio = RadioParams(self.cfg.bandwidth_b, self.s, tuple(users))
            x = chunk_pdfs_for_path(dwell, radio, [self.capacity] * len(key), self.cfg.stats_bin_width)
            phi = phi_general(x, self.K)
            self._phi_cache[key] = phi
        return phi

    def _base_plan(self, key: tuple):
        plan = self._plan_cache.get(key)
        if plan is None:
            phi = self._phi(key)
            if self.cfg.policy == "rich":
                plan = rich_plan(phi, ThresholdProfile(self.cfg.taus), self.cfg.keep_partial_on_failure)
            else:
                plan = netpredict_plan(phi.per_en_mean, self.K)
            per_pos = []
            for j in range(plan.horizon):
                ks = plan.chunks_for(j)
                probs = plan.phi[j, ks - 1] if self.cfg.policy == "rich" else np.ones(ks.size)
                per_pos.append((ks, probs))
            plan = per_pos
            self._plan_cache[key] = plan
        return plan

    def _plan_limit(self, car: _Car) -> int:
        n = len(car.path.expected_sequence)
        if self.cfg.eval_positions is not None:
            n = min(n, self.cfg.eval_positions)
        return n

    def _request_plan(self, car: _Car, req: PlanRequest, t: float, start_here: bool):
        delay = 2 * self.cfg.backhaul.prefetcher_delay
        car.awaiting_plan = start_here
        self._push(t + delay, PLAN_COMPUTED, car.path.car_id, car.en or "", (req, start_here))

    def _on_plan(self, t: float, car_id: str, payload):
        req, start_here = payload
        car = self.cars[car_id]
        delivered = car.next_chunk - 1
        last = min(req.first_position + req.horizon, self._plan_limit(car))
        positions = list(range(req.first_position, last))
        car.plan.plan_start = req.first_position
        car.plan.plan_horizon = req.horizon
        car.plan.delivered = delivered
        car.plan.history.append(req.first_position)
        self.plans += 1
        if positions and delivered < self.K:
            ens = tuple(car.path.expected_sequence[p] for p in positions)
            base = self._base_plan(self._path_pdfs(car, ens))
            for j, en in enumerate(ens):
                ks, probs = base[j]
                ks = ks + delivered
                keep = ks <= self.K
                self._instruct(self.ens[en], car_id, car.content, ks[keep], probs[keep], t)
        if start_here and car.awaiting_plan:
            car.awaiting_plan = False
            if car.en is not None:
                self._request_next(car, t, allow_wait=True)

    def _instruct(self, st: _En, car_id: str, content: int, ks: np.ndarray, probs: np.ndarray, t: float):
        """Prefetch order at one EN: refresh resident chunks, fetch the missing ones."""
        self._materialize(st, t)
        missing = []
        for k, p in zip(ks.tolist(), probs.tolist()):
            key = (content, k)
            if key in st.cache:
                self._insert(st, CachedChunk(content, k, PREFETCH, p, {car_id}), t)
            elif key in st.inflight:
                land = st.inflight[key]
                land.pending.add(car_id)
                land.prob = max(land.prob, p)
            else:
                missing.append((key, p))
        if not missing:
            return
        arrivals = self._fetch(st, t, len(missing))
        for (key, p), at in zip(missing, arrivals):
            land = _Landing(at, key, p, {car_id})
            st.landings.append(land)
            st.inflight[key] = land
        st.counters.prefetch_fetch_bits += len(missing) * self.s

    # streaming --------------------------------------------------------------

    def _request_next(self, car: _Car, t: float, allow_wait: bool = False):
        k = car.next_chunk
        if k > self.K or car.en is None:
            return
        st = self.ens[car.en]
        car_id = car.path.car_id
        self._materialize(st, t)
        part = st.cache.lookup(car.content, k, car_id)
        if part is not None:
            car.source = part
            self._radio_add(st, car_id, t)
            return
        key = (car.content, k)
        if allow_wait and key in st.inflight:
            car.token += 1
            self._push(st.inflight[key].t, PREFETCH_FETCH_COMPLETE, car_id, st.en_id, car.token)
            return
        self._ensure_window(car, st, t)
        arrival = car.pipeline[k]
        if arrival <= t:
            car.source = "recovery"
            self._radio_add(st, car_id, t)
        else:
            car.token += 1
            self._push(arrival, RECOVERY_FETCH_COMPLETE, car_id, st.en_id, car.token)

    def _ensure_window(self, car: _Car, st: _En, t: float):
        """Keep the next ``margin`` missing chunks requested from the Data Store."""
        k = car.next_chunk
        want = []
        for j in range(k, min(k + self.cfg.margin, self.K + 1)):
            if j in car.pipeline:
                continue
            if j != k and (car.content, j) in st.cache:
                continue
            want.append(j)
        if not want:
            return
        for j, at in zip(want, self._fetch(st, t, len(want))):
            car.pipeline[j] = at
        if car.counted:
            st.counters.recovery_fetch_bits += len(want) * self.s

    def _on_chunks(self, t: float, en: str, version: int):
        st = self.ens[en]
        if version != st.version:
            return
        self._advance(st, t)
        done = []
        while st.vheap:
            finish, car_id = st.vheap[0]
            if st.active.get(car_id) != finish:
                heapq.heappop(st.vheap)
                continue
            if finish > st.vtime + _V_TOL * self.s:
                break
            heapq.heappop(st.vheap)
            del st.active[car_id]
            done.append(car_id)
        for car_id in done:
            self._deliver(self.cars[car_id], st, t)
        for car_id in done:
            self._request_next(self.cars[car_id], t)
        self._reschedule(st, t)

    def _deliver(self, car: _Car, st: _En, t: float):
        k = car.next_chunk
        from_cache = car.source in (PREFETCH, STANDARD)
        self.requests += 1
        if car.counted:
            c = st.counters
            if from_cache:
                c.hits += 1
                c.cache_bits += self.s
                if car.source == PREFETCH:
                    c.prefetch_hits += 1
                else:
                    c.standard_hits += 1
            else:
                c.misses += 1
                c.recovery_bits += self.s
        if not from_cache:
            car.pipeline.pop(k, None)
            if self.cfg.standard_cache:
                self._materialize(st, t)
                self._insert(st, CachedChunk(car.content, k, STANDARD, 0.0, set(), delivered=True), t)
        if self.cfg.record_deliveries:
            self.deliveries.append((t, car.path.car_id, k, st.en_id, car.source))
        if self.verbose:
            log.debug("%.6f ChunkDelivered car=%s en=%s k=%d src=%s", t, car.path.car_id, st.en_id, k, car.source)
        car.next_chunk += 1
        car.source = None

    # coverage -------------------------------------------------------------

    def _resolve_position(self, car: _Car, en: str) -> int | None:
        seq = car.path.expected_sequence
        for p in range(car.pos_ptr, len(seq)):
            if seq[p] == en:
                car.pos_ptr = p + 1
                return p
        return None

    def _evaluated(self, car: _Car, position: int | None) -> bool:
        return not car.background and position is not None and position < self._plan_limit(car)

    def _plannable(self, car: _Car, position: int | None) -> bool:
        return self.cfg.policy != "pop" and self._evaluated(car, position)

    def _on_enter(self, t: float, car_id: str, en: str):
        car = self.cars[car_id]
        st = self.ens[en]
        p = self._resolve_position(car, en)
        car.en, car.position = en, p
        car.counted = self._evaluated(car, p)
        if car.counted:
            self._cover(st, t, +1)
        if car.content is None:
            car.content = draw_content_request(self.rng_workload, self.cfg.catalog.n_contents, self.cfg.zipf_alpha)
        if self._plannable(car, p):
            car.plan.delivered = car.next_chunk - 1
            need, req = refresh_decision(car.plan, p, self.cfg.plan_horizon)
            if need:
                self._request_plan(car, req, t, start_here=True)
                return
        self._request_next(car, t)

    def _on_exit(self, t: float, car_id: str, en: str):
        car = self.cars[car_id]
        st = self.ens[en]
        self._radio_remove(st, car_id, t)
        car.token += 1
        car.awaiting_plan = False
        car.source = None
        car.pipeline.clear()
        self._materialize(st, t)
        st.departed.add(car_id)
        st.cache.release_car(car_id)
        if car.counted:
            self._cover(st, t, -1)
        car.counted = False
        p = car.position
        car.en = car.position = None
        car.event_idx += 1
        if car.event_idx >= len(car.path.events):
            for other in car.path.expected_sequence:
                if other in self.ens:
                    self.ens[other].departed.add(car_id)
                    self._materialize(self.ens[other], t)
                    self.ens[other].cache.release_car(car_id)
            return
        # refresh ahead of the next EN when it lies outside the current plan
        if p is not None:
            nxt = p + 1
            if self._plannable(car, nxt):
                car.plan.delivered = car.next_chunk - 1
                need, req = refresh_decision(car.plan, nxt, self.cfg.plan_horizon)
                if need:
                    self._request_plan(car, req, t, start_here=False)

    def _cover(self, st: _En, t: float, delta: int):
        if delta > 0:
            if st.counted_present == 0:
                st.covered_since = t
            if self.counted_present == 0:
                self.covered_since = t
        st.counted_present += delta
        self.counted_present += delta
        if delta < 0:
            if st.counted_present == 0:
                st.counters.covered_time += t - st.covered_since
            if self.counted_present == 0:
                self.covered_time += t - self.covered_since

    def _on_wake(self, t: float, car_id: str, en: str, token: int):
        car = self.cars[car_id]
        if token != car.token or car.en != en:
            return
        self._request_next(car, t)

    # main loop ------------------------------------------------------------

    def _pop_fill(self, t0: float):
        stored = pop_plan(range(1, self.cfg.catalog.n_contents + 1), self.K, self.capacity)
        n = sum(stored.values())
        for st in self.ens.values():
            st.occ_last = t0
            for content, m in stored.items():
                for k in range(1, m + 1):
                    self._insert(st, CachedChunk(content, k, PREFETCH, 1.0, set()), t0)
            st.counters.prefetch_fetch_bits += n * self.s

    def run(self) -> MetricsReport:
        events = events_from_paths(self.paths)
        for ev in events:
            if ev.en_id not in self.ens:
                raise TraceError(f"car {ev.car_id} references unknown EN {ev.en_id}")
        t0 = min((ev.t_enter for ev in events), default=0.0)
        t_end = max((ev.t_exit for ev in events), default=0.0)
        for st in self.ens.values():
            st.occ_last = t0
            st.vlast = t0
        if self.cfg.policy == "pop":
            self._pop_fill(t0)
        for ev in events:
            self._push(ev.t_enter, CAR_ENTER, ev.car_id, ev.en_id)
            self._push(ev.t_exit, CAR_EXIT, ev.car_id, ev.en_id)

        handlers = {
            CAR_ENTER: lambda t, c, e, p: self._on_enter(t, c, e),
            CAR_EXIT: lambda t, c, e, p: self._on_exit(t, c, e),
            PLAN_COMPUTED: lambda t, c, e, p: self._on_plan(t, c, p),
            CHUNK_DELIVERED: lambda t, c, e, p: self._on_chunks(t, e, p),
            PREFETCH_FETCH_COMPLETE: self._on_wake,
            RECOVERY_FETCH_COMPLETE: self._on_wake,
        }
        q = self._queue
        while q:
            t, kind, car, en, _, payload = heapq.heappop(q)
            if t > t_end and kind not in (CAR_EXIT,):
                # nothing past the last exit can change the metrics
                continue
            self.now = t
            if self.verbose and kind != CHUNK_DELIVERED:
                log.debug("%.6f %s car=%s en=%s", t, KIND_NAMES[kind], car, en)
            handlers[kind](t, car, en, payload)

        for st in self.ens.values():
            self._materialize(st, t_end)
            self._occ(st, t_end)

        counters = RunCounters(
            per_en={en: st.counters for en, st in self.ens.items()},
            covered_time=self.covered_time,
            duration=t_end - t0,
            catalog_chunks=self.cfg.catalog.total_chunks,
            cache_chunks=self.capacity,
            chunk_bits=self.s,
            policy=self.cfg.policy,
            seed=self.cfg.seed,
            requests=self.requests,
            plans=self.plans,
        )
        return finalize(counters, self.cfg.a_user, self.cfg.b_op)


def run(config: SimulationConfig, trace: Sequence[CarPath], verbose: bool = False) -> MetricsReport:
    return Simulation(config, trace, verbose=verbose).run()
