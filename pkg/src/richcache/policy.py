"""Prefetch planners: RICH (single and multi threshold), netPredict, POP."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from richcache.probmodel import PhiMatrix

# both the stop test (p_k > tau) and the success test (p_k >= tau) get this
# slack, so tau = 1 takes every EN when the column sums to one up to rounding
SUCCESS_TOL = 1e-9


@dataclass(frozen=True)
class ThresholdProfile:
    """One threshold per EN position of the plan (all equal = single threshold)."""

    taus: tuple[float, ...]

    def __post_init__(self):
        taus = tuple(float(t) for t in self.taus)
        if not taus:
            raise ValueError("at least one threshold required")
        if any(not 0.0 <= t <= 1.0 for t in taus):
            raise ValueError(f"thresholds must lie in [0, 1], got {taus}")
        object.__setattr__(self, "taus", taus)

    @classmethod
    def single(cls, tau: float, n_ens: int = 1) -> "ThresholdProfile":
        return cls((tau,) * n_ens)

    def tau_at(self, position: int) -> float:
        """Threshold for 0-based EN position; the last one repeats."""
        return self.taus[min(position, len(self.taus) - 1)]

    def per_chunk(self, phi: PhiMatrix) -> np.ndarray:
        owners = assign_chunk_owners(phi)
        lookup = np.array([self.tau_at(i) for i in range(phi.n_ens)])
        return lookup[owners]


@dataclass
class PrefetchPlan:
    """``members[i, k-1]`` is True when EN position ``i`` must store chunk ``k``."""

    members: np.ndarray
    achieved_prob: np.ndarray
    phi: np.ndarray
    content_id: int | None = None
    car_id: str | None = None

    @property
    def horizon(self) -> int:
        return self.members.shape[0]

    @property
    def n_chunks(self) -> int:
        return self.members.shape[1]

    @property
    def chunk_assignments(self) -> dict[int, list[int]]:
        """Chunk (1-based) -> EN positions (0-based); only non-empty sets."""
        out = {}
        for k in np.flatnonzero(self.members.any(axis=0)):
            out[int(k) + 1] = [int(i) for i in np.flatnonzero(self.members[:, k])]
        return out

    def ens_for(self, k: int) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.members[:, k - 1])]

    def chunks_for(self, position: int) -> np.ndarray:
        """1-based chunk ids assigned to EN ``position``."""
        return np.flatnonzero(self.members[position]) + 1

    def copies(self) -> np.ndarray:
        return self.members.sum(axis=0)

    def to_dict(self) -> dict:
        return {
            "car_id": self.car_id,
            "content_id": self.content_id,
            "chunks": [
                {"k": k, "ens": ens, "p_k": float(self.achieved_prob[k - 1])}
                for k, ens in self.chunk_assignments.items()
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def assign_chunk_owners(phi: PhiMatrix) -> np.ndarray:
    """0-based EN position owning each chunk: the largest phi, earliest EN on ties.

    Chunks nobody can deliver go to the last EN.
    """
    owners = np.argmax(phi.phi, axis=0)
    owners[~(phi.phi > 0).any(axis=0)] = phi.n_ens - 1
    return owners


def rich_plan(
    phi: PhiMatrix,
    profile: ThresholdProfile,
    keep_partial_on_failure: bool = False,
    content_id: int | None = None,
    car_id: str | None = None,
) -> PrefetchPlan:
    """Smallest prefix of ENs (by decreasing phi) whose summed phi exceeds tau.

    Runs the greedy loop for all chunks at once: a stable sort of each column
    gives the visiting order and a running sum reproduces the accumulation.
    """
    p = phi.phi
    n_ens, n_chunks = p.shape
    taus = profile.per_chunk(phi)
    order = np.argsort(-p, axis=0, kind="stable")
    ranked = np.take_along_axis(p, order, axis=0)
    running = np.cumsum(ranked, axis=0)
    n_pos = (p > 0).sum(axis=0)

    # the loop keeps taking while the running sum is <= tau
    above = running > taus + SUCCESS_TOL
    first_above = np.where(above.any(axis=0), above.argmax(axis=0), n_ens)
    taken = np.minimum(first_above + 1, n_pos)
    idx = np.arange(n_chunks)
    achieved = np.where(taken > 0, running[np.maximum(taken - 1, 0), idx], 0.0)

    ok = achieved >= taus - SUCCESS_TOL
    if not keep_partial_on_failure:
        taken = np.where(ok, taken, 0)
        achieved = np.where(ok, achieved, 0.0)

    members = np.zeros((n_ens, n_chunks), dtype=bool)
    rank = np.arange(n_ens)[:, None]
    np.put_along_axis(members, order, rank < taken[None, :], axis=0)
    return PrefetchPlan(
        members=members, achieved_prob=achieved, phi=p, content_id=content_id, car_id=car_id
    )


def netpredict_ranges(mean_chunks: Sequence[float], start_chunk: int = 1) -> list[tuple[int, int]]:
    """Contiguous inclusive chunk ranges per EN; ``hi < lo`` means nothing stored."""
    ranges = []
    c = start_chunk - 1
    for m in mean_chunks:
        if m < 0:
            raise ValueError("mean chunk counts must be non-negative")
        n = math.floor(m + 0.5)
        ranges.append((c + 1, c + n))
        c += n
    return ranges


def netpredict_plan(
    mean_chunks: Sequence[float],
    n_chunks: int,
    start_chunk: int = 1,
    content_id: int | None = None,
    car_id: str | None = None,
) -> PrefetchPlan:
    """netPredict as a plan matrix: EN ``i`` stores ``round(E[X_i])`` chunks in order."""
    members = np.zeros((len(mean_chunks), n_chunks), dtype=bool)
    for i, (lo, hi) in enumerate(netpredict_ranges(mean_chunks, start_chunk)):
        lo, hi = max(lo, 1), min(hi, n_chunks)
        if hi >= lo:
            members[i, lo - 1 : hi] = True
    ones = members.astype(np.float64)
    return PrefetchPlan(
        members=members,
        achieved_prob=members.any(axis=0).astype(np.float64),
        phi=ones,
        content_id=content_id,
        car_id=car_id,
    )


def pop_plan(popularity_ranks: Sequence[int], chunks_per_content: int, cache_capacity: int) -> dict[int, int]:
    """Content -> number of leading chunks stored, filling in popularity order."""
    stored: dict[int, int] = {}
    room = cache_capacity
    for content in popularity_ranks:
        if room <= 0:
            break
        n = min(chunks_per_content, room)
        stored[content] = n
        room -= n
    return stored


@dataclass
class CarPlanState:
    """What the Prefetcher remembers about one car between plans."""

    delivered: int = 0
    plan_start: int | None = None  # first path position of the current plan
    plan_horizon: int = 0
    history: list[int] = field(default_factory=list)  # plan start positions


@dataclass(frozen=True)
class PlanRequest:
    first_position: int
    horizon: int
    delivered: int


def refresh_decision(state: CarPlanState, next_position: int, horizon: int) -> tuple[bool, PlanRequest | None]:
    """Ask for a new plan when the next EN lies outside the current plan."""
    if state.plan_start is not None and state.plan_start <= next_position < state.plan_start + state.plan_horizon:
        return False, None
    return True, PlanRequest(first_position=next_position, horizon=horizon, delivered=state.delivered)
