"""Exhaustive search over per-position thresholds by full simulation."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Callable, Sequence

from richcache.metrics import MetricsReport
from richcache.policy import ThresholdProfile
from richcache.sim.config import SimulationConfig
from richcache.sim.engine import run
from richcache.trace import CarPath

log = logging.getLogger(__name__)

# metric name -> (getter, sign); sign -1 turns a cost into something to maximize
OBJECTIVES: dict[str, tuple[Callable[[MetricsReport], float], float]] = {
    "hit_probability": (lambda r: r.cache_hit_probability, 1.0),
    "cache_throughput": (lambda r: r.cache_throughput, 1.0),
    "joint_utility": (lambda r: r.joint_utility, 1.0),
    "backhaul_traffic": (lambda r: r.backhaul_traffic, -1.0),
}


@dataclass(frozen=True)
class SurfacePoint:
    taus: tuple[float, ...]
    value: float  # objective averaged over seeds, in its natural sign


@dataclass(frozen=True)
class OptimizationResult:
    profile: ThresholdProfile
    best_value: float
    surface: tuple[SurfacePoint, ...]

    def surface_rows(self) -> list[dict]:
        n = len(self.profile.taus)
        return [{**{f"tau_{j + 1}": p.taus[j] for j in range(n)}, "value": p.value} for p in self.surface]


def optimize_thresholds(
    config: SimulationConfig,
    trace: Sequence[CarPath],
    grid: Sequence[float],
    objective: str = "hit_probability",
    n_positions: int | None = None,
    seeds: Sequence[int] | None = None,
) -> OptimizationResult:
    """Simulate every profile in ``grid ** n_positions`` and keep the best.

    ``n_positions`` defaults to the plan horizon, since thresholds past it are
    never used.  Ties go to the lexicographically smallest profile.
    """
    if not grid:
        raise ValueError("threshold grid is empty")
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}; choose from {sorted(OBJECTIVES)}")
    values = sorted(set(float(g) for g in grid))
    if any(not 0.0 <= g <= 1.0 for g in values):
        raise ValueError("grid values must lie in [0, 1]")
    n = config.plan_horizon if n_positions is None else int(n_positions)
    if n < 1:
        raise ValueError("n_positions must be >= 1")
    seeds = [config.seed] if seeds is None else list(seeds)
    get, sign = OBJECTIVES[objective]

    surface = []
    best = None
    # product over a sorted grid is already in lexicographic order
    for taus in itertools.product(values, repeat=n):
        cfg = config.with_(policy="rich", taus=taus)
        vals = [get(run(cfg.with_(seed=s), trace)) for s in seeds]
        value = sum(vals) / len(vals)
        surface.append(SurfacePoint(taus, value))
        log.info("taus=%s %s=%.6g", taus, objective, value)
        if best is None or sign * value > sign * best.value:
            best = surface[-1]
    return OptimizationResult(ThresholdProfile(best.taus), best.value, tuple(surface))
