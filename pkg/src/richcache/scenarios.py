"""Ready-made synthetic scenarios used by the examples and the test suite."""

from __future__ import annotations

from richcache.sim.config import SimulationConfig
from richcache.sim.workload import ContentCatalog
from richcache.trace import CarPath, CoverageEvent, DwellMixture, SyntheticTraceSpec, generate_synthetic_trace

CHUNK_BITS = 65_000 * 8


def toy_traffic_light_trace(n_cars: int = 1000, slow_every: int = 5) -> list[CarPath]:
    """One EN at a traffic light: every ``slow_every``-th car waits at red.

    With 5.2 Mbit/s and 65 kB chunks a fast car fits 10 chunks and a slow car
    100.  Cars never overlap, so each has the whole radio.
    """
    paths = []
    width = len(str(n_cars - 1))
    for n in range(n_cars):
        car = f"car{n:0{width}d}"
        dwell = 10.05 if n % slow_every == 0 else 1.05
        t = 20.0 * n
        paths.append(CarPath(car, [CoverageEvent(car, "A", t, t + dwell)]))
    return paths


def toy_traffic_light_config(policy: str = "netpredict", taus=(0.8,), **kw) -> SimulationConfig:
    return SimulationConfig(
        catalog=ContentCatalog(n_contents=1, chunks_per_content=200, chunk_bits=CHUNK_BITS),
        cache_chunks=kw.pop("cache_chunks", 200),
        bandwidth_b=5.2e6,
        policy=policy,
        taus=tuple(taus),
        **kw,
    )


def bimodal_three_en_spec(n_cars: int = 2000, arrival_rate: float = 0.2) -> SyntheticTraceSpec:
    """Route A -> B -> C with fast/slow dwell mixtures at every EN."""
    return SyntheticTraceSpec(
        routes={("A", "B", "C"): 1.0},
        dwell={
            "A": DwellMixture(((0.8, 3.0, 6.0), (0.2, 25.0, 40.0))),
            "B": DwellMixture(((0.6, 4.0, 8.0), (0.4, 20.0, 35.0))),
            "C": DwellMixture(((0.7, 3.0, 6.0), (0.3, 20.0, 30.0))),
        },
        n_cars=n_cars,
        arrival_rate=arrival_rate,
        gap_s=(2.0, 6.0),
    )


def bimodal_three_en_trace(seed: int, n_cars: int = 2000) -> list[CarPath]:
    return generate_synthetic_trace(bimodal_three_en_spec(n_cars), seed)


def bimodal_three_en_config(policy: str = "rich", taus=(0.8,), c_hat: float = 0.1, seed: int = 0, **kw) -> SimulationConfig:
    """Prefetching and metrics on the first two ENs of the route; the third only adds load."""
    return SimulationConfig(
        catalog=ContentCatalog(n_contents=10, chunks_per_content=300, chunk_bits=CHUNK_BITS),
        c_hat=c_hat,
        bandwidth_b=2.08e6,
        policy=policy,
        taus=tuple(taus),
        plan_horizon=2,
        eval_positions=2,
        seed=seed,
        **kw,
    )
