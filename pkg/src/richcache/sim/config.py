"""Simulation configuration and its YAML/dict form."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Any

from richcache.sim.workload import ContentCatalog

POLICIES = ("rich", "netpredict", "pop")

# YAML 1.1 reads values like 2.08e6 as strings, so numbers are coerced on load
_FLOAT_KEYS = {"c_hat", "bandwidth_b", "zipf_alpha", "path_skip", "stats_bin_width",
               "fast_slow_boundary", "a_user", "b_op"}
_INT_KEYS = {"cache_chunks", "plan_horizon", "eval_positions", "seed", "recovery_margin",
             "significant_min_cars", "path_len"}


def _coerce(d: dict, floats=(), ints=()) -> dict:
    out = dict(d)
    for k, v in d.items():
        if v is None:
            continue
        if k in floats:
            out[k] = float(v)
        elif k in ints:
            out[k] = int(v)
    return out


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BackhaulParams:
    datastore_rate: float = 100e6  # bit/s, Data Store -> EN
    datastore_delay: float = 2e-3  # s, one way
    prefetcher_delay: float = 10e-6  # s, one way

    def __post_init__(self):
        if self.datastore_rate <= 0 or self.datastore_delay < 0 or self.prefetcher_delay < 0:
            raise ConfigError("backhaul rate must be positive and delays non-negative")


@dataclass(frozen=True)
class DwellError:
    mu: float = 0.0
    sigma: float = 0.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigError("sigma must be non-negative")


@dataclass(frozen=True)
class SimulationConfig:
    catalog: ContentCatalog = field(default_factory=ContentCatalog)
    # per-EN capacity; c_hat (fraction of the catalog) is used when unset
    cache_chunks: int | None = None
    c_hat: float | None = None
    bandwidth_b: float = 5.2e6  # effective radio rate per EN, bit/s
    backhaul: BackhaulParams = field(default_factory=BackhaulParams)
    zipf_alpha: float = 0.75
    policy: str = "rich"
    taus: tuple[float, ...] = (0.8,)
    keep_partial_on_failure: bool = False
    plan_horizon: int = 2
    # prefetching and metrics cover the first eval_positions ENs of every path
    eval_positions: int | None = None
    seed: int = 0
    dwell_error: DwellError | None = None
    path_skip: float | None = None
    recovery_margin: int | None = None
    standard_cache: bool = False
    stats_bin_width: float = 1.0
    fast_slow_boundary: float = 10.0
    fast_slow_knowledge: bool = False
    significant_min_cars: int | None = None
    path_len: int = 3
    background_cars: bool = False
    a_user: float = 1.0
    b_op: float = 1.0
    record_deliveries: bool = False

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ConfigError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if self.cache_chunks is None and self.c_hat is None:
            raise ConfigError("set cache_chunks or c_hat")
        if self.cache_chunks is not None and self.cache_chunks < 0:
            raise ConfigError("cache_chunks must be non-negative")
        if self.c_hat is not None and not 0.0 <= self.c_hat <= 1.0:
            raise ConfigError("c_hat must lie in [0, 1]")
        if self.bandwidth_b <= 0:
            raise ConfigError("bandwidth_b must be positive")
        if self.plan_horizon < 1:
            raise ConfigError("plan_horizon must be >= 1")
        if self.eval_positions is not None and self.eval_positions < 1:
            raise ConfigError("eval_positions must be >= 1")
        if self.path_skip is not None and not 0.0 <= self.path_skip <= 1.0:
            raise ConfigError("path_skip must lie in [0, 1]")
        if self.recovery_margin is not None and self.recovery_margin < 1:
            raise ConfigError("recovery_margin must be >= 1")
        taus = tuple(float(t) for t in self.taus)
        if not taus or any(not 0.0 <= t <= 1.0 for t in taus):
            raise ConfigError(f"thresholds must lie in [0, 1], got {taus}")
        object.__setattr__(self, "taus", taus)

    @property
    def capacity(self) -> int:
        if self.cache_chunks is not None:
            return int(self.cache_chunks)
        return int(round(self.c_hat * self.catalog.total_chunks))

    @property
    def margin(self) -> int:
        """Recovery window: enough chunks to cover one Data Store round trip, plus one."""
        if self.recovery_margin is not None:
            return self.recovery_margin
        rtt = 2 * self.backhaul.datastore_delay
        return math.ceil(rtt * self.bandwidth_b / self.catalog.chunk_bits) + 1

    def with_(self, **changes) -> "SimulationConfig":
        return replace(self, **changes)

    # dict round trip ------------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SimulationConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown simulation keys: {sorted(unknown)}")
        try:
            d = _coerce(d, _FLOAT_KEYS, _INT_KEYS)
            if "catalog" in d:
                d["catalog"] = ContentCatalog(**_coerce(d["catalog"], {"chunk_bits"}, {"n_contents", "chunks_per_content"}))
            if "backhaul" in d:
                d["backhaul"] = BackhaulParams(**_coerce(d["backhaul"], {"datastore_rate", "datastore_delay", "prefetcher_delay"}))
            if d.get("dwell_error") is not None:
                d["dwell_error"] = DwellError(**_coerce(d["dwell_error"], {"mu", "sigma"}))
            if "taus" in d:
                taus = d["taus"]
                taus = tuple(taus) if isinstance(taus, (list, tuple)) else (taus,)
                d["taus"] = tuple(float(t) for t in taus)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        return cls(**d)

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (ContentCatalog, BackhaulParams, DwellError)):
                v = {g.name: getattr(v, g.name) for g in fields(v)}
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out
