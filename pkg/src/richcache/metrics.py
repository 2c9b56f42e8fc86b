"""Counters collected during a run and the derived performance report."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

CSV_FIELDS = [
    "policy",
    "cache_chunks",
    "c_hat",
    "hit_prob",
    "cache_throughput_bps",
    "backhaul_bps",
    "overhead",
    "occupancy",
    "utility",
    "seed",
]


@dataclass
class EnCounters:
    hits: int = 0
    misses: int = 0
    prefetch_hits: int = 0
    standard_hits: int = 0
    cache_bits: float = 0.0  # delivered to cars out of the cache
    recovery_bits: float = 0.0  # delivered to cars through data recovery
    recovery_fetch_bits: float = 0.0  # Data Store -> EN because of misses
    prefetch_fetch_bits: float = 0.0  # Data Store -> EN on Prefetcher orders
    covered_time: float = 0.0
    rejected_inserts: int = 0
    occupancy_integral: float = 0.0  # chunk-seconds


@dataclass
class RunCounters:
    per_en: dict[str, EnCounters]
    covered_time: float
    duration: float
    catalog_chunks: int
    cache_chunks: int
    chunk_bits: float
    policy: str = ""
    seed: int | None = None
    requests: int = 0
    plans: int = 0


@dataclass
class MetricsReport:
    policy: str
    seed: int | None
    cache_chunks: int
    cache_hit_probability: float
    cache_throughput: float
    backhaul_traffic: float
    prefetch_traffic: float
    normalized_backhaul_overhead: float | None
    normalized_cache_size: float
    network_cache_occupancy: float
    joint_utility: float
    covered_time: float
    hits: int
    misses: int
    plans: int
    per_en: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def csv_row(self) -> dict:
        return {
            "policy": self.policy,
            "cache_chunks": self.cache_chunks,
            "c_hat": repr(self.normalized_cache_size),
            "hit_prob": repr(self.cache_hit_probability),
            "cache_throughput_bps": repr(self.cache_throughput),
            "backhaul_bps": repr(self.backhaul_traffic),
            "overhead": "" if self.normalized_backhaul_overhead is None else repr(self.normalized_backhaul_overhead),
            "occupancy": repr(self.network_cache_occupancy),
            "utility": repr(self.joint_utility),
            "seed": "" if self.seed is None else self.seed,
        }


def joint_utility(hit_prob: float, c_hat: float, a_user: float = 1.0, b_op: float = 1.0) -> float:
    """User utility ``exp(-a (1 - P_hit))`` times operator utility ``exp(-b C_hat)``."""
    if a_user <= 0 or b_op <= 0:
        raise ValueError("utility constants must be positive")
    return math.exp(-a_user * (1.0 - hit_prob)) * math.exp(-b_op * c_hat)


def _rate(bits: float, seconds: float) -> float:
    return bits / seconds if seconds > 0 else 0.0


def finalize(c: RunCounters, a_user: float = 1.0, b_op: float = 1.0) -> MetricsReport:
    ens = c.per_en.values()
    hits = sum(e.hits for e in ens)
    misses = sum(e.misses for e in ens)
    cache_bits = sum(e.cache_bits for e in ens)
    delivered = cache_bits + sum(e.recovery_bits for e in ens)
    recovery_fetch = sum(e.recovery_fetch_bits for e in ens)
    prefetch_fetch = sum(e.prefetch_fetch_bits for e in ens)
    hit_prob = hits / (hits + misses) if hits + misses else 0.0
    c_hat = c.cache_chunks / c.catalog_chunks
    overhead = (prefetch_fetch + recovery_fetch - delivered) / delivered if delivered > 0 else None
    occ = sum(e.occupancy_integral for e in ens)
    occupancy = occ / c.duration / c.catalog_chunks if c.duration > 0 else 0.0

    per_en = {}
    for en, e in sorted(c.per_en.items()):
        n = e.hits + e.misses
        per_en[en] = {
            "hits": e.hits,
            "misses": e.misses,
            "prefetch_hits": e.prefetch_hits,
            "standard_hits": e.standard_hits,
            "hit_prob": e.hits / n if n else 0.0,
            "covered_time": e.covered_time,
            "cache_throughput": _rate(e.cache_bits, e.covered_time),
            "backhaul_traffic": _rate(e.recovery_fetch_bits, e.covered_time),
            "prefetch_traffic": _rate(e.prefetch_fetch_bits, e.covered_time),
            "rejected_inserts": e.rejected_inserts,
            "occupancy": (e.occupancy_integral / c.duration / c.catalog_chunks) if c.duration > 0 else 0.0,
        }

    return MetricsReport(
        policy=c.policy,
        seed=c.seed,
        cache_chunks=c.cache_chunks,
        cache_hit_probability=hit_prob,
        cache_throughput=_rate(cache_bits, c.covered_time),
        backhaul_traffic=_rate(recovery_fetch, c.covered_time),
        prefetch_traffic=_rate(prefetch_fetch, c.covered_time),
        normalized_backhaul_overhead=overhead,
        normalized_cache_size=c_hat,
        network_cache_occupancy=occupancy,
        joint_utility=joint_utility(hit_prob, c_hat, a_user, b_op),
        covered_time=c.covered_time,
        hits=hits,
        misses=misses,
        plans=c.plans,
        per_en=per_en,
    )


def reports_to_csv(reports, extra: list[dict] | None = None) -> str:
    """CSV text; ``extra`` adds trailing sweep-key columns row by row."""
    extra_cols = sorted({k for d in (extra or []) for k in d})
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS + extra_cols, lineterminator="\n")
    w.writeheader()
    for i, r in enumerate(reports):
        row = r.csv_row()
        if extra:
            row.update({k: extra[i].get(k, "") for k in extra_cols})
        w.writerow(row)
    return buf.getvalue()
