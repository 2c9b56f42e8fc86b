"""Mobility input: coverage events, dwell statistics, significant paths."""

from __future__ import annotations

import csv
import io
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

from richcache.pdf import DiscretePdf

COVERAGE_HEADER = ["car_id", "en_id", "t_enter", "t_exit"]
POSITION_HEADER = ["t", "car_id", "x", "y"]
LAYOUT_HEADER = ["en_id", "x", "y", "radius"]


class TraceError(ValueError):
    """Malformed or inconsistent mobility data."""


@dataclass(frozen=True)
class CoverageEvent:
    car_id: str
    en_id: str
    t_enter: float
    t_exit: float

    @property
    def dwell(self) -> float:
        return self.t_exit - self.t_enter


@dataclass
class CarPath:
    car_id: str
    events: list[CoverageEvent]
    # the EN sequence the Prefetcher believes in; differs from the actual one
    # only after path-skip errors are injected
    expected_sequence: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.expected_sequence is None:
            self.expected_sequence = self.en_sequence

    @property
    def en_sequence(self) -> tuple[str, ...]:
        return tuple(e.en_id for e in self.events)


@dataclass(frozen=True)
class EnDisc:
    en_id: str
    x: float
    y: float
    radius: float


@dataclass
class DwellStats:
    en_id: str
    dwell_pdf: DiscretePdf
    bin_width: float
    avg_concurrent_users: float
    sample_count: int
    skewness: float
    kurtosis: float
    fast_pdf: DiscretePdf | None = None
    slow_pdf: DiscretePdf | None = None
    fast_count: int = 0
    slow_count: int = 0
    mean_dwell: float = 0.0
    min_dwell: float = 0.0

    def to_dict(self) -> dict:
        d = {
            "en_id": self.en_id,
            "bin_width": self.bin_width,
            "avg_concurrent_users": self.avg_concurrent_users,
            "sample_count": self.sample_count,
            "mean_dwell": self.mean_dwell,
            "min_dwell": self.min_dwell,
            "skewness": self.skewness,
            "kurtosis": self.kurtosis,
            "fast_count": self.fast_count,
            "slow_count": self.slow_count,
            "dwell_pdf": {str(k): v for k, v in self.dwell_pdf.to_dict().items()},
        }
        for name in ("fast_pdf", "slow_pdf"):
            pdf = getattr(self, name)
            d[name] = None if pdf is None else {str(k): v for k, v in pdf.to_dict().items()}
        return d


@dataclass(frozen=True)
class SignificantPath:
    en_sequence: tuple[str, ...]
    car_count: int


# loading --------------------------------------------------------------------


def _check_car_events(events: list[CoverageEvent]) -> None:
    for prev, cur in zip(events, events[1:]):
        if cur.t_enter < prev.t_exit:
            raise TraceError(
                f"overlapping coverage for car {cur.car_id}: "
                f"{prev.en_id} [{prev.t_enter}, {prev.t_exit}] and {cur.en_id} [{cur.t_enter}, {cur.t_exit}]"
            )


def _group(events: Iterable[CoverageEvent]) -> dict[str, list[CoverageEvent]]:
    by_car: dict[str, list[CoverageEvent]] = defaultdict(list)
    for ev in events:
        by_car[ev.car_id].append(ev)
    for evs in by_car.values():
        evs.sort(key=lambda e: (e.t_enter, e.t_exit))
        _check_car_events(evs)
    return by_car


def _read_rows(source, header: list[str], name: str):
    if isinstance(source, (bytes, bytearray)):
        source = io.StringIO(source.decode("utf-8"))
    elif isinstance(source, str):
        source = io.StringIO(source)
    elif isinstance(source, io.BufferedIOBase) or "b" in getattr(source, "mode", ""):
        source = io.TextIOWrapper(source, encoding="utf-8")
    reader = csv.reader(source)
    first = next(reader, None)
    if first is None:
        return
    if [c.strip() for c in first] != header:
        raise TraceError(f"{name}: line 1: expected header {','.join(header)}")
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise TraceError(f"{name}: line {lineno}: expected {len(header)} fields, got {len(row)}")
        yield lineno, [c.strip() for c in row]


def load_coverage_events(source: IO | str | bytes, name: str = "<coverage>") -> list[CoverageEvent]:
    """Parse coverage-event CSV; events come back grouped by car, time-sorted."""
    events = []
    for lineno, (car, en, t0, t1) in _read_rows(source, COVERAGE_HEADER, name):
        try:
            t_enter, t_exit = float(t0), float(t1)
        except ValueError:
            raise TraceError(f"{name}: line {lineno}: bad time value") from None
        if not (math.isfinite(t_enter) and math.isfinite(t_exit)) or t_enter < 0:
            raise TraceError(f"{name}: line {lineno}: times must be finite and non-negative")
        if t_exit <= t_enter:
            raise TraceError(f"{name}: line {lineno}: t_exit must exceed t_enter")
        events.append(CoverageEvent(car, en, t_enter, t_exit))
    by_car = _group(events)
    return [ev for car in by_car for ev in by_car[car]]


def write_coverage_events(events: Iterable[CoverageEvent], out: IO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(COVERAGE_HEADER)
    for ev in events:
        w.writerow([ev.car_id, ev.en_id, repr(float(ev.t_enter)), repr(float(ev.t_exit))])


def paths_from_events(events: Iterable[CoverageEvent]) -> list[CarPath]:
    """One path per car, ordered by car id."""
    by_car = _group(events)
    return [CarPath(car, by_car[car]) for car in sorted(by_car)]


def events_from_paths(paths: Iterable[CarPath]) -> list[CoverageEvent]:
    return [ev for p in paths for ev in p.events]


def load_en_layout(source, name: str = "<layout>") -> list[EnDisc]:
    out = []
    for lineno, (en, x, y, r) in _read_rows(source, LAYOUT_HEADER, name):
        try:
            disc = EnDisc(en, float(x), float(y), float(r))
        except ValueError:
            raise TraceError(f"{name}: line {lineno}: bad number") from None
        if disc.radius <= 0:
            raise TraceError(f"{name}: line {lineno}: radius must be positive")
        out.append(disc)
    return out


def load_positions(source, name: str = "<positions>") -> list[tuple[float, str, float, float]]:
    out = []
    for lineno, (t, car, x, y) in _read_rows(source, POSITION_HEADER, name):
        try:
            out.append((float(t), car, float(x), float(y)))
        except ValueError:
            raise TraceError(f"{name}: line {lineno}: bad number") from None
    return out


def derive_coverage_from_positions(
    positions: Sequence[tuple[float, str, float, float]], en_layout: Sequence[EnDisc]
) -> list[CoverageEvent]:
    """Maximal runs of samples inside one disc become coverage events.

    Enter/exit times are the first/last sample of the run.
    """
    if any(d.radius <= 0 for d in en_layout):
        raise TraceError("radius must be positive")
    per_car: dict[str, list[tuple[float, float, float]]] = defaultdict(list)
    for t, car, x, y in positions:
        per_car[car].append((t, x, y))
    events = []
    for car, samples in per_car.items():
        times = [s[0] for s in samples]
        if any(b < a for a, b in zip(times, times[1:])):
            raise TraceError(f"position samples for car {car} are not time-sorted")
        run_en, run_start, run_last = None, None, None
        for t, x, y in samples:
            inside = [d.en_id for d in en_layout if math.hypot(x - d.x, y - d.y) <= d.radius]
            if len(inside) > 1:
                raise TraceError(f"car {car} at t={t} is inside overlapping discs {inside}")
            en = inside[0] if inside else None
            if en != run_en:
                if run_en is not None and run_last > run_start:
                    events.append(CoverageEvent(car, run_en, run_start, run_last))
                run_en, run_start = en, t
            run_last = t
        if run_en is not None and run_last > run_start:
            events.append(CoverageEvent(car, run_en, run_start, run_last))
    return events


# statistics -----------------------------------------------------------------


def _moments(x: np.ndarray) -> tuple[float, float]:
    """Standardized third and fourth central moments; 0 for zero variance."""
    m = x.mean()
    var = np.mean((x - m) ** 2)
    if var <= 0:
        return 0.0, 0.0
    sd = math.sqrt(var)
    return float(np.mean((x - m) ** 3) / sd**3), float(np.mean((x - m) ** 4) / var**2)


def _binned(dwells: np.ndarray, bin_width: float) -> DiscretePdf:
    return DiscretePdf.from_samples(np.floor(dwells / bin_width + 1e-9).astype(np.int64))


def empirical_dwell_dist(
    events: Iterable[CoverageEvent],
    en_id: str,
    bin_width: float = 1.0,
    fast_slow_boundary: float = 10.0,
) -> DwellStats:
    """Dwell-time histogram and shape statistics for one EN.

    Bin ``j`` collects dwells in ``[j * bin_width, (j+1) * bin_width)``.
    Cars dwelling longer than ``fast_slow_boundary`` seconds are slow.
    """
    if bin_width <= 0:
        raise ValueError("bin width must be positive")
    evs = [e for e in events if e.en_id == en_id]
    if not evs:
        raise TraceError(f"no coverage events for EN {en_id}")
    dwells = np.array([e.dwell for e in evs])
    skew, kurt = _moments(dwells)
    slow = dwells[dwells > fast_slow_boundary]
    fast = dwells[dwells <= fast_slow_boundary]
    return DwellStats(
        en_id=en_id,
        dwell_pdf=_binned(dwells, bin_width),
        bin_width=bin_width,
        avg_concurrent_users=avg_concurrent_users(evs, en_id),
        sample_count=len(evs),
        skewness=skew,
        kurtosis=kurt,
        fast_pdf=_binned(fast, bin_width) if fast.size else None,
        slow_pdf=_binned(slow, bin_width) if slow.size else None,
        fast_count=int(fast.size),
        slow_count=int(slow.size),
        mean_dwell=float(dwells.mean()),
        min_dwell=float(dwells.min()),
    )


def avg_concurrent_users(events: Iterable[CoverageEvent], en_id: str) -> float:
    """Time-average of the car count under ``en_id`` over time with >= 1 car."""
    evs = [e for e in events if e.en_id == en_id]
    if not evs:
        raise TraceError(f"no coverage events for EN {en_id}")
    # exits sort before enters at equal times so touching intervals do not stack
    edges = sorted([(e.t_enter, 1) for e in evs] + [(e.t_exit, -1) for e in evs], key=lambda p: (p[0], p[1]))
    count, last, area, busy = 0, None, 0.0, 0.0
    for t, delta in edges:
        if count > 0:
            area += count * (t - last)
            busy += t - last
        count += delta
        last = t
    return area / busy


def significant_paths(paths: Iterable[CarPath], path_len: int = 3, min_cars: int = 1) -> list[SignificantPath]:
    """EN sequences of exactly ``path_len`` ENs followed by at least ``min_cars`` cars."""
    if path_len < 1:
        raise ValueError("path_len must be >= 1")
    counts = Counter(p.en_sequence for p in paths if len(p.en_sequence) == path_len)
    keep = [SignificantPath(seq, n) for seq, n in counts.items() if n >= min_cars]
    return sorted(keep, key=lambda sp: (-sp.car_count, sp.en_sequence))


def filter_to_paths(paths: Iterable[CarPath], wanted: Iterable[SignificantPath]) -> list[CarPath]:
    keep = {sp.en_sequence for sp in wanted}
    return [p for p in paths if p.en_sequence in keep]


def trace_dwell_stats(
    paths: Sequence[CarPath], bin_width: float = 1.0, fast_slow_boundary: float = 10.0
) -> dict[str, DwellStats]:
    events = events_from_paths(paths)
    ens = sorted({e.en_id for e in events})
    return {en: empirical_dwell_dist(events, en, bin_width, fast_slow_boundary) for en in ens}


# synthetic traces -----------------------------------------------------------


@dataclass(frozen=True)
class DwellMixture:
    """Mixture of uniform dwell ranges: ``(weight, low_s, high_s)`` components."""

    components: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        comps = tuple((float(w), float(lo), float(hi)) for w, lo, hi in self.components)
        if not comps or any(w < 0 or lo <= 0 or hi < lo for w, lo, hi in comps):
            raise TraceError("dwell components need weight >= 0 and 0 < low <= high")
        if sum(w for w, _, _ in comps) <= 0:
            raise TraceError("dwell mixture weights must have positive sum")
        object.__setattr__(self, "components", comps)

    @property
    def weights(self) -> np.ndarray:
        w = np.array([c[0] for c in self.components])
        return w / w.sum()

    def sample(self, rng: np.random.Generator) -> tuple[float, int]:
        j = int(rng.choice(len(self.components), p=self.weights))
        _, lo, hi = self.components[j]
        return (lo if hi == lo else float(rng.uniform(lo, hi))), j


@dataclass
class SyntheticTraceSpec:
    """Cars arrive as a Poisson process and follow one of the routes.

    ``routes`` maps EN sequences to selection weights.  Travel time between
    consecutive coverage discs is uniform in ``gap_s``.
    """

    routes: dict[tuple[str, ...], float]
    dwell: dict[str, DwellMixture]
    n_cars: int
    arrival_rate: float = 0.5  # cars per second
    gap_s: tuple[float, float] = (2.0, 6.0)
    start_time: float = 0.0
    car_prefix: str = "car"

    def validate(self) -> None:
        if self.n_cars <= 0:
            raise TraceError("synthetic trace needs at least one car")
        if not self.routes or any(len(r) == 0 for r in self.routes):
            raise TraceError("routes must be non-empty EN sequences")
        if any(w < 0 for w in self.routes.values()) or sum(self.routes.values()) <= 0:
            raise TraceError("route weights must be non-negative with positive sum")
        missing = {en for r in self.routes for en in r} - set(self.dwell)
        if missing:
            raise TraceError(f"no dwell distribution for ENs {sorted(missing)}")
        if self.arrival_rate <= 0:
            raise TraceError("arrival rate must be positive")
        if self.gap_s[0] < 0 or self.gap_s[1] < self.gap_s[0]:
            raise TraceError("gap range must be non-negative and ordered")


def generate_synthetic_trace(spec: SyntheticTraceSpec, seed: int) -> list[CarPath]:
    spec.validate()
    rng = np.random.default_rng(seed)
    routes = list(spec.routes)
    rw = np.array([spec.routes[r] for r in routes], dtype=np.float64)
    rw /= rw.sum()
    width = len(str(spec.n_cars - 1))
    t = spec.start_time
    paths = []
    for n in range(spec.n_cars):
        t += float(rng.exponential(1.0 / spec.arrival_rate))
        route = routes[int(rng.choice(len(routes), p=rw))]
        car = f"{spec.car_prefix}{n:0{width}d}"
        events = []
        clock = t
        for j, en in enumerate(route):
            if j:
                clock += float(rng.uniform(*spec.gap_s))
            dwell, _ = spec.dwell[en].sample(rng)
            events.append(CoverageEvent(car, en, clock, clock + dwell))
            clock += dwell
        paths.append(CarPath(car, events))
    return paths
