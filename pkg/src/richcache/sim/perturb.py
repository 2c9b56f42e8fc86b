"""Mobility errors unknown to the Prefetcher: dwell shifts and skipped ENs."""

from __future__ import annotations

from dataclasses import replace
from typing import Mapping, Sequence

import numpy as np

from richcache.trace import CarPath, CoverageEvent


def perturb_dwell(w: float, mu: float, sigma: float, w_min: float, rng: np.random.Generator | None = None) -> float:
    """``max(w_min, w + eps)`` with ``eps ~ N(mu, sigma)``; sigma = 0 is a plain shift."""
    if w_min <= 0:
        raise ValueError("w_min must be positive")
    eps = mu if sigma == 0 else float(rng.normal(mu, sigma))
    return max(w_min, w + eps)


def apply_dwell_error(
    paths: Sequence[CarPath],
    mu: float,
    sigma: float,
    w_min: Mapping[str, float],
    rng: np.random.Generator,
) -> list[CarPath]:
    """Perturb every dwell; later visits of the same car move by the accumulated change."""
    out = []
    for p in paths:
        shift = 0.0
        events = []
        for ev in p.events:
            dwell = perturb_dwell(ev.dwell, mu, sigma, w_min[ev.en_id], rng)
            t0 = ev.t_enter + shift
            events.append(CoverageEvent(ev.car_id, ev.en_id, t0, t0 + dwell))
            shift += dwell - ev.dwell
        out.append(replace(p, events=events))
    return out


def apply_path_skip(paths: Sequence[CarPath], fraction: float, rng: np.random.Generator) -> list[CarPath]:
    """Drop the second coverage event of ``round(fraction * n)`` random cars.

    The expected EN sequence is kept, so plans still include the skipped EN.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    eligible = [i for i, p in enumerate(paths) if len(p.events) >= 2]
    n = int(round(fraction * len(eligible)))
    chosen = set(rng.choice(eligible, size=n, replace=False).tolist()) if n else set()
    out = []
    for i, p in enumerate(paths):
        if i in chosen:
            out.append(replace(p, events=[p.events[0]] + list(p.events[2:]), expected_sequence=p.expected_sequence))
        else:
            out.append(p)
    return out
