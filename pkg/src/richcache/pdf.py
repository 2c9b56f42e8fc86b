"""Probability mass functions over non-negative integers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

MASS_TOL = 1e-9


@dataclass(frozen=True)
class DiscretePdf:
    """Finite-support pmf; ``probs[j]`` is ``P(X = j)``.

    Trailing zeros are stripped so ``max_support`` is meaningful.
    """

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64).ravel()
        if p.size == 0:
            raise ValueError("pdf needs at least one support point")
        if np.any(~np.isfinite(p)) or np.any(p < 0):
            raise ValueError("probabilities must be finite and non-negative")
        total = p.sum()
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"total mass is {total!r}, expected 1")
        nz = np.flatnonzero(p)
        p = p[: nz[-1] + 1].copy()
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    # constructors -------------------------------------------------------

    @classmethod
    def point(cls, value: int) -> "DiscretePdf":
        if value < 0:
            raise ValueError("support must be non-negative")
        p = np.zeros(int(value) + 1)
        p[-1] = 1.0
        return cls(p)

    @classmethod
    def from_mapping(cls, masses: Mapping[int, float]) -> "DiscretePdf":
        if not masses:
            raise ValueError("empty mapping")
        if min(masses) < 0:
            raise ValueError("support must be non-negative")
        p = np.zeros(max(masses) + 1)
        for value, mass in masses.items():
            p[int(value)] += mass
        return cls(p)

    @classmethod
    def from_samples(cls, samples: Iterable[int]) -> "DiscretePdf":
        values = np.asarray(list(samples), dtype=np.int64)
        if values.size == 0:
            raise ValueError("no samples")
        if values.min() < 0:
            raise ValueError("support must be non-negative")
        counts = np.bincount(values)
        return cls(counts / counts.sum())

    @classmethod
    def from_weights(cls, weights) -> "DiscretePdf":
        """Normalize arbitrary non-negative weights indexed by support value."""
        w = np.asarray(weights, dtype=np.float64)
        total = w.sum()
        if total <= 0:
            raise ValueError("weights must have positive total")
        return cls(w / total)

    @classmethod
    def triangular(cls, mean: int, half_width: int) -> "DiscretePdf":
        """Symmetric triangle centred on ``mean``, support ``mean ± half_width``.

        ``P(mean ± j)`` is proportional to ``half_width + 1 - j``.
        """
        if half_width < 0 or mean - half_width < 0:
            raise ValueError("triangle must sit on non-negative integers")
        x = np.arange(mean + half_width + 1)
        w = np.clip(half_width + 1 - np.abs(x - mean), 0, None).astype(np.float64)
        return cls.from_weights(w)

    # queries ------------------------------------------------------------

    @property
    def max_support(self) -> int:
        return self.probs.size - 1

    def pmf(self, x: int) -> float:
        if 0 <= x < self.probs.size:
            return float(self.probs[x])
        return 0.0

    def mean(self) -> float:
        return float(np.dot(np.arange(self.probs.size), self.probs))

    def variance(self) -> float:
        x = np.arange(self.probs.size)
        m = self.mean()
        return float(np.dot((x - m) ** 2, self.probs))

    def ccdf(self, length: int) -> np.ndarray:
        """Array ``c`` with ``c[j] = P(X >= j)`` for ``j < length``."""
        out = np.zeros(length)
        tail = np.cumsum(self.probs[::-1])[::-1]
        n = min(length, tail.size)
        out[:n] = tail[:n]
        return out

    def padded(self, length: int) -> np.ndarray:
        """Probabilities padded (or cut) to ``length`` entries."""
        out = np.zeros(length)
        n = min(length, self.probs.size)
        out[:n] = self.probs[:n]
        return out

    def convolve(self, other: "DiscretePdf") -> "DiscretePdf":
        """Law of the sum of two independent variables."""
        p = np.convolve(self.probs, other.probs)
        return DiscretePdf(p / p.sum())

    def sample(self, rng: np.random.Generator, size=None):
        return rng.choice(self.probs.size, size=size, p=self.probs)

    def to_dict(self) -> dict[int, float]:
        return {int(j): float(v) for j, v in enumerate(self.probs) if v > 0}

    def __eq__(self, other):
        if not isinstance(other, DiscretePdf):
            return NotImplemented
        return self.probs.shape == other.probs.shape and bool(np.all(self.probs == other.probs))

    def __hash__(self):
        return hash(self.probs.tobytes())

    def __repr__(self):
        return f"DiscretePdf({self.to_dict()})"
