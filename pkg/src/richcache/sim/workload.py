"""Content catalog and Zipf request generation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ContentCatalog:
    n_contents: int = 10
    chunks_per_content: int = 2600
    chunk_bits: float = 65_000 * 8

    def __post_init__(self):
        if self.n_contents <= 0 or self.chunks_per_content <= 0 or self.chunk_bits <= 0:
            raise ValueError("catalog sizes must be positive")

    @property
    def total_chunks(self) -> int:
        return self.n_contents * self.chunks_per_content


def zipf_probs(alpha: float, n_contents: int) -> np.ndarray:
    """``P(rank r) = r^-alpha / sum_j j^-alpha`` for ranks ``1..n``."""
    if n_contents < 1:
        raise ValueError("need at least one content")
    w = np.arange(1, n_contents + 1, dtype=np.float64) ** -alpha
    return w / w.sum()


def draw_content_request(rng: np.random.Generator, n_contents: int, zipf_alpha: float = 0.75, size=None):
    """Content id (= popularity rank, 1-based); an array of ids when ``size`` is given."""
    if size is not None:
        return rng.choice(n_contents, size=size, p=zipf_probs(zipf_alpha, n_contents)) + 1
    if n_contents == 1:
        return 1
    return int(rng.choice(n_contents, p=zipf_probs(zipf_alpha, n_contents))) + 1
