"""Chunk download probabilities along a car path.

``phi[i, k-1]`` is the probability that chunk ``k`` is delivered while the
car is under the ``i``-th EN of its path (0-based ``i``, 1-based chunks).
The number of chunks obtainable at each EN is treated as independent
across ENs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from richcache.pdf import DiscretePdf

# guards floor() against representation error, e.g. 10 * 5.2e6 / 5.2e5
_FLOOR_EPS = 1e-9


@dataclass(frozen=True)
class RadioParams:
    bandwidth_b: float  # bit/s
    chunk_size_s: float  # bit
    avg_users_u: tuple[float, ...]  # one entry per EN

    def __post_init__(self):
        if self.bandwidth_b <= 0 or self.chunk_size_s <= 0:
            raise ValueError("bandwidth and chunk size must be positive")
        users = tuple(float(u) for u in self.avg_users_u)
        if not users or any(u <= 0 for u in users):
            raise ValueError("average user counts must be positive")
        object.__setattr__(self, "avg_users_u", users)

    def users(self, en_index: int) -> float:
        return max(1.0, self.avg_users_u[en_index])


@dataclass(frozen=True)
class PhiMatrix:
    phi: np.ndarray  # shape (n_ens, n_chunks)
    per_en_mean: np.ndarray

    @property
    def n_ens(self) -> int:
        return self.phi.shape[0]

    @property
    def n_chunks(self) -> int:
        return self.phi.shape[1]

    def __call__(self, i: int, k: int) -> float:
        """``phi_i(k)`` with 1-based EN and chunk indices."""
        return float(self.phi[i - 1, k - 1])

    def to_json(self) -> str:
        return json.dumps(
            {"n_ens": self.n_ens, "n_chunks": self.n_chunks, "phi": self.phi.ravel().tolist()}
        )

    @classmethod
    def from_json(cls, text: str) -> "PhiMatrix":
        d = json.loads(text)
        phi = np.asarray(d["phi"], dtype=np.float64).reshape(d["n_ens"], d["n_chunks"])
        return cls(phi=phi, per_en_mean=phi.sum(axis=1))


def estimate_chunk_count_dist(
    dwell_pdf: DiscretePdf, radio: RadioParams, en_index: int, bin_width: float = 1.0
) -> DiscretePdf:
    """Push dwell times through ``w -> floor(w * b / (s * u_i))``.

    Support value ``j`` of ``dwell_pdf`` stands for a dwell of ``j * bin_width``
    seconds.
    """
    rate = radio.bandwidth_b / (radio.chunk_size_s * radio.users(en_index))
    masses: dict[int, float] = {}
    for j, p in enumerate(dwell_pdf.probs):
        if p == 0:
            continue
        chunks = math.floor(j * bin_width * rate + _FLOOR_EPS)
        masses[chunks] = masses.get(chunks, 0.0) + float(p)
    return DiscretePdf.from_mapping(masses)


def truncate_to_cache(x_pdf: DiscretePdf, capacity: int) -> DiscretePdf:
    """Law of the number of *cached* chunks obtainable with ``capacity`` slots."""
    if capacity < 0:
        raise ValueError("capacity must be non-negative")
    p = x_pdf.probs
    if capacity >= p.size - 1:
        return x_pdf
    out = p[: capacity + 1].copy()
    out[capacity] = p[capacity:].sum()
    return DiscretePdf(out)


def _shifted_ccdf(x_pdf: DiscretePdf, n_chunks: int) -> np.ndarray:
    # c[j] = P(X >= j) for j >= 1, and c[0] = 0 so the n = k term drops out
    c = x_pdf.ccdf(n_chunks + 1)
    c[0] = 0.0
    return c


def phi_general(x_pdfs: Sequence[DiscretePdf], n_chunks: int) -> PhiMatrix:
    """Per-EN download probabilities for chunks ``1..n_chunks``.

    ``phi_i(k) = sum_{n=0}^{k-1} P(X_i >= k-n) P(Y_{i-1} = n)`` with
    ``Y_{i-1}`` the chunks already received at the earlier ENs and ``Y_0 = 0``.
    """
    if not x_pdfs or n_chunks < 1:
        raise ValueError("need at least one EN and one chunk")
    width = n_chunks + 1
    phi = np.zeros((len(x_pdfs), n_chunks))
    y = np.zeros(width)
    y[0] = 1.0
    for i, x in enumerate(x_pdfs):
        c = _shifted_ccdf(x, n_chunks)
        phi[i] = np.convolve(y, c)[1:width]
        y = np.convolve(y, x.padded(width))[:width]
    means = np.array([x.mean() for x in x_pdfs])
    return PhiMatrix(phi=phi, per_en_mean=means)


def phi_iid(f_x: DiscretePdf, n_ens: int, n_chunks: int) -> PhiMatrix:
    """Same as :func:`phi_general` for identical laws, via ``phi_i = f_X * phi_{i-1}``."""
    if n_ens < 1 or n_chunks < 1:
        raise ValueError("need at least one EN and one chunk")
    width = n_chunks + 1
    f = f_x.padded(width)
    phi = np.zeros((n_ens, n_chunks))
    # index 0 of prev is phi(0) = 0
    prev = _shifted_ccdf(f_x, n_chunks)
    phi[0] = prev[1:]
    for i in range(1, n_ens):
        prev = np.convolve(f, prev)[:width]
        phi[i] = prev[1:]
    return PhiMatrix(phi=phi, per_en_mean=np.full(n_ens, f_x.mean()))


def shift_phi(phi: PhiMatrix, delivered: int) -> PhiMatrix:
    """Re-index for a car that already holds chunks ``1..delivered``.

    Column ``k-1`` of the result refers to absolute chunk ``k``; chunks up to
    ``delivered`` get zero probability, chunk ``delivered + j`` inherits the
    value of chunk ``j``.
    """
    if delivered < 0:
        raise ValueError("delivered must be non-negative")
    if delivered >= phi.n_chunks:
        raise ValueError("delivered must be below the number of chunks")
    if delivered == 0:
        return phi
    out = np.zeros_like(phi.phi)
    out[:, delivered:] = phi.phi[:, : phi.n_chunks - delivered]
    return PhiMatrix(phi=out, per_en_mean=phi.per_en_mean)


def chunk_pdfs_for_path(
    dwell_pdfs: Sequence[DiscretePdf],
    radio: RadioParams,
    capacities: Sequence[int] | None = None,
    bin_width: float = 1.0,
) -> list[DiscretePdf]:
    """Dwell laws -> (optionally cache-capped) chunk-count laws, one per EN."""
    out = []
    for i, w in enumerate(dwell_pdfs):
        x = estimate_chunk_count_dist(w, radio, i, bin_width=bin_width)
        if capacities is not None:
            x = truncate_to_cache(x, int(capacities[i]))
        out.append(x)
    return out
