"""Length-distribution analytics: cumulative token-share curves, percentile
queries in both directions, and length-bin histograms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .validation import ceil_frac, check_fraction

# Powers-of-two edges chosen so the context length (4096) is an edge;
# final bin is open-ended.
DEFAULT_BIN_EDGES = (0, 64, 256, 1024, 4096, 16384, 65536)


@dataclass(frozen=True)
class LengthBinning:
    """Half-open token-count bins [e_i, e_{i+1}); the last bin is open-ended."""

    edges: tuple[int, ...]

    def __post_init__(self):
        edges = tuple(int(e) for e in self.edges)
        object.__setattr__(self, "edges", edges)
        if not edges or edges[0] != 0:
            raise ValueError("bin edges must start at 0")
        if any(a >= b for a, b in zip(edges, edges[1:])):
            raise ValueError("bin edges must be strictly ascending")

    @property
    def n_bins(self) -> int:
        return len(self.edges)

    def index_of(self, token_counts) -> np.ndarray:
        counts = np.asarray(token_counts, dtype=np.int64)
        return np.searchsorted(np.asarray(self.edges, dtype=np.int64), counts, side="right") - 1

    def bounds(self, index: int) -> tuple[int, int | None]:
        hi = self.edges[index + 1] if index + 1 < len(self.edges) else None
        return self.edges[index], hi

    def label(self, index: int) -> str:
        lo, hi = self.bounds(index)
        return f"[{lo},{hi})" if hi is not None else f"[{lo},inf)"


def default_binning() -> LengthBinning:
    return LengthBinning(DEFAULT_BIN_EDGES)


@dataclass
class LengthCdf:
    """Token counts sorted ascending with their prefix sums."""

    sorted_counts: np.ndarray
    cumulative_tokens: np.ndarray
    total_tokens: int
    total_docs: int

    @classmethod
    def from_counts(cls, token_counts) -> "LengthCdf":
        counts = np.asarray(token_counts, dtype=np.int64)
        if counts.size == 0:
            raise ValueError("empty manifest")
        sorted_counts = np.sort(counts, kind="stable")
        cumulative = np.cumsum(sorted_counts)
        return cls(sorted_counts, cumulative, int(cumulative[-1]), int(counts.size))


def build_cdf(manifest) -> LengthCdf:
    """Cumulative distribution of document lengths over the whole manifest."""
    return LengthCdf.from_counts(manifest.token_counts)


def _tokens_in_longest(cdf: LengthCdf, n_longest: int) -> int:
    if n_longest <= 0:
        return 0
    if n_longest >= cdf.total_docs:
        return cdf.total_tokens
    return cdf.total_tokens - int(cdf.cumulative_tokens[cdf.total_docs - n_longest - 1])


def token_share_of_longest_docs(cdf: LengthCdf, doc_fraction: float) -> float:
    """Fraction of all tokens held by the ceil(doc_fraction * docs) longest documents."""
    doc_fraction = check_fraction(doc_fraction, "doc_fraction")
    n_longest = ceil_frac(doc_fraction, cdf.total_docs)
    return _tokens_in_longest(cdf, n_longest) / cdf.total_tokens


def doc_share_covering_top_tokens(cdf: LengthCdf, token_fraction: float) -> float:
    """Fraction of documents in the smallest longest-documents set covering
    at least token_fraction of all tokens."""
    token_fraction = check_fraction(token_fraction, "token_fraction")
    target = ceil_frac(token_fraction, cdf.total_tokens)
    if target <= 0:
        return 0.0
    # suffix[m-1] = tokens held by the m longest documents, m = 1..total_docs
    suffix = cdf.total_tokens - np.concatenate((cdf.cumulative_tokens[::-1][1:], [0]))
    n_longest = int(np.searchsorted(suffix, target, side="left")) + 1
    return n_longest / cdf.total_docs


@dataclass(frozen=True)
class BinStat:
    lo: int
    hi: int | None
    doc_count: int
    token_count: int


def bin_histogram(manifest, bins: LengthBinning) -> list[BinStat]:
    """Per-bin document and token counts; conserves both totals exactly."""
    idx = bins.index_of(manifest.token_counts)
    doc_counts = np.bincount(idx, minlength=bins.n_bins)
    token_counts = np.bincount(idx, weights=manifest.token_counts, minlength=bins.n_bins)
    return [
        BinStat(*bins.bounds(b), int(doc_counts[b]), int(token_counts[b]))
        for b in range(bins.n_bins)
    ]
