"""Experimental scaffolding: bootstrap subsets, the prune-report grid,
standard-error aggregation, context-window packing, length-binned loss
aggregation, and calibrated synthetic corpus generation."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import clone

from .corpus import CorpusManifest
from .errors import CalibrationError, FormatError, PrunekitError
from .fileio import atomic_write_bytes, atomic_write_text, dumps, read_jsonl
from .pruning import PruneReport, Pruner
from .stats import LengthBinning, LengthCdf, token_share_of_longest_docs
from .validation import check_fraction, check_positive_int, floor_frac

PACKING_FORMAT_VERSION = 1


@dataclass(frozen=True)
class BootstrapPlan:
    """One seed per subset; each subset samples ``subset_frac`` of the train docs."""

    seeds: tuple[int, ...] = (0, 1, 2)
    subset_frac: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise ValueError("plan needs at least one seed")
        if not 0.0 < self.subset_frac <= 1.0:
            raise ValueError(f"subset_frac must be in (0, 1], got {self.subset_frac}")

    @property
    def n_subsets(self) -> int:
        return len(self.seeds)

    @classmethod
    def from_seed(cls, seed: int = 0, n_subsets: int = 3, subset_frac: float = 0.5):
        check_positive_int(n_subsets, "n_subsets")
        return cls(tuple(seed + i for i in range(n_subsets)), subset_frac)


@dataclass
class SubsetSample:
    """A bootstrap subset plus the source-manifest rows it was drawn from,
    so row-aligned resources (embeddings) can be sliced to match."""

    manifest: CorpusManifest
    indices: np.ndarray


def make_bootstrap_subsets(manifest: CorpusManifest, plan: BootstrapPlan) -> list[SubsetSample]:
    """Independent seeded draws of floor(subset_frac * train docs) without
    replacement; the validation split is carried unchanged into every subset."""
    train = manifest.train_ids
    validation = manifest.validation_ids
    size = floor_frac(plan.subset_frac, train.size)
    subsets = []
    for seed in plan.seeds:
        rng = np.random.default_rng(seed)
        sampled = rng.choice(train, size=size, replace=False) if size else np.empty(0, np.int64)
        indices = np.sort(np.concatenate([sampled.astype(np.int64), validation]))
        subsets.append(SubsetSample(manifest.subset(indices), indices))
    return subsets


@dataclass
class AggregateStat:
    """Mean with sample standard deviation and standard error; std/stderr are
    None when only one sample is available."""

    mean: float
    std: float | None
    stderr: float | None
    n: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "stderr": self.stderr, "n": self.n}


def aggregate(values) -> AggregateStat:
    values = [float(v) for v in values]
    n = len(values)
    if n == 0:
        raise ValueError("aggregate requires at least one value")
    mean = float(np.mean(values))
    if n == 1:
        return AggregateStat(mean, None, None, 1)
    std = float(np.std(values, ddof=1))
    return AggregateStat(mean, std, std / math.sqrt(n), n)


@dataclass(frozen=True)
class PackingConfig:
    """Fixed-size context chunks; documents split anywhere a boundary falls."""

    context_len: int = 4096
    boundary_policy: str = "split-anywhere"

    def __post_init__(self):
        check_positive_int(self.context_len, "context_len")
        if self.boundary_policy != "split-anywhere":
            raise ValueError("only the split-anywhere boundary policy is supported")


@dataclass(frozen=True)
class Span:
    """A token sub-range [start_tok, end_tok) of one document inside a chunk."""

    doc_id: int
    start_tok: int
    end_tok: int

    @property
    def length(self) -> int:
        return self.end_tok - self.start_tok


def pack(manifest: CorpusManifest, order, config: PackingConfig = PackingConfig()) -> list[list[Span]]:
    """Concatenate train documents in ``order`` into one token stream and cut
    it every ``context_len`` tokens. Every chunk except possibly the last is
    exactly full; token count is conserved.
    """
    order = np.asarray(order, dtype=np.int64)
    if not np.array_equal(np.sort(order), manifest.train_ids):
        raise ValueError("order must be a permutation of the train doc_ids")
    context_len = config.context_len
    chunks: list[list[Span]] = []
    current: list[Span] = []
    room = context_len
    for doc_id in order:
        remaining = int(manifest.token_counts[doc_id])
        offset = 0
        while remaining > 0:
            take = min(room, remaining)
            current.append(Span(int(doc_id), offset, offset + take))
            offset += take
            remaining -= take
            room -= take
            if room == 0:
                chunks.append(current)
                current = []
                room = context_len
    if current:
        chunks.append(current)
    return chunks


def packed_token_count(chunks) -> int:
    return sum(span.length for chunk in chunks for span in chunk)


def shuffled_order(manifest: CorpusManifest, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.permutation(manifest.train_ids)


def write_packing_layout(chunks, path, config: PackingConfig) -> None:
    lines = [dumps({
        "format": "packing",
        "version": PACKING_FORMAT_VERSION,
        "context_len": config.context_len,
        "n_chunks": len(chunks),
        "total_tokens": packed_token_count(chunks),
    })]
    for chunk_idx, chunk in enumerate(chunks):
        lines.append(dumps({
            "chunk_idx": chunk_idx,
            "spans": [{"doc_id": s.doc_id, "start_tok": s.start_tok, "end_tok": s.end_tok}
                      for s in chunk],
        }))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_packing_layout(path) -> tuple[list[list[Span]], PackingConfig]:
    rows = read_jsonl(path)
    try:
        _, header = next(rows)
    except StopIteration:
        raise FormatError(f"{path}: empty packing layout") from None
    if header.get("format") != "packing":
        raise FormatError(f"{path}: not a packing layout file")
    if header.get("version") != PACKING_FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {header.get('version')!r}")
    chunks = []
    for line_no, row in rows:
        if row.get("chunk_idx") != len(chunks):
            raise FormatError(f"{path}: line {line_no}: chunk_idx out of order")
        chunks.append([Span(int(s["doc_id"]), int(s["start_tok"]), int(s["end_tok"]))
                       for s in row["spans"]])
    if len(chunks) != header["n_chunks"]:
        raise FormatError(f"{path}: expected {header['n_chunks']} chunks, found {len(chunks)}")
    return chunks, PackingConfig(context_len=int(header["context_len"]))


def write_losses(losses, path) -> None:
    atomic_write_bytes(path, np.asarray(losses, dtype="<f4").tobytes())


def read_losses(path) -> np.ndarray:
    return np.fromfile(path, dtype="<f4").astype(np.float64)


@dataclass(frozen=True)
class BinLossStat:
    bin_index: int
    lo: int
    hi: int | None
    token_count: int
    mean_loss: float
    perplexity: float


def bin_losses(chunks, per_token_losses, bins: LengthBinning, manifest) -> list[BinLossStat]:
    """Aggregate per-token losses into per-bin perplexity, exp(mean loss).

    Every token is attributed to its originating document's length bin using
    the document's FULL token count, no matter where chunk boundaries fell.
    Empty bins are absent from the result.
    """
    losses = np.asarray(per_token_losses, dtype=np.float64)
    total = packed_token_count(chunks)
    if losses.shape != (total,):
        raise ValueError(f"expected {total} per-token losses, got {losses.shape[0]}")
    bin_of_doc = bins.index_of(manifest.token_counts)
    sums = np.zeros(bins.n_bins)
    counts = np.zeros(bins.n_bins, dtype=np.int64)
    position = 0
    for chunk in chunks:
        for span in chunk:
            b = int(bin_of_doc[span.doc_id])
            sums[b] += losses[position:position + span.length].sum()
            counts[b] += span.length
            position += span.length
    out = []
    for b in range(bins.n_bins):
        if counts[b] == 0:
            continue
        mean = sums[b] / counts[b]
        lo, hi = bins.bounds(b)
        out.append(BinLossStat(b, lo, hi, int(counts[b]), float(mean), float(np.exp(mean))))
    return out


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    """Heavy-tailed corpus recipe: discretized Pareto lengths over min_tokens,
    optionally calibrated so a given longest-documents share is hit."""

    n_docs: int
    tail_exponent: float = 2.0
    min_tokens: int = 1
    seed: int = 0
    calibration_target: tuple[float, float] | None = None

    def __post_init__(self):
        check_positive_int(self.n_docs, "n_docs")
        check_positive_int(self.min_tokens, "min_tokens")
        if not self.tail_exponent > 1.0:
            raise ValueError("tail_exponent must be > 1 (finite mean)")
        if self.calibration_target is not None:
            doc_fraction, token_share = self.calibration_target
            check_fraction(doc_fraction, "calibration doc_fraction")
            check_fraction(token_share, "calibration token_share")


@dataclass
class SyntheticCorpus:
    manifest: CorpusManifest
    tail_exponent: float
    achieved_share: float | None


_CALIBRATION_TOL = 0.02
_CALIBRATION_STEPS = 100


def _pareto_counts(uniforms: np.ndarray, tail_exponent: float, min_tokens: int) -> np.ndarray:
    raw = (1.0 - uniforms) ** (-1.0 / tail_exponent) - 1.0
    return min_tokens + np.floor(raw).astype(np.int64)


def generate_synthetic_corpus(spec: SyntheticCorpusSpec) -> SyntheticCorpus:
    """Deterministic synthetic manifest; with a calibration target, the tail
    exponent is bisected until the longest-documents token share lands within
    +/- 0.02 of the target."""
    rng = np.random.default_rng(spec.seed)
    uniforms = rng.random(spec.n_docs)
    alpha = spec.tail_exponent
    achieved = None
    if spec.calibration_target is not None:
        doc_fraction, target_share = spec.calibration_target

        def share_at(exponent: float) -> float:
            counts = _pareto_counts(uniforms, exponent, spec.min_tokens)
            return token_share_of_longest_docs(LengthCdf.from_counts(counts), doc_fraction)

        lo, hi = 1.0 + 1e-6, 64.0  # share decreases as the exponent grows
        best_alpha, best_share = alpha, share_at(alpha)
        if abs(best_share - target_share) <= _CALIBRATION_TOL:
            achieved = best_share
        else:
            for _ in range(_CALIBRATION_STEPS):
                mid = (lo + hi) / 2.0
                share = share_at(mid)
                if abs(share - target_share) < abs(best_share - target_share):
                    best_alpha, best_share = mid, share
                if abs(share - target_share) <= _CALIBRATION_TOL:
                    alpha, achieved = mid, share
                    break
                if share > target_share:
                    lo = mid
                else:
                    hi = mid
            else:
                raise CalibrationError(
                    f"calibration did not converge in {_CALIBRATION_STEPS} steps; "
                    f"closest achieved share {best_share:.4f} at tail_exponent {best_alpha:.4f}"
                )
    counts = _pareto_counts(uniforms, alpha, spec.min_tokens)
    manifest = CorpusManifest(
        counts,
        np.zeros(spec.n_docs, dtype=np.int64),
        [f"synthetic/{i:06d}" for i in range(spec.n_docs)],
        tokenizer_id="synthetic-pareto",
    )
    return SyntheticCorpus(manifest, float(alpha), achieved)


@dataclass
class MatrixCell:
    """One (subset, spec) cell: a report on success, an error string otherwise."""

    report: PruneReport | None
    error: str | None

    @property
    def ok(self) -> bool:
        return self.error is None


def _as_pruner(spec) -> Pruner:
    if isinstance(spec, Pruner):
        return spec
    return Pruner(**spec)


def run_matrix(subsets, specs, clusterings=None, matrices=None, threads: int = 1):
    """Apply every prune spec to every subset independently.

    Returns a ``len(subsets) x len(specs)`` grid of :class:`MatrixCell`;
    per-cell failures are recorded in the cell and never abort other cells.
    """
    subsets = list(subsets)
    prototypes = [_as_pruner(s) for s in specs]
    if clusterings is None:
        clusterings = [None] * len(subsets)
    if matrices is None:
        matrices = [None] * len(subsets)
    if not (len(clusterings) == len(matrices) == len(subsets)):
        raise ValueError("clusterings and matrices must align with subsets")

    def run_cell(i: int, j: int) -> MatrixCell:
        sample = subsets[i]
        manifest = sample.manifest if isinstance(sample, SubsetSample) else sample
        try:
            pruner = clone(prototypes[j])
            pruner.fit(manifest, clustering=clusterings[i], embeddings=matrices[i])
            return MatrixCell(pruner.report_, None)
        except (PrunekitError, ValueError) as exc:
            return MatrixCell(None, str(exc))

    cells = [(i, j) for i in range(len(subsets)) for j in range(len(prototypes))]
    grid = [[None] * len(prototypes) for _ in subsets]
    if threads > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda ij: run_cell(*ij), cells))
        for (i, j), cell in zip(cells, results):
            grid[i][j] = cell
    else:
        for i, j in cells:
            grid[i][j] = run_cell(i, j)
    return grid
