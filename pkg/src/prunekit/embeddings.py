"""Document embedding matrices: on-disk format, normalization, and a
deterministic synthetic generator for tests and pipeline dry runs."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, FormatError
from .fileio import atomic_write_bytes
from .stats import LengthBinning, default_binning
from .validation import check_aligned, check_fraction

MAGIC = b"EMBD"
EMBEDDING_FORMAT_VERSION = 1
_FLAG_NORMALIZED = 0x1
_KNOWN_FLAGS = _FLAG_NORMALIZED
# magic (4) + version u32 + n_rows u64 + dim u32 + flags u32 = 24 bytes
_HEADER = struct.Struct("<4sIQII")

_NORM_TOL = 1e-5


def _row_norms(data: np.ndarray) -> np.ndarray:
    return np.linalg.norm(data.astype(np.float64, copy=False), axis=1)


@dataclass
class EmbeddingMatrix:
    """Dense float32 vectors, row i aligned to doc_id i of a manifest."""

    data: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise ValueError("embedding data must be a 2-D array")
        norms = _row_norms(data)
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise DataError(f"row {int(zero[0])} has zero norm")
        if self.normalized and norms.size and np.max(np.abs(norms - 1.0)) > _NORM_TOL:
            worst = int(np.argmax(np.abs(norms - 1.0)))
            raise DataError(f"matrix flagged normalized but row {worst} has norm {norms[worst]:.6f}")
        self.data = data

    @property
    def n_rows(self) -> int:
        return int(self.data.shape[0])

    @property
    def dim(self) -> int:
        return int(self.data.shape[1])


def save_embeddings(matrix: EmbeddingMatrix, path) -> None:
    flags = _FLAG_NORMALIZED if matrix.normalized else 0
    header = _HEADER.pack(MAGIC, EMBEDDING_FORMAT_VERSION, matrix.n_rows, matrix.dim, flags)
    payload = np.ascontiguousarray(matrix.data, dtype="<f4").tobytes()
    atomic_write_bytes(path, header + payload)


def load_embeddings(path, manifest=None) -> EmbeddingMatrix:
    """Load an embedding file, verifying alignment against ``manifest`` if given.

    Raises FormatError for truncated or foreign files, AlignmentError on a
    row-count mismatch, and DataError for zero-norm rows.
    """
    with open(path, "rb") as fh:
        raw_header = fh.read(_HEADER.size)
        if len(raw_header) < _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, n_rows, dim, flags = _HEADER.unpack(raw_header)
        if magic != MAGIC:
            raise FormatError(f"{path}: not an embedding file (bad magic)")
        if version != EMBEDDING_FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported format version {version}")
        if flags & ~_KNOWN_FLAGS:
            raise FormatError(f"{path}: unknown flag bits 0x{flags:x}")
        if manifest is not None:
            check_aligned(n_rows, manifest, f"{path}")
        expected = n_rows * dim * 4
        payload = fh.read(expected)
        if len(payload) < expected:
            raise FormatError(f"{path}: truncated data (expected {expected} bytes, got {len(payload)})")
    data = np.frombuffer(payload, dtype="<f4").reshape(n_rows, dim)
    return EmbeddingMatrix(data.copy(), normalized=bool(flags & _FLAG_NORMALIZED))


def normalize(matrix: EmbeddingMatrix) -> EmbeddingMatrix:
    """Scale every row to unit L2 norm; idempotent on already-normalized input."""
    if matrix.normalized:
        return matrix
    norms = _row_norms(matrix.data)
    data = (matrix.data.astype(np.float64) / norms[:, None]).astype(np.float32)
    return EmbeddingMatrix(data, normalized=True)


def synthetic_embed(manifest, dim: int, seed: int = 0, length_coupling: float = 0.0,
                    bins: LengthBinning | None = None) -> EmbeddingMatrix:
    """Deterministic synthetic embeddings with a tunable length confound.

    Each document's vector is the normalized sum of (1 - c_b) times a random
    unit vector and c_b times a unit anchor shared by the document's length
    bin, where the anchor weight c_b = length_coupling ** (bin_index + 1)
    decays geometrically with the bin index. Higher coupling therefore packs
    same-length documents closer together, and shorter-length bins occupy
    smaller, denser regions than longer ones (coupling 1 collapses every bin
    onto its anchor; coupling 0 is isotropic noise).
    """
    if dim < 2:
        raise ValueError("dim must be >= 2")
    coupling = check_fraction(length_coupling, "length_coupling")
    if bins is None:
        bins = default_binning()
    rng = np.random.default_rng(seed)
    anchors = rng.standard_normal((bins.n_bins, dim))
    anchors /= np.linalg.norm(anchors, axis=1, keepdims=True)
    noise = rng.standard_normal((manifest.n_docs, dim))
    if manifest.n_docs:
        noise /= np.linalg.norm(noise, axis=1, keepdims=True)
    bin_idx = bins.index_of(manifest.token_counts)
    bin_coupling = coupling ** (np.arange(bins.n_bins) + 1.0)
    weight = bin_coupling[bin_idx][:, None]
    vectors = (1.0 - weight) * noise + weight * anchors[bin_idx]
    norms = np.linalg.norm(vectors, axis=1)
    if manifest.n_docs and norms.min() < 1e-9:
        raise DataError("synthetic vector collapsed to zero norm; try another seed")
    data = (vectors / norms[:, None]).astype(np.float32) if manifest.n_docs else \
        np.empty((0, dim), dtype=np.float32)
    return EmbeddingMatrix(data, normalized=True)
