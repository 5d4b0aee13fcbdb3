"""Corpus ingestion, token counting, and the canonical document manifest."""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np

from .errors import FormatError, IngestError
from .fileio import atomic_write_text, dumps
from .validation import check_positive_int

SPLIT_TRAIN = 0
SPLIT_VALIDATION = 1
SPLIT_NAMES = ("train", "validation")

MANIFEST_FORMAT_VERSION = 1

# One token per maximal run of word characters, plus one per non-whitespace
# symbol character. Whitespace never yields tokens.
_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def count_tokens(content: bytes | str) -> int:
    """Count tokens under the builtin deterministic splitter.

    Invalid UTF-8 is decoded lossily; each replacement character counts as a
    symbol token, so this is a total function on byte sequences.
    """
    if isinstance(content, bytes):
        content = content.decode("utf-8", errors="replace")
    return len(_TOKEN_RE.findall(content))


@dataclass(frozen=True)
class Document:
    """One source file: the atom every pruning decision acts on."""

    doc_id: int
    source_path: str
    byte_len: int
    token_count: int


@dataclass(frozen=True)
class TokenizerSpec:
    """Where token counts come from: the input records or the builtin splitter."""

    mode: str
    description: str = ""

    def __post_init__(self):
        if self.mode not in ("precomputed", "builtin-splitter"):
            raise ValueError(f"unknown tokenizer mode {self.mode!r}")


BUILTIN_SPLITTER = TokenizerSpec("builtin-splitter", "word-run / symbol splitter")
PRECOMPUTED = TokenizerSpec("precomputed", "token counts supplied by the input records")


class CorpusManifest:
    """Ordered collection of documents with train/validation split labels.

    doc_id i is row i of every column; manifests are immutable after
    construction and safe to share across threads.
    """

    def __init__(self, token_counts, byte_lens, source_paths, splits=None,
                 tokenizer_id: str = BUILTIN_SPLITTER.mode):
        token_counts = np.array(token_counts, dtype=np.int64)
        byte_lens = np.array(byte_lens, dtype=np.int64)
        source_paths = list(source_paths)
        n = token_counts.shape[0]
        if splits is None:
            splits = np.zeros(n, dtype=np.uint8)
        else:
            splits = np.array(splits, dtype=np.uint8)
        if not (byte_lens.shape[0] == len(source_paths) == splits.shape[0] == n):
            raise ValueError("manifest columns must all have the same length")
        if n and int(token_counts.min()) < 1:
            raise ValueError("every document must have token_count >= 1")
        if n and int(splits.max()) > SPLIT_VALIDATION:
            raise ValueError("split labels must be train (0) or validation (1)")
        for arr in (token_counts, byte_lens, splits):
            arr.setflags(write=False)
        self.token_counts = token_counts
        self.byte_lens = byte_lens
        self.source_paths = source_paths
        self.splits = splits
        self.tokenizer_id = tokenizer_id

    @property
    def n_docs(self) -> int:
        return int(self.token_counts.shape[0])

    @property
    def total_tokens(self) -> int:
        return int(self.token_counts.sum())

    @property
    def train_ids(self) -> np.ndarray:
        return np.flatnonzero(self.splits == SPLIT_TRAIN)

    @property
    def validation_ids(self) -> np.ndarray:
        return np.flatnonzero(self.splits == SPLIT_VALIDATION)

    def document(self, doc_id: int) -> Document:
        return Document(int(doc_id), self.source_paths[doc_id],
                        int(self.byte_lens[doc_id]), int(self.token_counts[doc_id]))

    def __len__(self) -> int:
        return self.n_docs

    def __iter__(self) -> Iterator[Document]:
        return (self.document(i) for i in range(self.n_docs))

    def __eq__(self, other) -> bool:
        if not isinstance(other, CorpusManifest):
            return NotImplemented
        return (self.tokenizer_id == other.tokenizer_id
                and self.source_paths == other.source_paths
                and np.array_equal(self.token_counts, other.token_counts)
                and np.array_equal(self.byte_lens, other.byte_lens)
                and np.array_equal(self.splits, other.splits))

    def with_splits(self, splits) -> "CorpusManifest":
        return CorpusManifest(self.token_counts, self.byte_lens, self.source_paths,
                              splits, self.tokenizer_id)

    def subset(self, indices) -> "CorpusManifest":
        """New manifest holding the rows at ``indices``, renumbered densely."""
        indices = np.asarray(indices, dtype=np.int64)
        return CorpusManifest(
            self.token_counts[indices],
            self.byte_lens[indices],
            [self.source_paths[i] for i in indices],
            self.splits[indices],
            self.tokenizer_id,
        )


@dataclass
class IngestResult:
    """Manifest plus the skip report for dropped records."""

    manifest: CorpusManifest
    skipped_zero_token: int
    skipped_lines: list[int]
    duplicate_path_count: int


def ingest(records: Iterable[Mapping], tokenizer: TokenizerSpec = BUILTIN_SPLITTER) -> IngestResult:
    """Build a manifest from corpus records, in stream order.

    Each record must carry a ``path`` (or ``id``) and either ``content`` or a
    precomputed ``token_count``. Zero-token records are dropped and counted in
    the skip report; duplicate paths are kept (identity is doc_id, not path).
    """
    return _ingest_numbered(enumerate(records, start=1), tokenizer)


def _ingest_numbered(numbered, tokenizer: TokenizerSpec) -> IngestResult:
    counts, byte_lens, paths = [], [], []
    skipped_lines: list[int] = []
    seen: set[str] = set()
    duplicates = 0
    for line_no, record in numbered:
        if not isinstance(record, Mapping):
            raise IngestError(line_no, "record must be a JSON object")
        path = record.get("path", record.get("id"))
        if path is None:
            raise IngestError(line_no, "record is missing 'path' (or 'id')")
        content = record.get("content")
        precomputed = record.get("token_count")
        if content is None and precomputed is None:
            raise IngestError(line_no, "record has neither 'content' nor 'token_count'")
        if tokenizer.mode == "precomputed":
            if precomputed is None:
                raise IngestError(line_no, "precomputed tokenizer requires 'token_count' on every record")
            token_count = int(precomputed)
        elif content is not None:
            token_count = count_tokens(content)
        else:
            token_count = int(precomputed)
        if token_count < 0:
            raise IngestError(line_no, f"token_count must be >= 0, got {token_count}")
        if token_count == 0:
            skipped_lines.append(line_no)
            continue
        path = str(path)
        if path in seen:
            duplicates += 1
        seen.add(path)
        paths.append(path)
        counts.append(token_count)
        byte_lens.append(len(content.encode("utf-8")) if isinstance(content, str) else 0)
    if duplicates:
        warnings.warn(
            f"{duplicates} record(s) share a source_path with an earlier record; all kept",
            stacklevel=3,
        )
    manifest = CorpusManifest(counts, byte_lens, paths, tokenizer_id=tokenizer.mode)
    return IngestResult(manifest, len(skipped_lines), skipped_lines, duplicates)


def iter_corpus_records(path):
    """Yield (line_no, record) from a line-delimited JSON corpus file."""
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(line_no, f"invalid JSON ({exc.msg})") from exc
            yield line_no, record


def ingest_file(path, tokenizer: TokenizerSpec = BUILTIN_SPLITTER) -> IngestResult:
    return _ingest_numbered(iter_corpus_records(path), tokenizer)


def make_validation_split(manifest: CorpusManifest, per_bin_quota: int, bins=None,
                          seed: int = 0) -> CorpusManifest:
    """Relabel up to ``per_bin_quota`` train documents per length bin as validation.

    Selection is uniform within each bin and deterministic for a fixed seed;
    bins with fewer documents than the quota contribute all of them.
    """
    from .stats import default_binning

    check_positive_int(per_bin_quota, "per_bin_quota")
    if bins is None:
        bins = default_binning()
    rng = np.random.default_rng(seed)
    splits = np.array(manifest.splits, dtype=np.uint8)
    bin_idx = bins.index_of(manifest.token_counts)
    train_ids = np.flatnonzero(splits == SPLIT_TRAIN)
    for b in range(bins.n_bins):
        members = train_ids[bin_idx[train_ids] == b]
        if members.size == 0:
            continue
        take = min(per_bin_quota, members.size)
        chosen = rng.choice(members, size=take, replace=False)
        splits[chosen] = SPLIT_VALIDATION
    if manifest.n_docs and not (splits == SPLIT_TRAIN).any():
        warnings.warn("validation split consumed every document; train split is empty",
                      stacklevel=2)
    return manifest.with_splits(splits)


def write_manifest(manifest: CorpusManifest, path) -> None:
    lines = [dumps({
        "format": "manifest",
        "version": MANIFEST_FORMAT_VERSION,
        "tokenizer_id": manifest.tokenizer_id,
        "total_docs": manifest.n_docs,
        "total_tokens": manifest.total_tokens,
    })]
    for doc_id in range(manifest.n_docs):
        lines.append(dumps({
            "doc_id": doc_id,
            "path": manifest.source_paths[doc_id],
            "token_count": int(manifest.token_counts[doc_id]),
            "byte_len": int(manifest.byte_lens[doc_id]),
            "split": SPLIT_NAMES[manifest.splits[doc_id]],
        }))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_manifest(path) -> CorpusManifest:
    from .fileio import read_jsonl

    rows = read_jsonl(path)
    try:
        _, header = next(rows)
    except StopIteration:
        raise FormatError(f"{path}: empty manifest file") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid manifest header ({exc.msg})") from exc
    if header.get("format") != "manifest":
        raise FormatError(f"{path}: not a manifest file")
    if header.get("version") != MANIFEST_FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported manifest version {header.get('version')!r}")
    counts, byte_lens, paths, splits = [], [], [], []
    try:
        for line_no, row in rows:
            if row.get("doc_id") != len(counts):
                raise FormatError(f"{path}: line {line_no}: doc_ids must be dense and in order")
            counts.append(int(row["token_count"]))
            byte_lens.append(int(row["byte_len"]))
            paths.append(row["path"])
            splits.append(SPLIT_NAMES.index(row["split"]))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: malformed manifest row ({exc})") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON in manifest ({exc.msg})") from exc
    manifest = CorpusManifest(counts, byte_lens, paths, splits, header["tokenizer_id"])
    if manifest.n_docs != header["total_docs"] or manifest.total_tokens != header["total_tokens"]:
        raise FormatError(f"{path}: header totals do not match the document rows")
    return manifest
