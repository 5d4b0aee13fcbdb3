"""Pruning strategies and their tokens-versus-documents accounting.

Every strategy operates on the train split only, is deterministic given its
inputs, and returns a :class:`PruneReport` with exact document/token
fractions. All tie-breaks resolve to the ascending doc_id.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .corpus import CorpusManifest
from .validation import ceil_frac, check_aligned, check_fraction, floor_frac

STRATEGIES = (
    "none",
    "length_top_tokens",
    "length_shortest_tokens",
    "random_docs",
    "small_clusters",
    "far_from_centroids",
    "scip_combined",
    "semdedup",
    "ssl_prototypes",
    "d4",
)

# Resources a strategy needs beyond the manifest.
STRATEGY_NEEDS = {
    "none": frozenset(),
    "length_top_tokens": frozenset(),
    "length_shortest_tokens": frozenset(),
    "random_docs": frozenset(),
    "small_clusters": frozenset({"clustering"}),
    "far_from_centroids": frozenset({"clustering"}),
    "scip_combined": frozenset({"clustering"}),
    "semdedup": frozenset({"clustering", "embeddings"}),
    "ssl_prototypes": frozenset({"clustering"}),
    "d4": frozenset({"clustering", "embeddings"}),
}


@dataclass
class PruneReport:
    """Which documents a strategy removed, with exact fraction accounting."""

    strategy: str
    params: dict
    docs_total: int
    docs_pruned: int
    tokens_total: int
    tokens_pruned: int
    fraction_docs: float
    fraction_tokens: float
    pruned_ids: np.ndarray

    def to_dict(self) -> dict:
        return {
            "format": "prune_report",
            "version": 1,
            "strategy": self.strategy,
            "params": self.params,
            "docs_total": self.docs_total,
            "docs_pruned": self.docs_pruned,
            "tokens_total": self.tokens_total,
            "tokens_pruned": self.tokens_pruned,
            "fraction_docs": self.fraction_docs,
            "fraction_tokens": self.fraction_tokens,
            "pruned_ids": [int(i) for i in self.pruned_ids],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "PruneReport":
        return cls(
            strategy=payload["strategy"],
            params=dict(payload["params"]),
            docs_total=int(payload["docs_total"]),
            docs_pruned=int(payload["docs_pruned"]),
            tokens_total=int(payload["tokens_total"]),
            tokens_pruned=int(payload["tokens_pruned"]),
            fraction_docs=float(payload["fraction_docs"]),
            fraction_tokens=float(payload["fraction_tokens"]),
            pruned_ids=np.asarray(payload["pruned_ids"], dtype=np.int64),
        )


def _train_ids(manifest: CorpusManifest) -> np.ndarray:
    ids = manifest.train_ids
    if ids.size == 0:
        raise ValueError("train split is empty")
    return ids


def _make_report(manifest, strategy, params, pruned_ids) -> PruneReport:
    train = _train_ids(manifest)
    pruned = np.unique(np.asarray(pruned_ids, dtype=np.int64))
    docs_total = int(train.size)
    tokens_total = int(manifest.token_counts[train].sum())
    tokens_pruned = int(manifest.token_counts[pruned].sum()) if pruned.size else 0
    return PruneReport(
        strategy=strategy,
        params=params,
        docs_total=docs_total,
        docs_pruned=int(pruned.size),
        tokens_total=tokens_total,
        tokens_pruned=tokens_pruned,
        fraction_docs=pruned.size / docs_total,
        fraction_tokens=tokens_pruned / tokens_total,
        pruned_ids=pruned,
    )


def _check_clustering(clustering, manifest) -> None:
    check_aligned(clustering.n_docs, manifest, "clustering")


def prune_none(manifest: CorpusManifest) -> PruneReport:
    """No-pruning baseline; an empty report."""
    return _make_report(manifest, "none", {}, np.empty(0, dtype=np.int64))


def _prune_length(manifest, tokens_frac, *, longest: bool) -> PruneReport:
    frac = check_fraction(tokens_frac, "tokens_frac")
    ids = _train_ids(manifest)
    counts = manifest.token_counts[ids]
    key = -counts if longest else counts
    order = np.lexsort((ids, key))
    cumulative = np.cumsum(counts[order])
    total = int(cumulative[-1])
    target = ceil_frac(frac, total)
    if target <= 0:
        n_prune = 0
    else:
        # First crossing: smallest prefix whose cumulative tokens reach the target.
        n_prune = int(np.searchsorted(cumulative, target, side="left")) + 1
    strategy = "length_top_tokens" if longest else "length_shortest_tokens"
    return _make_report(manifest, strategy, {"tokens_frac": frac}, ids[order[:n_prune]])


def prune_length_top_tokens(manifest: CorpusManifest, tokens_frac: float) -> PruneReport:
    """Remove the longest documents until at least ``tokens_frac`` of the train
    tokens are gone (first-crossing rule)."""
    return _prune_length(manifest, tokens_frac, longest=True)


def prune_length_shortest_tokens(manifest: CorpusManifest, tokens_frac: float) -> PruneReport:
    """Sanity baseline: mirror image of top-tokens pruning, starting from the
    shortest documents."""
    return _prune_length(manifest, tokens_frac, longest=False)


def prune_random_docs(manifest: CorpusManifest, docs_frac: float, seed: int = 0) -> PruneReport:
    """Remove floor(docs_frac * train docs) documents uniformly at random."""
    frac = check_fraction(docs_frac, "docs_frac")
    ids = _train_ids(manifest)
    n_prune = floor_frac(frac, ids.size)
    rng = np.random.default_rng(seed)
    pruned = rng.choice(ids, size=n_prune, replace=False) if n_prune else np.empty(0, np.int64)
    return _make_report(manifest, "random_docs", {"docs_frac": frac, "seed": seed}, pruned)


def prune_small_clusters(manifest: CorpusManifest, clustering, docs_frac: float) -> PruneReport:
    """Remove whole clusters in ascending size order; the boundary cluster is
    pruned partially by descending distance so the target is met exactly."""
    frac = check_fraction(docs_frac, "docs_frac")
    _check_clustering(clustering, manifest)
    ids = _train_ids(manifest)
    target = floor_frac(frac, ids.size)
    assignment = clustering.assignment[ids]
    sizes = np.bincount(assignment, minlength=clustering.n_clusters)
    cluster_order = np.lexsort((np.arange(sizes.size), sizes))
    pruned_parts = []
    taken = 0
    for cluster in cluster_order:
        size = int(sizes[cluster])
        if size == 0:
            continue
        members = ids[assignment == cluster]
        if taken + size <= target:
            pruned_parts.append(members)
            taken += size
            if taken == target:
                break
        else:
            need = target - taken
            if need > 0:
                dist = clustering.distance[members]
                farthest = np.lexsort((members, -dist))[:need]
                pruned_parts.append(members[farthest])
            break
    pruned = np.concatenate(pruned_parts) if pruned_parts else np.empty(0, np.int64)
    return _make_report(manifest, "small_clusters", {"docs_frac": frac}, pruned)


def _pool_excluding(ids, exclude, manifest):
    if exclude is None:
        return ids
    exclude = np.unique(np.asarray(list(exclude), dtype=np.int64))
    if exclude.size and (exclude.min() < 0 or exclude.max() >= manifest.n_docs):
        raise ValueError("exclude contains ids outside the manifest")
    return ids[~np.isin(ids, exclude)]


def prune_far_from_centroids(manifest: CorpusManifest, clustering, docs_frac: float,
                             exclude=None) -> PruneReport:
    """Remove the documents farthest from their assigned centroid.

    The budget is floor(docs_frac * original train docs) even when ``exclude``
    removes candidates from the pool.
    """
    frac = check_fraction(docs_frac, "docs_frac")
    _check_clustering(clustering, manifest)
    ids = _train_ids(manifest)
    n_prune = floor_frac(frac, ids.size)
    pool = _pool_excluding(ids, exclude, manifest)
    if n_prune > pool.size:
        raise ValueError(f"requested {n_prune} documents but only {pool.size} remain")
    dist = clustering.distance[pool]
    chosen = np.lexsort((pool, -dist))[:n_prune]
    return _make_report(manifest, "far_from_centroids", {"docs_frac": frac}, pool[chosen])


def prune_scip_combined(manifest: CorpusManifest, clustering, small_frac: float = 0.16,
                        far_frac: float = 0.04) -> PruneReport:
    """Small-cluster pruning followed by far-from-centroid pruning; the two
    stages are disjoint and both budgets refer to the original train count."""
    small_frac = check_fraction(small_frac, "small_frac")
    far_frac = check_fraction(far_frac, "far_frac")
    if small_frac + far_frac > 1.0 + 1e-12:
        raise ValueError("small_frac + far_frac must not exceed 1")
    stage_small = prune_small_clusters(manifest, clustering, small_frac)
    stage_far = prune_far_from_centroids(manifest, clustering, far_frac,
                                         exclude=stage_small.pruned_ids)
    pruned = np.concatenate([stage_small.pruned_ids, stage_far.pruned_ids])
    params = {"small_frac": small_frac, "far_frac": far_frac}
    return _make_report(manifest, "scip_combined", params, pruned)


def prune_semdedup(manifest: CorpusManifest, matrix, clustering, epsilon: float) -> PruneReport:
    """Within each cluster, link documents whose cosine distance is at most
    ``epsilon`` and keep one representative per connected component (the
    member closest to its centroid; ties to the lower doc_id)."""
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    if not matrix.normalized:
        raise ValueError("embedding matrix must be normalized for semdedup")
    check_aligned(matrix.n_rows, manifest, "embeddings")
    _check_clustering(clustering, manifest)
    ids = _train_ids(manifest)
    assignment = clustering.assignment[ids]
    X = matrix.data.astype(np.float64)
    pruned_parts = []
    for cluster in range(clustering.n_clusters):
        members = ids[assignment == cluster]
        if members.size < 2:
            continue
        sims = X[members] @ X[members].T
        adjacency = (1.0 - sims) <= epsilon
        np.fill_diagonal(adjacency, False)
        if not adjacency.any():
            continue
        n_components, labels = csgraph.connected_components(
            sparse.csr_matrix(adjacency), directed=False
        )
        for component in range(n_components):
            group = members[labels == component]
            if group.size < 2:
                continue
            dist = clustering.distance[group]
            keep = int(np.lexsort((group, dist))[0])
            pruned_parts.append(np.delete(group, keep))
    pruned = np.concatenate(pruned_parts) if pruned_parts else np.empty(0, np.int64)
    return _make_report(manifest, "semdedup", {"epsilon": float(epsilon)}, pruned)


def prune_ssl_prototypes(manifest: CorpusManifest, clustering, docs_frac: float,
                         exclude=None) -> PruneReport:
    """Remove the most prototypical documents: smallest distance to the
    assigned centroid, ties to the lower doc_id."""
    frac = check_fraction(docs_frac, "docs_frac")
    _check_clustering(clustering, manifest)
    ids = _train_ids(manifest)
    n_prune = floor_frac(frac, ids.size)
    pool = _pool_excluding(ids, exclude, manifest)
    if n_prune > pool.size:
        raise ValueError(f"requested {n_prune} documents but only {pool.size} remain")
    dist = clustering.distance[pool]
    chosen = np.lexsort((pool, dist))[:n_prune]
    return _make_report(manifest, "ssl_prototypes", {"docs_frac": frac}, pool[chosen])


def prune_d4(manifest: CorpusManifest, matrix, clustering, epsilon: float,
             docs_frac: float) -> PruneReport:
    """Semantic dedup followed by prototype pruning over the survivors; the
    prototype budget is relative to the original train count."""
    stage_dedup = prune_semdedup(manifest, matrix, clustering, epsilon)
    stage_proto = prune_ssl_prototypes(manifest, clustering, docs_frac,
                                       exclude=stage_dedup.pruned_ids)
    pruned = np.concatenate([stage_dedup.pruned_ids, stage_proto.pruned_ids])
    params = {"epsilon": float(epsilon), "docs_frac": float(docs_frac)}
    return _make_report(manifest, "d4", params, pruned)


@dataclass(frozen=True)
class AccountingRow:
    strategy: str
    params: dict
    docs_pruned: int
    tokens_pruned: int
    fraction_docs: float
    fraction_tokens: float


def accounting_table(reports) -> list[AccountingRow]:
    """One row per report: the documents-versus-tokens pruning accounting.

    All reports must come from the same manifest (same totals).
    """
    reports = list(reports)
    if not reports:
        return []
    first = reports[0]
    for report in reports[1:]:
        if (report.docs_total, report.tokens_total) != (first.docs_total, first.tokens_total):
            raise ValueError("accounting_table requires reports from the same manifest")
    return [
        AccountingRow(r.strategy, dict(r.params), r.docs_pruned, r.tokens_pruned,
                      r.fraction_docs, r.fraction_tokens)
        for r in reports
    ]


def format_accounting(rows) -> str:
    """Fixed-width text rendering of the accounting table."""
    header = f"{'strategy':<24} {'docs pruned':>12} {'tokens pruned':>14} {'docs %':>8} {'tokens %':>9}"
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(
            f"{row.strategy:<24} {row.docs_pruned:>12} {row.tokens_pruned:>14} "
            f"{100 * row.fraction_docs:>7.1f}% {100 * row.fraction_tokens:>8.1f}%"
        )
    return "\n".join(lines)


class Pruner(BaseEstimator, TransformerMixin):
    """Estimator-style front end over the pruning strategies.

    Parameters hold the strategy knobs (``get_params`` round-trips them);
    data arrives at fit time. After ``fit`` the selection is available as
    ``report_`` / ``pruned_ids_``, and ``transform`` returns the surviving
    manifest with doc_ids renumbered densely.

    Parameters
    ----------
    strategy : str, default="length_top_tokens"
        One of ``STRATEGIES``.
    tokens_frac : float, optional
        Token budget for the length strategies.
    docs_frac : float, optional
        Document budget for random / cluster / prototype strategies.
    epsilon : float, optional
        Cosine-distance threshold for semdedup and d4.
    small_frac, far_frac : float
        Stage budgets for the combined small+far strategy.
    seed : int, default=0
        Seed for the randomized strategies.
    """

    def __init__(self, strategy="length_top_tokens", tokens_frac=None, docs_frac=None,
                 epsilon=None, small_frac=0.16, far_frac=0.04, seed=0):
        self.strategy = strategy
        self.tokens_frac = tokens_frac
        self.docs_frac = docs_frac
        self.epsilon = epsilon
        self.small_frac = small_frac
        self.far_frac = far_frac
        self.seed = seed

    def _require(self, name):
        value = getattr(self, name)
        if value is None:
            raise ValueError(f"strategy {self.strategy!r} requires {name}")
        return value

    def fit(self, manifest, y=None, clustering=None, embeddings=None):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        needs = STRATEGY_NEEDS[self.strategy]
        if "clustering" in needs and clustering is None:
            raise ValueError(f"strategy {self.strategy!r} requires a clustering")
        if "embeddings" in needs and embeddings is None:
            raise ValueError(f"strategy {self.strategy!r} requires an embedding matrix")
        if self.strategy == "none":
            report = prune_none(manifest)
        elif self.strategy == "length_top_tokens":
            report = prune_length_top_tokens(manifest, self._require("tokens_frac"))
        elif self.strategy == "length_shortest_tokens":
            report = prune_length_shortest_tokens(manifest, self._require("tokens_frac"))
        elif self.strategy == "random_docs":
            report = prune_random_docs(manifest, self._require("docs_frac"), self.seed)
        elif self.strategy == "small_clusters":
            report = prune_small_clusters(manifest, clustering, self._require("docs_frac"))
        elif self.strategy == "far_from_centroids":
            report = prune_far_from_centroids(manifest, clustering, self._require("docs_frac"))
        elif self.strategy == "scip_combined":
            report = prune_scip_combined(manifest, clustering, self.small_frac, self.far_frac)
        elif self.strategy == "semdedup":
            report = prune_semdedup(manifest, embeddings, clustering, self._require("epsilon"))
        elif self.strategy == "ssl_prototypes":
            report = prune_ssl_prototypes(manifest, clustering, self._require("docs_frac"))
        else:  # d4
            report = prune_d4(manifest, embeddings, clustering, self._require("epsilon"),
                              self._require("docs_frac"))
        self.report_ = report
        self.pruned_ids_ = report.pruned_ids
        return self

    def transform(self, manifest):
        if not hasattr(self, "report_"):
            raise NotFittedError("this Pruner instance is not fitted yet")
        keep = np.setdiff1d(np.arange(manifest.n_docs), self.pruned_ids_)
        return manifest.subset(keep)
