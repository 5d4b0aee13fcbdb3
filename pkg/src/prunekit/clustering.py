"""Seeded spherical k-means over document embeddings, plus embedding-space
diagnostics: centroid similarity, near-duplicate centroid detection, and the
distance-versus-length profile."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.stats import spearmanr
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.exceptions import NotFittedError

from .embeddings import EmbeddingMatrix, load_embeddings, save_embeddings
from .errors import FormatError
from .fileio import atomic_write_text, dumps, read_jsonl
from .validation import as_unit_rows, check_aligned

CLUSTERING_FORMAT_VERSION = 1


@dataclass
class Clustering:
    """Fitted cluster state: unit centroids, assignments, and cosine distances."""

    centroids: np.ndarray      # (K, dim) float64, unit rows
    assignment: np.ndarray     # (n,) int32, argmax-cosine cluster per document
    distance: np.ndarray       # (n,) float64, 1 - cos(doc, assigned centroid)
    cluster_sizes: np.ndarray  # (K,) int64
    objective: float           # mean of distance

    @property
    def n_docs(self) -> int:
        return int(self.assignment.shape[0])

    @property
    def n_clusters(self) -> int:
        return int(self.centroids.shape[0])


def _kmeanspp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding under cosine distance (weights proportional to d^2)."""
    n = X.shape[0]
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = int(rng.integers(n))
    best_sim = X @ X[chosen[0]]
    for i in range(1, k):
        d = np.clip(1.0 - best_sim, 0.0, None)
        weights = d * d
        total = weights.sum()
        if total <= 0.0:
            # Every point coincides with a chosen center; take the lowest
            # unchosen index for determinism.
            mask = np.ones(n, dtype=bool)
            mask[chosen[:i]] = False
            nxt = int(np.flatnonzero(mask)[0])
        else:
            nxt = int(rng.choice(n, p=weights / total))
        chosen[i] = nxt
        best_sim = np.maximum(best_sim, X @ X[nxt])
    return X[chosen].copy()


def _update_centers(X, labels, dist, k):
    """Mean-and-renormalize update; emptied clusters reseed to the farthest
    documents (descending distance, ties to the lower doc_id)."""
    dim = X.shape[1]
    centers = np.zeros((k, dim))
    sizes = np.bincount(labels, minlength=k)
    for c in range(k):
        if sizes[c]:
            centers[c] = X[labels == c].sum(axis=0)
    norms = np.linalg.norm(centers, axis=1)
    needs_reseed = np.flatnonzero((sizes == 0) | (norms == 0.0))
    if needs_reseed.size:
        farthest = np.lexsort((np.arange(X.shape[0]), -dist))
        for slot, c in enumerate(needs_reseed):
            centers[c] = X[farthest[slot]]
            norms[c] = 1.0
    return centers / norms[:, None]


class SphericalKMeans(BaseEstimator, ClusterMixin):
    """K-means on the unit sphere under cosine distance.

    Centroids are re-normalized after every update; assignment maximizes
    cosine similarity with ties going to the lowest cluster index. The run is
    deterministic for a fixed ``random_state``.

    Parameters
    ----------
    n_clusters : int, default=100
        Number of clusters (must not exceed the number of rows).
    max_iter : int, default=25
        Cap on assignment/update rounds.
    tol : float, default=1e-4
        Stop once the relative objective improvement falls below this value.
    random_state : int, default=0
        Seed for k-means++ initialization.

    Attributes
    ----------
    cluster_centers_ : ndarray of shape (n_clusters, dim)
    labels_ : ndarray of shape (n_rows,)
    distances_ : ndarray of shape (n_rows,)
        One minus cosine similarity to the assigned center.
    cluster_sizes_ : ndarray of shape (n_clusters,)
    inertia_ : float
        Mean of ``distances_``.
    objective_history_ : list of float
        Objective measured at each assignment step; non-increasing.
    n_iter_ : int
    """

    def __init__(self, n_clusters=100, max_iter=25, tol=1e-4, random_state=0):
        self.n_clusters = n_clusters
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y=None):
        X = as_unit_rows(X, what="embedding matrix")
        n = X.shape[0]
        k = self.n_clusters
        if not 1 <= k <= n:
            raise ValueError(f"n_clusters must be in [1, {n}], got {k}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")
        rng = np.random.default_rng(self.random_state)
        centers = _kmeanspp_init(X, k, rng)
        history: list[float] = []
        rows = np.arange(n)
        for iteration in range(self.max_iter + 1):
            sims = X @ centers.T
            labels = np.argmax(sims, axis=1).astype(np.int32)
            dist = np.clip(1.0 - sims[rows, labels], 0.0, 2.0)
            objective = float(dist.mean())
            sizes = np.bincount(labels, minlength=k)
            converged = bool(
                history
                and history[-1] - objective < self.tol * max(abs(history[-1]), 1e-300)
            )
            history.append(objective)
            if iteration == self.max_iter or (converged and sizes.min() > 0):
                break
            centers = _update_centers(X, labels, dist, k)
        if sizes.min() == 0:
            # Only reachable when duplicate points tie across centers at the
            # iteration cap; force-claim the farthest documents so every
            # cluster stays live.
            farthest = np.lexsort((rows, -dist))
            pos = 0
            for c in np.flatnonzero(sizes == 0):
                j = int(farthest[pos])
                pos += 1
                labels[j] = c
                dist[j] = max(0.0, 1.0 - float(X[j] @ centers[c]))
            sizes = np.bincount(labels, minlength=k)
            objective = float(dist.mean())
        self.cluster_centers_ = centers
        self.labels_ = labels
        self.distances_ = dist
        self.cluster_sizes_ = sizes.astype(np.int64)
        self.inertia_ = objective
        self.objective_history_ = history
        self.n_iter_ = iteration
        return self

    def predict(self, X):
        if not hasattr(self, "cluster_centers_"):
            raise NotFittedError("this SphericalKMeans instance is not fitted yet")
        X = as_unit_rows(X, what="embedding matrix")
        return np.argmax(X @ self.cluster_centers_.T, axis=1).astype(np.int32)

    def to_clustering(self) -> Clustering:
        if not hasattr(self, "cluster_centers_"):
            raise NotFittedError("this SphericalKMeans instance is not fitted yet")
        return Clustering(self.cluster_centers_, self.labels_, self.distances_,
                          self.cluster_sizes_, self.inertia_)


def kmeans(matrix, n_clusters=100, max_iter=25, tol=1e-4, seed=0) -> Clustering:
    """Functional wrapper around :class:`SphericalKMeans`."""
    est = SphericalKMeans(n_clusters=n_clusters, max_iter=max_iter, tol=tol,
                          random_state=seed)
    return est.fit(matrix).to_clustering()


def centroid_similarity_matrix(clustering: Clustering) -> np.ndarray:
    """K x K cosine similarity between centroids; symmetric with unit diagonal."""
    sims = clustering.centroids @ clustering.centroids.T
    sims = np.clip((sims + sims.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(sims, 1.0)
    return sims


def near_duplicate_centroid_groups(similarity, threshold: float) -> list[list[int]]:
    """Connected components of the graph with edges at similarity >= threshold;
    singleton groups are omitted."""
    sims = np.asarray(similarity, dtype=np.float64)
    if sims.ndim != 2 or sims.shape[0] != sims.shape[1]:
        raise ValueError("similarity must be a square matrix")
    if not np.allclose(sims, sims.T, atol=1e-8):
        raise ValueError("similarity matrix must be symmetric")
    adjacency = sims >= threshold
    np.fill_diagonal(adjacency, False)
    n_components, labels = csgraph.connected_components(
        sparse.csr_matrix(adjacency), directed=False
    )
    groups = []
    for component in range(n_components):
        members = np.flatnonzero(labels == component)
        if members.size >= 2:
            groups.append([int(m) for m in members])
    groups.sort(key=lambda g: g[0])
    return groups


@dataclass
class DistanceLengthProfile:
    """Per-document (distance, token_count) scatter plus its rank correlation."""

    doc_ids: np.ndarray
    distances: np.ndarray
    token_counts: np.ndarray
    spearman: float
    degenerate: bool


def distance_length_profile(clustering: Clustering, manifest) -> DistanceLengthProfile:
    check_aligned(clustering.n_docs, manifest, "clustering")
    distances = clustering.distance
    token_counts = manifest.token_counts
    degenerate = (
        clustering.n_docs < 2
        or np.unique(distances).size < 2
        or np.unique(token_counts).size < 2
    )
    if degenerate:
        rho = 0.0
    else:
        rho = float(spearmanr(distances, token_counts).correlation)
    return DistanceLengthProfile(np.arange(clustering.n_docs), distances,
                                 token_counts, rho, degenerate)


def save_clustering(clustering: Clustering, assignments_path, centroids_path) -> None:
    """Persist assignments as line-delimited JSON and centroids in the
    embedding file format."""
    lines = [dumps({
        "format": "clustering",
        "version": CLUSTERING_FORMAT_VERSION,
        "n_clusters": clustering.n_clusters,
        "n_docs": clustering.n_docs,
        "objective": clustering.objective,
    })]
    for doc_id in range(clustering.n_docs):
        lines.append(dumps({
            "doc_id": doc_id,
            "cluster": int(clustering.assignment[doc_id]),
            "distance": float(clustering.distance[doc_id]),
        }))
    atomic_write_text(assignments_path, "\n".join(lines) + "\n")
    save_embeddings(EmbeddingMatrix(clustering.centroids.astype(np.float32),
                                    normalized=True), centroids_path)


def load_clustering(assignments_path, centroids_path) -> Clustering:
    rows = read_jsonl(assignments_path)
    try:
        _, header = next(rows)
    except StopIteration:
        raise FormatError(f"{assignments_path}: empty clustering file") from None
    if header.get("format") != "clustering":
        raise FormatError(f"{assignments_path}: not a clustering file")
    if header.get("version") != CLUSTERING_FORMAT_VERSION:
        raise FormatError(f"{assignments_path}: unsupported version {header.get('version')!r}")
    n_docs = int(header["n_docs"])
    k = int(header["n_clusters"])
    assignment = np.empty(n_docs, dtype=np.int32)
    distance = np.empty(n_docs, dtype=np.float64)
    seen = 0
    for line_no, row in rows:
        doc_id = int(row["doc_id"])
        if doc_id != seen:
            raise FormatError(f"{assignments_path}: line {line_no}: doc_ids must be dense and in order")
        assignment[doc_id] = int(row["cluster"])
        distance[doc_id] = float(row["distance"])
        seen += 1
    if seen != n_docs:
        raise FormatError(f"{assignments_path}: expected {n_docs} rows, found {seen}")
    centroids = load_embeddings(centroids_path)
    if centroids.n_rows != k:
        raise FormatError(f"{centroids_path}: expected {k} centroids, found {centroids.n_rows}")
    sizes = np.bincount(assignment, minlength=k).astype(np.int64)
    objective = float(distance.mean()) if n_docs else 0.0
    return Clustering(centroids.data.astype(np.float64), assignment, distance,
                      sizes, objective)
