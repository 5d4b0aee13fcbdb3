import numpy as np
import pytest
from sklearn.exceptions import NotFittedError
from sklearn.metrics import adjusted_rand_score

from conftest import make_manifest, random_unit_rows
from prunekit import (Clustering, EmbeddingMatrix, SphericalKMeans,
                      centroid_similarity_matrix, distance_length_profile, kmeans,
                      load_clustering, near_duplicate_centroid_groups,
                      save_clustering, synthetic_embed)


def planted_blobs(rng, anchors, per_blob, jitter=0.05):
    """Points near each anchor; returns (unit rows, blob labels)."""
    rows, labels = [], []
    for label, anchor in enumerate(anchors):
        noise = rng.standard_normal((per_blob, anchors.shape[1]))
        noise /= np.linalg.norm(noise, axis=1, keepdims=True)
        points = anchor + jitter * noise
        points /= np.linalg.norm(points, axis=1, keepdims=True)
        rows.append(points)
        labels.extend([label] * per_blob)
    return np.vstack(rows), np.array(labels)


def spread_anchors(rng, k, dim, max_cos=0.3):
    """Random unit anchors with pairwise cosine below max_cos."""
    while True:
        anchors = random_unit_rows(rng, k, dim)
        sims = anchors @ anchors.T
        np.fill_diagonal(sims, 0.0)
        if sims.max() < max_cos:
            return anchors


class TestSphericalKMeans:
    def test_k1_centroid_is_normalized_mean(self):
        rng = np.random.default_rng(0)
        X = random_unit_rows(rng, 60, 8)
        est = SphericalKMeans(n_clusters=1, random_state=0).fit(X)
        mean = X.mean(axis=0)
        mean /= np.linalg.norm(mean)
        assert np.max(np.abs(est.cluster_centers_[0] - mean)) < 1e-6
        assert not est.labels_.any()

    def test_antipodal_blobs_recovered(self):
        rng = np.random.default_rng(1)
        anchor = random_unit_rows(rng, 1, 12)[0]
        X, truth = planted_blobs(rng, np.vstack([anchor, -anchor]), per_blob=20)
        est = SphericalKMeans(n_clusters=2, random_state=0).fit(X)
        assert adjusted_rand_score(truth, est.labels_) == 1.0

    def test_five_planted_anchors_recovered(self):
        rng = np.random.default_rng(2)
        anchors = spread_anchors(rng, 5, 32)
        X, truth = planted_blobs(rng, anchors, per_blob=100)
        est = SphericalKMeans(n_clusters=5, random_state=0).fit(X)
        assert adjusted_rand_score(truth, est.labels_) >= 0.99

    def test_objective_non_increasing(self):
        rng = np.random.default_rng(3)
        X = random_unit_rows(rng, 300, 8)
        for seed in range(10):
            est = SphericalKMeans(n_clusters=8, random_state=seed).fit(X)
            history = est.objective_history_
            assert all(b <= a + 1e-7 * max(abs(a), 1.0) for a, b in zip(history, history[1:]))

    def test_assignments_are_argmax(self):
        rng = np.random.default_rng(4)
        X = random_unit_rows(rng, 200, 6)
        est = SphericalKMeans(n_clusters=7, random_state=0).fit(X)
        sims = X @ est.cluster_centers_.T
        best = sims.max(axis=1)
        got = sims[np.arange(200), est.labels_]
        assert np.all(got >= best - 1e-6)

    def test_distances_within_domain(self):
        rng = np.random.default_rng(44)
        X = random_unit_rows(rng, 150, 3)
        est = SphericalKMeans(n_clusters=5, random_state=1).fit(X)
        assert est.distances_.min() >= 0.0
        assert est.distances_.max() <= 2.0

    def test_no_empty_clusters(self):
        rng = np.random.default_rng(5)
        X = random_unit_rows(rng, 50, 4)
        for seed in range(5):
            est = SphericalKMeans(n_clusters=10, random_state=seed).fit(X)
            assert est.cluster_sizes_.min() >= 1
            assert est.cluster_sizes_.sum() == 50

    def test_deterministic(self):
        rng = np.random.default_rng(6)
        X = random_unit_rows(rng, 120, 5)
        a = SphericalKMeans(n_clusters=6, random_state=9).fit(X)
        b = SphericalKMeans(n_clusters=6, random_state=9).fit(X)
        assert np.array_equal(a.labels_, b.labels_)
        assert np.array_equal(a.cluster_centers_, b.cluster_centers_)

    def test_k_exceeds_rows(self):
        rng = np.random.default_rng(7)
        X = random_unit_rows(rng, 3, 4)
        with pytest.raises(ValueError, match="n_clusters"):
            SphericalKMeans(n_clusters=4).fit(X)

    def test_requires_normalized_input(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((10, 4))
        with pytest.raises(ValueError, match="unit-normalized"):
            SphericalKMeans(n_clusters=2).fit(X)

    def test_predict_matches_labels(self):
        rng = np.random.default_rng(9)
        X = random_unit_rows(rng, 80, 4)
        est = SphericalKMeans(n_clusters=4, random_state=0).fit(X)
        assert np.array_equal(est.predict(X), est.labels_)

    def test_unfitted_predict_raises(self):
        with pytest.raises(NotFittedError):
            SphericalKMeans().predict(np.eye(3))

    def test_accepts_embedding_matrix(self):
        manifest = make_manifest([10] * 30)
        matrix = synthetic_embed(manifest, dim=8, seed=0, length_coupling=0.3)
        clustering = kmeans(matrix, n_clusters=3, seed=0)
        assert clustering.n_docs == 30
        assert clustering.cluster_sizes.sum() == 30

    def test_get_params_roundtrip(self):
        est = SphericalKMeans(n_clusters=7, tol=1e-3)
        params = est.get_params()
        assert params["n_clusters"] == 7
        clone = SphericalKMeans(**params)
        assert clone.get_params() == params


def _toy_clustering(centroids, assignment, distances):
    centroids = np.asarray(centroids, dtype=np.float64)
    assignment = np.asarray(assignment, dtype=np.int32)
    distances = np.asarray(distances, dtype=np.float64)
    sizes = np.bincount(assignment, minlength=centroids.shape[0]).astype(np.int64)
    return Clustering(centroids, assignment, distances, sizes, float(distances.mean()))


class TestCentroidSimilarity:
    def test_single_centroid(self):
        clustering = _toy_clustering([[1.0, 0.0]], [0, 0], [0.0, 0.1])
        assert centroid_similarity_matrix(clustering).tolist() == [[1.0]]

    def test_identical_centroids(self):
        clustering = _toy_clustering([[1.0, 0.0], [1.0, 0.0]], [0, 1], [0.0, 0.0])
        sims = centroid_similarity_matrix(clustering)
        assert sims[0, 1] == pytest.approx(1.0)

    def test_orthogonal_centroids(self):
        clustering = _toy_clustering([[1.0, 0.0], [0.0, 1.0]], [0, 1], [0.0, 0.0])
        sims = centroid_similarity_matrix(clustering)
        assert sims[0, 1] == pytest.approx(0.0, abs=1e-12)
        assert np.array_equal(sims, sims.T)
        assert np.all(np.diag(sims) == 1.0)


class TestNearDuplicateGroups:
    def test_complete_graph(self):
        sims = np.array([[1.0, 0.95, 0.92], [0.95, 1.0, 0.91], [0.92, 0.91, 1.0]])
        assert near_duplicate_centroid_groups(sims, 0.9) == [[0, 1, 2]]

    def test_nothing_above_threshold(self):
        sims = np.eye(3)
        assert near_duplicate_centroid_groups(sims, 0.9) == []

    def test_chain_closes_transitively(self):
        sims = np.eye(3)
        sims[0, 1] = sims[1, 0] = 0.95
        sims[1, 2] = sims[2, 1] = 0.95
        sims[0, 2] = sims[2, 0] = 0.5
        assert near_duplicate_centroid_groups(sims, 0.9) == [[0, 1, 2]]

    def test_asymmetric_rejected(self):
        sims = np.eye(2)
        sims[0, 1] = 0.9
        with pytest.raises(ValueError, match="symmetric"):
            near_duplicate_centroid_groups(sims, 0.5)


class TestDistanceLengthProfile:
    def test_concordant(self):
        clustering = _toy_clustering([[1.0, 0.0]], [0, 0, 0], [0.1, 0.2, 0.3])
        profile = distance_length_profile(clustering, make_manifest([10, 20, 30]))
        assert profile.spearman == pytest.approx(1.0)
        assert not profile.degenerate

    def test_discordant(self):
        clustering = _toy_clustering([[1.0, 0.0]], [0, 0, 0], [0.3, 0.2, 0.1])
        profile = distance_length_profile(clustering, make_manifest([10, 20, 30]))
        assert profile.spearman == pytest.approx(-1.0)

    def test_constant_sequence_degenerate(self):
        clustering = _toy_clustering([[1.0, 0.0]], [0, 0, 0], [0.2, 0.2, 0.2])
        profile = distance_length_profile(clustering, make_manifest([10, 20, 30]))
        assert profile.spearman == 0.0
        assert profile.degenerate

    def test_length_confound_reproduced(self):
        manifest = make_manifest([100] * 300 + [5000] * 100)
        matrix = synthetic_embed(manifest, dim=32, seed=1, length_coupling=0.9)
        clustering = kmeans(matrix, n_clusters=10, seed=0)
        profile = distance_length_profile(clustering, manifest)
        assert profile.spearman > 0.5


class TestPersistence:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(10)
        X = random_unit_rows(rng, 40, 6)
        clustering = kmeans(X, n_clusters=4, seed=0)
        save_clustering(clustering, tmp_path / "clustering.jsonl", tmp_path / "centroids.embd")
        loaded = load_clustering(tmp_path / "clustering.jsonl", tmp_path / "centroids.embd")
        assert np.array_equal(loaded.assignment, clustering.assignment)
        assert np.allclose(loaded.distance, clustering.distance)
        assert np.array_equal(loaded.cluster_sizes, clustering.cluster_sizes)
        assert np.allclose(loaded.centroids, clustering.centroids, atol=1e-6)
