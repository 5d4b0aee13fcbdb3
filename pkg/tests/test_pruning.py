import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conftest import make_manifest, random_unit_rows
from prunekit import (Clustering, EmbeddingMatrix, Pruner, accounting_table,
                      format_accounting, kmeans, prune_d4, prune_far_from_centroids,
                      prune_length_shortest_tokens, prune_length_top_tokens,
                      prune_none, prune_random_docs, prune_scip_combined,
                      prune_semdedup, prune_small_clusters, prune_ssl_prototypes)

# ---------------------------------------------------------------------------
# Independent brute-force oracles. These deliberately avoid the library's
# vectorized code paths: explicit pairwise dots, BFS for components, and
# prefix scans over plain Python lists.
# ---------------------------------------------------------------------------


def token_target(fraction, total):
    """Smallest integer token count satisfying the fractional budget."""
    return min(total, max(0, math.ceil(fraction * total - 1e-9)))


def doc_budget(fraction, count):
    return min(count, max(0, math.floor(fraction * count + 1e-9)))


def oracle_length_top(manifest, fraction):
    """First-crossing over an explicitly sorted list."""
    docs = sorted(
        ((int(manifest.token_counts[i]), i) for i in manifest.train_ids),
        key=lambda pair: (-pair[0], pair[1]),
    )
    total = sum(c for c, _ in docs)
    target = token_target(fraction, total)
    pruned, running = [], 0
    for count, doc_id in docs:
        if running >= target:
            break
        pruned.append(doc_id)
        running += count
    return sorted(pruned)


def oracle_semdedup(manifest, X64, clustering, epsilon):
    """All-pairs epsilon graph per cluster, BFS components, keep the member
    closest to its centroid (ties to the lower doc_id)."""
    train = set(int(i) for i in manifest.train_ids)
    pruned = set()
    for cluster in range(clustering.n_clusters):
        members = [i for i in sorted(train) if clustering.assignment[i] == cluster]
        edges = {i: set() for i in members}
        for a_pos in range(len(members)):
            for b_pos in range(a_pos + 1, len(members)):
                a, b = members[a_pos], members[b_pos]
                if 1.0 - float(np.dot(X64[a], X64[b])) <= epsilon:
                    edges[a].add(b)
                    edges[b].add(a)
        visited = set()
        for start in members:
            if start in visited:
                continue
            component, queue = [], [start]
            visited.add(start)
            while queue:
                node = queue.pop()
                component.append(node)
                for neighbour in edges[node]:
                    if neighbour not in visited:
                        visited.add(neighbour)
                        queue.append(neighbour)
            if len(component) >= 2:
                keeper = min(component, key=lambda i: (clustering.distance[i], i))
                pruned.update(set(component) - {keeper})
    return pruned


def oracle_ssl(manifest, clustering, fraction, exclude):
    pool = [int(i) for i in manifest.train_ids if int(i) not in exclude]
    budget = doc_budget(fraction, int(manifest.train_ids.size))
    ranked = sorted(pool, key=lambda i: (clustering.distance[i], i))
    return set(ranked[:budget])


def random_clustered_corpus(rng, n_docs, dim=8, k=5, duplicate_frac=0.0):
    counts = rng.integers(1, 2000, size=n_docs)
    manifest = make_manifest(counts)
    X = random_unit_rows(rng, n_docs, dim)
    n_dup = int(duplicate_frac * n_docs)
    if n_dup:
        src = rng.integers(0, n_docs, size=n_dup)
        dst = rng.integers(0, n_docs, size=n_dup)
        X[dst] = X[src]
    matrix = EmbeddingMatrix(X.astype(np.float32), normalized=True)
    clustering = kmeans(matrix, n_clusters=k, seed=int(rng.integers(1 << 16)))
    return manifest, matrix, clustering


def toy_clustering(assignment, distances, n_clusters=None):
    assignment = np.asarray(assignment, dtype=np.int32)
    distances = np.asarray(distances, dtype=np.float64)
    k = n_clusters or int(assignment.max()) + 1
    centroids = np.zeros((k, 2))
    centroids[:, 0] = 1.0
    sizes = np.bincount(assignment, minlength=k).astype(np.int64)
    return Clustering(centroids, assignment, distances, sizes, float(distances.mean()))


class TestLengthTopTokens:
    def test_first_crossing_small(self):
        manifest = make_manifest([10, 10, 20, 60])
        report = prune_length_top_tokens(manifest, 0.40)
        assert report.docs_pruned == 1
        assert report.fraction_tokens == 0.60
        assert report.fraction_docs == 0.25
        assert list(report.pruned_ids) == [3]

    def test_first_crossing_two_docs(self):
        report = prune_length_top_tokens(make_manifest([10, 10, 20, 60]), 0.70)
        assert report.fraction_tokens == 0.80
        assert report.fraction_docs == 0.50

    def test_zero_fraction(self):
        report = prune_length_top_tokens(make_manifest([10, 10, 20, 60]), 0.0)
        assert report.docs_pruned == 0
        assert report.pruned_ids.size == 0

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            prune_length_top_tokens(make_manifest([5]), 1.5)

    def test_matches_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            n = int(rng.integers(1, 50))
            manifest = make_manifest(rng.integers(1, 100, size=n))
            fraction = float(rng.random())
            report = prune_length_top_tokens(manifest, fraction)
            assert sorted(report.pruned_ids) == oracle_length_top(manifest, fraction)

    def test_suffix_and_minimality(self):
        rng = np.random.default_rng(12)
        for _ in range(200):
            n = int(rng.integers(1, 50))
            counts = rng.integers(1, 100, size=n)
            manifest = make_manifest(counts)
            fraction = float(rng.choice([0.0, 1.0, rng.random()]))
            report = prune_length_top_tokens(manifest, fraction)
            pruned = set(report.pruned_ids.tolist())
            kept = [c for i, c in enumerate(counts) if i not in pruned]
            removed = [int(counts[i]) for i in report.pruned_ids]
            if kept and removed:
                assert max(kept) <= min(removed)
            target = token_target(fraction, int(counts.sum()))
            assert sum(removed) >= target
            if removed:
                assert sum(removed) - min(removed) < target


class TestLengthShortestTokens:
    def test_two_short_docs(self):
        report = prune_length_shortest_tokens(make_manifest([10, 10, 20, 60]), 0.15)
        assert report.docs_pruned == 2
        assert report.fraction_tokens == 0.20

    def test_everything(self):
        report = prune_length_shortest_tokens(make_manifest([10, 10, 20, 60]), 1.0)
        assert report.docs_pruned == 4

    def test_single_doc_forced(self):
        report = prune_length_shortest_tokens(make_manifest([5]), 0.01)
        assert report.docs_pruned == 1

    def test_prefix_property(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            counts = rng.integers(1, 100, size=int(rng.integers(1, 40)))
            manifest = make_manifest(counts)
            report = prune_length_shortest_tokens(manifest, float(rng.random()))
            pruned = set(report.pruned_ids.tolist())
            kept = [c for i, c in enumerate(counts) if i not in pruned]
            removed = [int(counts[i]) for i in report.pruned_ids]
            if kept and removed:
                assert min(kept) >= max(removed)


class TestRandomDocs:
    def test_exact_count_and_determinism(self):
        manifest = make_manifest([10] * 10)
        a = prune_random_docs(manifest, 0.2, seed=3)
        b = prune_random_docs(manifest, 0.2, seed=3)
        assert a.docs_pruned == 2
        assert np.array_equal(a.pruned_ids, b.pruned_ids)

    def test_zero_fraction(self):
        report = prune_random_docs(make_manifest([10] * 10), 0.0, seed=0)
        assert report.docs_pruned == 0

    def test_heavy_tail_expectation(self):
        rng = np.random.default_rng(14)
        counts = (1 + np.floor((1.0 - rng.random(10_000)) ** (-1.0 / 1.8) - 1.0)).astype(int)
        manifest = make_manifest(counts)
        shares = [prune_random_docs(manifest, 0.2, seed=s).fraction_tokens for s in range(5)]
        assert 0.18 <= float(np.mean(shares)) <= 0.22


class TestSmallClusters:
    def test_boundary_cluster_partial(self):
        assignment = [0] * 50 + [1] * 30 + [2] * 20
        distances = np.concatenate([
            np.full(50, 0.5), np.full(30, 0.5), np.linspace(0.01, 0.99, 20)])
        clustering = toy_clustering(assignment, distances)
        manifest = make_manifest([10] * 100)
        report = prune_small_clusters(manifest, clustering, 0.16)
        assert report.docs_pruned == 16
        # all pruned docs come from the size-20 cluster, largest distances first
        members = np.arange(80, 100)
        expected = members[np.argsort(-distances[80:])][:16]
        assert sorted(report.pruned_ids) == sorted(expected)

    def test_everything_when_budget_covers_all(self):
        clustering = toy_clustering([0, 0, 1, 1], [0.1, 0.2, 0.3, 0.4])
        report = prune_small_clusters(make_manifest([5] * 4), clustering, 1.0)
        assert report.docs_pruned == 4

    def test_exact_fit_smallest_cluster(self):
        assignment = [0] * 4 + [1] * 96
        clustering = toy_clustering(assignment, np.linspace(0, 1, 100))
        report = prune_small_clusters(make_manifest([10] * 100), clustering, 0.04)
        assert sorted(report.pruned_ids) == [0, 1, 2, 3]


class TestFarFromCentroids:
    def test_argmax_distance(self):
        clustering = toy_clustering([0, 0, 0], [0.1, 0.5, 0.2])
        report = prune_far_from_centroids(make_manifest([10] * 3), clustering, 1 / 3)
        assert list(report.pruned_ids) == [1]

    def test_zero_fraction(self):
        clustering = toy_clustering([0, 0, 0], [0.1, 0.5, 0.2])
        report = prune_far_from_centroids(make_manifest([10] * 3), clustering, 0.0)
        assert report.docs_pruned == 0

    def test_exclude_shifts_selection(self):
        clustering = toy_clustering([0, 0, 0], [0.1, 0.5, 0.2])
        report = prune_far_from_centroids(make_manifest([10] * 3), clustering, 1 / 3,
                                          exclude=[1])
        assert list(report.pruned_ids) == [2]

    def test_budget_exceeds_pool(self):
        clustering = toy_clustering([0, 0], [0.1, 0.5])
        with pytest.raises(ValueError, match="remain"):
            prune_far_from_centroids(make_manifest([10, 10]), clustering, 1.0,
                                     exclude=[0])


class TestScipCombined:
    def _clustered(self, n=1000, seed=15):
        rng = np.random.default_rng(seed)
        manifest = make_manifest(rng.integers(1, 500, size=n))
        matrix = EmbeddingMatrix(random_unit_rows(rng, n, 8).astype(np.float32),
                                 normalized=True)
        return manifest, kmeans(matrix, n_clusters=12, seed=0)

    def test_default_budget(self):
        manifest, clustering = self._clustered()
        report = prune_scip_combined(manifest, clustering)
        assert 198 <= report.docs_pruned <= 202
        assert report.fraction_docs == report.docs_pruned / 1000

    def test_small_stage_only(self):
        manifest, clustering = self._clustered()
        combined = prune_scip_combined(manifest, clustering, small_frac=0.16, far_frac=0.0)
        alone = prune_small_clusters(manifest, clustering, 0.16)
        assert np.array_equal(combined.pruned_ids, alone.pruned_ids)

    def test_far_stage_only(self):
        manifest, clustering = self._clustered()
        combined = prune_scip_combined(manifest, clustering, small_frac=0.0, far_frac=0.04)
        alone = prune_far_from_centroids(manifest, clustering, 0.04)
        assert np.array_equal(combined.pruned_ids, alone.pruned_ids)

    def test_stages_disjoint(self):
        manifest, clustering = self._clustered()
        small = prune_small_clusters(manifest, clustering, 0.16)
        far = prune_far_from_centroids(manifest, clustering, 0.04,
                                       exclude=small.pruned_ids)
        assert not set(small.pruned_ids) & set(far.pruned_ids)

    def test_budgets_must_fit(self):
        manifest, clustering = self._clustered(n=50)
        with pytest.raises(ValueError):
            prune_scip_combined(manifest, clustering, small_frac=0.9, far_frac=0.2)


class TestSemDedup:
    def test_identical_pair_keeps_lower_id(self):
        X = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]], dtype=np.float32)
        matrix = EmbeddingMatrix(X, normalized=True)
        clustering = toy_clustering([0, 0, 0], [0.0, 0.0, 0.3])
        report = prune_semdedup(make_manifest([10] * 3), matrix, clustering, 0.01)
        assert list(report.pruned_ids) == [1]

    def test_epsilon_zero_no_duplicates(self):
        rng = np.random.default_rng(16)
        manifest, matrix, clustering = random_clustered_corpus(rng, 60)
        report = prune_semdedup(manifest, matrix, clustering, 0.0)
        assert report.docs_pruned == 0

    def test_negative_epsilon(self):
        rng = np.random.default_rng(17)
        manifest, matrix, clustering = random_clustered_corpus(rng, 20)
        with pytest.raises(ValueError, match="epsilon"):
            prune_semdedup(manifest, matrix, clustering, -0.1)

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(18)
        for trial in range(6):
            n = int(rng.integers(40, 200))
            manifest, matrix, clustering = random_clustered_corpus(
                rng, n, duplicate_frac=0.1 if trial % 2 else 0.0)
            X64 = matrix.data.astype(np.float64)
            for epsilon in (0.01, 0.05, 0.2):
                report = prune_semdedup(manifest, matrix, clustering, epsilon)
                expected = oracle_semdedup(manifest, X64, clustering, epsilon)
                assert set(report.pruned_ids.tolist()) == expected

    def test_one_survivor_per_component(self):
        rng = np.random.default_rng(19)
        manifest, matrix, clustering = random_clustered_corpus(rng, 120, duplicate_frac=0.2)
        report = prune_semdedup(manifest, matrix, clustering, 0.05)
        X64 = matrix.data.astype(np.float64)
        # recompute components and check exactly one member survived from each
        pruned = set(report.pruned_ids.tolist())
        for cluster in range(clustering.n_clusters):
            members = [i for i in range(manifest.n_docs)
                       if clustering.assignment[i] == cluster]
            edges = {i: set() for i in members}
            for pos, a in enumerate(members):
                for b in members[pos + 1:]:
                    if 1.0 - float(np.dot(X64[a], X64[b])) <= 0.05:
                        edges[a].add(b)
                        edges[b].add(a)
            visited = set()
            for start in members:
                if start in visited:
                    continue
                component, queue = [], [start]
                visited.add(start)
                while queue:
                    node = queue.pop()
                    component.append(node)
                    queue.extend(v for v in edges[node] if v not in visited)
                    visited.update(edges[node])
                survivors = [i for i in component if i not in pruned]
                assert len(survivors) == 1


class TestSslPrototypes:
    def test_argmin_distance(self):
        clustering = toy_clustering([0, 0, 0], [0.1, 0.5, 0.2])
        report = prune_ssl_prototypes(make_manifest([10] * 3), clustering, 1 / 3)
        assert list(report.pruned_ids) == [0]

    def test_endpoints(self):
        clustering = toy_clustering([0, 0, 0], [0.1, 0.5, 0.2])
        manifest = make_manifest([10] * 3)
        assert prune_ssl_prototypes(manifest, clustering, 0.0).docs_pruned == 0
        assert prune_ssl_prototypes(manifest, clustering, 1.0).docs_pruned == 3


class TestD4:
    def test_no_duplicates_reduces_to_prototypes(self):
        rng = np.random.default_rng(20)
        manifest, matrix, clustering = random_clustered_corpus(rng, 80)
        combined = prune_d4(manifest, matrix, clustering, 0.0, 0.25)
        alone = prune_ssl_prototypes(manifest, clustering, 0.25)
        assert np.array_equal(combined.pruned_ids, alone.pruned_ids)

    def test_zero_fraction_reduces_to_semdedup(self):
        rng = np.random.default_rng(21)
        manifest, matrix, clustering = random_clustered_corpus(rng, 80, duplicate_frac=0.2)
        combined = prune_d4(manifest, matrix, clustering, 0.05, 0.0)
        alone = prune_semdedup(manifest, matrix, clustering, 0.05)
        assert np.array_equal(combined.pruned_ids, alone.pruned_ids)

    def test_matches_stage_composition_oracle(self):
        rng = np.random.default_rng(22)
        manifest, matrix, clustering = random_clustered_corpus(rng, 200, duplicate_frac=0.15)
        X64 = matrix.data.astype(np.float64)
        report = prune_d4(manifest, matrix, clustering, 0.05, 0.2)
        stage1 = oracle_semdedup(manifest, X64, clustering, 0.05)
        stage2 = oracle_ssl(manifest, clustering, 0.2, exclude=stage1)
        assert set(report.pruned_ids.tolist()) == stage1 | stage2


class TestSplitDiscipline:
    def _inputs(self, seed=23):
        rng = np.random.default_rng(seed)
        n = 120
        splits = (rng.random(n) < 0.25).astype(int)
        if not (splits == 0).any():
            splits[0] = 0
        manifest = make_manifest(rng.integers(1, 300, size=n), splits=splits)
        matrix = EmbeddingMatrix(random_unit_rows(rng, n, 6).astype(np.float32),
                                 normalized=True)
        clustering = kmeans(matrix, n_clusters=4, seed=0)
        return manifest, matrix, clustering

    def test_validation_never_pruned(self):
        manifest, matrix, clustering = self._inputs()
        validation = set(manifest.validation_ids.tolist())
        reports = [
            prune_length_top_tokens(manifest, 0.9),
            prune_length_shortest_tokens(manifest, 0.9),
            prune_random_docs(manifest, 0.9, seed=1),
            prune_small_clusters(manifest, clustering, 0.9),
            prune_far_from_centroids(manifest, clustering, 0.9),
            prune_scip_combined(manifest, clustering),
            prune_semdedup(manifest, matrix, clustering, 0.3),
            prune_ssl_prototypes(manifest, clustering, 0.9),
            prune_d4(manifest, matrix, clustering, 0.1, 0.1),
        ]
        for report in reports:
            assert not set(report.pruned_ids.tolist()) & validation
            assert report.docs_total == manifest.train_ids.size

    def test_empty_train_split_rejected(self):
        manifest = make_manifest([5, 6], splits=[1, 1])
        with pytest.raises(ValueError, match="train split"):
            prune_length_top_tokens(manifest, 0.5)


class TestReportInvariants:
    def test_fractions_exact_and_ids_sorted(self):
        rng = np.random.default_rng(24)
        manifest = make_manifest(rng.integers(1, 100, size=60))
        report = prune_random_docs(manifest, 0.4, seed=5)
        assert report.fraction_docs == report.docs_pruned / report.docs_total
        assert report.fraction_tokens == report.tokens_pruned / report.tokens_total
        ids = report.pruned_ids
        assert np.array_equal(ids, np.unique(ids))
        assert ids.size == report.docs_pruned

    def test_none_strategy(self):
        report = prune_none(make_manifest([5, 6, 7]))
        assert report.docs_pruned == 0
        assert report.fraction_tokens == 0.0


class TestAccountingTable:
    def test_rows_echo_reports(self):
        manifest = make_manifest([10, 10, 20, 60])
        rows = accounting_table([
            prune_none(manifest),
            prune_length_top_tokens(manifest, 0.2),
        ])
        assert [r.strategy for r in rows] == ["none", "length_top_tokens"]
        assert rows[1].fraction_tokens == 0.6
        text = format_accounting(rows)
        assert "length_top_tokens" in text

    def test_mixed_manifests_rejected(self):
        a = prune_none(make_manifest([10, 20]))
        b = prune_none(make_manifest([10, 20, 30]))
        with pytest.raises(ValueError, match="same manifest"):
            accounting_table([a, b])

    def test_empty(self):
        assert accounting_table([]) == []


class TestPrunerEstimator:
    def test_fit_transform_drops_pruned_train_docs(self):
        manifest = make_manifest([10, 10, 20, 60], splits=[0, 1, 0, 0])
        pruner = Pruner(strategy="length_top_tokens", tokens_frac=0.5)
        kept = pruner.fit_transform(manifest)
        assert pruner.report_.docs_pruned == 1
        assert kept.n_docs == 3
        assert 60 not in kept.token_counts
        assert kept.validation_ids.size == 1

    def test_unfitted_transform_raises(self):
        with pytest.raises(NotFittedError):
            Pruner().transform(make_manifest([5]))

    def test_get_params_and_clone(self):
        pruner = Pruner(strategy="semdedup", epsilon=0.07, seed=9)
        params = pruner.get_params()
        assert params["epsilon"] == 0.07
        copied = clone(pruner)
        assert copied.get_params() == params

    def test_unknown_strategy(self):
        with pytest.raises(ValueError, match="unknown strategy"):
            Pruner(strategy="mystery").fit(make_manifest([5]))

    def test_missing_resources(self):
        manifest = make_manifest([5, 6])
        with pytest.raises(ValueError, match="clustering"):
            Pruner(strategy="small_clusters", docs_frac=0.5).fit(manifest)
        with pytest.raises(ValueError, match="embedding"):
            Pruner(strategy="semdedup", epsilon=0.1).fit(
                manifest, clustering=toy_clustering([0, 0], [0.1, 0.2]))

    def test_missing_parameter(self):
        with pytest.raises(ValueError, match="tokens_frac"):
            Pruner(strategy="length_top_tokens").fit(make_manifest([5]))
