import math
from collections import Counter

import numpy as np
import pandas as pd
import pytest

from datastore import build_graph
from social_analytics import (
    CategoryVector,
    InsufficientPairsError,
    SimilarityError,
    all_vectors,
    category_vector,
    cohort_similarity,
    cosine,
    sample_connected_pairs,
    sample_random_pairs,
)


class TestCosine:
    def test_partial_overlap(self, small_dataset):
        alice = category_vector(small_dataset, 'alice', 1)
        carol = category_vector(small_dataset, 'carol', 1)
        assert alice == {'Books': 2, 'Pet Supplies': 2}
        assert cosine(alice, carol) == pytest.approx(1 / math.sqrt(2))

    def test_disjoint_and_identical(self, small_dataset):
        alice = category_vector(small_dataset, 'alice', 3)
        bob = category_vector(small_dataset, 'bob', 3)
        assert cosine(alice, bob) == 0.0
        assert cosine(bob, bob) == pytest.approx(1.0)

    def test_plain_counters(self):
        assert cosine(Counter(a=3, b=4), Counter(a=3, b=4)) == pytest.approx(1.0)
        assert cosine(Counter(a=1), Counter(b=1)) == 0.0

    @pytest.mark.parametrize('scale', [2, 7, 1000])
    def test_scale_invariant(self, small_dataset, scale):
        alice = category_vector(small_dataset, 'alice', 2)
        scaled = CategoryVector({k: scale * n for k, n in alice.items()}, 2)
        assert cosine(alice, scaled) == pytest.approx(1.0)

    def test_symmetric(self, small_dataset):
        vectors = all_vectors(small_dataset, 1)
        for a in vectors:
            for b in vectors:
                assert cosine(vectors[a], vectors[b]) == cosine(vectors[b], vectors[a])

    def test_level_mismatch(self):
        with pytest.raises(SimilarityError):
            cosine(CategoryVector({'x': 1}, 1), CategoryVector({'x': 1}, 2))

    def test_empty_vector(self):
        with pytest.raises(SimilarityError):
            cosine(Counter(), Counter(a=1))

    def test_user_without_purchases(self, small_dataset):
        with pytest.raises(SimilarityError):
            category_vector(small_dataset, 'dave', 1)
        with pytest.raises(SimilarityError):
            category_vector(small_dataset, 'alice', 'item')

    def test_all_vectors_matches_single(self, small_dataset):
        vectors = all_vectors(small_dataset, 2)
        assert sorted(vectors) == ['alice', 'bob', 'carol']
        for user, vec in vectors.items():
            assert vec == category_vector(small_dataset, user, 2)
            assert vec.level == 2


def ring_graph(n):
    users = [f'u{i:02d}' for i in range(n)]
    edges = pd.DataFrame({'src': users, 'dst': users[1:] + users[:1], 'count': 5})
    return build_graph(edges), set(users)


class TestPairSampling:
    def test_connected_pairs_are_edges(self):
        graph, users = ring_graph(10)
        pairs = sample_connected_pairs(graph, users, 6, np.random.default_rng(0))
        assert len(pairs) == len(set(pairs)) == 6
        assert all(graph.has_edge(a, b) for a, b in pairs)

    def test_random_pairs_avoid_edges(self):
        graph, users = ring_graph(10)
        # 45 pairs in total, 10 of them on the ring
        pairs = sample_random_pairs(graph, users, 35, np.random.default_rng(0))
        assert len(set(pairs)) == 35
        assert not any(graph.has_edge(a, b) for a, b in pairs)
        assert all(a < b for a, b in pairs)

    def test_too_few_pairs(self):
        graph, users = ring_graph(10)
        with pytest.raises(InsufficientPairsError):
            sample_connected_pairs(graph, users, 11, np.random.default_rng(0))
        with pytest.raises(InsufficientPairsError):
            sample_random_pairs(graph, users, 36, np.random.default_rng(0))

    def test_ineligible_users_excluded(self):
        graph, users = ring_graph(10)
        pairs = sample_connected_pairs(graph, {'u00', 'u01', 'u02'}, 2, np.random.default_rng(3))
        assert sorted(pairs) == [('u00', 'u01'), ('u01', 'u02')]


class TestCohortSimilarity:
    def test_small_graph(self, small_dataset, small_graph):
        report = cohort_similarity(small_dataset, small_graph, 1, seed=0)
        frame = report.rows
        assert set(frame['cohort']) == {'connected', 'random'}
        assert list(frame['level']) == [1, 1, 2, 2, 3, 3]
        # bob and carol are the only shopper pair without a retained edge
        assert report.mean(1, 'random') == 0.0
        connected = report.mean(1, 'connected')
        assert connected == 0.0 or connected == pytest.approx(1 / math.sqrt(2))
        assert math.isnan(report.lift(1))

    def test_gender_partition_of_one_pair(self, small_dataset, small_graph):
        rows = cohort_similarity(small_dataset, small_graph, 1, seed=0, by_gender=True).rows
        parts = rows[rows['cohort'].isin(['ff', 'mm', 'fm'])]
        # alice-bob is mixed, alice-carol is two women
        assert len(parts) == 3
        assert parts['cohort'].nunique() == 1
        assert parts['cohort'].iloc[0] in ('ff', 'fm')

    def test_random_side_runs_out(self, small_dataset, small_graph):
        with pytest.raises(InsufficientPairsError):
            cohort_similarity(small_dataset, small_graph, 2, seed=0)

    def test_not_enough_connected_pairs(self, small_dataset, small_graph):
        with pytest.raises(InsufficientPairsError):
            cohort_similarity(small_dataset, small_graph, 3, seed=0)

    def test_bad_pair_count(self, small_dataset, small_graph):
        with pytest.raises(SimilarityError):
            cohort_similarity(small_dataset, small_graph, 0, seed=0)

    def test_seeded_and_partitioned(self, synth_small):
        dataset, graph, _ = synth_small
        a = cohort_similarity(dataset, graph, 50, seed=4, by_gender=True)
        b = cohort_similarity(dataset, graph, 50, seed=4, by_gender=True)
        pd.testing.assert_frame_equal(a.rows, b.rows)
        frame = a.to_frame()
        for level in (1, 2, 3):
            at_level = frame[frame['level'] == level].set_index('cohort')
            assert at_level.loc['connected', 'n'] == at_level.loc['random', 'n'] == 50
            parts = [c for c in ('ff', 'mm', 'fm') if c in at_level.index]
            assert sum(at_level.loc[c, 'n'] for c in parts) <= 50
            assert ((at_level['mean'] >= 0) & (at_level['mean'] <= 1)).all()
        assert frame['lift'].notna().sum() == 3
