from unittest import TestCase

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from gtnn.exceptions import DimensionMismatchError, UnsupportedNegativeQueryError
from gtnn.index_max import MaxIndex
from gtnn.index_sum import SumIndex
from gtnn.search import (
    round_count,
    search_batch,
    search_exhaustive,
    search_max,
    search_sum,
)
from gtnn.vecstore import VectorStore, exact_dot

from .fixtures import RHOS, four_vector_store, random_instances, random_store


def check_stats(testcase, result, variant):
    stats = result.stats
    testcase.assertEqual(
        stats.visited_pools,
        stats.pruned + stats.expanded + int(stats.resolved_per_round.sum()),
    )
    testcase.assertEqual(len(stats.pruned_per_round), stats.rounds + 1)
    if variant == "sum":
        testcase.assertEqual(
            stats.dot_products,
            1 + stats.expanded + stats.pair_leaves + stats.verifications,
        )
    else:
        testcase.assertEqual(stats.dot_products, 1 + 2 * (stats.expanded + stats.pair_leaves))


class TestSearchExamples(TestCase):
    def setUp(self):
        self.store = four_vector_store()
        self.q = np.array([1.0, 0.0])

    def test_sum(self):
        result = search_sum(SumIndex.build(self.store), self.q, 0.7)
        self.assertEqual(result.neighbor_ids, (1, 3))
        check_stats(self, result, "sum")

    def test_max(self):
        result = search_max(MaxIndex.build(self.store), self.q, 0.7)
        self.assertEqual(result.neighbor_ids, (1, 3))
        check_stats(self, result, "max")

    def test_exhaustive(self):
        result = search_exhaustive(self.store, self.q, 0.7)
        self.assertEqual(result.neighbor_ids, (1, 3))
        self.assertEqual(result.stats.dot_products, 4)
        self.assertAlmostEqual(result.similarities[1], 0.7071, places=4)

    def test_rho_above_one_is_empty(self):
        self.assertEqual(search_sum(SumIndex.build(self.store), self.q, 1.01).neighbor_ids, ())
        self.assertEqual(search_max(MaxIndex.build(self.store), self.q, 1.01).neighbor_ids, ())
        self.assertEqual(search_exhaustive(self.store, self.q, 1.01).neighbor_ids, ())

    def test_single_vector(self):
        store = VectorStore.from_array([[0.6, 0.8]])
        q = store[1]
        self.assertEqual(search_max(MaxIndex.build(store), q, 0.5).neighbor_ids, (1,))
        self.assertEqual(search_exhaustive(store, q, 0.9).neighbor_ids, (1,))
        result = search_sum(SumIndex.build(store), q, 0.9)
        self.assertEqual(result.neighbor_ids, (1,))
        self.assertEqual(result.stats.dot_products, 1)
        self.assertEqual(result.stats.rounds, 0)

    def test_tie_at_rho_is_a_neighbor(self):
        rng = np.random.default_rng(11)
        store = random_store(rng, 37, 6)
        q = store[20].astype(np.float64)
        rho = exact_dot(store[20], q)
        for result in (
            search_sum(SumIndex.build(store), q, rho),
            search_max(MaxIndex.build(store), q, rho),
            search_exhaustive(store, q, rho),
        ):
            self.assertIn(20, result.neighbor_ids)

    def test_dimension_mismatch(self):
        q = np.ones(3)
        by_sum, by_max = SumIndex.build(self.store), MaxIndex.build(self.store)
        self.assertRaises(DimensionMismatchError, search_sum, by_sum, q, 0.5)
        self.assertRaises(DimensionMismatchError, search_max, by_max, q, 0.5)
        self.assertRaises(DimensionMismatchError, search_exhaustive, self.store, q, 0.5)

    def test_sum_rejects_store_with_negatives(self):
        store = VectorStore.from_array([[1.0, -1.0], [1.0, 1.0]], allow_negative=True)
        self.assertRaises(
            UnsupportedNegativeQueryError, search_sum, SumIndex.build(store), [1.0, 0.0], 0.5
        )

    def test_sum_rejects_negative_query(self):
        store = VectorStore.from_array([[1.0, 0.0], [0.0, 1.0]])
        q = np.array([1.0, -0.5]) / np.linalg.norm([1.0, -0.5])
        self.assertEqual(search_exhaustive(store, q, 0.8).neighbor_ids, (1,))
        self.assertRaises(
            UnsupportedNegativeQueryError, search_sum, SumIndex.build(store), q, 0.8
        )
        self.assertRaises(
            UnsupportedNegativeQueryError, search_batch, SumIndex.build(store), [q], 0.8
        )

    def test_max_with_negative_values(self):
        rng = np.random.default_rng(5)
        store = VectorStore.from_array(rng.normal(size=(64, 5)), allow_negative=True)
        index = MaxIndex.build(store)
        for _ in range(20):
            q = rng.normal(size=5)
            q /= np.linalg.norm(q)
            self.assertEqual(
                search_max(index, q, 0.5).neighbor_ids,
                search_exhaustive(store, q, 0.5).neighbor_ids,
            )

    def test_round_count(self):
        self.assertEqual(round_count(1), 0)
        self.assertEqual(round_count(2), 1)
        self.assertEqual(round_count(512), 9)
        self.assertEqual(round_count(513), 10)


class TestSearchExactness(TestCase):
    def test_random_instances_match_exhaustive(self):
        for store, q, rho in random_instances(seed=2024, count=1000):
            expected = search_exhaustive(store, q, rho)
            by_sum = search_sum(SumIndex.build(store), q, rho)
            trace = []
            by_max = search_max(MaxIndex.build(store), q, rho, trace=trace)
            self.assertEqual(by_sum.neighbor_ids, expected.neighbor_ids)
            self.assertEqual(by_max.neighbor_ids, expected.neighbor_ids)
            check_stats(self, by_sum, "sum")
            check_stats(self, by_max, "max")
            self.assertLessEqual(by_max.stats.dot_products, 2 * store.count - 1)
            for si, ei, _, bound in trace:
                best = (store.vectors[si - 1 : ei].astype(np.float64) @ q).max()
                self.assertGreaterEqual(bound, best - 1e-12)

    @given(
        n=st.integers(min_value=1, max_value=128),
        d=st.integers(min_value=2, max_value=32),
        seed=st.integers(min_value=0, max_value=2**32 - 1),
        rho=st.sampled_from(RHOS),
        concentration=st.sampled_from([0.01, 0.2, 2.0]),
    )
    @settings(max_examples=200, deadline=None)
    def test_property_oracle_equivalence(self, n, d, seed, rho, concentration):
        rng = np.random.default_rng(seed)
        store = random_store(rng, n, d, concentration)
        q = store[int(rng.integers(1, n + 1))]
        expected = search_exhaustive(store, q, rho).neighbor_ids
        self.assertEqual(search_sum(SumIndex.build(store), q, rho).neighbor_ids, expected)
        self.assertEqual(search_max(MaxIndex.build(store), q, rho).neighbor_ids, expected)

    def test_monotone_in_rho(self):
        rng = np.random.default_rng(99)
        store = random_store(rng, 400, 12, 0.1)
        index = SumIndex.build(store)
        for _ in range(20):
            q = store[int(rng.integers(1, 401))]
            results = [search_sum(index, q, rho) for rho in RHOS]
            for low, high in zip(results, results[1:]):
                self.assertLessEqual(set(high.neighbor_ids), set(low.neighbor_ids))
                self.assertLessEqual(
                    high.stats.dot_products - high.stats.verifications,
                    low.stats.dot_products - low.stats.verifications,
                )

    def test_pruned_pools_hold_no_neighbor(self):
        rng = np.random.default_rng(8)
        store = random_store(rng, 300, 10, 0.1)
        index = MaxIndex.build(store)
        for _ in range(20):
            q = store[int(rng.integers(1, 301))].astype(np.float64)
            trace = []
            search_max(index, q, 0.7, trace=trace)
            for si, ei, _, bound in trace:
                if bound < 0.7:
                    dots = store.vectors[si - 1 : ei].astype(np.float64) @ q
                    self.assertTrue(np.all(dots < 0.7))


class TestSearchBatch(TestCase):
    def test_threads_preserve_query_order(self):
        rng = np.random.default_rng(4)
        store = random_store(rng, 256, 8)
        queries = store.vectors[:32]
        index = SumIndex.build(store)
        sequential = search_batch(index, queries, 0.8, variant="sum")
        threaded = search_batch(index, queries, 0.8, variant="sum", jobs=4)
        self.assertEqual(
            [r.neighbor_ids for r in sequential], [r.neighbor_ids for r in threaded]
        )
        self.assertTrue(all(r.wall_time >= 0 for r in threaded))

    def test_invalid_variant(self):
        store = four_vector_store()
        self.assertRaises(ValueError, search_batch, store, [[1.0, 0.0]], 0.5, variant="knn")
