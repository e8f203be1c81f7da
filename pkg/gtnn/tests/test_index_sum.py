import tempfile
from pathlib import Path
from unittest import TestCase

import numpy as np

from gtnn.exceptions import (
    BadMagicError,
    DimensionMismatchError,
    EmptyStoreError,
    NegativeValueError,
    RangeOutOfBoundsError,
)
from gtnn.index_sum import SumIndex, guard_epsilon
from gtnn.vecstore import VectorStore

from .fixtures import random_store


class TestSumIndex(TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(7)
        self.store = random_store(self.rng, 100, 8)

    def test_prefix_rows(self):
        index = SumIndex.build(self.store)
        self.assertEqual(index.prefix.shape, (101, 8))
        np.testing.assert_array_equal(index.prefix[0], np.zeros(8))
        np.testing.assert_allclose(
            index.prefix[-1], self.store.vectors.astype(np.float64).sum(axis=0)
        )

    def test_pool_dot_matches_member_sum(self):
        index = SumIndex.build(self.store)
        q = self.rng.random(8)
        for si, ei in [(1, 1), (1, 100), (17, 63), (100, 100)]:
            expected = float(self.store.vectors[si - 1 : ei].astype(np.float64).sum(0) @ q)
            self.assertAlmostEqual(index.pool_dot(q, si, ei), expected, places=10)

    def test_invalid_range(self):
        index = SumIndex.build(self.store)
        for si, ei in [(0, 5), (5, 4), (1, 101)]:
            self.assertRaises(RangeOutOfBoundsError, index.pool_dot, np.ones(8), si, ei)

    def test_empty_store(self):
        self.assertRaises(EmptyStoreError, SumIndex.build, VectorStore(dim=3))

    def test_append_matches_rebuild(self):
        initial = VectorStore.from_array(self.store.vectors[:60])
        index = SumIndex.build(initial)
        for v in self.store.vectors[60:]:
            index.append(initial[initial.append(v)])
        rebuilt = SumIndex.build(self.store)
        self.assertEqual(index.count, 100)
        np.testing.assert_allclose(index.prefix, rebuilt.prefix, atol=1e-5)

    def test_append_costs_d_additions(self):
        index = SumIndex.build(self.store)
        for i in range(5):
            before = index.additions
            index.append(self.store[i + 1])
            self.assertEqual(index.additions - before, 8)

    def test_append_leaves_earlier_rows(self):
        index = SumIndex.build(self.store)
        before = index.prefix.copy()
        index.append(self.store[1])
        np.testing.assert_array_equal(index.prefix[:101], before)

    def test_append_dimension_mismatch(self):
        index = SumIndex.build(self.store)
        self.assertRaises(DimensionMismatchError, index.append, np.ones(3, np.float32))
        self.assertEqual(index.count, 100)

    def test_append_checks_store_rules(self):
        index = SumIndex.build(self.store)
        negative = np.full(8, 0.5, np.float32)
        negative[0] = -0.5
        self.assertRaises(NegativeValueError, index.append, negative)
        self.assertEqual(index.count, 100)
        before = index.prefix[-1].copy()
        index.append(np.full(8, 3.0))
        np.testing.assert_allclose(index.prefix[-1] - before, np.full(8, 8**-0.5), rtol=1e-6)

    def test_sync(self):
        index = SumIndex.build(self.store)
        self.store.append(np.ones(8))
        self.assertEqual(index.sync(), 1)
        self.assertEqual(index.count, self.store.count)

    def test_save_and_load(self):
        index = SumIndex.build(self.store)
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "index.gtns"
            index.save(path)
            loaded = SumIndex.load(path, self.store)
            np.testing.assert_array_equal(loaded.prefix, index.prefix)
            self.store.save(Path(tmpdir) / "store.gtnn")
            other = Path(tmpdir) / "store.gtnn"
            self.assertRaises(BadMagicError, SumIndex.load, other, self.store)

    def test_load_longer_than_store(self):
        index = SumIndex.build(self.store)
        short = VectorStore.from_array(self.store.vectors[:10])
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "index.gtns"
            index.save(path)
            self.assertRaises(RangeOutOfBoundsError, SumIndex.load, path, short)

    def test_guard_epsilon(self):
        self.assertEqual(guard_epsilon(1), 1e-6)
        self.assertEqual(guard_epsilon(2), 1e-6)
        self.assertAlmostEqual(guard_epsilon(1024), 1e-5)
        self.assertAlmostEqual(guard_epsilon(1025), 1.1e-5)
