import csv
import tempfile
from pathlib import Path
from unittest import TestCase

import numpy as np

from gtnn.bench import (
    RECORD_COLUMNS,
    BenchReport,
    compare_theory,
    precision_recall,
    run_static,
    run_streaming,
    summary_lines,
    write_csv,
    write_results,
    write_stats,
    write_summary,
)
from gtnn.datagen import GenSpec, gen_queries, gen_store
from gtnn.exceptions import EmptyStoreError, ExactnessError, OutOfRangeError
from gtnn.index_sum import SumIndex
from gtnn.search import search_batch
from gtnn.vecstore import VectorStore

from .fixtures import four_vector_store


class TestPrecisionRecall(TestCase):
    def test_conventions(self):
        self.assertEqual(precision_recall([], []), (1.0, 1.0))
        self.assertEqual(precision_recall([1, 2], [1, 2]), (1.0, 1.0))
        self.assertEqual(precision_recall([1, 2], [1]), (0.5, 1.0))
        self.assertEqual(precision_recall([1], [1, 2, 3, 4]), (1.0, 0.25))
        self.assertEqual(precision_recall([], [3]), (1.0, 0.0))


class TestRunStatic(TestCase):
    @classmethod
    def setUpClass(cls):
        spec = GenSpec(N=3000, d=32, concentration=0.05, planted=((1, 4, 0.8),), queries=8)
        cls.store = gen_store(spec)
        cls.queries = gen_queries(spec)

    def test_all_variants_exact(self):
        report = run_static(self.store, self.queries, 0.8)
        self.assertTrue(report.exact)
        report.check()
        self.assertEqual(set(report.aggregates), {"sum", "max", "exhaustive"})
        self.assertEqual(len(report.records), 3 * 8)
        for summary in report.aggregates.values():
            self.assertEqual(summary.queries, 8)
            self.assertEqual(summary.precision, 1.0)
            self.assertEqual(summary.recall, 1.0)
        self.assertEqual(report.aggregates["exhaustive"].mean_dot_products, 3000)
        self.assertEqual(report.aggregates["exhaustive"].speedup, 1.0)
        self.assertGreaterEqual(report.records[0].result_size, 4)

    def test_histograms_conserve_mass(self):
        report = run_static(self.store, self.queries, 0.8, variants=("sum", "max"))
        for variant in ("sum", "max"):
            records = [r for r in report.records if r.variant == variant]
            histograms = report.histograms[variant]
            self.assertEqual(len(histograms["pruned_per_round"]), 13)
            self.assertGreater(histograms["expanded_per_round"][0], 0)
            self.assertGreater(sum(r.dot_products for r in records), 0)

    def test_reuses_given_index(self):
        index = SumIndex.build(self.store)
        report = run_static(
            self.store, self.queries, 0.8, variants=("sum",), indexes={"sum": index}
        )
        self.assertEqual(set(report.aggregates), {"sum"})

    def test_empty_store(self):
        self.assertRaises(EmptyStoreError, run_static, VectorStore(dim=2), [[1.0, 0.0]], 0.5)

    def test_check_raises_on_mismatch(self):
        report = BenchReport(N=4, d=2, rho=0.5, mismatches=[("sum", 1)])
        self.assertFalse(report.exact)
        self.assertRaises(ExactnessError, report.check)


class TestSpeedup(TestCase):
    def test_sharp_decay_beats_exhaustive(self):
        spec = GenSpec(N=2**17, d=128, concentration=0.01, queries=10, seed=11)
        store = gen_store(spec)
        queries = gen_queries(spec)
        report = run_static(store, queries, 0.8)
        report.theory = compare_theory(store, queries, 0.8, static=report)
        self.assertTrue(report.exact)
        self.assertGreaterEqual(report.theory["lambda"], 30)
        self.assertLessEqual(report.aggregates["sum"].mean_dot_products, store.count / 4)
        self.assertGreater(report.aggregates["sum"].speedup, 4)


class TestRunStreaming(TestCase):
    def test_inserts_and_queries_stay_exact(self):
        store = gen_store(GenSpec(N=10_000, d=16, concentration=0.05, seed=3))
        report = run_streaming(0.8, 100, store, 0.8, seed=1)
        self.assertTrue(report.exact)
        self.assertEqual(report.streaming["initial"], 8000)
        self.assertEqual(report.streaming["inserted"], 2000)
        self.assertEqual(report.streaming["queries"], 20)
        self.assertEqual(report.streaming["additions_per_point"], [16])
        self.assertTrue(all(r.recall == 1.0 for r in report.records))
        self.assertTrue(all(r.result_size >= 1 for r in report.records))

    def test_given_queries(self):
        store = gen_store(GenSpec(N=500, d=8, seed=4))
        queries = store.vectors[:3]
        report = run_streaming(0.5, 50, store, 0.9, queries=queries)
        self.assertEqual(report.streaming["queries"], 5)
        self.assertTrue(report.exact)

    def test_invalid_arguments(self):
        store = four_vector_store()
        self.assertRaises(OutOfRangeError, run_streaming, 1.0, 1, store, 0.5)
        self.assertRaises(OutOfRangeError, run_streaming, 0.5, 0, store, 0.5)
        self.assertRaises(EmptyStoreError, run_streaming, 0.1, 1, store, 0.5)


class TestCompareTheory(TestCase):
    def test_keys(self):
        spec = GenSpec(N=4096, d=64, concentration=0.05, queries=10, seed=9)
        store = gen_store(spec)
        record = compare_theory(
            store, gen_queries(spec), 0.8, sample_size=20_000, simulate_trials=64
        )
        for key in (
            "lambda",
            "lambda_se",
            "empirical_sum",
            "expected_sum",
            "ratio_sum",
            "empirical_max",
            "c_percentile",
            "c",
            "expected_max_ub",
            "max_within_bound",
            "simulated_sum",
        ):
            self.assertIn(key, record)
        self.assertGreater(record["lambda"], 0)
        self.assertGreaterEqual(record["c"], 1.0)
        self.assertAlmostEqual(
            record["ratio_sum"], record["empirical_sum"] / record["expected_sum"]
        )

    def test_model_tracks_moderate_decay(self):
        """At concentration 0.05 the sampled dot products are close to a
        truncated exponential, so both predictions hold on data.
        """
        spec = GenSpec(N=2**15, d=128, concentration=0.05, queries=10, seed=11)
        store = gen_store(spec)
        record = compare_theory(store, gen_queries(spec), 0.8)
        self.assertGreaterEqual(record["ratio_sum"], 0.65)
        self.assertLessEqual(record["ratio_sum"], 1.35)
        self.assertTrue(record["max_within_bound"])


class TestWriters(TestCase):
    def setUp(self):
        self.store = four_vector_store()
        self.queries = np.array([[1.0, 0.0], [0.0, 1.0]])
        self.tmpdir = tempfile.TemporaryDirectory()
        self.path = Path(self.tmpdir.name)

    def tearDown(self):
        self.tmpdir.cleanup()

    def test_write_csv(self):
        report = run_static(self.store, self.queries, 0.7)
        write_csv(report, self.path / "bench.csv")
        with open(self.path / "bench.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        self.assertEqual(tuple(rows[0].keys()), RECORD_COLUMNS)
        self.assertEqual(len(rows), 6)
        self.assertEqual(rows[0]["variant"], "sum")

    def test_write_summary(self):
        report = run_static(self.store, self.queries, 0.7, variants=("sum",))
        report.streaming = {"inserted": 3, "additions_per_point": [2]}
        write_summary(report, self.path / "summary.txt")
        lines = (self.path / "summary.txt").read_text().splitlines()
        self.assertEqual(lines, summary_lines(report))
        self.assertIn("N=4", lines)
        self.assertIn("exact=True", lines)
        self.assertIn("streaming.additions_per_point=2", lines)
        self.assertTrue(any(line.startswith("sum.mean_dot_products=") for line in lines))
        self.assertTrue(any(line.startswith("sum.pruned_per_round=") for line in lines))

    def test_write_results_and_stats(self):
        results = search_batch(SumIndex.build(self.store), self.queries, 0.7)
        write_results(results, self.path / "results.csv")
        with open(self.path / "results.csv", newline="") as f:
            rows = list(csv.reader(f))
        self.assertEqual(rows[0], ["query_id", "neighbor_id", "similarity"])
        pairs = [(r[0], r[1]) for r in rows[1:]]
        self.assertEqual(pairs, [("1", "1"), ("1", "3"), ("2", "2"), ("2", "3"), ("2", "4")])
        write_stats(results, self.path / "stats.txt")
        stats = (self.path / "stats.txt").read_text()
        self.assertIn("1.result_size=2", stats)
        self.assertIn("2.dot_products=", stats)
