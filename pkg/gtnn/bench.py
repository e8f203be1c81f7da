from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import numpy.typing as npt

from .datagen import plant_neighbor
from .exceptions import EmptyStoreError, ExactnessError, OutOfRangeError
from .index_max import MaxIndex
from .index_sum import SumIndex
from .search import QueryResult, search_batch, search_exhaustive, search_sum
from .theory import (
    c_percentile,
    expected_tests_max_ub,
    expected_tests_sum,
    fit_lambda,
    sample_dots,
    simulate_splitting,
)
from .vecstore import VectorStore

logger = logging.getLogger(__name__)

RECORD_COLUMNS = (
    "query_id",
    "variant",
    "dot_products",
    "wall_time",
    "result_size",
    "precision",
    "recall",
)
HISTOGRAMS = ("pruned_per_round", "expanded_per_round", "resolved_per_round")


@dataclass
class QueryRecord:
    query_id: int
    variant: str
    dot_products: int
    wall_time: float
    result_size: int
    precision: float
    recall: float


@dataclass
class VariantSummary:
    queries: int
    mean_dot_products: float
    mean_wall_time: float
    precision: float
    recall: float
    speedup: float


@dataclass
class BenchReport:
    """Everything a bench run measured. Precision and recall are always
    recomputed against the exhaustive scan of the same instance.
    """

    N: int
    d: int
    rho: float
    records: list[QueryRecord] = field(default_factory=list)
    aggregates: dict[str, VariantSummary] = field(default_factory=dict)
    histograms: dict[str, dict[str, npt.NDArray[np.int64]]] = field(default_factory=dict)
    theory: dict | None = None
    streaming: dict | None = None
    mismatches: list[tuple[str, int]] = field(default_factory=list)

    @property
    def exact(self) -> bool:
        return not self.mismatches

    def check(self) -> None:
        if self.mismatches:
            raise ExactnessError(
                f"Search results disagree with the exhaustive scan for "
                f"{len(self.mismatches)} (variant, query) pairs. "
                f"First {self.mismatches[:5]}."
            )

    def summarize(self) -> None:
        """Recomputes `aggregates` from `records`."""
        by_variant: dict[str, list[QueryRecord]] = {}
        for record in self.records:
            by_variant.setdefault(record.variant, []).append(record)
        for variant, records in by_variant.items():
            mean_dots = float(np.mean([r.dot_products for r in records]))
            self.aggregates[variant] = VariantSummary(
                queries=len(records),
                mean_dot_products=mean_dots,
                mean_wall_time=float(np.mean([r.wall_time for r in records])),
                precision=float(np.mean([r.precision for r in records])),
                recall=float(np.mean([r.recall for r in records])),
                speedup=self.N / mean_dots if mean_dots else math.inf,
            )


def precision_recall(found: Iterable[int], truth: Iterable[int]) -> tuple[float, float]:
    """Empty result against empty truth counts as perfect."""
    found, truth = set(found), set(truth)
    hits = len(found & truth)
    precision = hits / len(found) if found else 1.0
    recall = hits / len(truth) if truth else 1.0
    return precision, recall


def _add_histograms(report: BenchReport, variant: str, result: QueryResult) -> None:
    histograms = report.histograms.setdefault(
        variant,
        {name: np.zeros_like(getattr(result.stats, name)) for name in HISTOGRAMS},
    )
    for name in HISTOGRAMS:
        histograms[name] += getattr(result.stats, name)


def build_index(store: VectorStore, variant: str) -> SumIndex | MaxIndex | VectorStore:
    if variant == "sum":
        return SumIndex.build(store)
    if variant == "max":
        return MaxIndex.build(store)
    return store


def run_static(
    store: VectorStore,
    queries: Sequence[npt.ArrayLike] | npt.NDArray,
    rho: float,
    variants: Sequence[str] = ("sum", "max", "exhaustive"),
    indexes: dict | None = None,
    jobs: int = 1,
) -> BenchReport:
    """Runs every query through each variant and scores it against the exhaustive scan."""
    if store.count < 1:
        raise EmptyStoreError("Cannot benchmark an empty store.")
    indexes = dict(indexes or {})
    report = BenchReport(N=store.count, d=store.dim, rho=rho)
    truth = search_batch(store, queries, rho, variant="exhaustive", jobs=jobs)
    for variant in variants:
        if variant == "exhaustive":
            results = truth
        else:
            target = indexes.get(variant) or build_index(store, variant)
            results = search_batch(target, queries, rho, variant=variant, jobs=jobs)
        for query_id, (result, expected) in enumerate(zip(results, truth), start=1):
            precision, recall = precision_recall(result.neighbor_ids, expected.neighbor_ids)
            if precision != 1.0 or recall != 1.0:
                logger.warning(
                    "%s search disagrees with the exhaustive scan on query %d "
                    "(precision=%.4f, recall=%.4f)",
                    variant,
                    query_id,
                    precision,
                    recall,
                )
                report.mismatches.append((variant, query_id))
            report.records.append(
                QueryRecord(
                    query_id=query_id,
                    variant=variant,
                    dot_products=result.stats.dot_products,
                    wall_time=result.wall_time,
                    result_size=len(result),
                    precision=precision,
                    recall=recall,
                )
            )
            _add_histograms(report, variant, result)
    report.summarize()
    for variant, summary in report.aggregates.items():
        logger.info(
            "%s: %d queries, mean dot products %.1f (speedup %.2f), precision %.3f, "
            "recall %.3f",
            variant,
            summary.queries,
            summary.mean_dot_products,
            summary.speedup,
            summary.precision,
            summary.recall,
        )
    return report


def run_streaming(
    initial_fraction: float,
    batch: int,
    store: VectorStore,
    rho: float,
    queries: Sequence[npt.ArrayLike] | npt.NDArray | None = None,
    seed: int = 0,
) -> BenchReport:
    """Indexes the first `initial_fraction` of `store`, then alternates
    appending `batch` vectors with firing one sum-variant query.

    Without `queries`, each query perturbs a random stored vector to
    similarity `rho`, so it has at least one true neighbor.
    """
    if not 0 < initial_fraction < 1:
        raise OutOfRangeError(f"Initial fraction must be in (0, 1). Got {initial_fraction}.")
    if batch < 1:
        raise OutOfRangeError(f"Batch must be >= 1. Got {batch}.")
    initial = int(store.count * initial_fraction)
    if initial < 1:
        raise EmptyStoreError(
            f"Initial fraction {initial_fraction} of {store.count} vectors is empty."
        )
    rng = np.random.default_rng(seed)
    live = VectorStore(store.dim, allow_negative=store.allow_negative, capacity=store.count)
    live.extend(store.vectors[:initial])
    index = SumIndex.build(live)
    report = BenchReport(N=store.count, d=store.dim, rho=rho)
    insert_times, additions = [], set()

    position, query_id = initial, 0
    while position < store.count:
        for v in store.vectors[position : position + batch]:
            start = time.perf_counter()
            before = index.additions
            index.append(live[live.append(v)])
            insert_times.append(time.perf_counter() - start)
            additions.add(index.additions - before)
        position = live.count

        query_id += 1
        if queries is not None and len(queries):
            q = queries[(query_id - 1) % len(queries)]
        else:
            base = live[int(rng.integers(1, live.count + 1))]
            q = plant_neighbor(base, rho, rng) if rho <= 1 else base
        start = time.perf_counter()
        result = search_sum(index, q, rho)
        wall_time = time.perf_counter() - start
        expected = search_exhaustive(live, q, rho)
        precision, recall = precision_recall(result.neighbor_ids, expected.neighbor_ids)
        if precision != 1.0 or recall != 1.0:
            logger.warning("streaming query %d disagrees with the exhaustive scan", query_id)
            report.mismatches.append(("sum", query_id))
        report.records.append(
            QueryRecord(
                query_id=query_id,
                variant="sum",
                dot_products=result.stats.dot_products,
                wall_time=wall_time,
                result_size=len(result),
                precision=precision,
                recall=recall,
            )
        )
        _add_histograms(report, "sum", result)
        logger.debug("streaming: %d vectors indexed, query %d", live.count, query_id)

    report.summarize()
    report.streaming = {
        "initial": initial,
        "batch": batch,
        "queries": query_id,
        "inserted": len(insert_times),
        "mean_insert_time": float(np.mean(insert_times)) if insert_times else 0.0,
        "additions_per_point": sorted(additions),
        "exact": report.exact,
    }
    logger.info(
        "streaming: %d inserts, %d queries, additions per point %s",
        len(insert_times),
        query_id,
        sorted(additions),
    )
    return report


def compare_theory(
    store: VectorStore,
    queries: Sequence[npt.ArrayLike] | npt.NDArray,
    rho: float,
    sample_size: int = 100_000,
    pct: float = 90.0,
    seed: int = 0,
    simulate_trials: int = 0,
    static: BenchReport | None = None,
) -> dict:
    """Empirical mean dot products of each variant against the model predictions.

    Lambda is fitted on dot products sampled from random (query, vector) pairs.
    """
    rng = np.random.default_rng(seed)
    model = fit_lambda(sample_dots(store, queries, sample_size, rng))
    if static is None or not {"sum", "max"} <= static.aggregates.keys():
        static = run_static(store, queries, rho, variants=("sum", "max"))
    empirical_sum = static.aggregates["sum"].mean_dot_products
    empirical_max = static.aggregates["max"].mean_dot_products
    expected_sum = expected_tests_sum(store.count, rho, model.lam).expected_tests
    c_90 = max(c_percentile(store, queries, pct=pct, rho=rho), 1.0)
    expected_max = expected_tests_max_ub(store.count, rho, model.lam, c_90).expected_tests
    record = {
        "lambda": model.lam,
        "lambda_se": model.standard_error,
        "empirical_sum": empirical_sum,
        "expected_sum": expected_sum,
        "ratio_sum": empirical_sum / expected_sum,
        "empirical_max": empirical_max,
        "c_percentile": pct,
        "c": c_90,
        "expected_max_ub": expected_max,
        "max_within_bound": empirical_max <= expected_max,
    }
    if simulate_trials:
        record["simulated_sum"] = simulate_splitting(
            store.count, rho, model.lam, simulate_trials, seed=seed
        )
    logger.info("theory comparison %s", record)
    return record


def write_csv(report: BenchReport, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=RECORD_COLUMNS)
        writer.writeheader()
        for record in report.records:
            writer.writerow(asdict(record))


def _format(value) -> str:
    if isinstance(value, (list, tuple, np.ndarray)):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def summary_lines(report: BenchReport) -> list[str]:
    lines = [f"N={report.N}", f"d={report.d}", f"rho={report.rho!r}", f"exact={report.exact}"]
    for variant, summary in report.aggregates.items():
        lines.extend(f"{variant}.{k}={_format(v)}" for k, v in asdict(summary).items())
    for variant, histograms in report.histograms.items():
        lines.extend(f"{variant}.{k}={_format(v)}" for k, v in histograms.items())
    for prefix, block in (("theory", report.theory), ("streaming", report.streaming)):
        if block:
            lines.extend(f"{prefix}.{k}={_format(v)}" for k, v in block.items())
    return lines


def write_summary(report: BenchReport, path: str | Path) -> None:
    Path(path).write_text("\n".join(summary_lines(report)) + "\n")


def write_results(results: Sequence[QueryResult], path: str | Path) -> None:
    """One ``query_id,neighbor_id,similarity`` row per neighbor."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("query_id", "neighbor_id", "similarity"))
        for query_id, result in enumerate(results, start=1):
            writer.writerows(result.records(query_id))


def write_stats(results: Sequence[QueryResult], path: str | Path) -> None:
    lines = []
    for query_id, result in enumerate(results, start=1):
        stats = result.stats
        lines.extend(
            [
                f"{query_id}.dot_products={stats.dot_products}",
                f"{query_id}.visited_pools={stats.visited_pools}",
                f"{query_id}.verifications={stats.verifications}",
                f"{query_id}.result_size={len(result)}",
                f"{query_id}.pruned_per_round={_format(stats.pruned_per_round)}",
            ]
        )
    Path(path).write_text("\n".join(lines) + "\n")
