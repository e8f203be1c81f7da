from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import numpy.typing as npt

from .exceptions import DimensionMismatchError, UnsupportedNegativeQueryError
from .index_max import MaxIndex
from .index_sum import SumIndex, guard_epsilon
from .vecstore import VectorStore, exact_dot

logger = logging.getLogger(__name__)

# exhaustive scan entries this close to rho are recomputed row by row
TIE_TOLERANCE = 1e-9

VARIANTS = ("sum", "max", "exhaustive")


def round_count(count: int) -> int:
    """Depth of the splitting tree, ``ceil(log2 N)``."""
    return math.ceil(math.log2(count)) if count > 1 else 0


@dataclass
class SearchStats:
    """Per-query instrumentation.

    A visited pool is pruned, expanded or resolved (singleton or pair leaf),
    recorded at its depth in the splitting tree.
    """

    rounds: int
    dot_products: int = 0
    visited_pools: int = 0
    verifications: int = 0
    pair_leaves: int = 0
    pruned_per_round: npt.NDArray[np.int64] = None
    expanded_per_round: npt.NDArray[np.int64] = None
    resolved_per_round: npt.NDArray[np.int64] = None

    def __post_init__(self):
        for name in ("pruned_per_round", "expanded_per_round", "resolved_per_round"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(self.rounds + 1, dtype=np.int64))

    @property
    def expanded(self) -> int:
        return int(self.expanded_per_round.sum())

    @property
    def pruned(self) -> int:
        return int(self.pruned_per_round.sum())

    def visit(self, histogram: npt.NDArray[np.int64], depth: int) -> None:
        histogram[depth] += 1
        self.visited_pools += 1


@dataclass
class QueryResult:
    neighbor_ids: tuple[int, ...]
    stats: SearchStats
    similarities: tuple[float, ...] = field(default=())
    wall_time: float = 0.0

    def __len__(self):
        return len(self.neighbor_ids)

    def records(self, query_id: int):
        """Yields ``(query_id, neighbor_id, similarity)`` rows."""
        for neighbor_id, similarity in zip(self.neighbor_ids, self.similarities):
            yield query_id, neighbor_id, similarity


def as_query(q: npt.ArrayLike, dim: int) -> npt.NDArray[np.float64]:
    query = np.asarray(q, dtype=np.float64).ravel()
    if query.size != dim:
        raise DimensionMismatchError(f"Dimension mismatch. Expected {dim}. Got {query.size}.")
    return query


def _result(found: list[tuple[int, float]], stats: SearchStats) -> QueryResult:
    found.sort()
    return QueryResult(
        neighbor_ids=tuple(i for i, _ in found),
        stats=stats,
        similarities=tuple(s for _, s in found),
    )


def search_sum(index: SumIndex, q: npt.ArrayLike, rho: float) -> QueryResult:
    """Iterative binary splitting over sum pools.

    Each expansion costs one dot product: the right child's similarity is
    read off the prefix sums and the left child's is the parent's minus it.
    """
    if index.store.allow_negative:
        raise UnsupportedNegativeQueryError(
            "Sum pools cannot prune over a store that allows negative values. "
            "Use the max index."
        )
    query = as_query(q, index.dim)
    if np.any(query < 0):
        raise UnsupportedNegativeQueryError(
            "Sum pools cannot prune a query with negative coordinates. Use the max index."
        )
    count = index.count
    prefix = index.prefix
    vectors = index.store.vectors
    eps = guard_epsilon(count)
    stats = SearchStats(rounds=round_count(count))
    found: list[tuple[int, float]] = []

    def decide(i: int, sim: float, exact: bool) -> None:
        if not exact and abs(sim - rho) <= eps:
            sim = exact_dot(vectors[i - 1], query)
            stats.verifications += 1
            stats.dot_products += 1
        if sim >= rho:
            found.append((i, sim))

    stats.dot_products = 1
    stack = [(1, count, float(np.dot(prefix[count] - prefix[0], query)), 0)]
    while stack:
        si, ei, sim, depth = stack.pop()
        if sim < rho - eps:
            stats.visit(stats.pruned_per_round, depth)
            continue
        n = ei - si + 1
        if n == 1:
            stats.visit(stats.resolved_per_round, depth)
            decide(si, sim, exact=count == 1)
        elif n == 2:
            stats.visit(stats.resolved_per_round, depth)
            stats.pair_leaves += 1
            stats.dot_products += 1
            rsim = exact_dot(vectors[ei - 1], query)
            decide(si, sim - rsim, exact=False)
            if rsim >= rho:
                found.append((ei, rsim))
        else:
            stats.visit(stats.expanded_per_round, depth)
            mid = si + n // 2 - 1
            rsim = float(np.dot(prefix[ei] - prefix[mid], query))
            stats.dot_products += 1
            stack.append((mid + 1, ei, rsim, depth + 1))
            stack.append((si, mid, sim - rsim, depth + 1))
    logger.debug(
        "search_sum N=%d rho=%g dots=%d found=%d",
        count,
        rho,
        stats.dot_products,
        len(found),
    )
    return _result(found, stats)


def search_max(
    index: MaxIndex,
    q: npt.ArrayLike,
    rho: float,
    trace: list | None = None,
) -> QueryResult:
    """Iterative binary splitting over max pools.

    Both children of an expanded node need their own bound. If `trace` is a
    list, ``(si, ei, depth, bound)`` is appended for every visited pool.
    """
    q_pos, q_neg = index.split_query(q)
    query = q_pos if q_neg is None else q_pos + q_neg
    shape = index.shape
    vectors = index.store.vectors
    eps = guard_epsilon(index.count)
    stats = SearchStats(rounds=round_count(index.count))
    found: list[tuple[int, float]] = []

    stats.dot_products = 1
    stack = [(0, index.bound(0, q_pos, q_neg))]
    while stack:
        node, bound = stack.pop()
        si, ei = int(shape.starts[node]), int(shape.ends[node])
        depth = int(shape.depth[node])
        if trace is not None:
            trace.append((si, ei, depth, bound))
        if bound < rho - eps:
            stats.visit(stats.pruned_per_round, depth)
            continue
        n = ei - si + 1
        if n == 1:
            # a singleton's bound is its exact dot product
            stats.visit(stats.resolved_per_round, depth)
            if bound >= rho:
                found.append((si, bound))
        elif n == 2:
            stats.visit(stats.resolved_per_round, depth)
            stats.pair_leaves += 1
            stats.dot_products += 2
            for i in (si, ei):
                sim = exact_dot(vectors[i - 1], query)
                if sim >= rho:
                    found.append((i, sim))
        else:
            stats.visit(stats.expanded_per_round, depth)
            left, right = int(shape.left[node]), int(shape.right[node])
            stats.dot_products += 2
            stack.append((right, index.bound(right, q_pos, q_neg)))
            stack.append((left, index.bound(left, q_pos, q_neg)))
    logger.debug(
        "search_max N=%d rho=%g dots=%d found=%d",
        index.count,
        rho,
        stats.dot_products,
        len(found),
    )
    return _result(found, stats)


def search_exhaustive(store: VectorStore, q: npt.ArrayLike, rho: float) -> QueryResult:
    """Scores every vector. The oracle the other variants are checked against."""
    query = as_query(q, store.dim)
    vectors = store.vectors
    stats = SearchStats(rounds=round_count(store.count))
    sims = vectors.astype(np.float64) @ query
    for i in np.flatnonzero(np.abs(sims - rho) <= TIE_TOLERANCE):
        sims[i] = exact_dot(vectors[i], query)
    ids = np.flatnonzero(sims >= rho)
    stats.dot_products = store.count
    stats.visited_pools = store.count
    stats.resolved_per_round[-1] = store.count
    return QueryResult(
        neighbor_ids=tuple(int(i) + 1 for i in ids),
        stats=stats,
        similarities=tuple(float(sims[i]) for i in ids),
    )


def get_search(variant: str) -> Callable[..., QueryResult]:
    try:
        return {"sum": search_sum, "max": search_max, "exhaustive": search_exhaustive}[variant]
    except KeyError:
        raise ValueError(f"Invalid variant. Expected one of {VARIANTS}. Got {variant!r}.")


def search_batch(
    target: SumIndex | MaxIndex | VectorStore,
    queries: Sequence[npt.ArrayLike] | npt.NDArray,
    rho: float,
    variant: str = "sum",
    jobs: int = 1,
) -> list[QueryResult]:
    """Runs one search per query, in query order.

    `target` is the index for "sum" and "max", the store for "exhaustive".
    Searches only read, so `jobs` > 1 runs them on a thread pool.
    """
    search = get_search(variant)

    def run(q):
        start = time.perf_counter()
        result = search(target, q, rho)
        result.wall_time = time.perf_counter() - start
        return result

    if jobs <= 1:
        return [run(q) for q in queries]
    with ThreadPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(run, queries))
