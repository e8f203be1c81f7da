from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from .exceptions import InfeasibleTargetError, InvalidSpecError, OutOfRangeError
from .vecstore import FeatureVector, VectorStore, normalize

logger = logging.getLogger(__name__)

GEN_BLOCK = 4096
PLANT_TOLERANCE = 0.02
PLANT_STEPS = 64
PLANT_RESAMPLES = 16


@dataclass(frozen=True)
class GenSpec:
    """Synthetic dataset description.

    `planted` holds ``(query_id, neighbor_count, target_similarity)`` entries;
    query ids are 1-based into `gen_queries(spec)`.
    """

    N: int
    d: int
    concentration: float = 0.05
    planted: tuple[tuple[int, int, float], ...] = field(default=())
    seed: int = 0
    queries: int = 0

    def __post_init__(self):
        if self.N < 1:
            raise InvalidSpecError(f"N must be >= 1. Got {self.N}.")
        if self.d < 1:
            raise InvalidSpecError(f"d must be >= 1. Got {self.d}.")
        if not self.concentration > 0:
            raise InvalidSpecError(
                f"Concentration must be positive. Got {self.concentration}."
            )
        if self.queries < 0:
            raise InvalidSpecError(f"Query count must be >= 0. Got {self.queries}.")
        total = 0
        for query_id, count, target in self.planted:
            if not 1 <= query_id <= self.query_count:
                raise InvalidSpecError(
                    f"Planted query id out of range. Expected 1..{self.query_count}. "
                    f"Got {query_id}."
                )
            if not 0 < target <= 1:
                raise InvalidSpecError(
                    f"Target similarity must be in (0, 1]. Got {target}."
                )
            if not 0 <= count <= self.N:
                raise InvalidSpecError(
                    f"Neighbor count must be in 0..{self.N}. Got {count}."
                )
            total += count
        if total > self.N:
            raise InvalidSpecError(
                f"Planted neighbors exceed the store size. Expected <= {self.N}. Got {total}."
            )

    @property
    def query_count(self) -> int:
        planted_max = max((query_id for query_id, _, _ in self.planted), default=0)
        return max(self.queries, planted_max)

    def streams(self) -> list[np.random.SeedSequence]:
        """Independent (store, queries, planting) substreams."""
        return np.random.SeedSequence(self.seed).spawn(3)


def dirichlet_unit_vectors(
    count: int, d: int, concentration: float, rng: np.random.Generator
) -> npt.NDArray[np.float32]:
    """Symmetric Dirichlet rows scaled to unit L2 norm."""
    rows = rng.dirichlet(np.full(d, concentration), size=count)
    norms = np.linalg.norm(rows, axis=1)
    bad = ~np.isfinite(norms) | (norms == 0)
    if bad.any():
        # very small concentrations can underflow every coordinate
        rows[bad] = 0.0
        rows[bad, rng.integers(0, d, size=int(bad.sum()))] = 1.0
        norms[bad] = 1.0
    return (rows / norms[:, None]).astype(np.float32)


def _generate_rows(spec: GenSpec, jobs: int = 1) -> npt.NDArray[np.float32]:
    blocks = list(range(0, spec.N, GEN_BLOCK))
    seeds = spec.streams()[0].spawn(len(blocks))

    def run(args):
        start, seed = args
        count = min(GEN_BLOCK, spec.N - start)
        return dirichlet_unit_vectors(
            count, spec.d, spec.concentration, np.random.default_rng(seed)
        )

    if jobs <= 1:
        parts = [run(args) for args in zip(blocks, seeds)]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            parts = list(executor.map(run, zip(blocks, seeds)))
    return np.vstack(parts)


def gen_queries(spec: GenSpec, count: int | None = None) -> npt.NDArray[np.float32]:
    """Query vectors from the store's Dirichlet regime on their own substream."""
    count = spec.query_count if count is None else count
    rng = np.random.default_rng(spec.streams()[1])
    return dirichlet_unit_vectors(count, spec.d, spec.concentration, rng)


def gen_store(spec: GenSpec, jobs: int = 1) -> VectorStore:
    """Deterministic under `spec.seed`, independent of `jobs`."""
    rows = _generate_rows(spec, jobs=jobs)
    if spec.planted:
        queries = gen_queries(spec)
        rng = np.random.default_rng(spec.streams()[2])
        total = sum(count for _, count, _ in spec.planted)
        targets = iter(rng.choice(spec.N, size=total, replace=False))
        for query_id, count, target in spec.planted:
            for _ in range(count):
                rows[next(targets)] = plant_neighbor(queries[query_id - 1], target, rng)
    store = VectorStore(spec.d, capacity=spec.N)
    store.extend(rows)
    logger.debug(
        "generated store N=%d d=%d concentration=%g planted=%d",
        spec.N,
        spec.d,
        spec.concentration,
        len(spec.planted),
    )
    return store


def plant_neighbor(
    base: npt.ArrayLike, s: float, rng: np.random.Generator | None = None
) -> FeatureVector:
    """Returns a non-negative unit vector v with cosine to `base` in [s, s + 0.02].

    Mixes `base` with a random non-negative unit vector and bisects the
    mixing weight.
    """
    if not 0 < s <= 1:
        raise OutOfRangeError(f"Target similarity must be in (0, 1]. Got {s}.")
    rng = rng or np.random.default_rng()
    given = np.asarray(base, dtype=np.float64).ravel()
    unit = normalize(given).astype(np.float64)
    if s == 1:
        return normalize(given)

    def similarity(v: FeatureVector) -> float:
        return float(np.dot(v.astype(np.float64), unit))

    own = normalize(unit)
    if s <= similarity(own) <= s + PLANT_TOLERANCE:
        return own

    for _ in range(PLANT_RESAMPLES):
        other = rng.dirichlet(np.ones(unit.size))
        other /= np.linalg.norm(other)
        if np.dot(unit, other) < s:
            break
    else:
        other = np.zeros_like(unit)
        other[np.argmin(unit)] = 1.0
        if np.dot(unit, other) >= s:
            raise InfeasibleTargetError(
                f"No non-negative direction is below similarity {s} from this base."
            )

    low, high = s + 0.001, s + PLANT_TOLERANCE - 0.001
    lo, hi = 0.0, 1.0
    candidate = own
    for _ in range(PLANT_STEPS):
        t = (lo + hi) / 2
        candidate = normalize((1 - t) * unit + t * other)
        value = similarity(candidate)
        if value > high:
            lo = t
        elif value < low:
            hi = t
        else:
            break
    value = similarity(candidate)
    if not s <= value <= s + PLANT_TOLERANCE:
        raise InfeasibleTargetError(
            f"Could not reach similarity [{s}, {s + PLANT_TOLERANCE}]. Got {value}."
        )
    return candidate
