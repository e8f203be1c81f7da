"""Cost model for binary splitting when query dot products follow a
truncated normalized exponential (TNE) on [0, 1].
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
from scipy import optimize, special, stats

from .exceptions import (
    DegenerateSamplesError,
    InvalidCError,
    InvalidLambdaError,
    InvalidNError,
    NoValidPoolsError,
    OutOfRangeError,
)
from .index_max import MaxIndex, TreeShape
from .search import search_max
from .vecstore import VectorStore

logger = logging.getLogger(__name__)

CLT_MIN_POOL = 6
FIT_MIN_SAMPLES = 100
FIT_BRACKET = (1e-6, 1e4)
SIMULATION_CHUNK = 64


def check_lambda(lam: float) -> float:
    if not (np.isfinite(lam) and lam > 0):
        raise InvalidLambdaError(f"Decay rate must be a positive number. Got {lam}.")
    return float(lam)


def tne(lam: float):
    """Frozen scipy distribution for TNE(lam)."""
    lam = check_lambda(lam)
    return stats.truncexpon(b=lam, scale=1.0 / lam)


def _scalar(value):
    return float(value) if np.ndim(value) == 0 else value


def tne_pdf(x: npt.ArrayLike, lam: float):
    return _scalar(tne(lam).pdf(x))


def tne_cdf(x: npt.ArrayLike, lam: float):
    return _scalar(tne(lam).cdf(x))


def tne_rvs(lam: float, size, rng: np.random.Generator | None = None):
    return tne(lam).rvs(size=size, random_state=rng)


def tne_moments(lam: float) -> tuple[float, float]:
    """Returns (mean, variance) without cancellation near 0 or overflow for large lam."""
    lam = check_lambda(lam)
    if lam < 1e-4:
        return 0.5 - lam / 12.0, 1.0 / 12.0 - lam**2 / 720.0
    if lam > 700:
        return 1.0 / lam, 1.0 / lam**2
    mean = 1.0 / lam - 1.0 / math.expm1(lam)
    variance = 1.0 / lam**2 - 1.0 / (4.0 * math.sinh(lam / 2.0) ** 2)
    return mean, variance


@dataclass(frozen=True)
class TneModel:
    lam: float
    n: int | None = None

    def __post_init__(self):
        check_lambda(self.lam)

    @property
    def mean(self) -> float:
        return tne_moments(self.lam)[0]

    @property
    def variance(self) -> float:
        return tne_moments(self.lam)[1]

    @property
    def standard_error(self) -> float | None:
        """Delta-method standard error of the fitted lam, 1 / sqrt(n * Var)."""
        if not self.n:
            return None
        return 1.0 / math.sqrt(self.n * self.variance)

    def pdf(self, x):
        return tne_pdf(x, self.lam)

    def cdf(self, x):
        return tne_cdf(x, self.lam)

    def rvs(self, size, rng: np.random.Generator | None = None):
        return tne_rvs(self.lam, size, rng)

    def records(self) -> dict[str, float | int | None]:
        return {"lambda": self.lam, "n": self.n, "standard_error": self.standard_error}


def _erlang_cdf(x: float, shape: float, lam: float) -> float:
    return float(stats.gamma.cdf(x, a=shape, scale=1.0 / lam))


def _prune_prob_exact(size: int, rho: float, lam: float) -> float:
    """P(sum of `size` TNE <= rho) by inclusion-exclusion over members above 1."""
    # terms in log space; the normalizer underflows for large pools and small lam
    log_norm = size * math.log(-math.expm1(-lam))
    total = 0.0
    for k in range(min(int(math.floor(rho)), size) + 1):
        log_comb = (
            special.gammaln(size + 1) - special.gammaln(k + 1) - special.gammaln(size - k + 1)
        )
        log_cdf = float(stats.gamma.logcdf(rho - k, a=size, scale=1.0 / lam))
        total += (-1) ** k * math.exp(log_comb - lam * k + log_cdf - log_norm)
    return total


def prune_prob(L: float, rho: float, lam: float, method: str = "clt") -> float:
    """Probability that a sum pool of `L` members scores below `rho`.

    method="clt": Gaussian for L >= 6, otherwise the Erlang(L, lam) CDF at rho
    renormalized by its mass on [0, L]. method="exact": inclusion-exclusion,
    integer L only (fractional L falls back to "clt").
    """
    lam = check_lambda(lam)
    if L < 1:
        raise OutOfRangeError(f"Pool size must be >= 1. Got {L}.")
    if rho <= 0:
        raise OutOfRangeError(f"Threshold must be positive. Got {rho}.")
    if method not in ("clt", "exact"):
        raise ValueError(f"Invalid method. Expected 'clt' or 'exact'. Got {method!r}.")
    if rho >= L:
        return 1.0
    if L == 1:
        return tne_cdf(rho, lam)
    if method == "exact" and float(L).is_integer():
        value = _prune_prob_exact(int(L), rho, lam)
    elif L >= CLT_MIN_POOL:
        mean, variance = tne_moments(lam)
        value = float(special.ndtr((rho - L * mean) / math.sqrt(L * variance)))
    else:
        value = _erlang_cdf(rho, L, lam) / _erlang_cdf(L, L, lam)
    return min(max(value, 0.0), 1.0)


@dataclass(frozen=True)
class CostPrediction:
    expected_tests: float
    per_round_pools: tuple[float, ...]
    variant: str
    inputs: dict = field(default_factory=dict)

    def records(self) -> dict:
        return {"variant": self.variant, **self.inputs, "expected_tests": self.expected_tests}


def _round_sizes(N: float) -> list[float]:
    """Pool sizes N / 2**(k - 2) for rounds k = 2 .. ceil(log2(N) + 1)."""
    last = math.ceil(math.log2(N) + 1)
    return [N / 2 ** (k - 2) for k in range(2, last + 1)]


def _check_n(N: float) -> None:
    if N < 2:
        raise InvalidNError(f"Database size must be >= 2. Got {N}.")


def expected_tests_sum(
    N: float, rho: float, lam: float, method: str = "clt"
) -> CostPrediction:
    """Expected dot products per query with sum pools; half the alive pools per round."""
    _check_n(N)
    check_lambda(lam)
    pools, previous = [], 1.0
    for size in _round_sizes(N):
        previous = 2.0 * (1.0 - prune_prob(size, rho, lam, method=method)) * previous
        pools.append(previous)
    expected = 1.0 + 0.5 * sum(pools)
    logger.info("expected_tests_sum N=%s rho=%s lambda=%s -> %.1f", N, rho, lam, expected)
    return CostPrediction(
        expected_tests=expected,
        per_round_pools=tuple(pools),
        variant="sum",
        inputs={"N": N, "rho": rho, "lambda": lam, "method": method},
    )


def expected_tests_max_ub(N: float, rho: float, lam: float, c: float) -> CostPrediction:
    """Upper-bound style prediction for max pools whose bound is at most `c` times
    the best member. Both children are scored on expansion, so there is no
    factor one half.
    """
    _check_n(N)
    check_lambda(lam)
    if not c >= 1:
        raise InvalidCError(f"Ratio c must be >= 1. Got {c}.")
    member = 1.0 if rho / c >= 1 else tne_cdf(rho / c, lam)
    pools, previous = [], 1.0
    for size in _round_sizes(N):
        previous = 2.0 * (1.0 - member**size) * previous
        pools.append(previous)
    expected = 1.0 + sum(pools)
    logger.info(
        "expected_tests_max_ub N=%s rho=%s lambda=%s c=%s -> %.1f", N, rho, lam, c, expected
    )
    return CostPrediction(
        expected_tests=expected,
        per_round_pools=tuple(pools),
        variant="max_upper_bound",
        inputs={"N": N, "rho": rho, "lambda": lam, "c": c},
    )


def fit_lambda(samples: npt.ArrayLike) -> TneModel:
    """Fits lam by matching the model mean to the sample mean (the MLE here)."""
    values = np.asarray(samples, dtype=np.float64).ravel()
    if values.size < FIT_MIN_SAMPLES:
        raise OutOfRangeError(
            f"Too few samples. Expected >= {FIT_MIN_SAMPLES}. Got {values.size}."
        )
    if not np.all(np.isfinite(values)) or values.min() < 0 or values.max() > 1:
        raise OutOfRangeError("Samples must lie in [0, 1].")
    target = float(values.mean())
    if not 0 < target < 0.5:
        raise DegenerateSamplesError(
            f"Sample mean must be in (0, 0.5) for a positive decay rate. Got {target}."
        )

    def residual(lam):
        return tne_moments(lam)[0] - target

    low, high = FIT_BRACKET
    if residual(low) * residual(high) > 0:
        raise DegenerateSamplesError(
            f"No decay rate in [{low}, {high}] matches the sample mean {target}."
        )
    lam = optimize.brentq(residual, low, high, xtol=1e-14, rtol=1e-15, maxiter=500)
    if abs(residual(lam)) >= 1e-9:
        raise DegenerateSamplesError(f"Fit did not converge. Residual {residual(lam)}.")
    model = TneModel(lam=float(lam), n=int(values.size))
    logger.info("fitted lambda=%.4f (se=%.4f, n=%d)", model.lam, model.standard_error, model.n)
    return model


def sample_dots(
    store: VectorStore, queries: npt.ArrayLike, size: int, rng: np.random.Generator
) -> npt.NDArray[np.float64]:
    """Dot products of random (query, stored vector) pairs, clipped to [0, 1]."""
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    qi = rng.integers(0, queries.shape[0], size=size)
    vi = rng.integers(0, store.count, size=size)
    dots = np.einsum("ij,ij->i", queries[qi], store.vectors[vi].astype(np.float64))
    return np.clip(dots, 0.0, 1.0)


def c_ratios(
    index: MaxIndex, queries: npt.ArrayLike, rho: float
) -> npt.NDArray[np.float64]:
    """Bound over best-member dot for each pool search_max visits, skipping
    pools whose best member is not positive.
    """
    vectors = index.store.vectors
    ratios = []
    for q in np.atleast_2d(np.asarray(queries, dtype=np.float64)):
        trace: list = []
        search_max(index, q, rho, trace=trace)
        for si, ei, _, bound in trace:
            best = float(np.max(vectors[si - 1 : ei].astype(np.float64) @ q))
            if best > 0:
                ratios.append(bound / best)
    return np.asarray(ratios, dtype=np.float64)


def c_percentile(
    store: VectorStore,
    queries: npt.ArrayLike,
    pct: float = 90.0,
    rho: float = 0.8,
    index: MaxIndex | None = None,
) -> float:
    if not 0 < pct < 100:
        raise OutOfRangeError(f"Percentile must be in (0, 100). Got {pct}.")
    index = index or MaxIndex.build(store)
    ratios = c_ratios(index, queries, rho)
    if ratios.size == 0:
        raise NoValidPoolsError("No visited pool has a positive best-member dot product.")
    return float(np.percentile(ratios, pct))


def _simulate_chunk(
    shape: TreeShape,
    seeds: list[np.random.SeedSequence],
    rho: float,
    lam: float,
    variant: str,
    c: float,
) -> int:
    """Scalar splitting for a chunk of trials, one level of the tree at a time.

    Returns the total dot products over the chunk.
    """
    N = int(shape.ends[0])
    distribution = tne(lam)
    values = np.empty((N, len(seeds)), dtype=np.float64)
    for t, seed in enumerate(seeds):
        values[:, t] = distribution.rvs(size=N, random_state=np.random.default_rng(seed))
    if variant == "sum":
        prefix = np.zeros((N + 1, len(seeds)), dtype=np.float64)
        np.cumsum(values, axis=0, out=prefix[1:])
        score = prefix[N] - prefix[0]
    else:
        pool_max = MaxIndex._reduce(values, shape, np.maximum, dtype=np.float64)
        score = c * pool_max[0] if N > 1 else values[0]

    trials = np.arange(len(seeds))
    nodes = np.zeros(len(seeds), dtype=np.int64)
    total = len(seeds)
    while trials.size:
        keep = score >= rho
        trials, nodes, score = trials[keep], nodes[keep], score[keep]
        sizes = shape.ends[nodes] - shape.starts[nodes] + 1
        pairs = sizes == 2
        expand = sizes > 2
        per_node = 1 if variant == "sum" else 2
        total += per_node * int(pairs.sum()) + per_node * int(expand.sum())

        trials, nodes, score = trials[expand], nodes[expand], score[expand]
        left, right = shape.left[nodes], shape.right[nodes]
        if variant == "sum":
            right_score = (
                prefix[shape.ends[right], trials] - prefix[shape.starts[right] - 1, trials]
            )
            left_score = score - right_score
        else:
            left_score, right_score = (
                np.where(
                    shape.ends[child] == shape.starts[child],
                    values[shape.starts[child] - 1, trials],
                    c * pool_max[child, trials],
                )
                for child in (left, right)
            )
        trials = np.concatenate([trials, trials])
        nodes = np.concatenate([left, right])
        score = np.concatenate([left_score, right_score])
    return total


def simulate_splitting(
    N: int,
    rho: float,
    lam: float,
    trials: int,
    seed: int = 0,
    variant: str = "sum",
    c: float = 1.0,
    jobs: int = 1,
) -> float:
    """Monte-Carlo mean dot products of scalar binary splitting over N i.i.d. TNE values.

    variant="sum" matches search_sum accounting. variant="max" scores a pool as
    ``c * max`` and pays two dot products per expansion and per alive pair.
    Each trial draws from its own SeedSequence child, so results do not depend
    on `jobs`.
    """
    check_lambda(lam)
    if N < 1:
        raise InvalidNError(f"Database size must be >= 1. Got {N}.")
    if trials < 1:
        raise OutOfRangeError(f"Trials must be >= 1. Got {trials}.")
    if variant not in ("sum", "max"):
        raise ValueError(f"Invalid variant. Expected 'sum' or 'max'. Got {variant!r}.")
    if not c > 0:
        raise InvalidCError(f"Ratio c must be positive. Got {c}.")
    shape = TreeShape.for_count(int(N))
    seeds = np.random.SeedSequence(seed).spawn(trials)
    chunks = [seeds[i : i + SIMULATION_CHUNK] for i in range(0, trials, SIMULATION_CHUNK)]

    def run(chunk):
        return _simulate_chunk(shape, chunk, rho, lam, variant, c)

    if jobs <= 1:
        totals = [run(chunk) for chunk in chunks]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            totals = list(executor.map(run, chunks))
    mean = sum(totals) / trials
    logger.info(
        "simulate_splitting N=%d rho=%s lambda=%s variant=%s trials=%d -> %.1f",
        N,
        rho,
        lam,
        variant,
        trials,
        mean,
    )
    return mean
