from __future__ import annotations

import logging
import math
import threading
import time
from pathlib import Path

import numpy as np
import numpy.typing as npt

from . import container
from .conf import settings
from .exceptions import (
    DimensionMismatchError,
    EmptyStoreError,
    RangeOutOfBoundsError,
)
from .vecstore import FeatureVector, VectorStore

logger = logging.getLogger(__name__)


def guard_epsilon(count: int) -> float:
    """Slack below rho under which a pool is pruned, scaled with the tree depth."""
    scale = getattr(settings, "GTNN_GUARD_SCALE", 1e-6)
    return scale * max(1, math.ceil(math.log2(max(count, 1))))


class SumIndex:
    """Cumulative sums ``prefix[i] = f_1 + ... + f_i`` kept in float64.

    ``prefix[0]`` is the zero vector so that any contiguous pool is
    ``prefix[ei] - prefix[si - 1]``.
    """

    magic = container.SUM_INDEX_MAGIC

    def __init__(self, store: VectorStore, prefix: npt.NDArray[np.float64], count: int):
        self.store = store
        self.dim = store.dim
        self._prefix = prefix
        self._count = count
        self._lock = threading.Lock()
        self.additions = 0

    def __repr__(self):
        return f"{self.__class__.__name__}(dim={self.dim}, count={self.count})"

    @property
    def count(self) -> int:
        return self._count

    @property
    def prefix(self) -> npt.NDArray[np.float64]:
        """Read-only (count + 1, dim) view, row 0 is zero."""
        view = self._prefix[: self._count + 1]
        view.flags.writeable = False
        return view

    @classmethod
    def build(cls, store: VectorStore) -> SumIndex:
        if store.count < 1:
            raise EmptyStoreError("Cannot build a sum index over an empty store.")
        start = time.perf_counter()
        prefix = np.zeros((store.count + 1, store.dim), dtype=np.float64)
        np.cumsum(store.vectors, axis=0, dtype=np.float64, out=prefix[1:])
        logger.debug(
            "built sum index N=%d d=%d in %.3fs",
            store.count,
            store.dim,
            time.perf_counter() - start,
        )
        return cls(store, prefix, store.count)

    def pool_vector(self, si: int, ei: int) -> npt.NDArray[np.float64]:
        self._check_range(si, ei)
        return self._prefix[ei] - self._prefix[si - 1]

    def pool_dot(self, q: npt.ArrayLike, si: int, ei: int) -> float:
        """Returns ``q . (f_si + ... + f_ei)`` with one subtraction and one dot product."""
        return float(np.dot(self.pool_vector(si, ei), np.asarray(q, dtype=np.float64)))

    def append(self, v: FeatureVector) -> None:
        """Adds ``prefix[N + 1] = prefix[N] + v`` without touching earlier rows.

        `v` is checked against the store's rules: negative values are rejected
        and a vector off the unit sphere is normalized.
        """
        vector = self.store.validate(v)
        with self._lock:
            if self._count + 1 == self._prefix.shape[0]:
                grown = np.zeros((self._prefix.shape[0] * 2, self.dim), dtype=np.float64)
                grown[: self._count + 1] = self._prefix[: self._count + 1]
                self._prefix = grown
            np.add(
                self._prefix[self._count],
                vector.astype(np.float64),
                out=self._prefix[self._count + 1],
            )
            self.additions += vector.size
            self._count += 1

    def sync(self) -> int:
        """Appends store vectors not yet indexed. Returns how many were added."""
        added = 0
        while self._count < self.store.count:
            self.append(self.store[self._count + 1])
            added += 1
        return added

    def _check_range(self, si: int, ei: int) -> None:
        if not 1 <= si <= ei <= self._count:
            raise RangeOutOfBoundsError(
                f"Invalid pool range. Expected 1 <= si <= ei <= {self._count}. "
                f"Got si={si}, ei={ei}."
            )

    def save(self, path: str | Path) -> None:
        container.write(path, self.magic, self.prefix[1:], self._count)

    @classmethod
    def load(cls, path: str | Path, store: VectorStore) -> SumIndex:
        header, payload = container.read(path, cls.magic)
        if header.dim != store.dim:
            raise DimensionMismatchError(
                f"Index dimension does not match store. Expected {store.dim}. "
                f"Got {header.dim}."
            )
        if header.count > store.count:
            raise RangeOutOfBoundsError(
                f"Index covers more vectors than the store holds. "
                f"Expected <= {store.count}. Got {header.count}."
            )
        prefix = np.zeros((header.count + 1, header.dim), dtype=np.float64)
        prefix[1:] = payload
        return cls(store, prefix, header.count)
