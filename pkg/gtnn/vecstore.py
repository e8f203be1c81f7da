from __future__ import annotations

import logging
import threading
from pathlib import Path
from typing import Iterable

import numpy as np
import numpy.typing as npt

from . import container
from .conf import settings
from .exceptions import (
    DimensionMismatchError,
    NegativeValueError,
    RangeOutOfBoundsError,
    VectorParseError,
    ZeroVectorError,
)

logger = logging.getLogger(__name__)

FeatureVector = npt.NDArray[np.float32]

INITIAL_CAPACITY = 64


def normalize(v: npt.ArrayLike, allow_negative: bool = False) -> FeatureVector:
    """Returns `v` scaled to unit L2 norm as float32.

    The norm is computed in float64 before the cast.
    """
    values = np.asarray(v, dtype=np.float64).ravel()
    if values.size < 1:
        raise DimensionMismatchError("Vector must have at least one element.")
    if not np.all(np.isfinite(values)):
        raise ZeroVectorError("Vector has non-finite elements.")
    if not allow_negative and np.any(values < 0):
        raise NegativeValueError(
            f"Negative values are not allowed. Got min={values.min():.6g}."
        )
    norm = float(np.linalg.norm(values))
    if norm == 0.0:
        raise ZeroVectorError("Cannot normalize a zero vector.")
    return (values / norm).astype(np.float32)


def is_unit(v: npt.ArrayLike, tolerance: float | None = None) -> bool:
    if tolerance is None:
        tolerance = getattr(settings, "GTNN_NORM_TOLERANCE", 1e-6)
    norm = float(np.linalg.norm(np.asarray(v, dtype=np.float64)))
    return abs(norm - 1.0) <= tolerance


def exact_dot(row: npt.ArrayLike, q: npt.NDArray[np.float64]) -> float:
    """The single float64 row dot product every exact decision is made with."""
    return float(np.dot(np.asarray(row, dtype=np.float64), q))


class VectorStore:
    """Ordered, append-only collection of unit-norm feature vectors.

    Indices are 1-based: vector ``i`` is ``store[i]`` for ``1 <= i <= count``.
    Appends take a lock (single writer); readers never block.
    """

    magic = container.STORE_MAGIC

    def __init__(self, dim: int, allow_negative: bool = False, capacity: int | None = None):
        if dim < 1:
            raise DimensionMismatchError(f"Dimension must be >= 1. Got {dim}.")
        self.dim = int(dim)
        self.allow_negative = bool(allow_negative)
        self._data = np.empty((max(capacity or INITIAL_CAPACITY, 1), self.dim), np.float32)
        self._count = 0
        self._lock = threading.Lock()

    def __repr__(self):
        return (
            f"{self.__class__.__name__}(dim={self.dim}, count={self.count}, "
            f"allow_negative={self.allow_negative})"
        )

    def __len__(self):
        return self._count

    @property
    def count(self) -> int:
        return self._count

    @property
    def vectors(self) -> FeatureVector:
        """Read-only (count, dim) view of the stored vectors."""
        view = self._data[: self._count]
        view.flags.writeable = False
        return view

    def __getitem__(self, index: int) -> FeatureVector:
        if not 1 <= index <= self._count:
            raise RangeOutOfBoundsError(
                f"Index out of range. Expected 1..{self._count}. Got {index}."
            )
        return self.vectors[index - 1]

    def normalize(self, v: npt.ArrayLike) -> FeatureVector:
        vector = normalize(v, allow_negative=self.allow_negative)
        self.validate(vector)
        return vector

    def validate(self, v: npt.ArrayLike) -> FeatureVector:
        vector = np.asarray(v).ravel()
        if vector.size != self.dim:
            raise DimensionMismatchError(
                f"Dimension mismatch. Expected {self.dim}. Got {vector.size}."
            )
        if not self.allow_negative and np.any(vector < 0):
            raise NegativeValueError("Negative values are not allowed in this store.")
        if vector.dtype != np.float32 or not is_unit(vector):
            vector = normalize(vector, allow_negative=self.allow_negative)
        return vector

    def append(self, v: npt.ArrayLike) -> int:
        """Appends one vector and returns its 1-based index."""
        vector = self.validate(v)
        with self._lock:
            if self._count == self._data.shape[0]:
                grown = np.empty((self._data.shape[0] * 2, self.dim), np.float32)
                grown[: self._count] = self._data[: self._count]
                self._data = grown
            self._data[self._count] = vector
            self._count += 1
            return self._count

    def extend(self, vectors: Iterable[npt.ArrayLike]) -> range:
        start = self._count + 1
        for v in vectors:
            self.append(v)
        return range(start, self._count + 1)

    @classmethod
    def from_array(cls, array: npt.ArrayLike, allow_negative: bool = False) -> VectorStore:
        rows = np.atleast_2d(np.asarray(array))
        store = cls(rows.shape[1], allow_negative=allow_negative, capacity=rows.shape[0])
        store.extend(rows)
        return store

    def to_bytes(self) -> bytes:
        flags = container.FLAG_ALLOW_NEGATIVE if self.allow_negative else 0
        return container.encode(self.magic, self.vectors, self._count, flags=flags)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())
        logger.debug("saved %r to %s", self, path)

    @classmethod
    def from_bytes(cls, buffer: bytes) -> VectorStore:
        header, payload = container.decode(buffer, cls.magic)
        store = cls(header.dim, allow_negative=header.allow_negative, capacity=header.count)
        if not header.allow_negative and np.any(payload < 0):
            raise NegativeValueError("Stored vectors contain negative values.")
        norms = np.linalg.norm(payload.astype(np.float64), axis=1)
        tolerance = getattr(settings, "GTNN_NORM_TOLERANCE", 1e-6)
        off = np.flatnonzero(np.abs(norms - 1.0) > tolerance)
        if off.size:
            logger.warning(
                "re-normalizing %d vector(s) outside the unit-norm tolerance", off.size
            )
            for i in off:
                payload[i] = normalize(payload[i], allow_negative=header.allow_negative)
        store._data[: header.count] = payload
        store._count = header.count
        return store

    @classmethod
    def load(cls, path: str | Path) -> VectorStore:
        return cls.from_bytes(Path(path).read_bytes())

    @classmethod
    def from_text(
        cls, path: str | Path, allow_negative: bool = False, dim: int | None = None
    ) -> VectorStore:
        """One vector per line, whitespace-separated decimals, auto-normalized."""
        try:
            rows = np.loadtxt(path, dtype=np.float64, ndmin=2)
        except ValueError as e:
            raise VectorParseError(f"Could not parse vectors from {path}. {e}") from e
        if dim is not None and rows.shape[1] != dim:
            raise DimensionMismatchError(
                f"Dimension mismatch. Expected {dim}. Got {rows.shape[1]}."
            )
        store = cls(rows.shape[1], allow_negative=allow_negative, capacity=rows.shape[0])
        for row in rows:
            store.append(normalize(row, allow_negative=allow_negative))
        return store


def load_vectors(path: str | Path, allow_negative: bool = False) -> VectorStore:
    """Loads either container or plain-text vectors, detected by the magic bytes."""
    if container.sniff(path) == container.STORE_MAGIC:
        return VectorStore.load(path)
    return VectorStore.from_text(path, allow_negative=allow_negative)
