from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.typing as npt

from . import container
from .exceptions import (
    DimensionMismatchError,
    EmptyStoreError,
    RangeOutOfBoundsError,
    UnsupportedNegativeQueryError,
)
from .vecstore import VectorStore, exact_dot

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TreeShape:
    """Interval tree over 1..N split like the search: left child takes floor(n/2).

    Nodes are numbered in level order, so children always follow their parent.
    Intervals of length 1 or 2 are leaves.
    """

    starts: npt.NDArray[np.int64]
    ends: npt.NDArray[np.int64]
    left: npt.NDArray[np.int64]
    right: npt.NDArray[np.int64]
    depth: npt.NDArray[np.int64]

    @classmethod
    def for_count(cls, count: int) -> TreeShape:
        starts, ends, left, right, depth = [1], [count], [-1], [-1], [0]
        i = 0
        while i < len(starts):
            si, ei = starts[i], ends[i]
            n = ei - si + 1
            if n > 2:
                mid = si + n // 2 - 1
                for child_start, child_end in ((si, mid), (mid + 1, ei)):
                    starts.append(child_start)
                    ends.append(child_end)
                    left.append(-1)
                    right.append(-1)
                    depth.append(depth[i] + 1)
                left[i], right[i] = len(starts) - 2, len(starts) - 1
            i += 1
        arrays = (starts, ends, left, right, depth)
        return cls(*(np.asarray(a, dtype=np.int64) for a in arrays))

    def __len__(self):
        return len(self.starts)

    def size(self, node: int) -> int:
        return int(self.ends[node] - self.starts[node] + 1)

    def is_leaf(self, node: int) -> bool:
        return self.left[node] < 0


class MaxIndex:
    """Element-wise max (and min, when the store allows negatives) per tree node.

    Immutable after build. Streaming appends need a rebuild because interval
    boundaries move with N.
    """

    magic = container.MAX_INDEX_MAGIC

    def __init__(
        self,
        store: VectorStore,
        shape: TreeShape,
        maxvecs: npt.NDArray[np.float32],
        minvecs: npt.NDArray[np.float32] | None = None,
    ):
        self.store = store
        self.dim = store.dim
        self.count = int(shape.ends[0])
        self.shape = shape
        self.maxvecs = maxvecs
        self.minvecs = minvecs
        for array in (self.maxvecs, self.minvecs):
            if array is not None:
                array.flags.writeable = False

    def __repr__(self):
        return (
            f"{self.__class__.__name__}(dim={self.dim}, count={self.count}, "
            f"nodes={len(self.shape)}, minvec={self.minvecs is not None})"
        )

    @property
    def has_minvec(self) -> bool:
        return self.minvecs is not None

    @classmethod
    def build(cls, store: VectorStore) -> MaxIndex:
        if store.count < 1:
            raise EmptyStoreError("Cannot build a max index over an empty store.")
        start = time.perf_counter()
        shape = TreeShape.for_count(store.count)
        maxvecs = cls._reduce(store.vectors, shape, np.maximum)
        minvecs = None
        if store.allow_negative:
            minvecs = cls._reduce(store.vectors, shape, np.minimum)
        logger.debug(
            "built max index N=%d d=%d nodes=%d in %.3fs",
            store.count,
            store.dim,
            len(shape),
            time.perf_counter() - start,
        )
        return cls(store, shape, maxvecs, minvecs)

    @staticmethod
    def _reduce(vectors, shape: TreeShape, op, dtype=np.float32) -> npt.NDArray:
        out = np.empty((len(shape), vectors.shape[1]), dtype=dtype)
        leaves = np.flatnonzero(shape.left < 0)
        first = shape.starts[leaves] - 1
        last = shape.ends[leaves] - 1
        out[leaves] = op(vectors[first], vectors[last])
        internal = np.flatnonzero(shape.left >= 0)
        for level in range(int(shape.depth.max()), -1, -1):
            nodes = internal[shape.depth[internal] == level]
            if nodes.size:
                out[nodes] = op(out[shape.left[nodes]], out[shape.right[nodes]])
        return out

    def split_query(self, q: npt.ArrayLike):
        """Returns (q_pos, q_neg), checking negative coordinates are supported."""
        q = np.asarray(q, dtype=np.float64).ravel()
        if q.size != self.dim:
            raise DimensionMismatchError(
                f"Dimension mismatch. Expected {self.dim}. Got {q.size}."
            )
        q_neg = np.minimum(q, 0.0)
        if np.any(q_neg < 0):
            if not self.has_minvec:
                raise UnsupportedNegativeQueryError(
                    "Query has negative coordinates but the index holds no minimum vectors."
                )
            return np.maximum(q, 0.0), q_neg
        return q, None

    def bound(self, node: int, q_pos, q_neg=None) -> float:
        if self.shape.size(node) == 1:
            query = q_pos if q_neg is None else q_pos + q_neg
            return exact_dot(self.store.vectors[self.shape.starts[node] - 1], query)
        value = float(np.dot(self.maxvecs[node].astype(np.float64), q_pos))
        if q_neg is not None:
            value += float(np.dot(self.minvecs[node].astype(np.float64), q_neg))
        return value

    def pool_bound_dot(self, q: npt.ArrayLike, node: int) -> float:
        """Upper bound on ``q . f_i`` for every member ``i`` of `node`."""
        if not 0 <= node < len(self.shape):
            raise RangeOutOfBoundsError(
                f"Invalid node. Expected 0..{len(self.shape) - 1}. Got {node}."
            )
        return self.bound(node, *self.split_query(q))

    def find_node(self, si: int, ei: int) -> int:
        """Returns the node covering exactly [si, ei]."""
        node = 0
        while True:
            if self.shape.starts[node] == si and self.shape.ends[node] == ei:
                return node
            if self.shape.is_leaf(node):
                break
            left = self.shape.left[node]
            node = left if ei <= self.shape.ends[left] else self.shape.right[node]
        raise RangeOutOfBoundsError(f"No tree node covers [{si}, {ei}].")

    def save(self, path: str | Path) -> None:
        payload = self.maxvecs
        flags = 0
        if self.has_minvec:
            payload = np.vstack([self.maxvecs, self.minvecs])
            flags = container.FLAG_ALLOW_NEGATIVE
        container.write(path, self.magic, payload, self.count, flags=flags)

    @classmethod
    def load(cls, path: str | Path, store: VectorStore) -> MaxIndex:
        buffer = Path(path).read_bytes()
        header = container.decode_header(buffer, cls.magic)
        if header.dim != store.dim or header.count != store.count:
            raise DimensionMismatchError(
                f"Index does not match store. Expected d={store.dim}, N={store.count}. "
                f"Got d={header.dim}, N={header.count}."
            )
        shape = TreeShape.for_count(header.count)
        rows = len(shape) * (2 if header.allow_negative else 1)
        _, payload = container.decode(buffer, cls.magic, rows=rows)
        maxvecs = payload[: len(shape)].astype(np.float32)
        minvecs = payload[len(shape) :].astype(np.float32) if header.allow_negative else None
        return cls(store, shape, maxvecs, minvecs)
