"""Binary container shared by store (GTNN), sum-index (GTNS) and max-index (GTNM) files.

Layout, little-endian::

    4s  magic
    u32 version (=1)
    u8  flags    bit 0: allow_negative / minvec present, bit 1: float64 payload
    u32 d
    u64 N
    rows x d floats, row-major
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import (
    BadMagicError,
    DimensionMismatchError,
    TruncatedFileError,
    VersionMismatchError,
)

VERSION = 1
HEADER = struct.Struct("<4sIBIQ")

FLAG_ALLOW_NEGATIVE = 0b01
FLAG_FLOAT64 = 0b10

STORE_MAGIC = b"GTNN"
SUM_INDEX_MAGIC = b"GTNS"
MAX_INDEX_MAGIC = b"GTNM"


@dataclass(frozen=True)
class Header:
    magic: bytes
    version: int
    flags: int
    dim: int
    count: int

    @property
    def dtype(self) -> np.dtype:
        return np.dtype("<f8") if self.flags & FLAG_FLOAT64 else np.dtype("<f4")

    @property
    def allow_negative(self) -> bool:
        return bool(self.flags & FLAG_ALLOW_NEGATIVE)


def encode(magic: bytes, payload: np.ndarray, count: int, flags: int = 0) -> bytes:
    if payload.ndim != 2:
        raise DimensionMismatchError(f"Expected a 2-d payload. Got shape {payload.shape}")
    if payload.dtype == np.float64:
        flags |= FLAG_FLOAT64
        payload = payload.astype("<f8", copy=False)
    else:
        flags &= ~FLAG_FLOAT64
        payload = payload.astype("<f4", copy=False)
    header = HEADER.pack(magic, VERSION, flags, payload.shape[1], count)
    return header + np.ascontiguousarray(payload).tobytes()


def write(path: str | Path, magic: bytes, payload: np.ndarray, count: int, flags: int = 0):
    Path(path).write_bytes(encode(magic, payload, count, flags=flags))


def decode_header(buffer: bytes, magic: bytes) -> Header:
    if len(buffer) < HEADER.size:
        raise TruncatedFileError(
            f"File too short for a header. Expected {HEADER.size} bytes. Got {len(buffer)}."
        )
    header = Header(*HEADER.unpack_from(buffer))
    if header.magic != magic:
        raise BadMagicError(f"Invalid magic. Expected {magic!r}. Got {header.magic!r}.")
    if header.version != VERSION:
        raise VersionMismatchError(
            f"Unsupported version. Expected {VERSION}. Got {header.version}."
        )
    if header.dim < 1:
        raise DimensionMismatchError(f"Invalid dimension in header. Got {header.dim}.")
    return header


def decode(buffer: bytes, magic: bytes, rows: int | None = None) -> tuple[Header, np.ndarray]:
    """Returns the header and a (rows, d) array. `rows` defaults to the header count."""
    header = decode_header(buffer, magic)
    rows = header.count if rows is None else rows
    expected = rows * header.dim * header.dtype.itemsize
    body = memoryview(buffer)[HEADER.size :]
    if len(body) < expected:
        raise TruncatedFileError(
            f"Truncated payload. Expected {expected} bytes. Got {len(body)}."
        )
    if len(body) > expected:
        raise DimensionMismatchError(
            f"Payload larger than header declares. Expected {expected} bytes. "
            f"Got {len(body)}."
        )
    payload = np.frombuffer(body, dtype=header.dtype).reshape(rows, header.dim)
    return header, payload.astype(header.dtype.newbyteorder("="))


def read(path: str | Path, magic: bytes, rows: int | None = None):
    return decode(Path(path).read_bytes(), magic, rows=rows)


def sniff(path: str | Path) -> bytes:
    """Returns the first four bytes of a file."""
    with open(path, "rb") as f:
        return f.read(4)
