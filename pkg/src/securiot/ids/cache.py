"""Columnar binary cache for cleaned datasets.

Layout (all integers little-endian)::

    magic      8 bytes  b"SIOTDATA"
    version    u32      1
    n_features u32, then each name as u32 length + UTF-8
    n_dropped  u32, then (name, reason) pairs as length-prefixed UTF-8
    n_classes  u32, then each class name as length-prefixed UTF-8
    n_rows     u64
    labels     n_rows x i32
    features   n_features columns, each n_rows x f64
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .data import Dataset, DataError, FeatureSchema, LabelMap

MAGIC = b"SIOTDATA"
VERSION = 1


class CacheError(DataError):
    pass


def _put_text(parts: list[bytes], s: str) -> None:
    raw = s.encode("utf-8")
    parts.append(struct.pack("<I", len(raw)))
    parts.append(raw)


def dumps(ds: Dataset) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(ds.schema.names))]
    for name in ds.schema.names:
        _put_text(parts, name)
    parts.append(struct.pack("<I", len(ds.schema.dropped)))
    for name, reason in ds.schema.dropped.items():
        _put_text(parts, name)
        _put_text(parts, reason)
    parts.append(struct.pack("<I", len(ds.labels.classes)))
    for c in ds.labels.classes:
        _put_text(parts, c)
    parts.append(struct.pack("<Q", len(ds)))
    parts.append(ds.y.astype("<i4").tobytes())
    parts.append(np.asfortranarray(ds.X, dtype="<f8").tobytes(order="F"))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CacheError("truncated cache file")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def text(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def loads(data: bytes) -> Dataset:
    r = _Reader(data)
    if r.take(8) != MAGIC:
        raise CacheError("not a dataset cache (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise CacheError(f"unsupported cache version {version}")
    names = tuple(r.text() for _ in range(r.u32()))
    dropped = {}
    for _ in range(r.u32()):
        name = r.text()
        dropped[name] = r.text()
    classes = tuple(r.text() for _ in range(r.u32()))
    n = struct.unpack("<Q", r.take(8))[0]
    y = np.frombuffer(r.take(4 * n), dtype="<i4").astype(np.int64)
    d = len(names)
    X = np.frombuffer(r.take(8 * n * d), dtype="<f8").reshape((n, d), order="F")
    if r.pos != len(data):
        raise CacheError("trailing bytes after cache payload")
    return Dataset(np.ascontiguousarray(X, dtype=np.float64), y,
                   FeatureSchema(names, dropped), LabelMap(classes))


def save(ds: Dataset, path: str | Path) -> None:
    Path(path).write_bytes(dumps(ds))


def load(path: str | Path) -> Dataset:
    return loads(Path(path).read_bytes())
