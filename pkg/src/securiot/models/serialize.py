"""Versioned binary model files.

Layout (integers little-endian, text as u32 length + UTF-8)::

    magic        8 bytes b"SIOTMODL"
    version      u32 (1)
    family       text
    features     u32 count, then names
    dropped      u32 count, then (name, reason) pairs
    classes      u32 count, then names
    config       text (JSON, sorted keys, compact)
    arrays       u32 count, then per array in name order:
                 name text, dtype text ("<f8" or "<i8"), u32 ndim, ndim x u64 shape, raw data
    checksum     32 bytes, SHA-256 of everything above
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from ..ids.data import FeatureSchema, LabelMap
from .base import ClassifierModel, FAMILIES, ModelError

MAGIC = b"SIOTMODL"
VERSION = 1
_DTYPES = {"<f8": np.float64, "<i8": np.int64}


class BadMagic(ModelError):
    pass


class VersionMismatch(ModelError):
    pass


class Corrupt(ModelError):
    pass


def _text(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def serialize_model(model: ClassifierModel) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION), _text(model.family)]
    parts.append(struct.pack("<I", len(model.schema.names)))
    parts += [_text(n) for n in model.schema.names]
    parts.append(struct.pack("<I", len(model.schema.dropped)))
    for name, reason in model.schema.dropped.items():
        parts += [_text(name), _text(reason)]
    parts.append(struct.pack("<I", len(model.labels.classes)))
    parts += [_text(c) for c in model.labels.classes]
    parts.append(_text(json.dumps(model.train_config, sort_keys=True, separators=(",", ":"))))
    parts.append(struct.pack("<I", len(model.params)))
    for name in sorted(model.params):
        arr = np.asarray(model.params[name])
        code = "<i8" if np.issubdtype(arr.dtype, np.integer) else "<f8"
        arr = np.ascontiguousarray(arr, dtype=code)
        parts += [_text(name), _text(code), struct.pack("<I", arr.ndim)]
        parts += [struct.pack("<Q", s) for s in arr.shape]
        parts.append(arr.tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise Corrupt("model file is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def text(self) -> str:
        try:
            return self.take(self.u32()).decode("utf-8")
        except UnicodeDecodeError as e:
            raise Corrupt("invalid UTF-8 in model file") from e


def load_model(data: bytes) -> ClassifierModel:
    if data[:len(MAGIC)] != MAGIC:
        if len(data) < len(MAGIC) and MAGIC.startswith(data):
            raise Corrupt("model file is truncated")
        raise BadMagic("not a model file")
    r = _Reader(data)
    r.take(len(MAGIC))
    version = r.u32()
    if version != VERSION:
        raise VersionMismatch(f"model format version {version}, this build reads {VERSION}")
    if len(data) < r.pos + 32:
        raise Corrupt("model file is truncated")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise Corrupt("checksum mismatch (truncated or modified file)")
    r.data = body
    family = r.text()
    if family not in FAMILIES:
        raise Corrupt(f"unknown family {family!r}")
    names = tuple(r.text() for _ in range(r.u32()))
    dropped = {}
    for _ in range(r.u32()):
        key = r.text()
        dropped[key] = r.text()
    classes = tuple(r.text() for _ in range(r.u32()))
    try:
        config = json.loads(r.text())
    except json.JSONDecodeError as e:
        raise Corrupt("unreadable training config") from e
    params = {}
    for _ in range(r.u32()):
        name, code = r.text(), r.text()
        if code not in _DTYPES:
            raise Corrupt(f"unknown dtype {code!r} for {name}")
        shape = tuple(struct.unpack("<Q", r.take(8))[0] for _ in range(r.u32()))
        count = int(np.prod(shape, dtype=np.int64))
        params[name] = np.frombuffer(r.take(8 * count), dtype=code).reshape(shape).astype(_DTYPES[code])
    if r.pos != len(body):
        raise Corrupt("trailing bytes in model file")
    try:
        return ClassifierModel(family, FeatureSchema(names, dropped), LabelMap(classes), params, config)
    except ValueError as e:
        raise Corrupt(str(e)) from e


def save_model(model: ClassifierModel, path: str | Path) -> None:
    Path(path).write_bytes(serialize_model(model))


def read_model(path: str | Path) -> ClassifierModel:
    return load_model(Path(path).read_bytes())
