"""Canonical byte encoding shared by ledger records and consensus messages.

Every field is written in declared order:

* text      -> u32 big-endian length + UTF-8 bytes
* bytes     -> u32 big-endian length + raw bytes
* int       -> i64 big-endian
* decimal   -> i64 big-endian of ``value * 10**DECIMAL_SCALE``
* bool      -> one byte, 0 or 1
* optional  -> presence byte (0/1) followed by the field when present
"""

from __future__ import annotations

import hashlib
import struct
from decimal import ROUND_HALF_EVEN, Decimal

DECIMAL_SCALE = 6
_QUANTUM = Decimal(1).scaleb(-DECIMAL_SCALE)
_I64 = struct.Struct(">q")
_U32 = struct.Struct(">I")

ZERO_DIGEST = bytes(32)


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def to_decimal(value) -> Decimal:
    """Coerce ``value`` to a Decimal quantized to the ledger scale."""
    if isinstance(value, float):
        value = repr(value)
    d = Decimal(value).quantize(_QUANTUM, rounding=ROUND_HALF_EVEN)
    scaled = int(d.scaleb(DECIMAL_SCALE))
    if not -(2**63) <= scaled < 2**63:
        raise OverflowError(f"decimal {value} does not fit the scaled 64-bit range")
    return d


class Encoder:
    def __init__(self) -> None:
        self._parts: list[bytes] = []

    def text(self, s: str) -> Encoder:
        raw = s.encode("utf-8")
        self._parts.append(_U32.pack(len(raw)))
        self._parts.append(raw)
        return self

    def raw(self, b: bytes) -> Encoder:
        self._parts.append(_U32.pack(len(b)))
        self._parts.append(bytes(b))
        return self

    def int(self, n: int) -> Encoder:
        self._parts.append(_I64.pack(n))
        return self

    def decimal(self, d: Decimal) -> Encoder:
        self._parts.append(_I64.pack(int(to_decimal(d).scaleb(DECIMAL_SCALE))))
        return self

    def bool(self, flag: bool) -> Encoder:
        self._parts.append(b"\x01" if flag else b"\x00")
        return self

    def opt_text(self, s: str | None) -> Encoder:
        if s is None:
            return self.bool(False)
        return self.bool(True).text(s)

    def opt_decimal(self, d: Decimal | None) -> Encoder:
        if d is None:
            return self.bool(False)
        return self.bool(True).decimal(d)

    def getvalue(self) -> bytes:
        return b"".join(self._parts)
