from decimal import Decimal

import pytest
from hypothesis import given, strategies as st

from securiot._codec import Encoder, sha256, to_decimal


def test_sha256_known_vector():
    assert sha256(b"").hex() == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    assert sha256(b"abc").hex().startswith("ba7816bf")


def test_text_is_length_prefixed_big_endian():
    assert Encoder().text("ab").getvalue() == b"\x00\x00\x00\x02ab"
    assert Encoder().text("").getvalue() == b"\x00\x00\x00\x00"
    # multi-byte UTF-8 counts bytes, not characters
    assert Encoder().text("é").getvalue() == b"\x00\x00\x00\x02\xc3\xa9"


def test_int_and_decimal_widths():
    assert Encoder().int(1).getvalue() == b"\x00" * 7 + b"\x01"
    assert Encoder().int(-1).getvalue() == b"\xff" * 8
    assert Encoder().decimal(Decimal("23")).getvalue() == (23_000_000).to_bytes(8, "big")
    assert Encoder().decimal(Decimal("0.000001")).getvalue() == (1).to_bytes(8, "big")


def test_optional_fields_carry_presence_byte():
    assert Encoder().opt_text(None).getvalue() == b"\x00"
    assert Encoder().opt_text("x").getvalue() == b"\x01\x00\x00\x00\x01x"
    assert Encoder().opt_decimal(None).getvalue() == b"\x00"


def test_to_decimal_rounds_half_even_and_bounds():
    assert to_decimal("0.0000005") == Decimal("0.000000")
    assert to_decimal("0.0000015") == Decimal("0.000002")
    assert to_decimal(0.1) == Decimal("0.100000")
    with pytest.raises(OverflowError):
        to_decimal(10 ** 13)


@given(st.lists(st.text(max_size=8), max_size=5), st.lists(st.text(max_size=8), max_size=5))
def test_text_sequences_encode_injectively(a, b):
    ea = Encoder()
    for s in a:
        ea.text(s)
    eb = Encoder()
    for s in b:
        eb.text(s)
    if a != b and len(a) == len(b):
        assert ea.getvalue() != eb.getvalue()
