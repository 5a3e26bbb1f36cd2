from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mevtrace.model import (
    MAX_UINT256,
    NATIVE,
    Address,
    Currency,
    eth_str,
    fixed_decimal,
    parse_amount,
    parse_eth,
    ratio_str,
)


def test_address_renders_lowercase_and_round_trips():
    a = Address("0x" + "AB" * 20)
    assert a == "0x" + "ab" * 20
    assert Address(str(a)) == a
    assert len(a.to_bytes()) == 20
    assert Address.from_int(int.from_bytes(a.to_bytes(), "big")) == a


@pytest.mark.parametrize("bad", ["0x1234", "ab" * 20, "0x" + "g" * 40, "0x" + "a" * 41, 12])
def test_address_rejects_wrong_length_or_alphabet(bad):
    with pytest.raises(ValueError):
        Address(bad)


@given(st.integers(min_value=0, max_value=2**160 - 1))
def test_address_int_round_trip(n):
    a = Address.from_int(n)
    assert int.from_bytes(a.to_bytes(), "big") == n
    assert Address(a.upper().replace("0X", "0x")) == a


def test_amount_full_uint256_range():
    assert parse_amount("0") == 0
    assert parse_amount(str(MAX_UINT256)) == MAX_UINT256
    for bad in (str(MAX_UINT256 + 1), "-1", "01", "1.5", "", " 1", 5):
        with pytest.raises(ValueError):
            parse_amount(bad)


@given(st.integers(min_value=0, max_value=MAX_UINT256))
def test_amount_string_round_trip(n):
    assert parse_amount(str(n)) == n


def test_currency_json_round_trip_and_native_singleton():
    tok = Currency.token("0x" + "11" * 20)
    nft = Currency.nft("0x" + "22" * 20, MAX_UINT256)
    for c in (NATIVE, tok, nft):
        assert Currency.from_json(c.to_json()) == c
    assert Currency.from_json({"kind": "native"}) is NATIVE
    with pytest.raises(ValueError):
        Currency.from_json({"kind": "native", "contract": "0x" + "11" * 20})
    with pytest.raises(ValueError):
        Currency.token("nope")


def test_fixed_decimal_uses_bankers_rounding_at_last_digit():
    # half a wei rounds to even
    assert eth_str(Fraction(1, 2)) == "0.000000000000000000"
    assert eth_str(Fraction(3, 2)) == "0.000000000000000002"
    assert eth_str(Fraction(-5, 2)) == "-0.000000000000000002"
    assert eth_str(Fraction(592 * 10**16)) == "5.920000000000000000"
    assert fixed_decimal(Fraction(74, 75), 1, 6) == "0.986667"


def test_parse_eth_is_exact():
    assert parse_eth("5.92") == 592 * 10**16
    assert parse_eth("2") == 2 * 10**18
    with pytest.raises(ValueError):
        parse_eth("0.0000000000000000001")


def test_ratio_str():
    assert ratio_str(Fraction(38, 5)) == "38/5"
    assert ratio_str(Fraction(4)) == "4"
    assert Fraction(ratio_str(Fraction(-175, 23))) == Fraction(-175, 23)
