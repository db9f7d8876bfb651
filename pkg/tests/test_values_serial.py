import math
import struct

import pytest
from hypothesis import given, settings

from mmr.builtins import root_env
from mmr.errors import DecodeError, EncodeError
from mmr.parser import parse_expr
from mmr.serial import decode, encode
from mmr.values import Closure, Env, ErrorObject, MList, format_value, value_equal

from strategies import exprs, values


def test_value_equal_examples():
    assert value_equal(0.5, 0.5)
    assert not value_equal(MList([1, 2]), MList([2, 1]))
    assert value_equal(ErrorObject("user", "boom", 3), ErrorObject("user", "boom", 3))


def test_value_equal_is_type_exact_and_bitwise():
    assert not value_equal(1, 1.0)
    assert not value_equal(True, 1)
    assert not value_equal(0.0, -0.0)
    assert value_equal(math.nan, math.nan)
    nan2 = struct.unpack(">d", bytes.fromhex("7ff8000000000001"))[0]
    assert not value_equal(math.nan, nan2)


def test_value_equal_respects_names():
    assert not value_equal(MList([1], ["a"]), MList([1]))
    assert value_equal(MList([1, 2], ["a", None]), MList([1, 2], ["a", None]))


def test_closure_equality_uses_captured_bindings():
    body = parse_expr("x + k")
    a = Closure(("x",), body, Env({"k": 2}, root_env()))
    b = Closure(("x",), body, Env({"k": 2, "unused": 9}, root_env()))
    c = Closure(("x",), body, Env({"k": 3}, root_env()))
    assert value_equal(a, b)
    assert not value_equal(a, c)


def test_round_trip_examples():
    assert decode(encode(7)) == 7
    assert value_equal(decode(encode(MList(["a", None]))), MList(["a", None]))
    f = Closure(("x",), parse_expr("x + k"), Env({"k": 2}, root_env()))
    g = decode(encode(f))
    assert value_equal(f, g)
    assert g.env.bindings == {"k": 2}


def test_recursive_closure_round_trip():
    env = Env({}, root_env())
    fact = Closure(("n",), parse_expr("if_else(n <= 1, 1, n * fact(n - 1))"), env)
    env.bindings["fact"] = fact
    again = decode(encode(fact))
    assert again.env.bindings["fact"] is again


def test_encoding_is_deterministic():
    a = Closure(("x",), parse_expr("a + b + x"), Env({"b": 1, "a": 2}, root_env()))
    b = Closure(("x",), parse_expr("a + b + x"), Env({"a": 2, "b": 1}, root_env()))
    assert encode(a) == encode(b)


def test_integer_encoding_is_zigzag_varint():
    assert encode(0) == b"\x03\x00"
    assert encode(-1) == b"\x03\x01"
    assert encode(1) == b"\x03\x02"
    assert encode(2.0) == b"\x04" + struct.pack(">d", 2.0)


@pytest.mark.parametrize("data", [b"", b"\x99", b"\x05\x05ab", b"\x03\x00\x00", b"\x05\x02\xff\xfe", b"\x0b\x00"])
def test_decode_rejects_malformed(data):
    with pytest.raises(DecodeError):
        decode(data)


def test_encode_rejects_host_objects():
    with pytest.raises(EncodeError):
        encode(object())
    with pytest.raises(EncodeError):
        encode(2 ** 70)


def test_format_value():
    assert format_value(MList([1, 2.5, "s", None], ["a", None, None, None])) == '[a = 1, 2.5, "s", NULL]'
    assert format_value(math.inf) == "Inf"


@settings(max_examples=300, deadline=None)
@given(values)
def test_value_round_trip(v):
    assert value_equal(decode(encode(v)), v)


@settings(max_examples=200, deadline=None)
@given(exprs)
def test_expr_round_trip(e):
    assert decode(encode(e)) == e


@settings(max_examples=100, deadline=None)
@given(values, values, values)
def test_value_equal_is_an_equivalence(a, b, c):
    assert value_equal(a, a)
    assert value_equal(a, b) == value_equal(b, a)
    if value_equal(a, b) and value_equal(b, c):
        assert value_equal(a, c)
