"""Canonical self-describing binary serialization of values and ASTs.

Layout: one tag byte per node, unsigned LEB128 varints for lengths and
counts, zigzag varints for integers, UTF-8 strings, IEEE-754 big-endian
binary64 floats.  Closure bindings are written in name order, so encoding
is deterministic.  Source spans are not serialized.
"""

from __future__ import annotations

import struct

from .errors import DecodeError, EncodeError
from .syntax import (
    Arg, Assign, Binary, Block, BoolLit, Call, FloatLit, Index, IntLit,
    Lambda, NullLit, Range, StringLit, Symbol, Unary, EXPR_TYPES,
)
from .values import (
    I64_MAX, I64_MIN, Builtin, Closure, Env, ErrorObject, Language, MList,
)

T_NULL, T_FALSE, T_TRUE, T_INT, T_FLOAT, T_STR = 0x00, 0x01, 0x02, 0x03, 0x04, 0x05
T_LIST, T_CLOSURE, T_ERROR, T_BUILTIN, T_LANG, T_CLOSURE_REF = 0x06, 0x07, 0x08, 0x09, 0x0A, 0x0B

E_INT, E_FLOAT, E_STR, E_BOOL, E_NULL, E_SYM = 0x20, 0x21, 0x22, 0x23, 0x24, 0x25
E_CALL, E_LAMBDA, E_BLOCK, E_ASSIGN, E_BINARY, E_INDEX, E_RANGE, E_UNARY = (
    0x26, 0x27, 0x28, 0x29, 0x2A, 0x2B, 0x2C, 0x2D)


def write_varint(out: bytearray, n: int) -> None:
    if n < 0:
        raise EncodeError("varint must be non-negative")
    while True:
        byte = n & 0x7F
        n >>= 7
        if n:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return


def _zigzag(n: int) -> int:
    return (n << 1) ^ (n >> 63)


def _unzigzag(n: int) -> int:
    return (n >> 1) ^ -(n & 1)


class _Writer:
    def __init__(self):
        self.out = bytearray()
        self.closures: list[Closure] = []

    def str(self, s: str) -> None:
        data = s.encode("utf-8")
        write_varint(self.out, len(data))
        self.out += data

    def value(self, v) -> None:
        out = self.out
        if v is None:
            out.append(T_NULL)
        elif v is True:
            out.append(T_TRUE)
        elif v is False:
            out.append(T_FALSE)
        elif isinstance(v, int):
            if not I64_MIN <= v <= I64_MAX:
                raise EncodeError(f"integer {v} outside the i64 range")
            out.append(T_INT)
            write_varint(out, _zigzag(v))
        elif isinstance(v, float):
            out.append(T_FLOAT)
            out += struct.pack(">d", v)
        elif isinstance(v, str):
            out.append(T_STR)
            self.str(v)
        elif isinstance(v, MList):
            out.append(T_LIST)
            write_varint(out, len(v))
            if v.names is None:
                out.append(0)
            else:
                out.append(1)
                for name in v.names:
                    if name is None:
                        out.append(0)
                    else:
                        out.append(1)
                        self.str(name)
            for item in v.items:
                self.value(item)
        elif isinstance(v, Closure):
            for depth, c in enumerate(self.closures):
                if c is v:
                    out.append(T_CLOSURE_REF)
                    write_varint(out, depth)
                    return
            self.closures.append(v)
            out.append(T_CLOSURE)
            write_varint(out, len(v.params))
            for p in v.params:
                self.str(p)
            self.expr(v.body)
            captured = v.captured()
            write_varint(out, len(captured))
            for name in sorted(captured):
                self.str(name)
                self.value(captured[name])
            self.closures.pop()
        elif isinstance(v, ErrorObject):
            out.append(T_ERROR)
            self.str(v.cls)
            self.str(v.message)
            if v.origin_index is None:
                out.append(0)
            else:
                out.append(1)
                write_varint(out, _zigzag(v.origin_index))
        elif isinstance(v, Builtin):
            out.append(T_BUILTIN)
            self.str(v.name)
            self.str(v.namespace)
        elif isinstance(v, Language):
            out.append(T_LANG)
            self.expr(v.expr)
        else:
            raise EncodeError(f"cannot serialize host object {type(v).__name__}")

    def expr(self, e) -> None:
        out = self.out
        if isinstance(e, IntLit):
            out.append(E_INT)
            write_varint(out, _zigzag(e.value))
        elif isinstance(e, FloatLit):
            out.append(E_FLOAT)
            out += struct.pack(">d", e.value)
        elif isinstance(e, StringLit):
            out.append(E_STR)
            self.str(e.value)
        elif isinstance(e, BoolLit):
            out.append(E_BOOL)
            out.append(1 if e.value else 0)
        elif isinstance(e, NullLit):
            out.append(E_NULL)
        elif isinstance(e, Symbol):
            out.append(E_SYM)
            self.str(e.name)
        elif isinstance(e, Call):
            out.append(E_CALL)
            self.expr(e.callee)
            write_varint(out, len(e.args))
            for a in e.args:
                if a.name is None:
                    out.append(0)
                else:
                    out.append(1)
                    self.str(a.name)
                self.expr(a.value)
        elif isinstance(e, Lambda):
            out.append(E_LAMBDA)
            write_varint(out, len(e.params))
            for p in e.params:
                self.str(p)
            self.expr(e.body)
        elif isinstance(e, Block):
            out.append(E_BLOCK)
            write_varint(out, len(e.stmts))
            for s in e.stmts:
                self.expr(s)
        elif isinstance(e, Assign):
            out.append(E_ASSIGN)
            self.str(e.target)
            self.expr(e.value)
        elif isinstance(e, Binary):
            out.append(E_BINARY)
            self.str(e.op)
            self.expr(e.lhs)
            self.expr(e.rhs)
        elif isinstance(e, Unary):
            out.append(E_UNARY)
            self.str(e.op)
            self.expr(e.operand)
        elif isinstance(e, Index):
            out.append(E_INDEX)
            self.expr(e.base)
            self.expr(e.index)
        elif isinstance(e, Range):
            out.append(E_RANGE)
            self.expr(e.lo)
            self.expr(e.hi)
        else:
            raise EncodeError(f"not an expression: {type(e).__name__}")


class _Reader:
    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos
        self.closures: list[Closure] = []

    def byte(self) -> int:
        if self.pos >= len(self.data):
            raise DecodeError("truncated input")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError("truncated input")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return bytes(chunk)

    def varint(self) -> int:
        shift = 0
        n = 0
        while True:
            b = self.byte()
            n |= (b & 0x7F) << shift
            if not b & 0x80:
                return n
            shift += 7
            if shift > 70:
                raise DecodeError("varint too long")

    def flag(self) -> bool:
        b = self.byte()
        if b not in (0, 1):
            raise DecodeError(f"invalid flag byte {b}")
        return b == 1

    def str(self) -> str:
        raw = self.take(self.varint())
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError(f"invalid UTF-8: {exc}") from None

    def count(self) -> int:
        n = self.varint()
        if n > len(self.data) - self.pos:
            raise DecodeError("element count exceeds remaining input")
        return n

    def any(self):
        tag = self.data[self.pos] if self.pos < len(self.data) else None
        if tag is not None and tag >= 0x20:
            return self.expr()
        return self.value()

    def value(self):
        tag = self.byte()
        if tag == T_NULL:
            return None
        if tag == T_TRUE:
            return True
        if tag == T_FALSE:
            return False
        if tag == T_INT:
            v = _unzigzag(self.varint())
            if not I64_MIN <= v <= I64_MAX:
                raise DecodeError("integer outside the i64 range")
            return v
        if tag == T_FLOAT:
            return struct.unpack(">d", self.take(8))[0]
        if tag == T_STR:
            return self.str()
        if tag == T_LIST:
            n = self.count()
            names = None
            if self.flag():
                names = [self.str() if self.flag() else None for _ in range(n)]
            items = [self.value() for _ in range(n)]
            return MList(items, names)
        if tag == T_CLOSURE:
            from .builtins import root_env

            params = tuple(self.str() for _ in range(self.count()))
            body = self.expr()
            closure = Closure(params, body, Env({}, root_env()))
            self.closures.append(closure)
            for _ in range(self.count()):
                name = self.str()
                closure.env.bindings[name] = self.value()
            self.closures.pop()
            return closure
        if tag == T_CLOSURE_REF:
            depth = self.varint()
            if depth >= len(self.closures):
                raise DecodeError("dangling closure reference")
            return self.closures[depth]
        if tag == T_ERROR:
            cls = self.str()
            msg = self.str()
            origin = _unzigzag(self.varint()) if self.flag() else None
            return ErrorObject(cls, msg, origin)
        if tag == T_BUILTIN:
            name = self.str()
            return Builtin(name, self.str())
        if tag == T_LANG:
            return Language(self.expr())
        raise DecodeError(f"unknown value tag 0x{tag:02x}")

    def expr(self):
        tag = self.byte()
        if tag == E_INT:
            return IntLit(_unzigzag(self.varint()))
        if tag == E_FLOAT:
            return FloatLit(struct.unpack(">d", self.take(8))[0])
        if tag == E_STR:
            return StringLit(self.str())
        if tag == E_BOOL:
            return BoolLit(self.flag())
        if tag == E_NULL:
            return NullLit()
        if tag == E_SYM:
            return Symbol(self.str())
        if tag == E_CALL:
            callee = self.expr()
            args = []
            for _ in range(self.count()):
                name = self.str() if self.flag() else None
                args.append(Arg(name, self.expr()))
            return Call(callee, tuple(args))
        if tag == E_LAMBDA:
            params = tuple(self.str() for _ in range(self.count()))
            return Lambda(params, self.expr())
        if tag == E_BLOCK:
            return Block(tuple(self.expr() for _ in range(self.count())))
        if tag == E_ASSIGN:
            target = self.str()
            return Assign(target, self.expr())
        if tag == E_BINARY:
            op = self.str()
            lhs = self.expr()
            return Binary(op, lhs, self.expr())
        if tag == E_UNARY:
            op = self.str()
            return Unary(op, self.expr())
        if tag == E_INDEX:
            base = self.expr()
            return Index(base, self.expr())
        if tag == E_RANGE:
            lo = self.expr()
            return Range(lo, self.expr())
        raise DecodeError(f"unknown expression tag 0x{tag:02x}")


def encode(x) -> bytes:
    """Serialize a Value or an Expr."""
    w = _Writer()
    if isinstance(x, EXPR_TYPES):
        w.expr(x)
    else:
        w.value(x)
    return bytes(w.out)


def decode(data: bytes):
    """Inverse of :func:`encode`; raises DecodeError on malformed input."""
    r = _Reader(data)
    try:
        out = r.any()
    except RecursionError:
        raise DecodeError("input nested too deeply") from None
    if r.pos != len(data):
        raise DecodeError(f"{len(data) - r.pos} trailing bytes")
    return out


def encode_value_into(out: bytearray, v) -> None:
    w = _Writer()
    w.out = out
    w.value(v)


def decode_value_at(data: bytes, pos: int):
    """Decode one value starting at ``pos``; returns ``(value, end)``."""
    r = _Reader(data, pos)
    try:
        v = r.value()
    except RecursionError:
        raise DecodeError("input nested too deeply") from None
    return v, r.pos
