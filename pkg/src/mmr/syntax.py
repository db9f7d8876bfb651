"""AST node types for mmr programs.

Every node is an immutable dataclass.  Equality is structural and ignores
source spans, so a re-parsed or decoded tree compares equal to the
original.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional, Union


@dataclass(frozen=True)
class SourceSpan:
    line: int  # 1-based
    column: int  # 1-based
    offset: int
    length: int

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


def _span():
    return field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class IntLit:
    value: int
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True, eq=False)
class FloatLit:
    value: float
    span: Optional[SourceSpan] = _span()

    # bitwise, so NaN literals survive round trips
    def __eq__(self, other):
        if not isinstance(other, FloatLit):
            return NotImplemented
        return struct.pack(">d", self.value) == struct.pack(">d", other.value)

    def __hash__(self):
        return hash(struct.pack(">d", self.value))


@dataclass(frozen=True)
class StringLit:
    value: str
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class BoolLit:
    value: bool
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class NullLit:
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Symbol:
    name: str
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Arg:
    name: Optional[str]
    value: "Expr"


@dataclass(frozen=True)
class Call:
    callee: "Expr"
    args: tuple[Arg, ...]
    span: Optional[SourceSpan] = _span()

    @property
    def fname(self) -> Optional[str]:
        """Name of the callee when it is a plain symbol."""
        return self.callee.name if isinstance(self.callee, Symbol) else None

    def positional(self) -> list["Expr"]:
        return [a.value for a in self.args if a.name is None]

    def named(self) -> dict[str, "Expr"]:
        return {a.name: a.value for a in self.args if a.name is not None}


@dataclass(frozen=True)
class Lambda:
    params: tuple[str, ...]
    body: "Expr"
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Block:
    stmts: tuple["Expr", ...]
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Assign:
    target: str
    value: "Expr"
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Binary:
    op: str
    lhs: "Expr"
    rhs: "Expr"
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Unary:
    op: str  # "-" or "!"
    operand: "Expr"
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Index:
    base: "Expr"
    index: "Expr"
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Range:
    lo: "Expr"
    hi: "Expr"
    span: Optional[SourceSpan] = _span()


Expr = Union[
    IntLit, FloatLit, StringLit, BoolLit, NullLit, Symbol, Call,
    Lambda, Block, Assign, Binary, Unary, Index, Range,
]

EXPR_TYPES = (
    IntLit, FloatLit, StringLit, BoolLit, NullLit, Symbol, Call,
    Lambda, Block, Assign, Binary, Unary, Index, Range,
)


def call(name: str, *args: Expr, **kwargs: Expr) -> Call:
    """Build ``name(args..., key = value...)`` without source spans."""
    arglist = [Arg(None, a) for a in args]
    arglist += [Arg(k, v) for k, v in kwargs.items()]
    return Call(Symbol(name), tuple(arglist))


def with_args(node: Call, args) -> Call:
    return Call(node.callee, tuple(args), node.span)


def transform(e: Expr, fn) -> Expr:
    """Rebuild ``e`` bottom-up, replacing every node ``n`` by ``fn(n)``."""
    if isinstance(e, Call):
        e = Call(transform(e.callee, fn),
                 tuple(Arg(a.name, transform(a.value, fn)) for a in e.args), e.span)
    elif isinstance(e, Lambda):
        e = Lambda(e.params, transform(e.body, fn), e.span)
    elif isinstance(e, Block):
        e = Block(tuple(transform(s, fn) for s in e.stmts), e.span)
    elif isinstance(e, Assign):
        e = Assign(e.target, transform(e.value, fn), e.span)
    elif isinstance(e, Binary):
        e = Binary(e.op, transform(e.lhs, fn), transform(e.rhs, fn), e.span)
    elif isinstance(e, Unary):
        e = Unary(e.op, transform(e.operand, fn), e.span)
    elif isinstance(e, Index):
        e = Index(transform(e.base, fn), transform(e.index, fn), e.span)
    elif isinstance(e, Range):
        e = Range(transform(e.lo, fn), transform(e.hi, fn), e.span)
    return fn(e)
