"""Recursive-descent parser with Pratt-style operator precedence.

Binding powers, loosest first::

    <-          10  right
    |>          20  left   (desugared: lhs |> f(a) == f(lhs, a))
    ||          30  left
    &&          40  left
    !           45  prefix
    == != < ...  50  left
    :           60  left
    + -         70  left
    * /         80  left
    - (unary)   85  prefix
    ^           90  right
    f() x[]     100 postfix
"""

from __future__ import annotations

import math

from .errors import ParseError
from .lexer import Token, tokenize
from .syntax import (
    Arg, Assign, Binary, Block, BoolLit, Call, Expr, FloatLit, Index, IntLit,
    Lambda, NullLit, Range, SourceSpan, StringLit, Symbol, Unary,
)

INFIX_BP = {
    "<-": 10, "|>": 20, "||": 30, "&&": 40,
    "==": 50, "!=": 50, "<": 50, "<=": 50, ">": 50, ">=": 50,
    ":": 60, "+": 70, "-": 70, "*": 80, "/": 80, "^": 90,
}
RIGHT_ASSOC = {"<-", "^"}
PIPE_BP = INFIX_BP["|>"]
NOT_BP = 45
NEG_BP = 85
POSTFIX_BP = 100

_START = ("expression",)


class Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = tokenize(source)
        self.pos = 0
        # True where a newline ends the current expression (block level)
        self.nl_stack = [True]

    # token helpers -------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    @property
    def prev(self) -> Token:
        return self.tokens[self.pos - 1]

    def advance(self) -> Token:
        t = self.tokens[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def error(self, expected=(), tok: Token = None):
        tok = tok or self.tok
        if tok.kind == "eof":
            msg = "unexpected end of input"
        else:
            msg = f"unexpected {tok.text!r}"
        raise ParseError(msg, tok.span, expected)

    def expect_punct(self, text: str) -> Token:
        if not self.tok.is_punct(text):
            self.error((text,))
        return self.advance()

    def span_from(self, start: Token) -> SourceSpan:
        end = self.prev
        stop = end.span.offset + end.span.length
        return SourceSpan(start.span.line, start.span.column, start.span.offset,
                          max(0, stop - start.span.offset))

    # program / blocks ----------------------------------------------------

    def parse_program(self) -> Block:
        start = self.tok
        stmts = self.statements(closer=None)
        if self.tok.kind != "eof":
            self.error(("end of input",))
        return Block(tuple(stmts), self.span_from(start) if stmts else start.span)

    def statements(self, closer):
        stmts = []
        while True:
            while self.tok.is_punct(";"):
                self.advance()
            if self.tok.kind == "eof" or (closer and self.tok.is_punct(closer)):
                return stmts
            stmts.append(self.expression(0))
            t = self.tok
            if t.is_punct(";"):
                continue
            if t.kind == "eof" or (closer and t.is_punct(closer)):
                return stmts
            if not t.newline_before:
                self.error((";", "newline", closer or "end of input"))

    def block(self) -> Block:
        start = self.expect_punct("{")
        self.nl_stack.append(True)
        stmts = self.statements(closer="}")
        self.nl_stack.pop()
        self.expect_punct("}")
        return Block(tuple(stmts), self.span_from(start))

    # expressions ---------------------------------------------------------

    def expression(self, rbp: int) -> Expr:
        start = self.tok
        left = self.prefix()
        while True:
            t = self.tok
            if t.newline_before and self.nl_stack[-1]:
                break
            if t.kind == "operator" and t.text in INFIX_BP:
                lbp = INFIX_BP[t.text]
            elif t.is_punct("(", "["):
                lbp = POSTFIX_BP
            else:
                break
            if lbp <= rbp:
                break
            left = self.infix(left, start)
        return left

    def prefix(self) -> Expr:
        t = self.tok
        if t.kind == "int":
            self.advance()
            return IntLit(t.value, t.span)
        if t.kind == "float":
            self.advance()
            return FloatLit(t.value, t.span)
        if t.kind == "string":
            self.advance()
            return StringLit(t.value, t.span)
        if t.kind == "keyword":
            self.advance()
            if t.text == "TRUE":
                return BoolLit(True, t.span)
            if t.text == "FALSE":
                return BoolLit(False, t.span)
            if t.text == "NULL":
                return NullLit(t.span)
            return FloatLit(math.inf if t.text == "Inf" else math.nan, t.span)
        if t.kind == "ident":
            self.advance()
            return Symbol(t.text, t.span)
        if t.is_punct("("):
            self.advance()
            self.nl_stack.append(False)
            inner = self.expression(0)
            self.nl_stack.pop()
            self.expect_punct(")")
            return inner
        if t.is_punct("{"):
            return self.block()
        if t.is_punct("\\"):
            return self.lambda_()
        if t.is_op("-"):
            self.advance()
            operand = self.expression(NEG_BP)
            return Unary("-", operand, self.span_from(t))
        if t.is_op("!"):
            self.advance()
            operand = self.expression(NOT_BP)
            return Unary("!", operand, self.span_from(t))
        self.error(_START)

    def lambda_(self) -> Lambda:
        start = self.advance()
        self.expect_punct("(")
        self.nl_stack.append(False)
        params = []
        if not self.tok.is_punct(")"):
            while True:
                p = self.tok
                if p.kind != "ident":
                    self.error(("parameter name",))
                if p.text in params:
                    raise ParseError(f"duplicate parameter {p.text!r}", p.span)
                params.append(p.text)
                self.advance()
                if self.tok.is_punct(","):
                    self.advance()
                    continue
                break
        self.nl_stack.pop()
        self.expect_punct(")")
        body = self.expression(PIPE_BP)
        return Lambda(tuple(params), body, self.span_from(start))

    def infix(self, left: Expr, start: Token) -> Expr:
        t = self.tok
        if t.is_punct("("):
            return self.call_rest(left, start)
        if t.is_punct("["):
            self.advance()
            self.nl_stack.append(False)
            index = self.expression(0)
            self.nl_stack.pop()
            self.expect_punct("]")
            return Index(left, index, self.span_from(start))

        op = self.advance().text
        lbp = INFIX_BP[op]
        right = self.expression(lbp - 1 if op in RIGHT_ASSOC else lbp)
        span = self.span_from(start)
        if op == "<-":
            if not isinstance(left, Symbol):
                raise ParseError("invalid assignment target", t.span, ("symbol",))
            return Assign(left.name, right, span)
        if op == "|>":
            if not isinstance(right, Call):
                raise ParseError("the right-hand side of |> must be a call", t.span, ("call",))
            return Call(right.callee, (Arg(None, left),) + right.args, span)
        if op == ":":
            return Range(left, right, span)
        return Binary(op, left, right, span)

    def call_rest(self, callee: Expr, start: Token) -> Call:
        self.advance()
        self.nl_stack.append(False)
        args = []
        seen = set()
        if not self.tok.is_punct(")"):
            while True:
                name = None
                t = self.tok
                nxt = self.tokens[min(self.pos + 1, len(self.tokens) - 1)]
                if t.kind in ("ident", "string") and nxt.is_op("="):
                    name = t.value
                    if name in seen:
                        raise ParseError(f"duplicate argument name {name!r}", t.span)
                    seen.add(name)
                    self.advance()
                    self.advance()
                args.append(Arg(name, self.expression(0)))
                if self.tok.is_punct(","):
                    self.advance()
                    continue
                break
        self.nl_stack.pop()
        self.expect_punct(")")
        # `f(args) { ... }` on one line passes the block as a trailing argument
        if self.tok.is_punct("{") and not self.tok.newline_before:
            args.append(Arg(None, self.block()))
        return Call(callee, tuple(args), self.span_from(start))


def parse(source: str) -> Block:
    """Parse a whole program into a Block of top-level statements."""
    return Parser(source).parse_program()


def parse_expr(source: str) -> Expr:
    """Parse source holding exactly one expression."""
    program = parse(source)
    if len(program.stmts) != 1:
        raise ParseError(f"expected one expression, found {len(program.stmts)}",
                         program.span or SourceSpan(1, 1, 0, 0))
    return program.stmts[0]
