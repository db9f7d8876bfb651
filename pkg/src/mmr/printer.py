"""Canonical surface syntax for ASTs.

The printer inserts exactly the parentheses the parser needs to rebuild the
same tree; pipes are never reintroduced.
"""

from __future__ import annotations

import math
import re

from .lexer import KEYWORDS
from .parser import INFIX_BP, NEG_BP, NOT_BP, POSTFIX_BP, RIGHT_ASSOC
from .syntax import (
    Assign, Binary, Block, BoolLit, Call, Expr, FloatLit, Index, IntLit,
    Lambda, NullLit, Range, StringLit, Symbol, Unary,
)

_IDENT = re.compile(r"(?:[A-Za-z_]|\.(?![0-9]))[A-Za-z0-9_.]*")
_LAMBDA_BP = 15
_ASSIGN_BP = INFIX_BP["<-"]
INDENT = "  "


def is_identifier(name: str) -> bool:
    return bool(_IDENT.fullmatch(name)) and name not in KEYWORDS


def quote_string(s: str) -> str:
    out = ['"']
    for ch in s:
        if ch == '"':
            out.append('\\"')
        elif ch == "\\":
            out.append("\\\\")
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\t":
            out.append("\\t")
        elif ch == "\r":
            out.append("\\r")
        elif ord(ch) < 0x20 or ord(ch) == 0x7F:
            out.append(f"\\x{ord(ch):02x}")
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def _float_text(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Inf" if x > 0 else "-Inf"
    return repr(x)


def _bp(e: Expr) -> int:
    if isinstance(e, Assign):
        return _ASSIGN_BP
    if isinstance(e, Lambda):
        return _LAMBDA_BP
    if isinstance(e, Binary):
        return INFIX_BP[e.op]
    if isinstance(e, Range):
        return INFIX_BP[":"]
    if isinstance(e, Unary):
        return NEG_BP if e.op == "-" else NOT_BP
    if isinstance(e, IntLit) and e.value < 0:
        return NEG_BP
    if isinstance(e, FloatLit) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return NEG_BP
    return POSTFIX_BP


def _operand(e: Expr, minimum: int, indent: str) -> str:
    text = _pp(e, indent)
    return f"({text})" if _bp(e) < minimum else text


def _loose(e: Expr, indent: str) -> str:
    """Print in a position that accepts any expression (args, statements)."""
    return _pp(e, indent)


def _binary(op: str, lhs: Expr, rhs: Expr, indent: str) -> str:
    bp = INFIX_BP[op]
    if op in RIGHT_ASSOC:
        left = _operand(lhs, bp + 1, indent)
        right = _operand(rhs, bp, indent)
    else:
        left = _operand(lhs, bp, indent)
        right = _operand(rhs, bp + 1, indent)
    return f"{left} {op} {right}" if op != ":" else f"{left}:{right}"


def _arg_name(name: str) -> str:
    return name if is_identifier(name) else quote_string(name)


def _pp(e: Expr, indent: str) -> str:
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, FloatLit):
        return _float_text(e.value)
    if isinstance(e, StringLit):
        return quote_string(e.value)
    if isinstance(e, BoolLit):
        return "TRUE" if e.value else "FALSE"
    if isinstance(e, NullLit):
        return "NULL"
    if isinstance(e, Symbol):
        return e.name
    if isinstance(e, Call):
        callee = _operand(e.callee, POSTFIX_BP, indent)
        parts = []
        for a in e.args:
            text = _loose(a.value, indent)
            parts.append(f"{_arg_name(a.name)} = {text}" if a.name is not None else text)
        return f"{callee}({', '.join(parts)})"
    if isinstance(e, Lambda):
        body = e.body
        if isinstance(body, (Lambda, Block)) or _bp(body) > INFIX_BP["|>"]:
            text = _pp(body, indent)
        else:
            text = f"({_pp(body, indent)})"
        return f"\\({', '.join(e.params)}) {text}"
    if isinstance(e, Block):
        if not e.stmts:
            return "{}"
        inner = indent + INDENT
        lines = [inner + _loose(s, inner) for s in e.stmts]
        return "{\n" + "\n".join(lines) + "\n" + indent + "}"
    if isinstance(e, Assign):
        value = e.value
        if isinstance(value, Lambda) or _bp(value) >= _ASSIGN_BP:
            text = _pp(value, indent)
        else:
            text = f"({_pp(value, indent)})"
        return f"{e.target} <- {text}"
    if isinstance(e, Binary):
        return _binary(e.op, e.lhs, e.rhs, indent)
    if isinstance(e, Range):
        return _binary(":", e.lo, e.hi, indent)
    if isinstance(e, Unary):
        bp = NEG_BP if e.op == "-" else NOT_BP
        return e.op + _operand(e.operand, bp + 1, indent)
    if isinstance(e, Index):
        base = _operand(e.base, POSTFIX_BP, indent)
        return f"{base}[{_loose(e.index, indent)}]"
    raise TypeError(f"not an expression: {e!r}")


def pretty_print(expr: Expr) -> str:
    """Render a single expression in canonical form."""
    return _pp(expr, "")


def pretty_program(program: Block) -> str:
    """Render a top-level Block as newline-separated statements."""
    return "".join(_pp(s, "") + "\n" for s in program.stmts)
