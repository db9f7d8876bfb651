"""Tokenizer for mmr source text."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import LexError
from .syntax import SourceSpan

KEYWORDS = frozenset({"TRUE", "FALSE", "NULL", "Inf", "NaN"})

# longest first
OPERATORS = ("|>", "<-", "<=", ">=", "==", "!=", "&&", "||",
             "<", ">", "+", "-", "*", "/", "^", ":", "!", "=")
PUNCT = "(){}[],;\\"

_NUMBER = re.compile(r"(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?")
_IDENT = re.compile(r"[A-Za-z_.][A-Za-z0-9_.]*")
_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "\\": "\\", '"': '"', "'": "'", "0": "\0"}


@dataclass(frozen=True)
class Token:
    kind: str  # ident, int, float, string, operator, punct, keyword, eof
    text: str
    span: SourceSpan
    newline_before: bool = False
    value: object = None

    def is_op(self, *texts: str) -> bool:
        return self.kind == "operator" and self.text in texts

    def is_punct(self, *texts: str) -> bool:
        return self.kind == "punct" and self.text in texts

    def __repr__(self):
        return f"Token({self.kind} {self.text!r})"


class _Cursor:
    def __init__(self, source: str):
        self.src = source
        self.pos = 0
        self.line = 1
        self.col = 1

    def span(self, start_pos, start_line, start_col) -> SourceSpan:
        return SourceSpan(start_line, start_col, start_pos, self.pos - start_pos)

    def advance(self, n: int) -> None:
        for ch in self.src[self.pos:self.pos + n]:
            if ch == "\n":
                self.line += 1
                self.col = 1
            else:
                self.col += 1
        self.pos += n


def _read_string(cur: _Cursor) -> str:
    quote = cur.src[cur.pos]
    start = (cur.pos, cur.line, cur.col)
    cur.advance(1)
    out = []
    src = cur.src
    while True:
        if cur.pos >= len(src) or src[cur.pos] == "\n":
            raise LexError("unterminated string", cur.span(*start))
        ch = src[cur.pos]
        if ch == quote:
            cur.advance(1)
            return "".join(out)
        if ch == "\\":
            nxt = src[cur.pos + 1:cur.pos + 2]
            if nxt in _ESCAPES:
                out.append(_ESCAPES[nxt])
                cur.advance(2)
            elif nxt == "x" and re.fullmatch(r"[0-9a-fA-F]{2}", src[cur.pos + 2:cur.pos + 4]):
                out.append(chr(int(src[cur.pos + 2:cur.pos + 4], 16)))
                cur.advance(4)
            elif nxt == "u" and re.fullmatch(r"[0-9a-fA-F]{4}", src[cur.pos + 2:cur.pos + 6]):
                out.append(chr(int(src[cur.pos + 2:cur.pos + 6], 16)))
                cur.advance(6)
            else:
                here = SourceSpan(cur.line, cur.col, cur.pos, 2)
                raise LexError(f"invalid escape sequence \\{nxt}", here)
        else:
            out.append(ch)
            cur.advance(1)


def tokenize(source: str) -> list[Token]:
    """Split ``source`` into tokens, skipping whitespace and ``#`` comments.

    The returned list always ends with an ``eof`` token.  Each token records
    whether a newline preceded it, which the parser uses as a statement
    separator.
    """
    cur = _Cursor(source)
    tokens: list[Token] = []
    newline = False
    src = source
    while cur.pos < len(src):
        ch = src[cur.pos]
        if ch == "\n":
            newline = True
            cur.advance(1)
            continue
        if ch in " \t\r\f":
            cur.advance(1)
            continue
        if ch == "#":
            end = src.find("\n", cur.pos)
            cur.advance((len(src) if end < 0 else end) - cur.pos)
            continue

        start = (cur.pos, cur.line, cur.col)
        if ch.isdigit() or (ch == "." and src[cur.pos + 1:cur.pos + 2].isdigit()):
            m = _NUMBER.match(src, cur.pos)
            text = m.group(0)
            cur.advance(len(text))
            if "." in text or "e" in text or "E" in text:
                kind, value = "float", float(text)
            else:
                kind, value = "int", int(text)
                if value > 2 ** 63 - 1:
                    raise LexError("integer literal out of range", cur.span(*start))
            tokens.append(Token(kind, text, cur.span(*start), newline, value))
        elif ch.isalpha() or ch in "_.":
            m = _IDENT.match(src, cur.pos)
            text = m.group(0)
            cur.advance(len(text))
            kind = "keyword" if text in KEYWORDS else "ident"
            tokens.append(Token(kind, text, cur.span(*start), newline, text))
        elif ch in "\"'":
            value = _read_string(cur)
            text = src[start[0]:cur.pos]
            tokens.append(Token("string", text, cur.span(*start), newline, value))
        else:
            for op in OPERATORS:
                if src.startswith(op, cur.pos):
                    cur.advance(len(op))
                    tokens.append(Token("operator", op, cur.span(*start), newline, op))
                    break
            else:
                if ch in PUNCT:
                    cur.advance(1)
                    tokens.append(Token("punct", ch, cur.span(*start), newline, ch))
                else:
                    cur.advance(1)
                    raise LexError(f"illegal character {ch!r}", cur.span(*start))
        newline = False
    tokens.append(Token("eof", "", SourceSpan(cur.line, cur.col, cur.pos, 0), newline))
    return tokens
