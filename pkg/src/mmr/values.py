"""Runtime values and environments.

Scalars map onto Python natives: ``None`` is Null, ``bool``, ``int`` (kept
within i64), ``float`` and ``str``.  Compound and callable values get their
own classes below.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Sequence

from .syntax import Expr

I64_MIN = -(2 ** 63)
I64_MAX = 2 ** 63 - 1


class MList:
    """Ordered list whose elements may carry (possibly repeated) names."""

    __slots__ = ("items", "names")

    def __init__(self, items: Iterable[Any] = (), names: Optional[Sequence[Optional[str]]] = None):
        self.items = tuple(items)
        if names is not None:
            names = tuple(names)
            if len(names) != len(self.items):
                raise ValueError("names must match items in length")
            if all(n is None for n in names):
                names = None
        self.names = names

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __getitem__(self, i):
        return self.items[i]

    def name_at(self, i: int) -> Optional[str]:
        return None if self.names is None else self.names[i]

    def named_items(self):
        for i, v in enumerate(self.items):
            yield self.name_at(i), v

    def get(self, name: str, default=None):
        if self.names is not None:
            for n, v in zip(self.names, self.items):
                if n == name:
                    return v
        return default

    def __eq__(self, other):
        if not isinstance(other, MList):
            return NotImplemented
        return value_equal(self, other)

    __hash__ = None

    def __repr__(self):
        return f"MList({format_value(self)})"


def mlist(*items, **named) -> MList:
    names = [None] * len(items) + list(named)
    return MList(list(items) + list(named.values()), names)


@dataclass(eq=False)
class Env:
    bindings: dict = field(default_factory=dict)
    parent: Optional["Env"] = None

    def lookup(self, name: str):
        """Return ``(found, value, env)`` searching up the parent chain."""
        env = self
        while env is not None:
            if name in env.bindings:
                return True, env.bindings[name], env
            env = env.parent
        return False, None, None

    def define(self, name: str, value) -> None:
        self.bindings[name] = value

    def child(self, bindings: Optional[dict] = None) -> "Env":
        return Env(dict(bindings or {}), self)

    def __repr__(self) -> str:
        depth, env = 0, self.parent
        while env is not None:
            depth, env = depth + 1, env.parent
        return f"Env({sorted(self.bindings)!r}, depth={depth})"

    @property
    def is_root(self) -> bool:
        return self.parent is None


@dataclass(eq=False)
class Closure:
    params: tuple[str, ...]
    body: Expr
    env: Env

    def captured(self) -> dict:
        """The closure's resolved free variables (builtins excluded)."""
        from .analysis import closure_free_vars

        out = {}
        for name in closure_free_vars(self):
            found, value, where = self.env.lookup(name)
            if found and not where.is_root:
                out[name] = value
        return out


@dataclass(frozen=True)
class Builtin:
    name: str
    namespace: str = "builtin"


@dataclass(frozen=True)
class ErrorObject:
    cls: str
    message: str
    origin_index: Optional[int] = None

    def at(self, index: Optional[int]) -> "ErrorObject":
        return ErrorObject(self.cls, self.message, index)

    def describe(self) -> str:
        text = f"Error ({self.cls}): {self.message}"
        if self.origin_index is not None:
            text += f" [element {self.origin_index}]"
        return text


@dataclass(frozen=True)
class Language:
    """An unevaluated expression used as a value (e.g. ``futurize(eval = FALSE)``)."""

    expr: Expr


def float_bits(x: float) -> bytes:
    return struct.pack(">d", x)


def type_name(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "bool"
    if isinstance(v, int):
        return "int"
    if isinstance(v, float):
        return "float"
    if isinstance(v, str):
        return "string"
    if isinstance(v, MList):
        return "list"
    if isinstance(v, (Closure, Builtin)):
        return "function"
    if isinstance(v, ErrorObject):
        return "error"
    if isinstance(v, Language):
        return "language"
    return type(v).__name__


def value_equal(a, b, _seen=None) -> bool:
    """Structural equality; floats compare bitwise."""
    if type(a) is not type(b):
        return False
    if a is None or isinstance(a, (bool, int, str)):
        return a == b
    if isinstance(a, float):
        return float_bits(a) == float_bits(b)
    if isinstance(a, MList):
        if len(a) != len(b) or a.names != b.names:
            return False
        return all(value_equal(x, y, _seen) for x, y in zip(a.items, b.items))
    if isinstance(a, Closure):
        if a is b:
            return True
        if _seen is None:
            _seen = set()
        key = (id(a), id(b))
        if key in _seen:
            return True
        _seen.add(key)
        if a.params != b.params or a.body != b.body:
            return False
        ca, cb = a.captured(), b.captured()
        if ca.keys() != cb.keys():
            return False
        return all(value_equal(ca[k], cb[k], _seen) for k in ca)
    if isinstance(a, (Builtin, ErrorObject, Language)):
        return a == b
    return False


def _format_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Inf" if x > 0 else "-Inf"
    return repr(x)


def format_value(v) -> str:
    """Human-readable rendering used by ``print`` and the REPL."""
    from .printer import pretty_print, quote_string

    if v is None:
        return "NULL"
    if v is True:
        return "TRUE"
    if v is False:
        return "FALSE"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return _format_float(v)
    if isinstance(v, str):
        return quote_string(v)
    if isinstance(v, MList):
        parts = []
        for name, item in v.named_items():
            text = format_value(item)
            parts.append(f"{name} = {text}" if name is not None else text)
        return "[" + ", ".join(parts) + "]"
    if isinstance(v, Closure):
        from .syntax import Lambda

        return pretty_print(Lambda(v.params, v.body))
    if isinstance(v, Builtin):
        return f"<builtin {v.name}>"
    if isinstance(v, ErrorObject):
        return f"<error {v.cls}: {v.message}>"
    if isinstance(v, Language):
        return pretty_print(v.expr)
    return repr(v)


def as_text(v) -> str:
    """Rendering used by ``cat``/``message``: strings unquoted."""
    if isinstance(v, str):
        return v
    if isinstance(v, MList):
        return " ".join(as_text(x) for x in v.items)
    return format_value(v)
