"""Static free-variable analysis and by-value shipping of globals.

A *scope unit* is a lambda body, the argument of ``local()``, or the lazy
body of ``replicate``/``foreach`` (and their ``par_*`` forms).  Braces alone
do not open a scope.  Within a unit the analysis is flow-sensitive: a name
read before its first unconditional local assignment is free.  Lambda
bodies run later, so they also see every name assigned anywhere in the
enclosing units.
"""

from __future__ import annotations

from typing import Iterable, Optional

from .errors import Signal
from .syntax import (
    Assign, Binary, Block, Call, Expr, Index, Lambda, Range, StringLit,
    Symbol, Unary,
)
from .values import Closure, Env, ErrorObject, MList

_DEFAULT = object()


def _builtin_names() -> frozenset:
    from .builtins import BUILTIN_NAMES

    return BUILTIN_NAMES


def assigned_names(expr: Expr) -> set:
    """Targets assigned in ``expr`` without entering nested scope units."""
    out = set()

    def walk(e):
        if isinstance(e, Assign):
            out.add(e.target)
            walk(e.value)
        elif isinstance(e, Call):
            scoped = _scoped_args(e)
            walk(e.callee)
            for i, a in enumerate(e.args):
                if i not in scoped:
                    walk(a.value)
        elif isinstance(e, Block):
            for s in e.stmts:
                walk(s)
        elif isinstance(e, (Binary,)):
            walk(e.lhs)
            walk(e.rhs)
        elif isinstance(e, Unary):
            walk(e.operand)
        elif isinstance(e, Index):
            walk(e.base)
            walk(e.index)
        elif isinstance(e, Range):
            walk(e.lo)
            walk(e.hi)
        # Lambda: its own unit

    walk(expr)
    return out


def all_assigned_names(expr: Expr) -> set:
    """Every assignment target anywhere in ``expr``, nested units included."""
    from .syntax import transform

    out = set()

    def note(node):
        if isinstance(node, Assign):
            out.add(node.target)
        return node

    transform(expr, note)
    return out


def _scoped_args(node: Call) -> dict:
    """Map arg position -> (inner expr, extra bound names) for scope-unit args."""
    name = node.fname
    args = node.args
    if name in ("local", "quote"):
        return {0: (args[0].value, ())} if args else {}
    if name == "replicate":
        for i, a in enumerate(args):
            if a.name == "expr" or (a.name is None and i == _nth_positional(args, 1)):
                return {i: (a.value, ())}
        return {}
    if name == "foreach":
        var = tuple(a.name for a in args if a.name is not None)[:1]
        for i, a in enumerate(args):
            if a.name is None:
                return {i: (a.value, var)}
        return {}
    if name in ("par_replicate", "par_foreach"):
        var = ()
        if name == "par_foreach" and args and isinstance(args[0].value, StringLit):
            var = (args[0].value.value,)
        return {i: (a.value.args[0].value, var) for i, a in enumerate(args)
                if _is_quote(a.value) and a.value.args}
    return {}


def _nth_positional(args, n: int) -> int:
    seen = 0
    for i, a in enumerate(args):
        if a.name is None:
            if seen == n:
                return i
            seen += 1
    return -1


def _lazy_args(node: Call) -> set:
    """Positions of arguments that are evaluated conditionally."""
    if node.fname == "if_else":
        return set(range(1, len(node.args)))
    return set()


def _is_quote(e: Expr) -> bool:
    return isinstance(e, Call) and e.fname == "quote"


class _Collector:
    def __init__(self, exclude: frozenset):
        self.exclude = exclude
        self.found: dict = {}  # name -> span of first occurrence

    def note(self, sym: Symbol, bound) -> None:
        name = sym.name
        if name in bound or name in self.exclude or name in self.found:
            return
        self.found[name] = sym.span

    def unit(self, e: Expr, bound, late: frozenset = frozenset()) -> None:
        self.walk(e, set(bound), late | assigned_names(e))

    def walk(self, e: Expr, bound: set, late: frozenset) -> None:
        if isinstance(e, Symbol):
            self.note(e, bound)
        elif isinstance(e, Lambda):
            self.unit(e.body, (bound | late) | set(e.params), late)
        elif isinstance(e, Call):
            scoped = _scoped_args(e)
            lazy = _lazy_args(e)
            self.walk(e.callee, bound, late)
            for i, a in enumerate(e.args):
                if i in scoped:
                    inner, extra = scoped[i]
                    self.unit(inner, bound | set(extra), late)
                elif i in lazy:
                    self.walk(a.value, set(bound), late)
                else:
                    self.walk(a.value, bound, late)
        elif isinstance(e, Block):
            for s in e.stmts:
                self.walk(s, bound, late)
        elif isinstance(e, Assign):
            self.walk(e.value, bound, late)
            bound.add(e.target)
        elif isinstance(e, Binary):
            self.walk(e.lhs, bound, late)
            # the right side of && and || may not run, so its assignments don't count
            self.walk(e.rhs, set(bound) if e.op in ("&&", "||") else bound, late)
        elif isinstance(e, Unary):
            self.walk(e.operand, bound, late)
        elif isinstance(e, Index):
            self.walk(e.base, bound, late)
            self.walk(e.index, bound, late)
        elif isinstance(e, Range):
            self.walk(e.lo, bound, late)
            self.walk(e.hi, bound, late)


def free_var_spans(expr: Expr, bound: Iterable[str] = (), exclude=_DEFAULT) -> dict:
    exclude = _builtin_names() if exclude is _DEFAULT else frozenset(exclude)
    c = _Collector(exclude)
    c.unit(expr, set(bound))
    return c.found


def free_vars(expr: Expr, bound: Iterable[str] = (), exclude=_DEFAULT) -> list[str]:
    """Symbols referenced in ``expr`` but not bound, in first-occurrence order.

    ``expr`` itself is treated as a scope unit, so names it assigns count as
    bound.  Builtin names are excluded unless ``exclude`` overrides the set.
    """
    return list(free_var_spans(expr, bound, exclude))


_closure_cache: dict = {}


def closure_free_vars(closure: Closure) -> list[str]:
    key = id(closure.body)
    hit = _closure_cache.get(key)
    if hit is not None and hit[0] is closure.body and hit[1] == closure.params:
        return hit[2]
    names = free_vars(Lambda(closure.params, closure.body), exclude=())
    _closure_cache[key] = (closure.body, closure.params, names)
    return names


def _not_found(name: str, span) -> Signal:
    where = f" (referenced at {span.line}:{span.column})" if span is not None else ""
    return Signal(ErrorObject("GlobalNotFound", f"global '{name}' not found{where}"))


def ship(value, memo: Optional[dict] = None):
    """Deep-copy ``value`` so it no longer references controller state.

    Closures are rebuilt over a fresh environment holding only their
    resolved free variables (recursively shipped).  Recursive closures stay
    cyclic through ``memo``.
    """
    from .builtins import root_env

    if memo is None:
        memo = {}
    if isinstance(value, MList):
        if not any(isinstance(v, (MList, Closure)) for v in value.items):
            return value
        return MList([ship(v, memo) for v in value.items], value.names)
    if not isinstance(value, Closure):
        return value
    if id(value) in memo:
        return memo[id(value)]
    copy = Closure(value.params, value.body, Env({}, root_env()))
    memo[id(value)] = copy
    for name, span in free_var_spans(Lambda(value.params, value.body), exclude=()).items():
        found, v, where = value.env.lookup(name)
        if not found:
            raise _not_found(name, span)
        if where.is_root:
            continue
        copy.env.bindings[name] = ship(v, memo)
    return copy


def resolve_globals(names: Iterable[str], env: Env, spans: Optional[dict] = None) -> dict:
    """Resolve ``names`` through ``env`` and ship each value by deep copy.

    Names that resolve to builtins are dropped; unresolvable names raise a
    ``GlobalNotFound`` error signal.
    """
    spans = spans or {}
    memo: dict = {}
    out = {}
    for name in names:
        found, value, where = env.lookup(name)
        if not found:
            raise _not_found(name, spans.get(name))
        if where.is_root:
            continue
        out[name] = ship(value, memo)
    return out
