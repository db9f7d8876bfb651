"""The ``futurize()`` transpiler.

``futurize(expr, ...)`` captures ``expr`` unevaluated, strips wrapper
constructs, finds which function the core call refers to, asks the registry
for a rewrite rule, rewrites the call into its ``par_*`` form, puts the
wrappers back, and finally evaluates the result (or returns it when
``eval = FALSE``).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

from .builtins import fail, match_args, want_int
from .errors import RegistrationTooLate, Signal
from .interpreter import MAP_FAMILY_PARAMS, foreach_parts
from .syntax import (
    Arg, Block, BoolLit, Call, Expr, FloatLit, IntLit, NullLit, StringLit,
    Symbol, call, transform, with_args,
)
from .values import Builtin, Closure, Env, ErrorObject, Language, MList, type_name

OPTION_NAMES = ("seed", "chunk_size", "scheduling", "stdout", "conditions",
                "globals", "packages", "eval")

WRAPPER_CALLS = frozenset({"local", "identity", "suppress_messages", "suppress_warnings"})


def _option_error(message: str):
    raise Signal(ErrorObject("InvalidOption", message))


def _parse_option(name: str, v):
    """Convert a DSL value into the internal form of option ``name``."""
    if name == "seed":
        if v is True:
            return "auto"
        if v is False or v is None:
            return "off"
        if v in ("off", "auto"):
            return v
        if type(v) is int and v >= 0:
            return v
        _option_error(f"seed must be TRUE, FALSE, \"auto\", \"off\" or a non-negative integer, got {type_name(v)}")
    if name == "chunk_size":
        if v is None:
            return None
        n = want_int("futurize", v, "chunk_size")
        if n < 1:
            _option_error("chunk_size must be a positive integer")
        return n
    if name == "scheduling":
        if type(v) not in (int, float) or not v > 0 or math.isinf(v):
            _option_error("scheduling must be a positive finite number")
        return float(v)
    if name in ("stdout", "conditions"):
        if v is True or v == "relay":
            return "relay"
        if v is False or v == "discard":
            return "discard"
        _option_error(f"{name} must be \"relay\" or \"discard\"")
    if name == "globals":
        if v is True or v == "auto":
            return "auto"
        if isinstance(v, str):
            return (v,)
        if isinstance(v, MList) and all(isinstance(x, str) for x in v):
            return tuple(v.items)
        _option_error("globals must be \"auto\" or a list of names")
    if name == "packages":
        if v is None:
            return None
        if isinstance(v, str):
            return (v,)
        if isinstance(v, MList) and all(isinstance(x, str) for x in v):
            return tuple(v.items)
        _option_error("packages must be a list of names")
    if name == "eval":
        if not isinstance(v, bool):
            _option_error("eval must be TRUE or FALSE")
        return v
    fail("ArgumentError", f"futurize(): unknown option '{name}'")


@dataclass(frozen=True)
class FuturizeOptions:
    seed: object = "off"  # "off" | "auto" | fixed non-negative int
    chunk_size: Optional[int] = None
    scheduling: float = 1.0
    stdout: str = "relay"
    conditions: str = "relay"
    globals: object = "auto"  # "auto" | tuple of names
    packages: Optional[tuple] = None  # accepted and ignored
    eval: bool = True

    @classmethod
    def from_value(cls, v) -> "FuturizeOptions":
        """Build options from a named list such as ``futurize_options()`` returns."""
        if not isinstance(v, MList):
            _option_error(f".options must be a named list, got {type_name(v)}")
        kwargs = {}
        for name, item in v.named_items():
            if name is None:
                _option_error(".options elements must be named")
            kwargs[name] = _parse_option(name, item)
        return cls(**kwargs)

    @classmethod
    def resolve(cls, defaults: dict, user: dict) -> "FuturizeOptions":
        """Entry defaults first, then explicit user values (DSL values)."""
        if "chunk_size" in user and "scheduling" in user:
            raise Signal(ErrorObject(
                "OptionConflict", "chunk_size and scheduling cannot both be set"))
        kwargs = dict(defaults)
        for name, v in user.items():
            kwargs[name] = _parse_option(name, v)
        return cls(**kwargs)

    def to_value(self) -> MList:
        names, items = [], []
        for name, v in self._fields():
            names.append(name)
            items.append(MList(v) if isinstance(v, tuple) else v)
        return MList(items, names)

    def to_expr(self) -> Call:
        """A ``futurize_options(...)`` call that evaluates back to these options."""
        return call("futurize_options", **{name: _literal(v) for name, v in self._fields()})

    def _fields(self):
        yield "seed", self.seed
        if self.chunk_size is not None:
            yield "chunk_size", self.chunk_size
        else:
            yield "scheduling", self.scheduling
        yield "stdout", self.stdout
        yield "conditions", self.conditions
        yield "globals", self.globals
        if self.packages is not None:
            yield "packages", self.packages


def _literal(v) -> Expr:
    if v is None:
        return NullLit()
    if isinstance(v, bool):
        return BoolLit(v)
    if isinstance(v, int):
        return IntLit(v)
    if isinstance(v, float):
        return FloatLit(v)
    if isinstance(v, str):
        return StringLit(v)
    return call("list", *(_literal(x) for x in v))


# registry -----------------------------------------------------------------

@dataclass(frozen=True)
class TranspilerEntry:
    namespace: str
    function_name: str
    rewrite: Callable[[Call, FuturizeOptions], Call]
    defaults: dict = field(default_factory=dict)  # option overrides, e.g. seed -> "auto"

    @property
    def key(self) -> tuple:
        return (self.namespace, self.function_name)


class Registry:
    def __init__(self, entries=()):
        self._entries: dict = {}
        self.sealed = False
        for e in entries:
            self._entries[e.key] = e

    def seal(self) -> None:
        """Called once tasks start running; later registrations are refused."""
        self.sealed = True

    def register(self, entry: TranspilerEntry) -> None:
        if self.sealed:
            raise RegistrationTooLate(
                f"cannot register {entry.namespace}::{entry.function_name} after tasks have run")
        if entry.key in self._entries:
            warnings.warn(
                f"replacing transpiler for {entry.namespace}::{entry.function_name}", stacklevel=2)
        self._entries[entry.key] = entry

    def lookup(self, namespace: str, function_name: str) -> Optional[TranspilerEntry]:
        return self._entries.get((namespace, function_name))

    def supported_packages(self) -> list:
        return sorted({ns for ns, _ in self._entries})

    def supported_functions(self, namespace: str) -> list:
        return sorted(name for ns, name in self._entries if ns == namespace)

    def copy(self) -> "Registry":
        return Registry(self._entries.values())


def _options_arg(opts: FuturizeOptions) -> Arg:
    return Arg(".options", opts.to_expr())


def _match(core: Call, fname: str) -> list:
    return match_args(fname, MAP_FAMILY_PARAMS[fname], None, [(a.name, a.value) for a in core.args])


def _simple_rewrite(fname: str):
    def rewrite(core: Call, opts: FuturizeOptions) -> Call:
        args = [Arg(None, e) for e in _match(core, fname)]
        return Call(Symbol("par_" + fname), tuple(args + [_options_arg(opts)]), core.span)

    return rewrite


def _rewrite_replicate(core: Call, opts: FuturizeOptions) -> Call:
    n, body = _match(core, "replicate")
    args = (Arg(None, n), Arg(None, call("quote", body)), _options_arg(opts))
    return Call(Symbol("par_replicate"), args, core.span)


def _rewrite_foreach(core: Call, opts: FuturizeOptions) -> Call:
    var, xs, body = foreach_parts(core)
    args = (Arg(None, StringLit(var)), Arg(None, xs), Arg(None, call("quote", body)), _options_arg(opts))
    return Call(Symbol("par_foreach"), args, core.span)


def default_registry() -> Registry:
    seeded = {"seed": "auto"}
    return Registry([
        TranspilerEntry("builtin", "map", _simple_rewrite("map")),
        TranspilerEntry("builtin", "map2", _simple_rewrite("map2")),
        TranspilerEntry("builtin", "filter", _simple_rewrite("filter")),
        TranspilerEntry("builtin", "replicate", _rewrite_replicate, seeded),
        TranspilerEntry("builtin", "foreach", _rewrite_foreach),
        TranspilerEntry("builtin", "bootstrap", _simple_rewrite("bootstrap"), seeded),
    ])


# the five steps -------------------------------------------------------------

@dataclass(frozen=True)
class Shell:
    """One wrapper layer removed by :func:`unwrap`."""

    node: Expr  # the Call or Block that held the inner expression

    def wrap(self, inner: Expr) -> Expr:
        if isinstance(self.node, Block):
            return Block(self.node.stmts[:-1] + (inner,), self.node.span)
        return with_args(self.node, [Arg(None, inner)])


def unwrap(expr: Expr):
    """Return ``(shells, core)``; shells are ordered outermost first."""
    shells = []
    while True:
        if isinstance(expr, Block) and expr.stmts:
            shells.append(Shell(expr))
            expr = expr.stmts[-1]
        elif (isinstance(expr, Call) and expr.fname in WRAPPER_CALLS
              and len(expr.args) == 1 and expr.args[0].name is None):
            shells.append(Shell(expr))
            expr = expr.args[0].value
        else:
            return shells, expr


def rewrap(shells, core: Expr) -> Expr:
    for shell in reversed(shells):
        core = shell.wrap(core)
    return core


def identify(core: Expr, env: Env) -> tuple:
    """Resolve the core call's callee to ``(namespace, function_name)``."""
    if not isinstance(core, Call) or not isinstance(core.callee, Symbol):
        raise Signal(ErrorObject("NotACall", "futurize() needs a call to a named function"))
    name = core.callee.name
    found, value, _ = env.lookup(name)
    if not found:
        raise Signal(ErrorObject("SymbolNotFound", f"could not find function '{name}'"))
    if isinstance(value, Builtin):
        return value.namespace, value.name
    if isinstance(value, Closure):
        return "user", name
    raise Signal(ErrorObject("NotACall", f"'{name}' is a {type_name(value)}, not a function"))


def lookup_transpiler(registry: Registry, namespace: str, function_name: str):
    return registry.lookup(namespace, function_name)


def _unsupported(registry: Registry, namespace: str, name: str) -> Signal:
    supported = ", ".join(f"{ns}::{fn}" for ns in registry.supported_packages()
                          for fn in registry.supported_functions(ns))
    return Signal(ErrorObject(
        "UnsupportedCall",
        f"futurize() does not support {namespace}::{name}(); supported functions: {supported}"))


def rewrite(core: Call, opts: FuturizeOptions, registry: Registry, env: Env) -> Call:
    ns, name = identify(core, env)
    entry = registry.lookup(ns, name)
    if entry is None:
        raise _unsupported(registry, ns, name)
    return entry.rewrite(core, opts)


def transpile(target: Expr, user: dict, env: Env, registry: Registry):
    """Rewrite ``target`` given explicit user options; returns ``(expr, options)``."""
    shells, core = unwrap(target)
    ns, name = identify(core, env)
    entry = registry.lookup(ns, name)
    if entry is None:
        raise _unsupported(registry, ns, name)
    opts = FuturizeOptions.resolve(entry.defaults, user)
    return rewrap(shells, entry.rewrite(core, opts)), opts


def split_futurize_args(node: Call):
    """``futurize(expr, opt = value, ...)`` -> ``(expr, {opt: Expr})``."""
    positional = [a.value for a in node.args if a.name is None]
    named = {a.name: a.value for a in node.args if a.name is not None}
    if len(positional) != 1:
        fail("ArgumentError", "futurize() takes exactly one expression plus named options")
    for name in named:
        if name not in OPTION_NAMES:
            fail("ArgumentError", f"futurize(): unknown option '{name}'")
    return positional[0], named


def futurize_call(interp, node: Call, env: Env):
    """Evaluate a ``futurize(...)`` call node (the special form)."""
    runtime = interp.runtime
    target, named = split_futurize_args(node)
    if isinstance(target, BoolLit) and not named:
        runtime.enabled = target.value
        return None
    user = {name: interp.eval_expr(e, env) for name, e in named.items()}
    if not runtime.enabled:
        return passthrough(interp, target, env)
    rewritten, opts = transpile(target, user, env, runtime.registry)
    if not opts.eval:
        return Language(rewritten)
    return interp.eval_expr(rewritten, env)


def passthrough(interp, target: Expr, env: Env):
    """Evaluate ``target`` unchanged (futurization disabled)."""
    if interp.runtime.reverse:
        _, core = unwrap(target)
        if isinstance(core, Call) and (core.fname in MAP_FAMILY_PARAMS or core.fname == "foreach"):
            interp.reversed_calls.add(id(core))
    return interp.eval_expr(target, env)


def futurize(expr, opts: Optional[dict] = None, env: Optional[Env] = None, interp=None):
    """Host-side entry point: futurize ``expr`` (source text or Expr).

    ``opts`` maps option names to DSL values.  Returns the resulting Value,
    or the rewritten Expr when ``eval`` is false.  DSL errors are raised as
    :class:`~mmr.errors.Signal`.
    """
    from .interpreter import Interpreter
    from .parser import parse_expr

    if isinstance(expr, str):
        expr = parse_expr(expr)
    interp = interp if interp is not None else Interpreter()
    env = env if env is not None else interp.global_env
    user = dict(opts or {})
    if not interp.runtime.enabled:
        return passthrough(interp, expr, env)
    rewritten, resolved = transpile(expr, user, env, interp.runtime.registry)
    if not resolved.eval:
        return rewritten
    return interp.eval_expr(rewritten, env)


def transpile_program(program: Block, registry: Optional[Registry] = None) -> Block:
    """Rewrite every ``futurize()`` call in ``program`` without evaluating it.

    Callees are resolved statically: a name counts as the builtin unless the
    program assigns to it somewhere.  Option values must be constant
    expressions; they are evaluated in an empty environment.
    """
    from .analysis import all_assigned_names
    from .builtins import root_env
    from .interpreter import Interpreter

    registry = registry if registry is not None else default_registry()
    env = root_env().child()
    for name in all_assigned_names(program):
        env.define(name, Closure((), NullLit(), env))
    if "futurize" in env.bindings:
        return program
    scratch = Interpreter()

    def rewrite_node(node):
        if not (isinstance(node, Call) and node.fname == "futurize"):
            return node
        target, named = split_futurize_args(node)
        if isinstance(target, BoolLit) and not named:
            return node
        user = {name: scratch.eval_expr(e, scratch.global_env.child()) for name, e in named.items()}
        user.pop("eval", None)
        rewritten, _ = transpile(target, user, env, registry)
        return rewritten

    return transform(program, rewrite_node)


__all__ = [
    "FuturizeOptions", "Registry", "Shell", "TranspilerEntry", "default_registry",
    "futurize", "futurize_call", "identify", "lookup_transpiler", "rewrap", "rewrite",
    "transpile", "transpile_program", "unwrap",
]
