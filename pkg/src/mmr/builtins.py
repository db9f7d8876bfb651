"""Strict builtin functions and the root environment.

Special forms (which see their arguments unevaluated) live in
:mod:`mmr.interpreter`; this module only records their names so that the
root environment and the free-variable analysis know about them.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

from .errors import Signal
from .values import (
    Builtin, Closure, Env, ErrorObject, MList, as_text, format_value,
    type_name,
)

SPECIAL_FORMS = frozenset({
    "replicate", "foreach", "bootstrap", "map", "map2", "filter",
    "local", "suppress_messages", "suppress_warnings", "futurize", "quote",
    "if_else",
    "par_map", "par_map2", "par_replicate", "par_filter", "par_foreach",
    "par_bootstrap",
})

# values bound in the root env next to the functions
CONSTANTS = {"sequential": "sequential", "threads": "threads", "processes": "processes"}

_REQUIRED = object()


@dataclass(frozen=True)
class BuiltinSpec:
    name: str
    fn: Callable
    params: tuple = ()
    defaults: tuple = ()
    variadic: bool = False


STRICT: dict[str, BuiltinSpec] = {}


def builtin(name: str, params=(), defaults: Optional[dict] = None, variadic=False):
    defaults = defaults or {}

    def deco(fn):
        dvals = tuple(defaults.get(p, _REQUIRED) for p in params)
        STRICT[name] = BuiltinSpec(name, fn, tuple(params), dvals, variadic)
        return fn

    return deco


def fail(cls: str, message: str):
    raise Signal(ErrorObject(cls, message))


def match_args(fname: str, params, defaults, args):
    """Match ``[(name|None, value)]`` against ``params`` R-style.

    Named arguments bind first by exact name, remaining positionals fill the
    unbound parameters left to right.
    """
    bound = {}
    for name, value in args:
        if name is None:
            continue
        if name not in params:
            fail("ArgumentError", f"{fname}(): unused argument '{name}'")
        bound[name] = value
    free = [p for p in params if p not in bound]
    positional = [v for n, v in args if n is None]
    if len(positional) > len(free):
        fail("ArgumentError", f"{fname}(): too many arguments")
    for p, v in zip(free, positional):
        bound[p] = v
    out = []
    for p, d in zip(params, defaults or (_REQUIRED,) * len(params)):
        if p in bound:
            out.append(bound[p])
        elif d is _REQUIRED:
            fail("ArgumentError", f"{fname}(): argument '{p}' is missing")
        else:
            out.append(d)
    return out


def call_builtin(interp, spec: BuiltinSpec, args):
    if spec.variadic:
        return spec.fn(interp, args)
    return spec.fn(interp, *match_args(spec.name, spec.params, spec.defaults, args))


# type helpers -------------------------------------------------------------

def is_int(v) -> bool:
    return type(v) is int


def is_num(v) -> bool:
    return type(v) in (int, float)


def want_list(fname: str, v) -> MList:
    if not isinstance(v, MList):
        fail("TypeError", f"{fname}(): expected a list, got {type_name(v)}")
    return v


def want_int(fname: str, v, what="n") -> int:
    if is_int(v):
        return v
    if type(v) is float and v.is_integer():
        return int(v)
    fail("TypeError", f"{fname}(): '{what}' must be an integer, got {type_name(v)}")


def want_num(fname: str, v) -> float:
    if not is_num(v):
        fail("TypeError", f"{fname}(): expected a number, got {type_name(v)}")
    return v


def want_callable(fname: str, v):
    if not isinstance(v, (Closure, Builtin)):
        fail("TypeError", f"{fname}(): expected a function, got {type_name(v)}")
    return v


def paste0(args) -> str:
    return "".join(as_text(v) for _, v in args)


# output and conditions ----------------------------------------------------

@builtin("print", ("x",))
def _print(interp, x):
    interp.emit("stdout", format_value(x) + "\n")
    return None


@builtin("cat", variadic=True)
def _cat(interp, args):
    interp.emit("stdout", " ".join(as_text(v) for _, v in args))
    return None


@builtin("message", variadic=True)
def _message(interp, args):
    interp.emit("message", paste0(args))
    return None


@builtin("warning", variadic=True)
def _warning(interp, args):
    interp.emit("warning", paste0(args))
    return None


@builtin("progress", ("frac",))
def _progress(interp, frac):
    if not is_num(frac) or not 0.0 <= frac <= 1.0:
        fail("InvalidProgress", "progress() needs a fraction in [0, 1]")
    interp.emit("progress", float(frac))
    return None


@builtin("stop", variadic=True)
def _stop(interp, args):
    raise Signal(ErrorObject("user", paste0(args)))


# lists and numbers --------------------------------------------------------

@builtin("list", variadic=True)
def _list(interp, args):
    return MList([v for _, v in args], [n for n, _ in args])


@builtin("length", ("x",))
def _length(interp, x):
    if isinstance(x, MList):
        return len(x)
    if isinstance(x, str):
        return len(x)
    return 0 if x is None else 1


@builtin("names", ("x",))
def _names(interp, x):
    x = want_list("names", x)
    if x.names is None:
        return None
    return MList(["" if n is None else n for n in x.names])


def _numbers(fname, xs):
    xs = want_list(fname, xs)
    for v in xs:
        want_num(fname, v)
    return xs.items


@builtin("sum", ("x",))
def _sum(interp, x):
    items = _numbers("sum", x)
    if all(is_int(v) for v in items):
        return interp.check_int(sum(items))
    return math.fsum(items) if items else 0.0


@builtin("mean", ("x",))
def _mean(interp, x):
    items = _numbers("mean", x)
    if not items:
        fail("EmptyData", "mean() of an empty list")
    return math.fsum(items) / len(items)


@builtin("sqrt", ("x",))
def _sqrt(interp, x):
    x = want_num("sqrt", x)
    return math.sqrt(x) if x >= 0 else math.nan


@builtin("abs", ("x",))
def _abs(interp, x):
    x = want_num("abs", x)
    return interp.check_int(abs(x)) if is_int(x) else abs(x)


@builtin("floor", ("x",))
def _floor(interp, x):
    x = want_num("floor", x)
    return x if is_int(x) else float(math.floor(x))


@builtin("rev", ("x",))
def _rev(interp, x):
    x = want_list("rev", x)
    names = None if x.names is None else x.names[::-1]
    return MList(x.items[::-1], names)


@builtin("seq", ("from", "to", "by"), {"by": 1})
def _seq(interp, start, stop, by):
    start, stop = want_int("seq", start, "from"), want_int("seq", stop, "to")
    by = want_int("seq", by, "by")
    if by == 0:
        fail("ArgumentError", "seq(): 'by' must be non-zero")
    if (stop - start) * by < 0:
        fail("ArgumentError", "seq(): wrong sign in 'by'")
    return MList(range(start, stop + (1 if by > 0 else -1), by))


@builtin("identity", ("x",))
def _identity(interp, x):
    return x


@builtin("paste", variadic=True)
def _paste(interp, args):
    return " ".join(as_text(v) for _, v in args)


@builtin("paste0", variadic=True)
def _paste0(interp, args):
    return paste0(args)


@builtin("is_null", ("x",))
def _is_null(interp, x):
    return x is None


@builtin("reduce", ("xs", "f", "init"))
def _reduce(interp, xs, f, init):
    xs = want_list("reduce", xs)
    f = want_callable("reduce", f)
    acc = init
    for v in xs.items:
        acc = interp.call_value(f, [(None, acc), (None, v)])
    return acc


# randomness and test aids -------------------------------------------------

@builtin("runif", ("n",))
def _runif(interp, n):
    n = want_int("runif", n)
    return MList([interp.draw_uniform() for _ in range(max(n, 0))])


@builtin("rnorm", ("n",))
def _rnorm(interp, n):
    n = want_int("rnorm", n)
    return MList([interp.draw_normal() for _ in range(max(n, 0))])


@builtin("set_seed", ("seed",))
def _set_seed(interp, seed):
    seed = want_int("set_seed", seed, "seed")
    if seed < 0:
        fail("ArgumentError", "set_seed(): seed must be non-negative")
    interp.set_seed(seed)
    return None


@builtin("sleep_ms", ("ms",))
def _sleep_ms(interp, ms):
    ms = want_num("sleep_ms", ms)
    deadline = time.monotonic() + ms / 1000.0
    while True:
        interp.check_cancelled()
        left = deadline - time.monotonic()
        if left <= 0:
            return None
        time.sleep(min(left, 0.02))


@builtin("tick", ())
def _tick(interp):
    # deliberately impure: exposes evaluation order (litmus-test fixture)
    interp.tick_count += 1
    return interp.tick_count


# runtime control ----------------------------------------------------------

@builtin("plan", ("kind", "workers"), {"kind": None, "workers": None})
def _plan(interp, kind, workers):
    from .runtime import Plan

    if kind is None:
        return str(interp.runtime.get_plan())
    if not isinstance(kind, str):
        fail("InvalidPlan", f"plan(): kind must be a string, got {type_name(kind)}")
    if workers is not None:
        workers = want_int("plan", workers, "workers")
    try:
        interp.runtime.request_plan(Plan.make(kind, workers))
    except Exception as exc:
        fail("InvalidPlan", str(exc))
    return None


@builtin("futurize_enabled", ("flag",), {"flag": None})
def _futurize_enabled(interp, flag):
    if flag is None:
        return interp.runtime.enabled
    if not isinstance(flag, bool):
        fail("TypeError", "futurize_enabled() needs TRUE or FALSE")
    interp.runtime.enabled = flag
    return None


@builtin("futurize_supported_packages", ())
def _supported_packages(interp):
    return MList(interp.runtime.registry.supported_packages())


@builtin("futurize_supported_functions", ("ns",))
def _supported_functions(interp, ns):
    if not isinstance(ns, str):
        fail("TypeError", "futurize_supported_functions() needs a namespace string")
    return MList(interp.runtime.registry.supported_functions(ns))


@builtin("futurize_options", ("seed", "chunk_size", "scheduling", "stdout",
                              "conditions", "globals", "packages", "eval"),
         {"seed": "off", "chunk_size": None, "scheduling": 1.0, "stdout": "relay",
          "conditions": "relay", "globals": "auto", "packages": None, "eval": True})
def _futurize_options(interp, *values):
    from .futurize import FuturizeOptions

    names = STRICT["futurize_options"].params
    return FuturizeOptions.from_value(MList(values, names)).to_value()


BUILTIN_NAMES = frozenset(STRICT) | SPECIAL_FORMS | frozenset(CONSTANTS)

_ROOT: Optional[Env] = None


def root_env() -> Env:
    """The shared, read-only environment holding every builtin."""
    global _ROOT
    if _ROOT is None:
        env = Env({}, None)
        for name in sorted(STRICT.keys() | SPECIAL_FORMS):
            env.bindings[name] = Builtin(name)
        env.bindings.update(CONSTANTS)
        _ROOT = env
    return _ROOT


__all__ = [
    "BUILTIN_NAMES", "SPECIAL_FORMS", "STRICT", "BuiltinSpec", "call_builtin",
    "fail", "match_args", "root_env",
]
