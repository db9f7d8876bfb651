"""Tree-walking evaluator.

Errors raised by mmr code are values (:class:`~mmr.values.ErrorObject`);
internally they travel as :class:`~mmr.errors.Signal` exceptions and are
turned into the ``result`` of an :class:`EvalOutcome` at the top.

Output builtins (``print``, ``cat``, ``message``, ``warning``,
``progress``) emit :class:`ConditionRecord` objects into the innermost
*sink*.  The base sink either records them (capture mode) or writes them to
the host streams straight away; ``suppress_*`` push filtering sinks on top.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import rng
from .builtins import (
    SPECIAL_FORMS, STRICT, call_builtin, fail, is_int, is_num, match_args,
    root_env, want_callable, want_int, want_list,
)
from .errors import Signal
from .syntax import (
    Assign, Binary, Block, BoolLit, Call, Expr, FloatLit, Index, IntLit,
    Lambda, NullLit, Range, StringLit, Symbol, Unary,
)
from .values import (
    I64_MAX, I64_MIN, Builtin, Closure, Env, ErrorObject, Language, MList,
    type_name,
)

RECORD_CLASSES = ("stdout", "message", "warning", "progress")

# parameter lists of the map-family builtins; the transpiler reuses them
MAP_FAMILY_PARAMS = {
    "map": ("xs", "f"),
    "map2": ("xs", "ys", "f"),
    "filter": ("xs", "f"),
    "replicate": ("n", "expr"),
    "bootstrap": ("data", "statistic", "R"),
}


@dataclass
class ConditionRecord:
    cls: str  # one of RECORD_CLASSES
    payload: object  # text, or a float fraction for progress
    origin_index: Optional[int] = None
    sequence: int = 0

    def key(self):
        return (self.cls, self.payload)


@dataclass
class EvalOutcome:
    result: object
    records: list = field(default_factory=list)
    rng_used: bool = False

    @property
    def error(self) -> Optional[ErrorObject]:
        return self.result if isinstance(self.result, ErrorObject) else None


def render_record(rec: ConditionRecord, progress_format: str = "text"):
    """Return ``(stream, text)`` for writing a record to the host."""
    if rec.cls == "stdout":
        return "stdout", rec.payload
    if rec.cls == "message":
        return "stderr", f"{rec.payload}\n"
    if rec.cls == "warning":
        return "stderr", f"Warning: {rec.payload}\n"
    if progress_format == "json":
        return "stderr", json.dumps({"progress": rec.payload, "origin_index": rec.origin_index}) + "\n"
    return "stderr", f"[progress] {round(rec.payload * 100)}%\n"


class Interpreter:
    def __init__(self, runtime=None, progress_format: str = "text"):
        from .runtime import get_runtime

        self.runtime = runtime if runtime is not None else get_runtime()
        self.global_env = root_env().child()
        self.progress_format = progress_format
        self._sinks: list[Callable] = []
        self.seq = 0
        self.origin: Optional[int] = None
        self.rng_seed: Optional[int] = None
        self.stream: Optional[rng.RngStream] = None
        self.rng_used = False
        self.tick_count = 0
        self.cancel_check: Optional[Callable[[], bool]] = None
        self.reversed_calls: set = set()
        self._dispatch = {
            IntLit: self._literal, FloatLit: self._literal, StringLit: self._literal,
            BoolLit: self._literal, NullLit: lambda e, env: None,
            Symbol: self._symbol, Call: self._call, Lambda: self._lambda,
            Block: self._block, Assign: self._assign, Binary: self._binary,
            Unary: self._unary, Index: self._index, Range: self._range,
        }

    # entry points --------------------------------------------------------

    def eval(self, expr: Expr, env: Optional[Env] = None, capture: bool = False) -> EvalOutcome:
        """Evaluate ``expr``; errors come back as the outcome's result."""
        env = env if env is not None else self.global_env
        records: list = []
        sink = records.append if capture else self._host_sink
        saved_rng = self.rng_used
        self.rng_used = False
        self._sinks.append(sink)
        try:
            result = self.eval_expr(expr, env)
        except Signal as s:
            result = s.error
        except RecursionError:
            result = ErrorObject("StackOverflow", "evaluation nested too deeply")
        finally:
            self._sinks.pop()
        used = self.rng_used
        self.rng_used = saved_rng or used
        return EvalOutcome(result, records, used)

    def eval_expr(self, e: Expr, env: Env):
        return self._dispatch[type(e)](e, env)

    # output --------------------------------------------------------------

    def _host_sink(self, rec: ConditionRecord) -> None:
        stream, text = render_record(rec, self.progress_format)
        out = sys.stdout if stream == "stdout" else sys.stderr
        out.write(text)
        out.flush()

    def emit(self, cls: str, payload) -> None:
        self.emit_record(ConditionRecord(cls, payload, self.origin))

    def emit_record(self, rec: ConditionRecord) -> None:
        rec = ConditionRecord(rec.cls, rec.payload, rec.origin_index, self.seq)
        self.seq += 1
        if self._sinks:
            self._sinks[-1](rec)
        else:
            self._host_sink(rec)

    def with_filter(self, drop: str, thunk):
        outer = self._sinks[-1] if self._sinks else self._host_sink

        def sink(rec):
            if rec.cls != drop:
                outer(rec)

        self._sinks.append(sink)
        try:
            return thunk()
        finally:
            self._sinks.pop()

    # randomness ----------------------------------------------------------

    def set_seed(self, seed: int) -> None:
        self.rng_seed = seed
        self.stream = rng.derive_stream(seed, rng.CONTROLLER_STREAM)

    def _current_stream(self) -> rng.RngStream:
        self.rng_used = True
        if self.stream is None:
            self.stream = rng.entropy_stream()
        return self.stream

    def draw_uniform(self) -> float:
        return self._current_stream().uniform()

    def draw_normal(self) -> float:
        return self._current_stream().normal()

    def check_cancelled(self) -> None:
        if self.cancel_check is not None and self.cancel_check():
            raise Signal(ErrorObject("Cancelled", "task cancelled"))

    @staticmethod
    def check_int(v: int) -> int:
        if not I64_MIN <= v <= I64_MAX:
            fail("IntegerOverflow", "integer result outside the 64-bit range")
        return v

    # element iteration shared by every map-family form -------------------

    def iterate(self, node, n: int, element: Callable[[int], object]) -> list:
        """Evaluate ``element(i)`` for i in 0..n-1 and return results in order.

        While a seed is active each element draws from its own stream,
        keyed by the element index, so results do not depend on the order of
        evaluation.  Element errors are tagged with their 1-based index.
        """
        results = [None] * n
        order = range(n - 1, -1, -1) if id(node) in self.reversed_calls else range(n)
        seed = self.rng_seed
        outermost = self.origin is None
        for i in order:
            self.check_cancelled()
            saved = (self.stream, self.rng_seed, self.origin)
            if seed is not None:
                self.stream = rng.derive_stream(seed, i)
                self.rng_seed = None
            if outermost:
                self.origin = i + 1
            try:
                results[i] = element(i)
            except Signal as s:
                raise Signal(s.error.at(i + 1)) from None
            finally:
                self.stream, self.rng_seed, self.origin = saved
        return results

    # calls ---------------------------------------------------------------

    def eval_args(self, node: Call, env: Env) -> list:
        return [(a.name, self.eval_expr(a.value, env)) for a in node.args]

    def call_value(self, f, args: list):
        if isinstance(f, Closure):
            return self.call_closure(f, args)
        if isinstance(f, Builtin):
            spec = STRICT.get(f.name)
            if spec is None:
                fail("TypeError", f"{f.name}() cannot be called indirectly")
            return call_builtin(self, spec, args)
        fail("TypeError", f"attempt to call a {type_name(f)}")

    def call_closure(self, f: Closure, args: list):
        bindings = match_args("function", f.params, None, args)
        env = Env(dict(zip(f.params, bindings)), f.env)
        return self.eval_expr(f.body, env)

    def _call(self, node: Call, env: Env):
        callee = node.callee
        if isinstance(callee, Symbol):
            found, f, _ = env.lookup(callee.name)
            if not found:
                fail("SymbolNotFound", f"could not find function '{callee.name}'")
            if isinstance(f, Builtin) and f.name in SPECIAL_FORMS:
                return getattr(self, "_sf_" + f.name)(node, env)
        else:
            f = self.eval_expr(callee, env)
        return self.call_value(f, self.eval_args(node, env))

    # special forms -------------------------------------------------------

    def _matched(self, node: Call, env: Env, fname: str):
        return match_args(fname, MAP_FAMILY_PARAMS[fname], None, self.eval_args(node, env))

    def _sf_map(self, node, env):
        xs, f = self._matched(node, env, "map")
        xs = want_list("map", xs)
        f = want_callable("map", f)
        out = self.iterate(node, len(xs), lambda i: self.call_value(f, [(None, xs.items[i])]))
        return MList(out, xs.names)

    def _sf_map2(self, node, env):
        xs, ys, f = self._matched(node, env, "map2")
        xs, ys = want_list("map2", xs), want_list("map2", ys)
        f = want_callable("map2", f)
        if len(xs) != len(ys):
            fail("LengthMismatch", f"map2(): lengths differ ({len(xs)} vs {len(ys)})")
        out = self.iterate(node, len(xs),
                           lambda i: self.call_value(f, [(None, xs.items[i]), (None, ys.items[i])]))
        return MList(out, xs.names)

    def _sf_filter(self, node, env):
        xs, f = self._matched(node, env, "filter")
        xs = want_list("filter", xs)
        f = want_callable("filter", f)
        keep = self.iterate(node, len(xs), lambda i: predicate_result(
            self.call_value(f, [(None, xs.items[i])]), i))
        return select(xs, keep)

    def _lazy_args(self, node: Call, fname: str, params):
        """Match args by name/position without evaluating them."""
        pairs = [(a.name, a.value) for a in node.args]
        return dict(zip(params, match_args(fname, params, None, pairs)))

    def _sf_replicate(self, node, env):
        args = self._lazy_args(node, "replicate", MAP_FAMILY_PARAMS["replicate"])
        n = want_int("replicate", self.eval_expr(args["n"], env))
        if n < 0:
            fail("ArgumentError", "replicate(): n must be non-negative")
        body = args["expr"]
        return MList(self.iterate(node, n, lambda i: self.eval_expr(body, env.child())))

    def _sf_foreach(self, node, env):
        var, xs_expr, body = foreach_parts(node)
        xs = want_list("foreach", self.eval_expr(xs_expr, env))
        return MList(self.iterate(
            node, len(xs), lambda i: self.eval_expr(body, env.child({var: xs.items[i]}))))

    def _sf_bootstrap(self, node, env):
        data, statistic, reps = self._matched(node, env, "bootstrap")
        data, statistic, reps = check_bootstrap(data, statistic, reps)
        n = len(data)

        def one(i):
            idx = MList([1 + int(self.draw_uniform() * n) for _ in range(n)])
            return self.call_value(statistic, [(None, data), (None, idx)])

        return MList(self.iterate(node, reps, one))

    def _sf_local(self, node, env):
        if len(node.args) != 1:
            fail("ArgumentError", "local() takes one expression")
        return self.eval_expr(node.args[0].value, env.child())

    def _sf_suppress_messages(self, node, env):
        return self._suppress(node, env, "message")

    def _sf_suppress_warnings(self, node, env):
        return self._suppress(node, env, "warning")

    def _suppress(self, node, env, cls):
        if len(node.args) != 1:
            fail("ArgumentError", f"suppress_{cls}s() takes one expression")
        return self.with_filter(cls, lambda: self.eval_expr(node.args[0].value, env))

    def _sf_quote(self, node, env):
        if len(node.args) != 1:
            fail("ArgumentError", "quote() takes one expression")
        return Language(node.args[0].value)

    def _sf_if_else(self, node, env):
        pairs = [(a.name, a.value) for a in node.args]
        cond, yes, no = match_args("if_else", ("cond", "yes", "no"), (None, None, NullLit()), pairs)
        test = self.eval_expr(cond, env)
        if not isinstance(test, bool):
            fail("TypeError", f"if_else(): condition must be TRUE or FALSE, got {type_name(test)}")
        return self.eval_expr(yes if test else no, env)

    def _sf_futurize(self, node, env):
        from .futurize import futurize_call

        return futurize_call(self, node, env)

    def _par(self, node, env):
        from .runtime import build_kernel

        kernel, opts = build_kernel(self, node, env)
        return self.runtime.execute(self, kernel, opts, env)

    _sf_par_map = _sf_par_map2 = _sf_par_filter = _par
    _sf_par_replicate = _sf_par_foreach = _sf_par_bootstrap = _par

    # plain nodes ---------------------------------------------------------

    def _literal(self, e, env):
        return e.value

    def _symbol(self, e: Symbol, env: Env):
        found, value, _ = env.lookup(e.name)
        if not found:
            fail("SymbolNotFound", f"object '{e.name}' not found")
        return value

    def _lambda(self, e: Lambda, env: Env):
        return Closure(e.params, e.body, env)

    def _block(self, e: Block, env: Env):
        result = None
        for s in e.stmts:
            result = self.eval_expr(s, env)
        return result

    def _assign(self, e: Assign, env: Env):
        value = self.eval_expr(e.value, env)
        env.define(e.target, value)
        return value

    def _unary(self, e: Unary, env: Env):
        v = self.eval_expr(e.operand, env)
        if e.op == "-":
            if is_int(v):
                return self.check_int(-v)
            if type(v) is float:
                return -v
            fail("TypeError", f"invalid argument to unary minus: {type_name(v)}")
        if not isinstance(v, bool):
            fail("TypeError", f"invalid argument to '!': {type_name(v)}")
        return not v

    def _binary(self, e: Binary, env: Env):
        op = e.op
        if op in ("&&", "||"):
            left = self.eval_expr(e.lhs, env)
            if not isinstance(left, bool):
                fail("TypeError", f"invalid '{op}' operand: {type_name(left)}")
            if (op == "&&" and not left) or (op == "||" and left):
                return left
            right = self.eval_expr(e.rhs, env)
            if not isinstance(right, bool):
                fail("TypeError", f"invalid '{op}' operand: {type_name(right)}")
            return right
        a = self.eval_expr(e.lhs, env)
        b = self.eval_expr(e.rhs, env)
        if op in ("==", "!=", "<", "<=", ">", ">="):
            return compare(op, a, b)
        return self.arith(op, a, b)

    def arith(self, op: str, a, b):
        if not (is_num(a) and is_num(b)):
            fail("TypeError", f"non-numeric argument to '{op}': {type_name(a)} {op} {type_name(b)}")
        if is_int(a) and is_int(b):
            if op == "+":
                return self.check_int(a + b)
            if op == "-":
                return self.check_int(a - b)
            if op == "*":
                return self.check_int(a * b)
            if op == "^" and b >= 0:
                if abs(a) > 1 and b > 64:
                    fail("IntegerOverflow", "integer result outside the 64-bit range")
                return self.check_int(a ** b)
        a, b = float(a), float(b)
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            return float_div(a, b)
        return float_pow(a, b)

    def _index(self, e: Index, env: Env):
        base = self.eval_expr(e.base, env)
        idx = self.eval_expr(e.index, env)
        base = want_list("[", base)
        if isinstance(idx, MList):
            # a list of positions selects a sub-list (used by bootstrap statistics)
            picks = [self._position(base, j) for j in idx.items]
            names = [base.names[p] for p in picks] if base.names else None
            return MList([base.items[p] for p in picks], names)
        if isinstance(idx, str):
            for name, v in base.named_items():
                if name == idx:
                    return v
            fail("IndexError", f"no element named '{idx}'")
        return base.items[self._position(base, idx)]

    @staticmethod
    def _position(base: MList, idx) -> int:
        i = want_int("[", idx, "index")
        if not 1 <= i <= len(base):
            fail("IndexError", f"index {i} out of bounds for list of length {len(base)}")
        return i - 1

    def _range(self, e: Range, env: Env):
        lo = want_int(":", self.eval_expr(e.lo, env), "from")
        hi = want_int(":", self.eval_expr(e.hi, env), "to")
        step = 1 if hi >= lo else -1
        return MList(range(lo, hi + step, step))


# helpers shared with the task kernels ------------------------------------

def predicate_result(v, i: int) -> bool:
    if not isinstance(v, bool):
        raise Signal(ErrorObject(
            "NonBooleanPredicate",
            f"predicate returned {type_name(v)} instead of TRUE/FALSE at index {i + 1}", i + 1))
    return v


def select(xs: MList, keep: list) -> MList:
    items = [v for v, k in zip(xs.items, keep) if k]
    names = None
    if xs.names is not None:
        names = [n for n, k in zip(xs.names, keep) if k]
    return MList(items, names)


def foreach_parts(node: Call):
    """Split ``foreach(var = xs, body)`` into its three parts."""
    named = [a for a in node.args if a.name is not None]
    positional = [a for a in node.args if a.name is None]
    if len(named) != 1 or len(positional) != 1:
        fail("ArgumentError", "foreach() needs one 'var = list' argument and one body")
    return named[0].name, named[0].value, positional[0].value


def check_bootstrap(data, statistic, reps):
    data = want_list("bootstrap", data)
    statistic = want_callable("bootstrap", statistic)
    reps = want_int("bootstrap", reps, "R")
    if reps < 0:
        fail("ArgumentError", "bootstrap(): R must be non-negative")
    if len(data) == 0:
        fail("EmptyData", "bootstrap(): data is empty")
    return data, statistic, reps


def compare(op: str, a, b) -> bool:
    if is_num(a) and is_num(b):
        pass
    elif type(a) is str and type(b) is str:
        pass
    elif type(a) is bool and type(b) is bool and op in ("==", "!="):
        pass
    elif a is None and b is None and op in ("==", "!="):
        return op == "=="
    else:
        fail("TypeError", f"cannot compare {type_name(a)} {op} {type_name(b)}")
    if op == "==":
        return a == b
    if op == "!=":
        return a != b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    return a >= b


def float_div(a: float, b: float) -> float:
    if b == 0.0:
        if a == 0.0 or math.isnan(a):
            return math.nan
        return math.copysign(math.inf, a) * math.copysign(1.0, b)
    return a / b


def float_pow(a: float, b: float) -> float:
    try:
        return math.pow(a, b)
    except OverflowError:
        if a < 0 and b.is_integer() and int(b) % 2 == 1:
            return -math.inf
        return math.inf
    except ValueError:
        if a == 0.0 and b < 0:
            return math.inf
        return math.nan


def evaluate(expr: Expr, env: Optional[Env] = None, capture: bool = False,
             runtime=None) -> EvalOutcome:
    """Evaluate ``expr`` in a fresh interpreter (``env`` defaults to a new global env)."""
    interp = Interpreter(runtime)
    return interp.eval(expr, env if env is not None else interp.global_env, capture)
