"""Futurized execution: chunking, task construction, collection and relay."""

from __future__ import annotations

import atexit
import itertools
import os
import queue
import threading
import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from . import rng
from .analysis import free_var_spans, resolve_globals, ship
from .builtins import fail, match_args, root_env, want_callable, want_int, want_list
from .errors import InvalidPlan, Signal
from .interpreter import (
    ConditionRecord, Interpreter, check_bootstrap, predicate_result, select,
)
from .syntax import Expr
from .values import Closure, Env, ErrorObject, Language, MList, type_name

PLAN_KINDS = ("sequential", "threads", "processes")
_TASK_IDS = itertools.count(1)
RNG_WARNING = "RNG used without seed option"

KERNEL_PARAMS = {
    "map": ("xs", "f"),
    "map2": ("xs", "ys", "f"),
    "filter": ("xs", "f"),
    "replicate": ("n", "expr"),
    "foreach": ("var", "xs", "body"),
    "bootstrap": ("data", "statistic", "R"),
}


@dataclass(frozen=True)
class Plan:
    kind: str
    workers: int = 1

    @classmethod
    def make(cls, kind: str, workers: Optional[int] = None) -> "Plan":
        if kind not in PLAN_KINDS:
            raise InvalidPlan(f"unknown plan kind '{kind}' (expected one of {', '.join(PLAN_KINDS)})")
        if kind == "sequential":
            if workers is not None and workers < 1:
                raise InvalidPlan("workers must be at least 1")
            return cls("sequential", 1)
        if workers is None:
            workers = default_workers()
        if workers < 1:
            raise InvalidPlan("workers must be at least 1")
        return cls(kind, workers)

    @classmethod
    def parse(cls, text: str) -> "Plan":
        """Parse ``kind`` or ``kind:workers`` (the CLI form)."""
        kind, _, count = text.partition(":")
        workers = None
        if count:
            try:
                workers = int(count)
            except ValueError:
                raise InvalidPlan(f"invalid worker count '{count}'") from None
        return cls.make(kind, workers)

    def __str__(self) -> str:
        return f"{self.kind}:{self.workers}"


def default_workers() -> int:
    raw = os.environ.get("MMR_WORKERS", "")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n > 0:
        return n
    return os.cpu_count() or 1


@dataclass(frozen=True)
class Chunk:
    chunk_index: int
    start: int
    end: int

    def __len__(self):
        return self.end - self.start


def make_chunks(n: int, workers: int, scheduling: float = 1.0,
                chunk_size: Optional[int] = None) -> list[Chunk]:
    if n <= 0:
        return []
    if chunk_size is not None:
        bounds = [(s, min(s + chunk_size, n)) for s in range(0, n, chunk_size)]
    else:
        count = min(n, max(1, round(workers * scheduling)))
        base, extra = divmod(n, count)
        bounds, start = [], 0
        for k in range(count):
            size = base + (1 if k < extra else 0)
            bounds.append((start, start + size))
            start += size
    return [Chunk(k, s, e) for k, (s, e) in enumerate(bounds)]


# kernels ------------------------------------------------------------------

@dataclass
class Kernel:
    """A map-family call with its arguments evaluated and shipped."""

    kind: str
    n: int
    xs: Optional[MList] = None
    ys: Optional[MList] = None
    fn: object = None
    body: Optional[Expr] = None
    var: Optional[str] = None
    data: Optional[MList] = None
    globals: dict = field(default_factory=dict)


def build_kernel(interp, node, env: Env):
    """Evaluate the arguments of a ``par_*`` call into a Kernel plus options."""
    from .futurize import FuturizeOptions

    kind = node.fname[len("par_"):]
    opts = FuturizeOptions()
    pairs = []
    for a in node.args:
        value = interp.eval_expr(a.value, env)
        if a.name == ".options":
            opts = FuturizeOptions.from_value(value)
        else:
            pairs.append((a.name, value))
    fname = node.fname
    args = match_args(fname, KERNEL_PARAMS[kind], None, pairs)
    explicit = opts.globals if isinstance(opts.globals, tuple) else None
    k = Kernel(kind, 0)
    if kind in ("map", "map2", "filter"):
        k.xs = ship(want_list(fname, args[0]))
        if kind == "map2":
            k.ys = ship(want_list(fname, args[1]))
            if len(k.xs) != len(k.ys):
                fail("LengthMismatch", f"map2(): lengths differ ({len(k.xs)} vs {len(k.ys)})")
        k.fn = ship(want_callable(fname, args[-1]))
        k.n = len(k.xs)
    elif kind == "replicate":
        k.n = want_int(fname, args[0])
        if k.n < 0:
            fail("ArgumentError", "replicate(): n must be non-negative")
        k.body = _language(fname, args[1])
    elif kind == "foreach":
        if not isinstance(args[0], str):
            fail("TypeError", f"{fname}(): variable name must be a string")
        k.var = args[0]
        k.xs = ship(want_list(fname, args[1]))
        k.body = _language(fname, args[2])
        k.n = len(k.xs)
    else:
        data, statistic, reps = check_bootstrap(*args)
        k.data, k.fn, k.n = ship(data), ship(statistic), reps
    if k.body is not None:
        bound = (k.var,) if k.var else ()
        spans = free_var_spans(k.body, bound)
        names = explicit if explicit is not None else list(spans)
        k.globals = resolve_globals(names, env, spans)
    elif explicit is not None:
        k.globals = resolve_globals(explicit, env)
    return k, opts


def _language(fname: str, v) -> Expr:
    if not isinstance(v, Language):
        fail("TypeError", f"{fname}(): expected a quoted expression, got {type_name(v)}")
    return v.expr


# task specs and results -----------------------------------------------------

@dataclass
class TaskSpec:
    task_id: int
    chunk: Chunk
    kernel: Kernel  # element slices for this chunk only
    seed: Optional[int]  # base seed for per-element streams
    relay_stdout: bool = True
    relay_conditions: bool = True
    reverse: bool = False

    def to_value(self) -> MList:
        k = self.kernel
        names = ["task_id", "chunk_index", "start", "end", "kind", "xs", "ys", "fn",
                 "body", "var", "data", "globals", "seed", "relay_stdout",
                 "relay_conditions", "reverse"]
        gnames = sorted(k.globals)
        items = [self.task_id, self.chunk.chunk_index, self.chunk.start, self.chunk.end,
                 k.kind, k.xs, k.ys, k.fn,
                 None if k.body is None else Language(k.body), k.var, k.data,
                 MList([k.globals[g] for g in gnames], gnames), self.seed,
                 self.relay_stdout, self.relay_conditions, self.reverse]
        return MList(items, names)

    @classmethod
    def from_value(cls, v) -> "TaskSpec":
        f = _fields(v, "task")
        body = f["body"]
        g = f["globals"]
        kernel = Kernel(f["kind"], f["end"] - f["start"], xs=f["xs"], ys=f["ys"], fn=f["fn"],
                        body=None if body is None else body.expr, var=f["var"], data=f["data"],
                        globals=dict(g.named_items()))
        chunk = Chunk(f["chunk_index"], f["start"], f["end"])
        return cls(f["task_id"], chunk, kernel, f["seed"], f["relay_stdout"],
                   f["relay_conditions"], f["reverse"])


@dataclass
class TaskResult:
    task_id: int
    values: Optional[list]
    error: Optional[ErrorObject]
    records: list
    rng_used: bool = False
    wall_time: float = 0.0

    def to_value(self) -> MList:
        recs = MList([record_to_value(r) for r in self.records])
        values = None if self.values is None else MList(self.values)
        return MList([self.task_id, values, self.error, recs, self.rng_used, self.wall_time],
                     ["task_id", "values", "error", "records", "rng_used", "wall_time"])

    @classmethod
    def from_value(cls, v) -> "TaskResult":
        f = _fields(v, "result")
        values = None if f["values"] is None else list(f["values"].items)
        return cls(f["task_id"], values, f["error"],
                   [record_from_value(r) for r in f["records"]], f["rng_used"], f["wall_time"])


def record_to_value(r: ConditionRecord) -> MList:
    return MList([r.cls, r.payload, r.origin_index, r.sequence],
                 ["class", "payload", "origin_index", "sequence"])


def record_from_value(v) -> ConditionRecord:
    f = _fields(v, "record")
    return ConditionRecord(f["class"], f["payload"], f["origin_index"], f["sequence"])


def _fields(v, what: str) -> dict:
    if not isinstance(v, MList) or v.names is None:
        raise ValueError(f"malformed {what}: expected a named list")
    return dict(v.named_items())


def cancelled_error(index: Optional[int] = None) -> ErrorObject:
    return ErrorObject("Cancelled", "task cancelled before completion", index)


def slice_kernel(k: Kernel, chunk: Chunk) -> Kernel:
    s, e = chunk.start, chunk.end
    part = Kernel(k.kind, e - s, fn=k.fn, body=k.body, var=k.var, data=k.data, globals=k.globals)
    if k.xs is not None:
        part.xs = MList(k.xs.items[s:e])
    if k.ys is not None:
        part.ys = MList(k.ys.items[s:e])
    return part


def run_task(spec: TaskSpec, on_partial: Optional[Callable] = None,
             cancel_check: Optional[Callable[[], bool]] = None,
             parent_runtime: Optional["Runtime"] = None) -> TaskResult:
    """Evaluate one chunk in a fresh interpreter with captured output.

    Progress records go to ``on_partial`` as soon as they are emitted; all
    other records are returned in emission order.
    """
    started = time.perf_counter()
    interp = Interpreter(Runtime.for_task(parent_runtime))
    interp.cancel_check = cancel_check
    env = Env(dict(spec.kernel.globals), root_env())
    k = spec.kernel
    if isinstance(k.fn, Closure) and k.globals:
        k = replace(k, fn=_with_globals(k.fn, k.globals))
    records: list = []

    def sink(rec):
        if not (spec.relay_stdout if rec.cls == "stdout" else spec.relay_conditions):
            return
        if rec.cls == "progress" and on_partial is not None:
            on_partial(rec)
        else:
            records.append(rec)

    interp._sinks.append(sink)
    values = [None] * k.n
    error = None
    order = range(k.n - 1, -1, -1) if spec.reverse else range(k.n)
    try:
        for j in order:
            i = spec.chunk.start + j
            if cancel_check is not None and cancel_check():
                error = cancelled_error(i + 1)
                break
            interp.stream = rng.derive_stream(spec.seed, i) if spec.seed is not None else None
            interp.rng_seed = None
            interp.origin = i + 1
            try:
                values[j] = _element(interp, k, j, i, env)
            except Signal as s:
                error = s.error if s.error.cls == "Cancelled" else s.error.at(i + 1)
                break
            except RecursionError:
                error = ErrorObject("StackOverflow", "evaluation nested too deeply", i + 1)
                break
    finally:
        interp._sinks.pop()
    return TaskResult(spec.task_id, None if error else values, error, records,
                      interp.rng_used, time.perf_counter() - started)


def _with_globals(fn: Closure, names: dict) -> Closure:
    """Make explicit globals visible to ``fn`` beneath its own captures."""
    fn_env = fn.env
    if fn_env.is_root:
        return Closure(fn.params, fn.body, Env(dict(names), fn_env))
    env = Env(dict(fn_env.bindings), Env(dict(names), fn_env.parent))
    return Closure(fn.params, fn.body, env)


def _element(interp, k: Kernel, j: int, i: int, env: Env):
    kind = k.kind
    if kind == "map":
        return interp.call_value(k.fn, [(None, k.xs.items[j])])
    if kind == "map2":
        return interp.call_value(k.fn, [(None, k.xs.items[j]), (None, k.ys.items[j])])
    if kind == "filter":
        return predicate_result(interp.call_value(k.fn, [(None, k.xs.items[j])]), i)
    if kind == "replicate":
        return interp.eval_expr(k.body, env.child())
    if kind == "foreach":
        return interp.eval_expr(k.body, env.child({k.var: k.xs.items[j]}))
    n = len(k.data)
    idx = MList([1 + int(interp.draw_uniform() * n) for _ in range(n)])
    return interp.call_value(k.fn, [(None, k.data), (None, idx)])


# the runtime ----------------------------------------------------------------

@dataclass
class Stats:
    """Counters (updated from executor threads under ``lock``)."""

    tasks: int = 0  # tasks submitted by execute(), every plan
    backend_tasks: int = 0  # tasks handed to a thread or process backend
    started: int = 0
    finished: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def bump(self, name: str) -> None:
        with self.lock:
            setattr(self, name, getattr(self, name) + 1)

    def reset(self) -> None:
        with self.lock:
            self.tasks = self.backend_tasks = self.started = self.finished = 0


@dataclass
class RunRecord:
    """One futurized call, as recorded in the runtime report."""

    kind: str
    n: int
    chunks: int
    plan: str
    seed_mode: str  # off | auto | fixed
    seed: Optional[int]


class Runtime:
    """Owns the plan, the transpiler registry, the enable flag and executors."""

    def __init__(self, plan: Optional[Plan] = None, registry=None):
        from .futurize import default_registry

        self._plan = plan or Plan("sequential", 1)
        self.registry = registry if registry is not None else default_registry()
        self.enabled = True
        self.plan_locked = False
        self.reverse = False
        self.stats = Stats()
        self.report: list[RunRecord] = []
        self._executor = None
        self._lock = threading.RLock()

    @classmethod
    def for_task(cls, parent: Optional["Runtime"]) -> "Runtime":
        """Runtime used inside a task: nested futurize runs sequentially."""
        rt = cls(Plan("sequential", 1), parent.registry if parent is not None else None)
        if parent is not None:
            rt.enabled = parent.enabled
        return rt

    # plan management -----------------------------------------------------

    def get_plan(self) -> Plan:
        return self._plan

    def set_plan(self, plan: Plan) -> None:
        if plan.kind not in PLAN_KINDS or plan.workers < 1:
            raise InvalidPlan(f"invalid plan {plan}")
        if plan.kind == "sequential" and plan.workers != 1:
            plan = Plan("sequential", 1)
        with self._lock:
            if plan == self._plan and self._executor is not None:
                return
            self._shutdown_executor()
            self._plan = plan
            if plan.kind == "processes":
                # start the pool now so worker start-up is not charged to the first call
                self.executor()

    def request_plan(self, plan: Plan) -> None:
        """A ``plan()`` call from DSL code; ignored when the user locked the plan."""
        if not self.plan_locked:
            self.set_plan(plan)

    def executor(self):
        from .backends import make_executor

        with self._lock:
            if self._executor is None:
                self._executor = make_executor(self._plan, self)
            return self._executor

    def _shutdown_executor(self) -> None:
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    def shutdown(self) -> None:
        with self._lock:
            self._shutdown_executor()

    def register_transpiler(self, entry) -> None:
        self.registry.register(entry)

    @property
    def last_seed(self) -> Optional[int]:
        return self.report[-1].seed if self.report else None

    # execution -----------------------------------------------------------

    def execute(self, interp, kernel: Kernel, opts, env: Env):
        """Run ``kernel`` across the plan's backend and return the combined Value."""
        self.registry.seal()
        plan = self._plan
        chunks = make_chunks(kernel.n, plan.workers, opts.scheduling, opts.chunk_size)
        seed, mode = self._resolve_seed(interp, opts.seed)
        self.report.append(RunRecord(kernel.kind, kernel.n, len(chunks), str(plan), mode,
                                     seed if mode != "off" else None))
        if not chunks:
            return _combine(kernel, [])
        if seed is None:
            seed = rng.entropy_seed()
        specs = [TaskSpec(next(_TASK_IDS), c, slice_kernel(kernel, c), seed,
                          opts.stdout == "relay", opts.conditions == "relay", self.reverse)
                 for c in chunks]
        results = self._collect(interp, specs, opts)
        if mode == "off" and any(r.rng_used for r in results.values() if r is not None):
            self._relay(interp, ConditionRecord("warning", RNG_WARNING), opts)
        errors = [r.error for r in results.values()
                  if r is not None and r.error is not None and r.error.cls != "Cancelled"]
        if errors:
            raise Signal(min(errors, key=lambda e: (e.origin_index is None, e.origin_index or 0)))
        for k, r in results.items():
            if r is None or r.error is not None:
                raise Signal(r.error if r is not None else cancelled_error())
        values = [v for k in range(len(specs)) for v in results[k].values]
        return _combine(kernel, values)

    def _resolve_seed(self, interp, seed_opt):
        if seed_opt == "off":
            return None, "off"
        if seed_opt == "auto":
            if interp.rng_seed is not None:
                return interp.rng_seed, "auto"
            return rng.entropy_seed(), "auto"
        return seed_opt, "fixed"

    def _relay(self, interp, rec: ConditionRecord, opts) -> None:
        if rec.cls == "stdout" and opts.stdout != "relay":
            return
        if rec.cls != "stdout" and opts.conditions != "relay":
            return
        origin = interp.origin if interp.origin is not None else rec.origin_index
        interp.emit_record(ConditionRecord(rec.cls, rec.payload, origin))

    def _collect(self, interp, specs: list, opts) -> dict:
        """Submit tasks, relay records in order, stop on the first error.

        At most ``executor.capacity`` tasks are in flight; chunks after an
        erroring chunk are cancelled or never submitted.  Chunks before it
        were submitted earlier (FIFO) and are allowed to finish so the
        reported error is the lowest-indexed one.
        """
        executor = self.executor()
        events: queue.Queue = queue.Queue()
        order = list(reversed(specs)) if self.reverse else list(specs)
        pending = deque(order)
        inflight: dict = {}
        results: dict = {s.chunk.chunk_index: None for s in specs}
        done: set = set()
        first_error: Optional[int] = None
        next_relay = 0

        def fill():
            while pending and len(inflight) < executor.capacity:
                spec = pending.popleft()
                k = spec.chunk.chunk_index
                if first_error is not None and k > first_error:
                    continue
                self.stats.bump("tasks")
                inflight[k] = executor.submit(spec, events)

        fill()
        while inflight:
            try:
                kind, handle, payload = events.get(timeout=executor.poll_interval)
            except queue.Empty:
                executor.watchdog(inflight.values())
                continue
            if kind == "partial":
                self._relay(interp, payload, opts)
                continue
            k = handle.spec.chunk.chunk_index
            inflight.pop(k, None)
            result = handle.result
            results[k] = result
            done.add(k)
            if result.error is not None and result.error.cls != "Cancelled":
                if first_error is None or k < first_error:
                    first_error = k
                    for other, h in list(inflight.items()):
                        if other > first_error:
                            executor.cancel(h)
            while next_relay in done and (first_error is None or next_relay <= first_error):
                for rec in results[next_relay].records:
                    self._relay(interp, rec, opts)
                next_relay += 1
            fill()
        return results


def _combine(kernel: Kernel, values: list):
    if kernel.kind in ("map", "map2"):
        return MList(values, kernel.xs.names)
    if kernel.kind == "filter":
        return select(kernel.xs, values)
    return MList(values)


_DEFAULT: Optional[Runtime] = None
_DEFAULT_LOCK = threading.Lock()


def get_runtime() -> Runtime:
    """The process-wide default runtime (created on first use)."""
    global _DEFAULT
    with _DEFAULT_LOCK:
        if _DEFAULT is None:
            _DEFAULT = Runtime()
            atexit.register(_DEFAULT.shutdown)
        return _DEFAULT


def set_plan(plan: Plan) -> None:
    get_runtime().set_plan(plan)


def get_plan() -> Plan:
    return get_runtime().get_plan()
