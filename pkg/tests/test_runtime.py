import time

import pytest
from hypothesis import given, settings, strategies as st

from mmr.errors import InvalidPlan
from mmr.interpreter import ConditionRecord
from mmr.runtime import (
    RNG_WARNING, Chunk, Kernel, Plan, TaskResult, TaskSpec, default_workers,
    make_chunks, run_task,
)
from mmr.values import ErrorObject, MList, value_equal

from conftest import run_source

PLANS = [("sequential", 1), ("threads", 2), ("threads", 4)]


def sizes(chunks):
    return [len(c) for c in chunks]


# chunking ---------------------------------------------------------------------

def test_chunk_examples():
    assert [(c.start, c.end) for c in make_chunks(8, 3)] == [(0, 3), (3, 6), (6, 8)]
    assert [(c.start, c.end) for c in make_chunks(5, 2, chunk_size=2)] == [(0, 2), (2, 4), (4, 5)]
    assert sizes(make_chunks(100, 4, 2.0)) == [13, 13, 13, 13, 12, 12, 12, 12]
    assert make_chunks(0, 4) == []
    assert sizes(make_chunks(3, 8)) == [1, 1, 1]


@given(st.integers(0, 500), st.integers(1, 16), st.floats(0.1, 8.0),
       st.one_of(st.none(), st.integers(1, 50)))
def test_chunks_partition_the_input(n, workers, scheduling, chunk_size):
    chunks = make_chunks(n, workers, scheduling, chunk_size)
    pos = 0
    for k, c in enumerate(chunks):
        assert c.chunk_index == k and c.start == pos and len(c) > 0
        pos = c.end
    assert pos == n
    if chunks and chunk_size is None:
        assert max(sizes(chunks)) - min(sizes(chunks)) <= 1
    if chunks and chunk_size is not None:
        assert all(len(c) == chunk_size for c in chunks[:-1])


# plans ------------------------------------------------------------------------

def test_plan_parsing():
    assert Plan.parse("threads:3") == Plan("threads", 3)
    assert Plan.parse("sequential") == Plan("sequential", 1)
    for bad in ("bogus", "threads:0", "threads:x", "processes:-1"):
        with pytest.raises(InvalidPlan):
            Plan.parse(bad)


def test_default_workers_from_environment(monkeypatch):
    monkeypatch.setenv("MMR_WORKERS", "3")
    assert default_workers() == 3
    assert Plan.make("threads") == Plan("threads", 3)
    monkeypatch.setenv("MMR_WORKERS", "nonsense")
    assert default_workers() >= 1


def test_plan_call_from_script(runtime):
    out, _ = run_source('plan("threads", 3)', runtime=runtime)
    assert out.error is None and runtime.get_plan() == Plan("threads", 3)
    out, _ = run_source('plan("warp")', runtime=runtime)
    assert out.error.cls == "InvalidPlan"


def test_locked_plan_ignores_script(runtime):
    runtime.set_plan(Plan("threads", 2))
    runtime.plan_locked = True
    run_source('plan("sequential")', runtime=runtime)
    assert runtime.get_plan() == Plan("threads", 2)


# equivalence and determinism ---------------------------------------------------------

@pytest.mark.parametrize("kind, workers", PLANS)
@pytest.mark.parametrize("chunking", ["", ", chunk_size = 1", ", scheduling = 3"])
def test_map_family_matches_sequential(make_runtime, kind, workers, chunking):
    rt = make_runtime(kind, workers)
    programs = [
        r"map(list(a = 1, b = 2, c = 3), \(x) x * 10)",
        r"map2(1:7, 11:17, \(x, y) x * y)",
        r"filter(1:13, \(x) x > 5)",
        "foreach(v = 1:6) { v + 0.5 }",
        "replicate(4, 9)",
    ]
    for src in programs:
        plain, _ = run_source(src)
        par, _ = run_source(f"futurize({src}{chunking})", runtime=rt)
        assert par.error is None, par.error
        assert value_equal(plain.result, par.result)


def test_completion_order_does_not_affect_results(make_runtime):
    rt = make_runtime("threads", 4)
    # early elements sleep longest, so chunks complete in reverse order
    src = r"futurize(map(1:8, \(x) { sleep_ms((9 - x) * 15); message(x); x }), chunk_size = 1)"
    out, _ = run_source(src, runtime=rt)
    assert out.result == MList(list(range(1, 9)))
    assert [r.payload for r in out.records] == [str(i) for i in range(1, 9)]


@pytest.mark.parametrize("kind, workers", PLANS)
def test_seeded_rng_is_plan_invariant(make_runtime, kind, workers):
    rt = make_runtime(kind, workers)
    reference, _ = run_source("replicate(6, runif(2))", seed=9)
    out, _ = run_source("futurize(replicate(6, runif(2)), chunk_size = 4)", runtime=rt, seed=9)
    assert value_equal(reference.result, out.result)


def test_fixed_seed_option_overrides_session_seed(runtime):
    a, _ = run_source("futurize(replicate(3, runif(1)), seed = 5)", runtime=runtime, seed=1)
    b, _ = run_source("futurize(replicate(3, runif(1)), seed = 5)", runtime=runtime, seed=2)
    assert value_equal(a.result, b.result)
    assert runtime.report[-1].seed_mode == "fixed" and runtime.last_seed == 5


# seeds and warnings -----------------------------------------------------------------

def _warnings(out):
    return [r.payload for r in out.records if r.cls == "warning"]


def test_auto_seed_records_drawn_seed(runtime):
    out, _ = run_source("futurize(replicate(4, rnorm(1)))", runtime=runtime)
    assert _warnings(out) == []
    assert runtime.report[-1].seed_mode == "auto"
    assert isinstance(runtime.last_seed, int)
    # the drawn seed reproduces the run
    again, _ = run_source(f"futurize(replicate(4, rnorm(1)), seed = {runtime.last_seed})")
    assert value_equal(out.result, again.result)


@pytest.mark.parametrize("kind, workers", PLANS)
def test_seed_off_warns_exactly_once(make_runtime, kind, workers):
    rt = make_runtime(kind, workers)
    out, _ = run_source(r"futurize(map(1:6, \(x) runif(1)), chunk_size = 1)", runtime=rt)
    assert _warnings(out) == [RNG_WARNING]


def test_no_warning_without_rng(runtime):
    out, _ = run_source(r"futurize(map(1:6, \(x) x))", runtime=runtime)
    assert _warnings(out) == []


# errors and cancellation ------------------------------------------------------------

@pytest.mark.parametrize("kind, workers", PLANS)
def test_lowest_origin_error_wins(make_runtime, kind, workers):
    rt = make_runtime(kind, workers)
    src = (r'futurize(map(1:12, \(x) { sleep_ms(if_else(x == 9, 0, 20)); '
           r'if_else(x == 3 || x == 9, stop(paste0("bad ", x)), x) }), chunk_size = 1)')
    for _ in range(3):
        out, _ = run_source(src, runtime=rt)
        assert out.error == ErrorObject("user", "bad 3", 3)


def test_error_cancels_later_chunks(make_runtime):
    rt = make_runtime("threads", 2)
    src = (r'futurize(map(1:20, \(x) { sleep_ms(10); '
           r'if_else(x == 2, stop("early"), x) }), chunk_size = 1)')
    out, _ = run_source(src, runtime=rt)
    assert out.error.origin_index == 2
    assert rt.stats.started < 20
    assert rt.stats.tasks < 20


def test_records_stop_at_failing_chunk(make_runtime):
    rt = make_runtime("threads", 2)
    src = (r'futurize(map(1:6, \(x) { message(x); if_else(x == 4, stop("x"), x) }), '
           r'chunk_size = 2)')
    out, _ = run_source(src, runtime=rt)
    assert [r.payload for r in out.records] == ["1", "2", "3", "4"]


def test_sleep_is_cancellable():
    spec = _spec("replicate", body_src="sleep_ms(5000)", n=1)
    t0 = time.monotonic()
    result = run_task(spec, cancel_check=lambda: time.monotonic() - t0 > 0.1)
    assert result.error.cls == "Cancelled"
    assert time.monotonic() - t0 < 2


# relay ------------------------------------------------------------------------------

def test_progress_is_relayed_before_other_records(make_runtime):
    rt = make_runtime("threads", 2)
    out, _ = run_source(r"futurize(map(1:4, \(x) { message(x); progress(x / 4); x }))",
                        runtime=rt)
    classes = [r.cls for r in out.records]
    assert classes.count("progress") == 4
    assert [r.payload for r in out.records if r.cls == "message"] == ["1", "2", "3", "4"]
    assert [r.sequence for r in out.records] == sorted(r.sequence for r in out.records)


def test_discard_options(runtime):
    src = r'futurize(map(1:2, \(x) {{ cat(x); message(x); x }}), {})'
    out, _ = run_source(src.format('stdout = "discard"'), runtime=runtime)
    assert [r.cls for r in out.records] == ["message", "message"]
    out, _ = run_source(src.format('conditions = "discard"'), runtime=runtime)
    assert [r.cls for r in out.records] == ["stdout", "stdout"]


def test_suppression_wrapper_applies_to_relayed_records(make_runtime):
    rt = make_runtime("threads", 2)
    out, _ = run_source(r'suppress_messages(map(1:4, \(x) { message(x); sqrt(x) })) |> futurize()',
                        runtime=rt)
    assert out.records == []
    assert out.result == MList([1.0, 2 ** 0.5, 3 ** 0.5, 2.0])


def test_records_carry_origin_index(make_runtime):
    rt = make_runtime("threads", 2)
    out, _ = run_source(r"futurize(map(1:3, \(x) message(x)))", runtime=rt)
    assert [r.origin_index for r in out.records] == [1, 2, 3]


# globals ----------------------------------------------------------------------------

def test_globals_are_shipped_by_value(make_runtime):
    rt = make_runtime("threads", 2)
    out, _ = run_source(r"k <- 2; f <- \(x) x * k; r <- futurize(map(1:3, f)); k <- 100; r",
                        runtime=rt)
    assert out.result == MList([2, 4, 6])


def test_explicit_globals(make_runtime):
    rt = make_runtime("threads", 2)
    out, _ = run_source(r'k <- 3; futurize(replicate(2, k), globals = list("k"))', runtime=rt)
    assert out.result == MList([3, 3])
    out, _ = run_source(r'futurize(replicate(2, k), globals = list("nope"))', runtime=rt)
    assert out.error.cls == "GlobalNotFound"


def test_nested_futurize_runs_sequentially_inside_tasks(make_runtime):
    rt = make_runtime("threads", 2)
    out, _ = run_source(r"futurize(map(1:3, \(i) futurize(map(1:2, \(j) i * j))))", runtime=rt)
    assert out.result == MList([MList([1, 2]), MList([2, 4]), MList([3, 6])])


def test_empty_input_submits_nothing(runtime):
    out, _ = run_source(r"futurize(map(list(), sqrt))", runtime=runtime)
    assert out.result == MList([]) and runtime.stats.tasks == 0


# task specs ---------------------------------------------------------------------------

def _spec(kind, body_src=None, n=2, seed=None):
    from mmr.parser import parse_expr

    body = parse_expr(body_src) if body_src else None
    kernel = Kernel(kind, n, body=body)
    return TaskSpec(1, Chunk(0, 0, n), kernel, seed)


def test_task_spec_round_trip():
    spec = _spec("replicate", "runif(1)[1] + k", seed=3)
    spec.kernel.globals = {"k": 1.5}
    back = TaskSpec.from_value(spec.to_value())
    assert value_equal(spec.to_value(), back.to_value())
    a = run_task(spec)
    b = run_task(back)
    assert value_equal(MList(a.values), MList(b.values))


def test_task_result_round_trip():
    result = TaskResult(4, [1, 2.5], None, [ConditionRecord("message", "m", 1, 0)], True, 0.25)
    back = TaskResult.from_value(result.to_value())
    assert value_equal(back.to_value(), result.to_value())


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2 ** 32))
def test_chunked_tasks_reproduce_whole_run(n, seed):
    whole = run_task(_spec("replicate", "rnorm(1)", n=n, seed=seed)).values
    parts = []
    for c in make_chunks(n, 3):
        spec = TaskSpec(1, c, Kernel("replicate", len(c), body=_spec("replicate", "rnorm(1)").kernel.body), seed)
        parts.extend(run_task(spec).values)
    assert value_equal(MList(whole), MList(parts))


def test_progress_reaches_host_before_result(process_runtime):
    from mmr.interpreter import Interpreter
    from mmr.parser import parse

    interp = Interpreter(process_runtime)
    seen = []
    interp._host_sink = lambda rec: seen.append((rec.cls, time.monotonic()))
    out = interp.eval(parse(
        r"futurize(map(1:4, \(x) { progress(x / 4); sleep_ms(300); x }), chunk_size = 2)"))
    finished = time.monotonic()
    assert out.result == MList([1, 2, 3, 4])
    first_progress = min(t for cls, t in seen if cls == "progress")
    assert finished - first_progress > 0.25

