import pathlib

import pytest
from hypothesis import given, settings, strategies as st

from mmr.analysis import free_vars, resolve_globals, ship
from mmr.builtins import root_env
from mmr.errors import Signal
from mmr.interpreter import Interpreter
from mmr.parser import parse, parse_expr
from mmr.values import Closure, MList


@pytest.mark.parametrize("src, bound, expected", [
    (r"\(x) x + k", (), ["k"]),
    (r"\(x) { y <- 1; x + y }", (), []),
    ("x * scale", ("x",), ["scale"]),
    (r"\(x) sqrt(x) + n", (), ["n"]),
    (r"\(x) map(xs, \(y) y + x + z)", (), ["xs", "z"]),
    ("foreach(i = items) { i + offset }", (), ["items", "offset"]),
    ("replicate(n, mean(rnorm(k)))", (), ["n", "k"]),
    ("b + a + b", (), ["b", "a"]),
    ("{ sqrt <- 3; sqrt }", (), []),
])
def test_free_vars_examples(src, bound, expected):
    assert free_vars(parse_expr(src), bound) == expected


def test_read_before_local_assignment_is_free():
    assert free_vars(parse_expr(r"\(x) { z <- y; y <- 1; z }")) == ["y"]
    assert free_vars(parse_expr(r"\(x) { a <- a + 1; a }")) == ["a"]


def test_conditional_assignment_does_not_bind():
    assert free_vars(parse_expr(r"\(x) { if_else(x > 0, y <- 1, 0); y }")) == ["y"]
    assert free_vars(parse_expr(r"\(x) { x > 0 && (y <- TRUE); y }")) == ["y"]


def test_lambdas_see_later_assignments_of_enclosing_unit():
    assert free_vars(parse_expr(r"\() { f <- \() k; k <- 1; f() }")) == []
    assert free_vars(parse_expr(r"\(n) { fib <- \(n) fib(n - 1); fib(n) }")) == []


def test_quoted_expressions_are_scanned():
    # quoted bodies become task kernels later, so their names must be shipped
    assert free_vars(parse_expr("quote(a + b)")) == ["a", "b"]


def test_resolve_globals_ships_copies():
    env = root_env().child({"k": 2, "xs": MList([1, 2])})
    out = resolve_globals(["k", "xs", "sqrt"], env)
    assert out == {"k": 2, "xs": MList([1, 2])}


def test_resolve_globals_missing_name():
    with pytest.raises(Signal) as info:
        resolve_globals(["nope"], root_env().child())
    assert info.value.error.cls == "GlobalNotFound"
    assert "nope" in info.value.error.message


def test_ship_rebuilds_closure_environment():
    interp = Interpreter()
    interp.eval(parse(r"k <- 3; unused <- 99; f <- \(x) x + k; g <- \(x) f(x) * 2"))
    g = interp.global_env.bindings["g"]
    shipped = ship(g)
    assert shipped is not g
    assert set(shipped.env.bindings) == {"f"}
    assert set(shipped.env.bindings["f"].env.bindings) == {"k"}


def test_ship_keeps_recursive_closures_cyclic():
    interp = Interpreter()
    interp.eval(parse(r"fact <- \(n) if_else(n < 2, 1, n * fact(n - 1))"))
    shipped = ship(interp.global_env.bindings["fact"])
    assert shipped.env.bindings["fact"] is shipped


# Dynamic cross-check: for straight-line code every reference is evaluated, so
# free_vars must be exactly the set of names whose absence breaks evaluation.

NAMES = ["a", "b", "c", "d"]


@st.composite
def straight_line(draw):
    def term():
        return draw(st.one_of(st.sampled_from(NAMES), st.integers(0, 9).map(str)))

    def expr():
        parts = [term() for _ in range(draw(st.integers(1, 3)))]
        return " + ".join(parts)

    stmts = [f"{draw(st.sampled_from(NAMES))} <- {expr()}"
             for _ in range(draw(st.integers(0, 4)))]
    stmts.append(expr())
    return "{ " + "; ".join(stmts) + " }"


def _evaluates(src, names):
    body = parse_expr(src)
    interp = Interpreter()
    env = root_env().child({n: 1 for n in names})
    closure = Closure((), body, env)
    out = interp.eval(parse("f()"), env=root_env().child({"f": closure}))
    if out.error is not None:
        assert out.error.cls == "SymbolNotFound", out.error
        return False
    return True


@settings(max_examples=150, deadline=None)
@given(straight_line())
def test_free_vars_match_dynamic_reads(src):
    # evaluate as a function body: assignments create locals, as in a task kernel
    fv = free_vars(parse_expr(rf"\() {src}"))
    assert _evaluates(src, fv)
    for name in fv:
        assert not _evaluates(src, [n for n in fv if n != name])


def test_shipped_closure_runs_on_process_worker(process_runtime):
    from conftest import run_source

    out, _ = run_source(r"h <- 3; g <- \(x) x + h; futurize(map(list(1), \(x) g(x)))",
                        runtime=process_runtime)
    assert out.result == MList([4])


CORPUS = sorted((pathlib.Path(__file__).parent / "corpus").glob("*.mmr"))


@pytest.mark.parametrize("path", CORPUS, ids=lambda p: p.stem)
def test_corpus_tasks_see_every_name_they_read(path, make_runtime):
    from conftest import run_source

    rt = make_runtime("threads", 2)
    out, _ = run_source(path.read_text(), runtime=rt, seed=1)
    assert out.error is None, out.error
