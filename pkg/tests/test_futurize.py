import pathlib
import warnings

import pytest

from mmr.errors import RegistrationTooLate, Signal
from mmr.futurize import (
    FuturizeOptions, TranspilerEntry, default_registry, futurize, identify,
    transpile_program, unwrap,
)
from mmr.builtins import root_env
from mmr.interpreter import Interpreter
from mmr.parser import parse, parse_expr
from mmr.printer import pretty_print, pretty_program
from mmr.runtime import Plan, Runtime
from mmr.syntax import Arg, Call, IntLit, Symbol
from mmr.values import Closure, Language, MList, value_equal

from conftest import run_source

GOLDEN = pathlib.Path(__file__).parent / "golden"
GOLDEN_CASES = sorted(p.stem for p in GOLDEN.glob("*.mmr"))


# unwrap / identify -----------------------------------------------------------

def _wrapper_names(shells):
    return [s.node.fname if isinstance(s.node, Call) else "block" for s in shells]


def test_unwrap_suppression():
    shells, core = unwrap(parse_expr(r"suppress_messages(map(xs, f))"))
    assert _wrapper_names(shells) == ["suppress_messages"]
    assert pretty_print(core) == "map(xs, f)"


def test_unwrap_local_block_keeps_prefix_in_shell():
    shells, core = unwrap(parse_expr("local({ p <- 1; map(xs, g) })"))
    assert _wrapper_names(shells) == ["local", "block"]
    assert len(shells[1].node.stmts) == 2
    assert pretty_print(core) == "map(xs, g)"


def test_unwrap_non_wrapper():
    shells, core = unwrap(IntLit(7))
    assert shells == [] and core == IntLit(7)


def test_identify_builtin_and_closure():
    env = root_env().child()
    assert identify(parse_expr("map(xs, f)"), env) == ("builtin", "map")
    env.define("mapXY", Closure(("a",), IntLit(0), env))
    assert identify(parse_expr("mapXY(1)"), env) == ("user", "mapXY")


def test_identify_rejects_non_calls():
    with pytest.raises(Signal) as info:
        identify(IntLit(42), root_env())
    assert info.value.error.cls == "NotACall"


def test_shadowed_builtin_is_not_transpiled():
    out, _ = run_source(r"map <- \(a, b) 0; futurize(map(list(1), sqrt))")
    assert out.error.cls == "UnsupportedCall"
    assert "builtin::map" in out.error.message and "user::map" in out.error.message


def test_unsupported_call_lists_supported_functions():
    out, _ = run_source(r"futurize(reduce(list(1), \(a, b) a + b, 0))")
    assert out.error.cls == "UnsupportedCall"
    assert "builtin::bootstrap" in out.error.message


# registry --------------------------------------------------------------------

def test_registry_contents():
    reg = default_registry()
    assert reg.supported_packages() == ["builtin"]
    assert reg.supported_functions("builtin") == [
        "bootstrap", "filter", "foreach", "map", "map2", "replicate"]
    assert reg.supported_functions("nope") == []
    assert reg.lookup("builtin", "replicate").defaults == {"seed": "auto"}
    assert reg.lookup("builtin", "bootstrap").defaults == {"seed": "auto"}
    assert reg.lookup("builtin", "map").defaults == {}
    assert reg.lookup("builtin", "reduce") is None


def test_introspection_builtins():
    assert run_source("futurize_supported_packages()")[0].result == MList(["builtin"])
    funcs = run_source('futurize_supported_functions("builtin")')[0].result
    assert list(funcs.items) == ["bootstrap", "filter", "foreach", "map", "map2", "replicate"]


def _map_xy_rewrite(core, opts):
    # mapXY(xs, f) has map semantics with the arguments in the same order
    return Call(Symbol("par_map"), core.args + (Arg(".options", opts.to_expr()),), core.span)


def test_custom_transpiler_dispatch(runtime):
    runtime.register_transpiler(TranspilerEntry("user", "mapXY", _map_xy_rewrite))
    out, _ = run_source(r"mapXY <- \(xs, f) stop('not parallel'); "
                        r"futurize(mapXY(list(1, 2, 3), \(x) x * 2))", runtime=runtime)
    assert out.error is None
    assert out.result == MList([2, 4, 6])
    assert "user" in runtime.registry.supported_packages()


def test_duplicate_registration_warns_and_replaces(runtime):
    entry = TranspilerEntry("builtin", "map", _map_xy_rewrite, {"seed": "auto"})
    with pytest.warns(UserWarning, match="replacing transpiler for builtin::map"):
        runtime.register_transpiler(entry)
    assert runtime.registry.lookup("builtin", "map") is entry


def test_registration_after_tasks_ran(runtime):
    run_source(r"futurize(map(list(1), sqrt))", runtime=runtime)
    with pytest.raises(RegistrationTooLate):
        runtime.register_transpiler(TranspilerEntry("user", "late", _map_xy_rewrite))


def test_default_registry_is_fresh_per_runtime():
    a, b = Runtime(), Runtime()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a.register_transpiler(TranspilerEntry("user", "x", _map_xy_rewrite))
    assert b.registry.lookup("user", "x") is None


# options -----------------------------------------------------------------------

def test_option_conflict():
    out, _ = run_source(r"futurize(map(list(1), sqrt), chunk_size = 1, scheduling = 2)")
    assert out.error.cls == "OptionConflict"


@pytest.mark.parametrize("opt", ["chunk_size = 0", "scheduling = -1", 'stdout = "loud"',
                                 "seed = -3", 'globals = 3', "eval = 1"])
def test_invalid_options(opt):
    out, _ = run_source(rf"futurize(map(list(1), sqrt), {opt})")
    assert out.error.cls in ("InvalidOption", "TypeError")


def test_unknown_option():
    out, _ = run_source(r"futurize(map(list(1), sqrt), speed = 3)")
    assert out.error.cls == "ArgumentError"


def test_user_options_override_entry_defaults():
    opts = FuturizeOptions.resolve({"seed": "auto"}, {"seed": False})
    assert opts.seed == "off"


def test_options_roundtrip_through_value():
    opts = FuturizeOptions(seed=5, chunk_size=3, stdout="discard", globals=("a", "b"),
                           packages=("p",))
    assert FuturizeOptions.from_value(opts.to_value()) == opts
    interp = Interpreter()
    assert FuturizeOptions.from_value(interp.eval(opts.to_expr()).result) == opts


def test_eval_false_returns_language():
    out, _ = run_source(r"futurize(map(xs, f), eval = FALSE)")
    assert isinstance(out.result, Language)
    assert pretty_print(out.result.expr).startswith("par_map(xs, f, .options = futurize_options(")


def test_eval_false_reevaluates_to_same_value(make_runtime):
    rt = make_runtime("threads", 2)
    src = r"xs <- 1:9; f <- \(x) x * x + 1"
    direct, _ = run_source(src + "; futurize(map(xs, f), chunk_size = 2)", runtime=rt)
    lang, interp = run_source(src + "; futurize(map(xs, f), chunk_size = 2, eval = FALSE)", runtime=rt)
    reparsed = parse_expr(pretty_print(lang.result.expr))
    again = interp.eval(reparsed)
    assert value_equal(direct.result, again.result)


def test_host_entry_point():
    interp = Interpreter()
    interp.eval(parse("xs <- list(1, 4, 9)"))
    assert futurize("map(xs, sqrt)", interp=interp) == MList([1.0, 2.0, 3.0])
    expr = futurize("map(xs, sqrt)", {"eval": False}, interp=interp)
    assert pretty_print(expr).startswith("par_map(xs, sqrt")


def test_disable_toggle_passes_through(runtime):
    out, _ = run_source(r"futurize(FALSE); futurize(map(list(1, 4, 9, 16), sqrt))", runtime=runtime)
    assert out.result == MList([1.0, 2.0, 3.0, 4.0])
    assert runtime.stats.tasks == 0
    out, _ = run_source(r"futurize(TRUE); futurize(map(list(1), sqrt))", runtime=runtime)
    assert runtime.stats.tasks == 1


def test_missing_global_fails_before_running(runtime):
    out, _ = run_source(r"f <- \(x) x + nowhere; futurize(map(list(1), f))", runtime=runtime)
    assert out.error.cls == "GlobalNotFound"
    assert runtime.stats.tasks == 0


# golden transpile suite -------------------------------------------------------

@pytest.mark.parametrize("case", GOLDEN_CASES)
def test_golden_transpile(case):
    source = (GOLDEN / f"{case}.mmr").read_text()
    expected = (GOLDEN / f"{case}.out").read_text()
    assert pretty_program(transpile_program(parse(source))) == expected


def test_golden_suite_covers_registry():
    text = "".join((GOLDEN / f"{c}.out").read_text() for c in GOLDEN_CASES)
    for fname in default_registry().supported_functions("builtin"):
        assert f"par_{fname}(" in text
    assert len(GOLDEN_CASES) >= 10


def _final(source, runtime):
    interp = Interpreter(runtime)
    out = None
    for stmt in parse(source).stmts:
        out = interp.eval(stmt, capture=True)
        assert out.error is None, out.error
    return out


@pytest.mark.parametrize("case", GOLDEN_CASES)
def test_golden_transpiled_program_evaluates_alike(case):
    source = (GOLDEN / f"{case}.mmr").read_text()
    transpiled = (GOLDEN / f"{case}.out").read_text()
    rt = Runtime(Plan("threads", 2))
    try:
        a = _final(source, rt)
        b = _final(transpiled, rt)
    finally:
        rt.shutdown()
    if "seed = \"auto\"" in transpiled and "set_seed" not in source:
        assert len(a.result) == len(b.result)
    else:
        assert value_equal(a.result, b.result)
