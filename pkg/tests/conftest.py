import pytest

from mmr.interpreter import Interpreter
from mmr.parser import parse
from mmr.runtime import Plan, Runtime


def run_source(source, runtime=None, capture=True, seed=None):
    """Evaluate a whole program; returns (EvalOutcome, Interpreter)."""
    runtime = runtime if runtime is not None else Runtime()
    interp = Interpreter(runtime)
    if seed is not None:
        interp.set_seed(seed)
    return interp.eval(parse(source), capture=capture), interp


@pytest.fixture
def runtime():
    rt = Runtime()
    yield rt
    rt.shutdown()


@pytest.fixture
def make_runtime():
    made = []

    def make(kind="sequential", workers=None):
        rt = Runtime()
        rt.set_plan(Plan.make(kind, workers))
        made.append(rt)
        return rt

    yield make
    for rt in made:
        rt.shutdown()


@pytest.fixture(scope="session")
def process_runtime():
    """A shared two-worker process pool (start-up cost paid once)."""
    rt = Runtime()
    rt.set_plan(Plan.make("processes", 2))
    yield rt
    rt.shutdown()


ACCEPTANCE_LINES: list = []


@pytest.fixture
def report():
    """Record and print one pass/fail line for an acceptance criterion."""

    def line(number, ok, detail):
        text = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(text)
        print(text)
        assert ok, text

    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for text in ACCEPTANCE_LINES:
            terminalreporter.write_line(text)
