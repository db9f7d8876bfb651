"""Command-line interface: ``run``, ``transpile``, ``verify`` and ``repl``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from typing import Optional

from . import __version__
from .errors import InvalidPlan, LexError, ParseError, Signal
from .futurize import transpile_program
from .interpreter import Interpreter
from .parser import parse, parse_expr
from .printer import pretty_print, pretty_program
from .runtime import Plan, Runtime
from .syntax import Assign, Block
from .values import MList, format_value, value_equal

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2


def _plan_arg(text: str) -> Plan:
    try:
        return Plan.parse(text)
    except InvalidPlan as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _seed_arg(text: str) -> int:
    try:
        seed = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed '{text}'") from None
    if not 0 <= seed < 2 ** 63:
        raise argparse.ArgumentTypeError("seed must be in [0, 2^63)")
    return seed


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmr", description="Run and parallelize mmr scripts.")
    p.add_argument("--version", action="version", version=f"mmr {__version__}")
    p.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", metavar="COMMAND")

    run = sub.add_parser("run", help="evaluate a script")
    run.add_argument("script")
    run.add_argument("--plan", type=_plan_arg, help="backend as kind[:workers]; overrides plan() calls")
    run.add_argument("--seed", type=_seed_arg, help="seed the random number generator")
    run.add_argument("--progress", choices=("text", "json"), default="text",
                     help="how progress records are rendered on stderr")

    tr = sub.add_parser("transpile", help="print the script with futurize() calls rewritten")
    tr.add_argument("script")

    ver = sub.add_parser("verify", help="check that parallel and reversed runs agree")
    ver.add_argument("script")
    ver.add_argument("--plan", type=_plan_arg, default=None,
                     help="backend for the parallel runs (default processes:2)")
    ver.add_argument("--seed", type=_seed_arg)

    repl = sub.add_parser("repl", help="interactive session")
    repl.add_argument("--plan", type=_plan_arg)
    return p


def _read_program(path: str) -> Block:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def _syntax_error(path: str, exc) -> int:
    print(f"{path}:{exc.span.line}:{exc.span.column}: {exc}", file=sys.stderr)
    return EXIT_ERROR


def _visible(stmt) -> bool:
    return not isinstance(stmt, Assign)


def _show(value) -> Optional[str]:
    if value is None:
        return None
    return format_value(value) + "\n"


def cmd_run(args) -> int:
    try:
        program = _read_program(args.script)
    except OSError as exc:
        print(f"mmr: cannot read {args.script}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    except (LexError, ParseError) as exc:
        return _syntax_error(args.script, exc)
    runtime = Runtime()
    try:
        if args.plan is not None:
            runtime.set_plan(args.plan)
            runtime.plan_locked = True
        interp = Interpreter(runtime, progress_format=args.progress)
        if args.seed is not None:
            interp.set_seed(args.seed)
        for stmt in program.stmts:
            out = interp.eval(stmt)
            if out.error is not None:
                print(out.error.describe(), file=sys.stderr)
                return EXIT_ERROR
            text = _show(out.result) if _visible(stmt) else None
            if text:
                sys.stdout.write(text)
        sys.stdout.flush()
        return EXIT_OK
    finally:
        runtime.shutdown()


def cmd_transpile(args) -> int:
    try:
        program = _read_program(args.script)
    except OSError as exc:
        print(f"mmr: cannot read {args.script}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    except (LexError, ParseError) as exc:
        return _syntax_error(args.script, exc)
    try:
        out = transpile_program(program)
    except Signal as s:
        print(s.error.describe(), file=sys.stderr)
        return EXIT_ERROR
    sys.stdout.write(pretty_program(out))
    return EXIT_OK


# verify ---------------------------------------------------------------------

@dataclass
class RunOutcome:
    label: str
    result: object
    records: list = field(default_factory=list)
    rng_used: bool = False
    seeded: bool = False


def run_program(program: Block, runtime: Runtime, seed: Optional[int], label: str) -> RunOutcome:
    """Evaluate ``program`` with every record captured; stops at the first error."""
    interp = Interpreter(runtime)
    if seed is not None:
        interp.set_seed(seed)
    outcome = RunOutcome(label, None)
    for stmt in program.stmts:
        out = interp.eval(stmt, capture=True)
        outcome.records.extend(out.records)
        outcome.rng_used = outcome.rng_used or out.rng_used
        outcome.result = out.result
        if out.error is not None:
            outcome.result = out.error
            break
    outcome.seeded = interp.rng_seed is not None
    return outcome


def first_difference(a, b) -> Optional[str]:
    """Describe where two results first differ, or None if they are equal."""
    if value_equal(a, b):
        return None
    if isinstance(a, MList) and isinstance(b, MList):
        for i, (x, y) in enumerate(zip(a.items, b.items)):
            if not value_equal(x, y):
                return f"index {i + 1}: {format_value(x)} vs {format_value(y)}"
        if len(a) != len(b):
            return f"index {min(len(a), len(b)) + 1}: lengths {len(a)} vs {len(b)}"
        return "element names differ"
    return f"top-level result: {format_value(a)} vs {format_value(b)}"


VERIFY_VARIANTS = [("sequential", False, False), ("sequential-reversed", False, True),
                   ("parallel", True, False), ("parallel-reversed", True, True)]


def verify_program(program: Block, plan: Plan, seed: Optional[int]):
    """Run the four litmus variants; returns ``(exit_code, report_lines)``.

    Without RNG all four results must agree.  With RNG only the forward runs
    decide the outcome; the report says whether the reversed runs agreed too.
    """
    runs = []
    for label, parallel, reverse in VERIFY_VARIANTS:
        runtime = Runtime(plan if parallel else Plan("sequential", 1))
        runtime.plan_locked = True
        runtime.enabled = parallel
        runtime.reverse = reverse
        try:
            runs.append(run_program(program, runtime, seed, label))
        finally:
            runtime.shutdown()
        first = runs[0]
        if label == "sequential" and first.rng_used and not first.seeded:
            return EXIT_USAGE, ["verify: the script draws random numbers; rerun with --seed N"]
    base = runs[0]
    lines = []
    failures = []
    for run in runs:
        diff = first_difference(base.result, run.result)
        lines.append(f"{run.label}: " + ("ok" if diff is None else f"differs at {diff}"))
        reversed_run = run.label.endswith("reversed")
        if diff is not None and not (base.rng_used and reversed_run):
            failures.append(run.label)
    reversed_ok = all(first_difference(base.result, r.result) is None
                      for r in runs if r.label.endswith("reversed"))
    if base.rng_used:
        lines.append("rng: forward runs compared"
                     + ("; reversed runs identical too" if reversed_ok else "; reversed runs differ"))
    # progress records are relayed live, so only the other classes have a fixed order
    keys = [[(r.cls, r.payload) for r in run.records if r.cls != "progress"] for run in runs]
    differing = [run.label for run, k in zip(runs, keys) if k != keys[0]]
    if differing:
        lines.append(f"records: order differs in {', '.join(differing)}")
    else:
        lines.append("records: identical order in all runs")
    compared = 2 if base.rng_used and not reversed_ok else len(runs)
    if failures:
        lines.append(f"FAIL ({compared - len(failures)}/{compared} runs identical)")
        return EXIT_ERROR, lines
    suffix = f", seed {seed}" if base.rng_used and seed is not None else ""
    lines.append(f"PASS ({compared}/{compared} runs identical{suffix})")
    return EXIT_OK, lines


def cmd_verify(args) -> int:
    try:
        program = _read_program(args.script)
    except OSError as exc:
        print(f"mmr: cannot read {args.script}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    except (LexError, ParseError) as exc:
        return _syntax_error(args.script, exc)
    plan = args.plan if args.plan is not None else Plan("processes", 2)
    code, lines = verify_program(program, plan, args.seed)
    stream = sys.stderr if code == EXIT_USAGE else sys.stdout
    for line in lines:
        print(line, file=stream)
    return code


# repl -----------------------------------------------------------------------

def repl(stdin=None, stdout=None, runtime: Optional[Runtime] = None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    interactive = stdin.isatty()
    runtime = runtime or Runtime()
    interp = Interpreter(runtime)
    buffer = ""

    def prompt(text):
        if interactive:
            stdout.write(text)
            stdout.flush()

    try:
        while True:
            prompt("+ " if buffer else "> ")
            line = stdin.readline()
            if not line:
                break
            stripped = line.strip()
            if not buffer and stripped.startswith(":"):
                if _meta(stripped, runtime, interp, stdout):
                    break
                continue
            buffer += line
            try:
                program = parse(buffer)
            except ParseError as exc:
                if exc.at_eof:
                    continue
                stdout.write(f"Error: {exc}\n")
                buffer = ""
                continue
            except LexError as exc:
                stdout.write(f"Error: {exc}\n")
                buffer = ""
                continue
            buffer = ""
            for stmt in program.stmts:
                out = interp.eval(stmt)
                if out.error is not None:
                    stdout.write(out.error.describe() + "\n")
                    break
                text = _show(out.result) if _visible(stmt) else None
                if text:
                    stdout.write(text)
            stdout.flush()
    finally:
        runtime.shutdown()
    return EXIT_OK


def _meta(line: str, runtime: Runtime, interp: Interpreter, stdout) -> bool:
    """Handle a ``:command``; returns True when the session should end."""
    cmd, _, rest = line.partition(" ")
    rest = rest.strip()
    if cmd in (":quit", ":q"):
        return True
    if cmd == ":plan":
        if rest:
            parts = rest.replace(":", " ").split()
            try:
                workers = int(parts[1]) if len(parts) > 1 else None
                runtime.set_plan(Plan.make(parts[0], workers))
            except (InvalidPlan, ValueError) as exc:
                stdout.write(f"Error: {exc}\n")
                return False
        stdout.write(f"plan: {runtime.get_plan()}\n")
        return False
    if cmd == ":transpile":
        try:
            program = Block((parse_expr(rest),))
            out = transpile_program(program, runtime.registry)
            stdout.write(pretty_print(out.stmts[0]) + "\n")
        except (LexError, ParseError) as exc:
            stdout.write(f"Error: {exc}\n")
        except Signal as s:
            stdout.write(s.error.describe() + "\n")
        return False
    stdout.write(f"unknown command {cmd} (try :plan, :transpile, :quit)\n")
    return False


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.worker:
        from .worker import main as worker_main

        return worker_main()
    sys.setrecursionlimit(max(sys.getrecursionlimit(), 20000))
    if args.command == "run":
        return cmd_run(args)
    if args.command == "transpile":
        return cmd_transpile(args)
    if args.command == "verify":
        return cmd_verify(args)
    if args.command == "repl":
        return repl(runtime=Runtime(args.plan) if args.plan else None)
    parser.print_usage(sys.stderr)
    return EXIT_USAGE
