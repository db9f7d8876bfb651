import io
import json
import os
import pathlib
import subprocess
import sys

import pytest

from mmr import __version__
from mmr.cli import main, repl, verify_program
from mmr.parser import parse
from mmr.runtime import Plan, Runtime

HERE = pathlib.Path(__file__).parent
SRC = HERE.parent / "src"


def mmr(*args, stdin=None):
    env = dict(os.environ, PYTHONPATH=str(SRC))
    return subprocess.run([sys.executable, "-m", "mmr", *map(str, args)], capture_output=True,
                          text=True, env=env, input=stdin, timeout=120)


@pytest.fixture
def script(tmp_path):
    def write(text, name="prog.mmr"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    return write


# run ---------------------------------------------------------------------------

def test_run_prints_visible_results(script, capsys):
    path = script("xs <- 1:4\nmap(xs, \\(x) x ^ 2) |> futurize()\ncat(\"done\\n\")\n")
    assert main(["run", "--plan", "threads:4", path]) == 0
    out = capsys.readouterr()
    assert out.out == "[1, 4, 9, 16]\ndone\n"
    assert out.err == ""


def test_run_routes_records(script, capsys):
    path = script('message("m"); warning("w"); progress(0.5); cat("s\\n"); NULL')
    assert main(["run", path]) == 0
    out = capsys.readouterr()
    assert out.out == "s\n"
    assert out.err == "m\nWarning: w\n[progress] 50%\n"


def test_run_progress_json(script, capsys):
    path = script("progress(0.25)")
    assert main(["run", "--progress", "json", path]) == 0
    assert json.loads(capsys.readouterr().err) == {"progress": 0.25, "origin_index": None}


def test_run_error_exit(script, capsys):
    path = script('map(1:5, \\(x) if_else(x == 4, stop("boom"), x)) |> futurize()')
    assert main(["run", "--plan", "threads:2", path]) == 1
    err = capsys.readouterr().err
    assert "boom" in err and "element 4" in err


def test_run_syntax_error(script, capsys):
    path = script("x <- (1 +\n")
    assert main(["run", path]) == 1
    assert capsys.readouterr().err.startswith(path + ":")


def test_run_usage_errors(script):
    assert mmr("run", "--plan", "bogus", script("1")).returncode == 2
    assert mmr("run", "/nonexistent/file.mmr").returncode == 2
    assert mmr().returncode == 2


def test_plan_flag_beats_script(script, capsys):
    path = script('plan("sequential")\ncat(plan(), "\\n")\n')
    assert main(["run", "--plan", "threads:3", path]) == 0
    assert capsys.readouterr().out == "threads:3 \n"
    assert main(["run", path]) == 0
    assert capsys.readouterr().out == "sequential:1 \n"


def test_run_seed_flag(script, capsys):
    path = script("runif(2)")
    main(["run", "--seed", "4", path])
    first = capsys.readouterr().out
    main(["run", "--seed", "4", path])
    assert capsys.readouterr().out == first
    assert mmr("run", "--seed", "-1", path).returncode == 2


def test_version():
    assert mmr("--version").stdout.strip() == f"mmr {__version__}"


def test_run_end_to_end_with_processes(script):
    path = script("map(1:6, \\(x) { message(x); x * 2 }) |> futurize(chunk_size = 2)\n")
    proc = mmr("run", "--plan", "processes:2", path)
    assert proc.returncode == 0
    assert proc.stdout == "[2, 4, 6, 8, 10, 12]\n"
    assert proc.stderr == "1\n2\n3\n4\n5\n6\n"


# transpile -----------------------------------------------------------------------

def test_transpile_rewrites(script, capsys):
    assert main(["transpile", script("map(xs, f) |> futurize()")]) == 0
    assert capsys.readouterr().out.startswith("par_map(xs, f, .options = futurize_options(")


def test_transpile_without_futurize_is_canonical(script, capsys):
    assert main(["transpile", script("x<-1+2\n  print( x )")]) == 0
    assert capsys.readouterr().out == "x <- 1 + 2\nprint(x)\n"


def test_transpile_unsupported(script, capsys):
    assert main(["transpile", script(r"futurize(reduce(xs, \(a, b) a + b, 0))")]) == 1
    err = capsys.readouterr().err
    assert "UnsupportedCall" in err and "builtin::map" in err


# verify -----------------------------------------------------------------------------

def test_verify_pure_script(capsys):
    assert main(["verify", "--plan", "threads:2", str(HERE / "corpus" / "squares.mmr")]) == 0
    assert capsys.readouterr().out.splitlines()[-1] == "PASS (4/4 runs identical)"


def test_verify_order_dependent_script(capsys):
    assert main(["verify", "--plan", "threads:2", str(HERE / "order_dependent.mmr")]) == 1
    out = capsys.readouterr().out
    assert "differs at index" in out and out.splitlines()[-1].startswith("FAIL")


def test_verify_needs_seed_for_rng(script, capsys):
    path = script("replicate(3, runif(1)) |> futurize()")
    assert main(["verify", "--plan", "threads:2", path]) == 2
    assert "--seed" in capsys.readouterr().err
    assert main(["verify", "--plan", "threads:2", "--seed", "1", path]) == 0
    assert capsys.readouterr().out.splitlines()[-1] == "PASS (4/4 runs identical, seed 1)"


def test_verify_reports_record_order_status():
    program = parse("map(1:3, \\(x) { message(x); x }) |> futurize()")
    code, lines = verify_program(program, Plan("threads", 2), None)
    assert code == 0
    assert lines[-2] == "records: order differs in sequential-reversed, parallel-reversed"


# repl -----------------------------------------------------------------------------

def _session(text):
    out = io.StringIO()
    repl(io.StringIO(text), out, Runtime())
    return out.getvalue()


def test_repl_evaluates_and_keeps_state():
    assert _session("2+2\nx <- 5\nx * 2\n") == "4\n10\n"


def test_repl_multiline_input():
    assert _session("f <- \\(x) {\n  x + 1\n}\nf(1)\n") == "2\n"


def test_repl_errors_do_not_end_session():
    out = _session('stop("bad")\n1 +\n\n)\n3\n')
    assert "bad" in out and out.endswith("3\n")


def test_repl_meta_commands():
    out = _session(":transpile map(xs, f) |> futurize()\n:plan threads 2\n"
                   "map(1:3, \\(x) x * 2) |> futurize()\n:plan\n:quit\n99\n")
    lines = out.splitlines()
    assert lines[0].startswith("par_map(xs, f, .options = futurize_options(")
    assert lines[1] == "plan: threads:2"
    assert lines[2] == "[2, 4, 6]"
    assert lines[3] == "plan: threads:2"
    assert "99" not in lines


def test_repl_unknown_meta():
    assert _session(":frobnicate\n").startswith("unknown command :frobnicate")


def test_repl_subprocess():
    proc = mmr("repl", stdin="1 + 1\n:quit\n")
    assert proc.returncode == 0 and proc.stdout == "2\n"
