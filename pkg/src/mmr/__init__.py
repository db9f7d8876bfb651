"""mmr: a small expression language with a map-reduce parallelizing transpiler."""

__version__ = "0.1.0"

from .analysis import free_vars, resolve_globals
from .errors import (
    BackendUnavailable, DecodeError, InvalidPlan, LexError, ParseError,
    RegistrationTooLate, Signal,
)
from .futurize import FuturizeOptions, TranspilerEntry, futurize, transpile_program, unwrap
from .interpreter import ConditionRecord, EvalOutcome, Interpreter, evaluate
from .lexer import tokenize
from .parser import parse, parse_expr
from .printer import pretty_print, pretty_program
from .rng import derive_stream
from .runtime import Plan, Runtime, get_plan, get_runtime, make_chunks, set_plan
from .serial import decode, encode
from .values import ErrorObject, MList, value_equal

__all__ = [
    "BackendUnavailable", "ConditionRecord", "DecodeError", "ErrorObject", "EvalOutcome",
    "FuturizeOptions", "Interpreter", "InvalidPlan", "LexError", "MList", "ParseError",
    "Plan", "RegistrationTooLate", "Runtime", "Signal", "TranspilerEntry", "decode",
    "derive_stream", "encode", "evaluate", "free_vars", "futurize", "get_plan", "get_runtime",
    "make_chunks", "parse", "parse_expr", "pretty_print", "pretty_program", "resolve_globals",
    "set_plan", "tokenize", "transpile_program", "unwrap", "value_equal",
]
