"""Exception types shared across the mmr package."""

from __future__ import annotations

from typing import TYPE_CHECKING, Iterable

if TYPE_CHECKING:
    from .syntax import SourceSpan
    from .values import ErrorObject


class MMRError(Exception):
    """Base class for host-level failures in mmr."""


class LexError(MMRError):
    def __init__(self, message: str, span: "SourceSpan"):
        super().__init__(f"{message} at {span.line}:{span.column}")
        self.message = message
        self.span = span


class ParseError(MMRError):
    def __init__(self, message: str, span: "SourceSpan", expected: Iterable[str] = ()):
        self.message = message
        self.span = span
        self.expected = tuple(sorted(set(expected)))
        text = f"{message} at {span.line}:{span.column}"
        if self.expected:
            text += f" (expected one of: {', '.join(self.expected)})"
        super().__init__(text)

    @property
    def at_eof(self) -> bool:
        return self.message.startswith("unexpected end of input")


class DecodeError(MMRError):
    """Malformed bytes in the canonical serialization or the wire protocol."""


class EncodeError(MMRError):
    """A value cannot be represented in the canonical serialization."""


class InvalidPlan(MMRError):
    pass


class BackendUnavailable(MMRError):
    pass


class RegistrationTooLate(MMRError):
    pass


class Signal(Exception):
    """Carries a DSL-level ErrorObject up through the evaluator.

    These never escape :func:`mmr.interpreter.evaluate`; they are turned into
    the ``result`` of an :class:`~mmr.interpreter.EvalOutcome`.
    """

    def __init__(self, error: "ErrorObject"):
        super().__init__(error.message)
        self.error = error
