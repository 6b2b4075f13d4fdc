"""Exception types shared across groundkit."""

from __future__ import annotations


class GroundkitError(Exception):
    """Base class for all groundkit errors."""


class ZeroLengthInput(GroundkitError, ValueError):
    pass


class OutOfWindow(GroundkitError, ValueError):
    pass


class EmptyInput(GroundkitError, ValueError):
    pass


class MalformedAnswer(GroundkitError, ValueError):
    pass


class DimensionMismatch(GroundkitError, ValueError):
    pass


class ZeroVector(GroundkitError, ValueError):
    pass


class MissingField(GroundkitError, KeyError):
    pass


class IndexOutOfRange(GroundkitError, IndexError):
    pass


class TemplateMismatch(GroundkitError):
    pass


class ConfigError(GroundkitError):
    pass


class OracleFailure(GroundkitError):
    """An oracle could not produce a category.

    ``kind`` is one of ``"timeout"``, ``"connection"``, ``"malformed"`` or
    ``"other"``. The grounding driver attaches the partial trace before
    re-raising.
    """

    def __init__(self, kind: str, message: str = "", trace=None):
        super().__init__(f"{kind}: {message}" if message else kind)
        self.kind = kind
        self.message = message
        self.trace = trace
