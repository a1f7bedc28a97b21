"""
Every error raised by ``spsro`` derives from :class:`SpsroError`. The
``category`` attribute is what the CLI prints, so it has to stay stable.
"""
from __future__ import annotations

import typing as t


class SpsroError(Exception):
    category: str = "error"


class InvalidArgumentError(SpsroError, ValueError):
    category = "invalid-argument"


class InvalidPolicyError(SpsroError, ValueError):
    category = "invalid-policy"


class PreconditionError(SpsroError):
    category = "precondition"


class ResourceLimitError(SpsroError):
    category = "resource-limit"


class DegenerateReferenceError(SpsroError):
    """
    The epoch-1 NashConv is zero, so the NashConv ratio in ``y`` is undefined.
    """

    category = "degenerate-reference"


class UnsupportedSolverError(SpsroError, ValueError):
    category = "unsupported-solver"


class ModeMismatchError(SpsroError, ValueError):
    category = "mode-mismatch"


class CapacityError(SpsroError):
    category = "capacity"


class CheckpointError(SpsroError):
    category = "checkpoint"


class SelectorError(SpsroError):
    category = "selector"


class ParseError(SpsroError):
    """
    :param line_number:
        1-based line (or row) number the problem was found on, if known.
    """

    category = "parse-error"

    def __init__(self, message: str, line_number: t.Optional[int] = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number
