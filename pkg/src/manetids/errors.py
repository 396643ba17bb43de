"""Exception types shared across the package.

Every error exposes ``code``, the machine-readable name printed by the CLI.
"""

from __future__ import annotations


class ManetIdsError(Exception):
    code = "ManetIdsError"

    def __init__(self, message: str = "") -> None:
        super().__init__(message)
        self.message = message

    def __str__(self) -> str:
        return f"{self.code}: {self.message}" if self.message else self.code


class ConfigInvalid(ManetIdsError, ValueError):
    code = "ConfigInvalid"


class IoFailure(ManetIdsError, OSError):
    code = "IoFailure"


class MalformedLine(ManetIdsError, ValueError):
    """A trace line that cannot be parsed.

    ``position`` is the 0-based token index where parsing failed and
    ``expected`` names the field that was expected there. ``lineno`` is
    filled in by :func:`manetids.trace.parse_file`.
    """

    code = "MalformedLine"

    def __init__(self, position: int, expected: str, lineno: int | None = None) -> None:
        self.position = position
        self.expected = expected
        self.lineno = lineno
        where = f"line {lineno}, " if lineno is not None else ""
        super().__init__(f"{where}token {position}: expected {expected}")

    def at_line(self, lineno: int) -> "MalformedLine":
        return MalformedLine(self.position, self.expected, lineno)


class MissingReverseRoute(ManetIdsError):
    code = "MissingReverseRoute"


class DimensionMismatch(ManetIdsError, ValueError):
    code = "DimensionMismatch"


class LengthMismatch(ManetIdsError, ValueError):
    code = "LengthMismatch"


class EmptyInput(ManetIdsError, ValueError):
    code = "EmptyInput"


class SingularSystem(ManetIdsError, ArithmeticError):
    code = "SingularSystem"


class Diverged(ManetIdsError, ArithmeticError):
    code = "Diverged"


class SingleClassDataset(ManetIdsError, ValueError):
    code = "SingleClassDataset"
