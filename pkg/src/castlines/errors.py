"""Exception taxonomy shared by every module, mapped to CLI exit codes.

Exit code contract: 0 success, 1 undefined-metric errors, 2 input
validation / parse errors, 3 oracle transport exhaustion.
"""


class CastlinesError(Exception):
    """Base class for all engine errors."""

    exit_code = 1


class ValidationError(CastlinesError):
    """Input violates a schema or a domain invariant."""

    exit_code = 2


class ParseError(ValidationError):
    """A file could not be parsed; carries file path and line number."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}:" if line is None else f"{path}:{line}:"
        super().__init__(f"{prefix} {message}" if prefix else message)


class MetricError(CastlinesError):
    """A requested metric is undefined for the given inputs."""

    exit_code = 1


class OracleError(CastlinesError):
    """The language-model oracle could not be reached or configured."""

    exit_code = 3
