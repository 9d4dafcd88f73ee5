"""
Exception hierarchy shared by every module of sed-suite-bench.

Library code raises these; `run.py` is the only place that turns them into
an `ErrorResponse` and a process exit code.
"""
from __future__ import annotations

from os import PathLike


class ScbenchError(Exception):
    """Base class. `exit_code` is what the CLI returns for this failure."""

    error_name = "Error"
    exit_code = 1

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class ConfigError(ScbenchError):
    error_name = "Config Error"
    exit_code = 2


class BankError(ScbenchError):
    """Source bank or audio asset failure, always naming the offending path."""

    error_name = "Bank Error"
    exit_code = 3

    def __init__(self, message: str, path: str | PathLike | None = None):
        if path is not None:
            message = f"{message}: {path}"
        super().__init__(message)
        self.path = path


class ProfileError(ScbenchError):
    error_name = "Profile Error"
    exit_code = 3


class SynthError(ScbenchError):
    error_name = "Synthesis Error"
    exit_code = 3


class AnnotationParseError(ScbenchError):
    error_name = "Annotation Parse Error"
    exit_code = 4

    def __init__(self, message: str, path: str | PathLike | None = None,
                 line: int | None = None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)
        self.path = path
        self.line = line


class MetricError(ScbenchError):
    error_name = "Metric Error"
    exit_code = 4


class SchemaError(ScbenchError):
    error_name = "Schema Error"
    exit_code = 5
