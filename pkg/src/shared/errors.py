"""
Shared error types and actionable messages.

Library code raises; the CLI turns exceptions into one-line messages and
stable exit codes (2 schema, 3 audit, 4 numeric).
"""
from __future__ import annotations


EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_AUDIT = 3
EXIT_NUMERIC = 4


class ReifenbergError(Exception):
    """Base class for every error raised by the package."""

    exit_code = EXIT_NUMERIC


class SchemaError(ReifenbergError):
    """Malformed input document or config; `path` names the offending field."""

    exit_code = EXIT_SCHEMA

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class AuditFailure(ReifenbergError):
    """An audit did not pass and the caller did not force continuation."""

    exit_code = EXIT_AUDIT


class NumericError(ReifenbergError):
    """Geometric or numerical precondition violated."""

    exit_code = EXIT_NUMERIC


class DimensionMismatchError(NumericError):
    pass


class DisjointBallError(NumericError):
    """A set or plane does not meet the ball B(x, r) of a local distance."""


class EmptyBallError(NumericError):
    pass


class DegenerateBallError(NumericError):
    """Too few samples to fit a plane for the ball (j, k)."""

    def __init__(self, j: int, k: int, count: int, needed: int):
        self.j = j
        self.k = k
        super().__init__(
            f"ball (j={j}, k={k}) holds {count} samples, {needed} needed to fit a plane"
        )


class RankDeficientError(NumericError):
    pass


class NonOrthonormalFrameError(NumericError):
    pass


class IsometryDomainError(NumericError):
    pass


class MissingNormalsError(NumericError):
    pass


class InsufficientSampleError(NumericError):
    pass


class ErrorMessages:
    """Centralized actionable error messages."""

    SCHEMA = (
        "Input document does not match the expected schema. Fix the field named above and rerun."
    )

    AUDIT_FAILED = (
        "CCBP audit failed. Inspect audit.json, raise eps or c_audit, or rerun with --force."
    )

    EMPTY_BALL = (
        "No samples inside the query ball. Use a larger radius or a query point on the cloud."
    )

    DEGENERATE_BALL = (
        "A fitting ball has too few samples. Densify the cloud or lower the net depth."
    )

    ISOMETRY_DOMAIN = (
        "Plane family too rough for the isometry field. Audit the CCBP and reduce eps."
    )

    LINALG = (
        "Linear algebra failure on a degenerate configuration. Check the input for repeated points."
    )

    IO = (
        "Could not read or write a file. Check the path and permissions."
    )


def format_error(error: Exception) -> str:
    """Format any exception as a one-line actionable message."""
    import numpy as np

    if isinstance(error, SchemaError):
        return f"Schema error: {error}. {ErrorMessages.SCHEMA}"

    if isinstance(error, AuditFailure):
        return f"{error} {ErrorMessages.AUDIT_FAILED}"

    if isinstance(error, EmptyBallError):
        return f"{error}. {ErrorMessages.EMPTY_BALL}"

    if isinstance(error, DegenerateBallError):
        return f"{error}. {ErrorMessages.DEGENERATE_BALL}"

    if isinstance(error, IsometryDomainError):
        return f"{error}. {ErrorMessages.ISOMETRY_DOMAIN}"

    if isinstance(error, np.linalg.LinAlgError):
        return f"Linear algebra error: {error}. {ErrorMessages.LINALG}"

    if isinstance(error, OSError):
        return f"I/O error: {error}. {ErrorMessages.IO}"

    return f"{type(error).__name__}: {error}"


def exit_code_for(error: Exception) -> int:
    """Map an exception to the stable CLI exit code."""
    if isinstance(error, ReifenbergError):
        return error.exit_code
    if isinstance(error, (ValueError, KeyError, TypeError)):
        return EXIT_SCHEMA
    return EXIT_NUMERIC
