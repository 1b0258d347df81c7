"""
Error types shared across the toolkit.

Every error carries the process exit code the CLI reports for it:
1 for usage and configuration problems, 2 for data and format problems.
"""

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class GsoError(Exception):
    """Base class for all toolkit errors."""

    exit_code: int = EXIT_USAGE


class UsageError(GsoError, ValueError):
    """A precondition on arguments was violated."""

    exit_code = EXIT_USAGE


class ConfigurationError(GsoError, ValueError):
    """Shapes or settings are inconsistent with each other."""

    exit_code = EXIT_USAGE


class UnsupportedOperationError(GsoError):
    """The operation is not defined for this kind of object."""

    exit_code = EXIT_USAGE


class RankDeficiencyError(UsageError):
    """A basis could not be orthonormalized because it is rank deficient."""


class DataError(GsoError):
    """Input data or an artifact is unusable."""

    exit_code = EXIT_DATA


class FormatError(DataError):
    """An artifact has a bad magic, version, checksum or length."""


class InvariantError(DataError):
    """An artifact decoded cleanly but violates a structural invariant."""


class StageError(GsoError):
    """A failure inside a named pipeline stage."""

    def __init__(self, stage: str, cause: BaseException) -> None:
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", EXIT_USAGE)
