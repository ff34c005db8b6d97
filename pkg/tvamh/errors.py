"""Exception hierarchy shared by the library and the command line.

Each class carries the process exit code the CLI uses for it.
"""
from typing import Optional


class TvamhError(Exception):
    exit_code: int = 1


class ConfigError(TvamhError, ValueError):
    exit_code = 3


class IngestionError(TvamhError):
    exit_code = 4

    def __init__(self, message: str, path: Optional[str] = None, row: Optional[int] = None):
        self.path = path
        self.row = row
        prefix = ""
        if path is not None:
            prefix = f"{path}: "
        if row is not None:
            prefix += f"row {row}: "
        super().__init__(f"{prefix}{message}")


class NumericalError(TvamhError):
    exit_code = 5


class InsufficientDataError(NumericalError, ValueError):
    pass


class SingularSystemError(NumericalError):
    pass


class FilterError(NumericalError):
    pass


class ExplosivePathError(NumericalError, ValueError):
    pass


class BootstrapError(NumericalError):
    pass


class ValidationFailure(TvamhError):
    exit_code = 6


class NonConvergenceWarning(UserWarning):
    pass
