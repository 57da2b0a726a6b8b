"""Exception types raised across the package."""

from __future__ import annotations


class SelpError(Exception):
    """Base class for all package errors."""

    @property
    def kind(self) -> str:
        return type(self).__name__


class DimensionMismatch(SelpError, ValueError):
    pass


class ZeroVarianceColumn(SelpError, ValueError):
    def __init__(self, index: int):
        super().__init__(f"column {index} has zero sample variance")
        self.index = index


class NotPositiveDefinite(SelpError, ValueError):
    def __init__(self, min_eigenvalue: float, what: str = "matrix"):
        super().__init__(f"{what} is not positive definite "
                         f"(minimum eigenvalue {min_eigenvalue:.3e})")
        self.min_eigenvalue = min_eigenvalue


class ConvergenceFailure(SelpError, RuntimeError):
    pass


class LpFailure(SelpError, RuntimeError):
    def __init__(self, status, detail: str = ""):
        msg = f"linear program ended with status {getattr(status, 'value', status)}"
        super().__init__(f"{msg}: {detail}" if detail else msg)
        self.status = status


class InfeasibleTau(LpFailure):
    pass


class DegenerateCrossCovariance(SelpError, ValueError):
    pass


class DegenerateScores(SelpError, ValueError):
    pass


class InvalidFoldCount(SelpError, ValueError):
    pass


class LengthMismatch(SelpError, ValueError):
    pass


class AllCandidatesDegenerate(SelpError, RuntimeError):
    pass


class ZeroVector(SelpError, ValueError):
    pass


class MalformedCsv(SelpError, ValueError):
    def __init__(self, path, line: int, detail: str):
        super().__init__(f"{path}:{line}: {detail}")
        self.path = path
        self.line = line


class RowCountMismatch(SelpError, ValueError):
    pass


class ConfigError(SelpError, ValueError):
    """Bad command-line flag or config-file entry."""


class ReplicateFailure(SelpError, RuntimeError):
    """Wraps an error raised while running one simulation replicate."""

    def __init__(self, replicate: int, cause: str, message: str):
        super().__init__(f"replicate {replicate}: {cause}: {message}")
        self.replicate = replicate
        self.cause = cause
        self.message = message

    def __reduce__(self):
        # keep the exception picklable across worker processes
        return (type(self), (self.replicate, self.cause, self.message))
