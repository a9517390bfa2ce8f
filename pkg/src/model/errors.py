from typing import Optional


class BifluidError(Exception):
    """Base error carrying a machine-readable code and a human-readable detail."""

    exit_code: int = 3

    def __init__(self, detail: str, code: str = "error", t: Optional[float] = None):
        self.detail = detail
        self.code = code
        self.t = t
        super().__init__(self.message)

    @property
    def message(self) -> str:
        if self.t is None:
            return self.detail
        return f"{self.detail} at t={self.t:.6g}"

    def with_time(self, t: float) -> "BifluidError":
        """Return a copy of this error annotated with the failing time."""
        return type(self)(self.detail, code=self.code, t=t)


class ParameterError(BifluidError, ValueError):
    exit_code = 2


class InitialDataError(BifluidError, ValueError):
    exit_code = 2


class ConfigError(BifluidError, ValueError):
    exit_code = 2


class VacuumError(BifluidError):
    """A density fell below the positivity floor."""

    def __init__(self, detail: str = "vacuum-degenerate", code: str = "vacuum", t: Optional[float] = None):
        super().__init__(detail, code=code, t=t)


class LinearSolverError(BifluidError):
    """A tridiagonal or block system could not be solved (usually dt too large)."""


class GalerkinError(BifluidError):
    """The Galerkin coefficient integrator failed to converge."""


class SamplingError(BifluidError):
    """Too few stored time levels for a time-derivative diagnostic."""
