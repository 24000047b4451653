"""
Error Types
Exception hierarchy shared by every module, with stable codes and CLI exit codes.
"""

from typing import Any, Dict, Optional


class ForecastError(Exception):
    """Base class for all toolkit errors."""

    code = "forecast_error"
    exit_code = 1

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> Dict[str, Any]:
        return {'code': self.code, 'message': self.message}


class DataError(ForecastError):
    """Bad input data or arguments (exit code 1)."""

    code = "data_error"
    exit_code = 1


class NumericalError(ForecastError):
    """Numerical failure during estimation or training (exit code 2)."""

    code = "numerical_error"
    exit_code = 2


class DegenerateInputError(DataError):
    code = "degenerate_input"


class BoundsError(DataError):
    code = "out_of_bounds"


class ZeroRangeError(DataError):
    code = "zero_range"


class StateCorruptionError(DataError):
    code = "state_corruption"


class StructuralError(DataError):
    code = "structural"


class InvalidDofError(DataError):
    code = "invalid_dof"


class ConfigurationError(DataError):
    code = "configuration"


class IngestionError(DataError):
    code = "ingestion"

    def __init__(self, message: str, row: Optional[int] = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message, row=row)
        self.row = row

    def to_dict(self) -> Dict[str, Any]:
        payload = super().to_dict()
        payload['row'] = self.row
        return payload


class MapeUndefinedError(DataError):
    """All actual values are zero; rmse and mae are still available."""

    code = "mape_undefined"

    def __init__(self, message: str, rmse: float, mae: float, n: int):
        super().__init__(message, rmse=rmse, mae=mae, n=n)
        self.rmse = rmse
        self.mae = mae
        self.n = n

    def to_dict(self) -> Dict[str, Any]:
        payload = super().to_dict()
        payload.update({'rmse': self.rmse, 'mae': self.mae, 'n': self.n})
        return payload


class RankDeficiencyError(NumericalError):
    code = "rank_deficient"


class StationarityError(NumericalError):
    code = "non_stationary_fit"


class ConvergenceError(NumericalError):
    """Optimizer hit its iteration cap; carries the best point found."""

    code = "no_convergence"

    def __init__(self, message: str, best_params=None, best_value: Optional[float] = None,
                 iterations: int = 0):
        super().__init__(message, iterations=iterations)
        self.best_params = best_params
        self.best_value = best_value
        self.iterations = iterations


class SearchFailureError(NumericalError):
    code = "search_failed"

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace

    def to_dict(self) -> Dict[str, Any]:
        payload = super().to_dict()
        if self.trace is not None:
            payload['trace'] = self.trace.to_dict()
        return payload


class DivergenceError(NumericalError):
    code = "diverged"

    def __init__(self, message: str, epoch: int):
        super().__init__(f"epoch {epoch}: {message}", epoch=epoch)
        self.epoch = epoch


class ComparisonError(NumericalError):
    code = "comparison_failed"

    def __init__(self, message: str, failures: Optional[Dict[str, str]] = None):
        super().__init__(message)
        self.failures = failures or {}

    def to_dict(self) -> Dict[str, Any]:
        payload = super().to_dict()
        payload['failures'] = dict(self.failures)
        return payload
