"""
Diagnostics Module
Unit-root and stationarity tests, correlation functions and the Ljung-Box portmanteau test.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Union

import numpy as np
from scipy import stats

from errors import (
    BoundsError,
    DegenerateInputError,
    InvalidDofError,
    RankDeficiencyError,
)
from series_core import TimeSeries

logger = logging.getLogger(__name__)

MIN_TEST_LENGTH = 20
SIGNIFICANCE = 0.05

# Constant-only response surface, one unit root: cv(T) = b0 + b1/T + b2/T^2 + b3/T^3
ADF_CRITICAL_SURFACE = {
    0.01: (-3.43035, -6.5393, -16.786, -79.433),
    0.05: (-2.86154, -2.8903, -4.234, -40.040),
    0.10: (-2.56677, -1.5384, -2.809, 0.0),
}

# Finite-sample quantiles of the constant-only Dickey-Fuller t distribution by sample size.
ADF_QUANTILE_SIZES = (25, 50, 100, 250, 500, math.inf)
ADF_QUANTILE_TABLE = {
    0.025: (-3.33, -3.22, -3.17, -3.14, -3.13, -3.12),
    0.90: (-0.37, -0.40, -0.42, -0.42, -0.43, -0.44),
    0.95: (0.00, -0.03, -0.05, -0.06, -0.07, -0.07),
    0.975: (0.34, 0.29, 0.26, 0.24, 0.24, 0.23),
    0.99: (0.72, 0.66, 0.63, 0.62, 0.61, 0.60),
}
# Asymptotic interior quantiles filling the gap between the 10% and 90% points.
ADF_ASYMPTOTIC_QUANTILES = {0.25: -2.09, 0.50: -1.57}

KPSS_LEVEL_CRITICAL = {0.10: 0.347, 0.05: 0.463, 0.025: 0.574, 0.01: 0.739}


@dataclass
class CorrelationSequence:
    """Correlations indexed by lag 0..K."""

    values: np.ndarray
    n: int
    confidence_band: float
    kind: str = 'acf'

    @property
    def max_lag(self) -> int:
        return len(self.values) - 1

    def to_dict(self) -> dict:
        return {
            'kind': self.kind,
            'values': [float(v) for v in self.values],
            'n': self.n,
            'confidence_band': self.confidence_band,
        }


@dataclass
class TestReport:
    """Outcome of a hypothesis test.

    p_value_bound is None for an interpolated p-value, 'upper' when the true
    p-value is at least the reported one (table edge), 'lower' when at most.
    """

    test: str
    statistic: float
    p_value: float
    critical_values: Dict[float, float]
    reject_null: bool
    lags_used: int
    n_obs: int
    null_hypothesis: str = ''
    p_value_bound: Optional[str] = None
    correlogram: Optional[CorrelationSequence] = field(default=None, repr=False)

    __test__ = False  # not a pytest collection target

    def to_dict(self) -> dict:
        payload = {
            'test': self.test,
            'statistic': float(self.statistic),
            'p_value': float(self.p_value),
            'p_value_bound': self.p_value_bound,
            'critical_values': {f"{level:g}": float(value)
                                for level, value in sorted(self.critical_values.items())},
            'reject_null': bool(self.reject_null),
            'lags_used': int(self.lags_used),
            'n_obs': int(self.n_obs),
            'null_hypothesis': self.null_hypothesis,
        }
        if self.correlogram is not None:
            payload['correlogram'] = self.correlogram.to_dict()
        return payload


def _as_array(series: Union[TimeSeries, Sequence[float], np.ndarray]) -> np.ndarray:
    if isinstance(series, TimeSeries):
        return np.asarray(series.values, dtype=np.float64)
    return np.asarray(series, dtype=np.float64).reshape(-1)


def _autocorrelations(values: np.ndarray, max_lag: int) -> np.ndarray:
    n = values.shape[0]
    if max_lag < 1 or max_lag >= n:
        raise BoundsError(f"max_lag must be in 1..{n - 1}, got {max_lag}")
    centered = values - values.mean()
    denom = float(np.dot(centered, centered))
    if denom <= 0.0:
        raise DegenerateInputError("series has zero variance; autocorrelation is undefined")

    r = np.empty(max_lag + 1)
    r[0] = 1.0
    for k in range(1, max_lag + 1):
        r[k] = np.dot(centered[k:], centered[:-k]) / denom
    return r


def acf(series: Union[TimeSeries, Sequence[float]], max_lag: int) -> CorrelationSequence:
    values = _as_array(series)
    r = _autocorrelations(values, max_lag)
    n = values.shape[0]
    return CorrelationSequence(r, n, 1.96 / math.sqrt(n), kind='acf')


def pacf(series: Union[TimeSeries, Sequence[float]], max_lag: int) -> CorrelationSequence:
    """Partial autocorrelations via the Durbin-Levinson recursion on the sample ACF."""
    values = _as_array(series)
    n = values.shape[0]
    if max_lag < 1 or max_lag >= n / 2:
        raise BoundsError(f"pacf max_lag must be in 1..{math.ceil(n / 2) - 1}, got {max_lag}")
    r = _autocorrelations(values, max_lag)

    partial = np.empty(max_lag + 1)
    partial[0] = 1.0
    phi = np.zeros(0)
    for k in range(1, max_lag + 1):
        if k == 1:
            reflection = r[1]
        else:
            numerator = r[k] - np.dot(phi, r[k - 1:0:-1])
            denominator = 1.0 - np.dot(phi, r[1:k])
            reflection = numerator / denominator
        phi = np.append(phi - reflection * phi[::-1], reflection)
        partial[k] = reflection
    return CorrelationSequence(partial, n, 1.96 / math.sqrt(n), kind='pacf')


def _ols(y: np.ndarray, x: np.ndarray):
    """Least squares returning coefficients, residual sum of squares and covariance."""
    if np.linalg.matrix_rank(x) < x.shape[1]:
        raise RankDeficiencyError("unit-root regression design is rank deficient")
    coef, _, _, _ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ coef
    ssr = float(resid @ resid)
    dof = x.shape[0] - x.shape[1]
    if dof <= 0:
        raise DegenerateInputError("unit-root regression has no residual degrees of freedom")
    sigma2 = ssr / dof
    cov = sigma2 * np.linalg.inv(x.T @ x)
    return coef, ssr, cov


def _adf_design(levels: np.ndarray, lags: int, start: int):
    """Regress dy_t on [1, y_{t-1}, dy_{t-1}..dy_{t-lags}] for t >= start (diff index)."""
    dy = np.diff(levels)
    rows = np.arange(start, dy.shape[0])
    columns = [np.ones(rows.shape[0]), levels[rows]]
    for i in range(1, lags + 1):
        columns.append(dy[rows - i])
    return dy[rows], np.column_stack(columns)


def adf_critical_values(n_obs: int) -> Dict[float, float]:
    t = float(n_obs)
    return {level: b0 + b1 / t + b2 / t ** 2 + b3 / t ** 3
            for level, (b0, b1, b2, b3) in ADF_CRITICAL_SURFACE.items()}


def _adf_quantiles(n_obs: int) -> Dict[float, float]:
    inverse_sizes = [1.0 / size for size in ADF_QUANTILE_SIZES][::-1]
    quantiles = {prob: float(np.interp(1.0 / n_obs, inverse_sizes, row[::-1]))
                 for prob, row in ADF_QUANTILE_TABLE.items()}
    quantiles.update(ADF_ASYMPTOTIC_QUANTILES)
    quantiles.update(adf_critical_values(n_obs))
    return dict(sorted(quantiles.items()))


def _interpolate_p_value(statistic: float, table: Dict[float, float]):
    """Linear interpolation of a left-tail probability; clipped and flagged at the edges."""
    probs = np.array(list(table.keys()))
    points = np.array(list(table.values()))
    order = np.argsort(points)
    probs, points = probs[order], points[order]
    if statistic < points[0]:
        return float(probs[0]), 'lower'
    if statistic > points[-1]:
        return float(probs[-1]), 'upper'
    return float(np.interp(statistic, points, probs)), None


def schwert_max_lag(n: int) -> int:
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


def adf_test(series: Union[TimeSeries, Sequence[float]], max_lag: Optional[int] = None,
             autolag: Optional[str] = 'aic') -> TestReport:
    """Augmented Dickey-Fuller test with a constant and no trend.

    With autolag='aic' (or 'bic') the lag order minimising the criterion over 0..max_lag is chosen on a
    common estimation sample and the regression is then refit on all usable rows.
    With autolag=None exactly max_lag lags are used.
    """
    levels = _as_array(series)
    n = levels.shape[0]
    if n < MIN_TEST_LENGTH:
        raise DegenerateInputError(
            f"ADF test needs at least {MIN_TEST_LENGTH} observations, got {n}")

    upper = schwert_max_lag(n) if max_lag is None else int(max_lag)
    upper = min(upper, n // 2 - 2)
    if upper < 0:
        raise BoundsError(f"max_lag must be non-negative, got {max_lag}")

    if autolag is None or autolag.lower() == 'none':
        lags = upper
    elif autolag.lower() in ('aic', 'bic'):
        best_aic = math.inf
        lags = 0
        for k in range(upper + 1):
            y, x = _adf_design(levels, k, start=upper)
            _, ssr, _ = _ols(y, x)
            nobs = y.shape[0]
            if ssr <= 0.0:
                raise RankDeficiencyError("unit-root regression fits the data exactly")
            penalty = 2.0 if autolag.lower() == 'aic' else math.log(nobs)
            aic = nobs * (math.log(2 * math.pi) + math.log(ssr / nobs) + 1) + penalty * x.shape[1]
            if aic < best_aic:
                best_aic, lags = aic, k
    else:
        raise BoundsError(f"unknown autolag method '{autolag}'")

    y, x = _adf_design(levels, lags, start=lags)
    coef, ssr, cov = _ols(y, x)
    if ssr <= 0.0:
        raise RankDeficiencyError("unit-root regression fits the data exactly")
    statistic = float(coef[1] / math.sqrt(cov[1, 1]))
    nobs = y.shape[0]

    critical = adf_critical_values(nobs)
    p_value, bound = _interpolate_p_value(statistic, _adf_quantiles(nobs))
    report = TestReport(
        test='adf',
        statistic=statistic,
        p_value=p_value,
        critical_values=critical,
        reject_null=statistic < critical[SIGNIFICANCE],
        lags_used=lags,
        n_obs=nobs,
        null_hypothesis='the series has a unit root',
        p_value_bound=bound,
    )
    logger.debug(f"ADF statistic={statistic:.4f} p={p_value:.4f} lags={lags} nobs={nobs}")
    return report


def newey_west_variance(residuals: np.ndarray, bandwidth: int) -> float:
    """Long-run variance with Bartlett weights 1 - s/(bandwidth+1)."""
    n = residuals.shape[0]
    variance = float(residuals @ residuals) / n
    for s in range(1, bandwidth + 1):
        weight = 1.0 - s / (bandwidth + 1.0)
        variance += 2.0 * weight * float(residuals[s:] @ residuals[:-s]) / n
    return variance


def kpss_bandwidth(n: int) -> int:
    return int(math.floor(4.0 * (n / 100.0) ** 0.25))


def kpss_test(series: Union[TimeSeries, Sequence[float]],
              bandwidth: Optional[int] = None) -> TestReport:
    """KPSS test of level stationarity."""
    values = _as_array(series)
    n = values.shape[0]
    if n < MIN_TEST_LENGTH:
        raise DegenerateInputError(
            f"KPSS test needs at least {MIN_TEST_LENGTH} observations, got {n}")
    lags = kpss_bandwidth(n) if bandwidth is None else int(bandwidth)
    if not 0 <= lags < n:
        raise BoundsError(f"bandwidth must be in 0..{n - 1}, got {bandwidth}")

    residuals = values - values.mean()
    long_run = newey_west_variance(residuals, lags)
    if long_run <= 0.0:
        raise RankDeficiencyError("long-run variance is not positive; series is constant")
    partial_sums = np.cumsum(residuals)
    statistic = float(partial_sums @ partial_sums) / (n ** 2) / long_run

    # Right tail: larger statistics have smaller p-values.
    levels = sorted(KPSS_LEVEL_CRITICAL)
    points = [KPSS_LEVEL_CRITICAL[level] for level in levels]
    if statistic < points[-1]:
        p_value, bound = levels[-1], 'upper'
    elif statistic > points[0]:
        p_value, bound = levels[0], 'lower'
    else:
        p_value, bound = float(np.interp(statistic, points[::-1], levels[::-1])), None

    return TestReport(
        test='kpss',
        statistic=statistic,
        p_value=float(p_value),
        critical_values=dict(KPSS_LEVEL_CRITICAL),
        reject_null=statistic > KPSS_LEVEL_CRITICAL[SIGNIFICANCE],
        lags_used=lags,
        n_obs=n,
        null_hypothesis='the series is level stationary',
        p_value_bound=bound,
    )


def ljung_box(residuals: Sequence[float], lags: int, fitted_params: int = 0) -> TestReport:
    """Ljung-Box Q over lags 1..h with h - fitted_params degrees of freedom."""
    values = _as_array(residuals)
    n = values.shape[0]
    if lags <= fitted_params:
        raise InvalidDofError(
            f"lags ({lags}) must exceed the number of fitted parameters ({fitted_params})")
    if n <= lags:
        raise BoundsError(f"Ljung-Box with {lags} lags needs more than {lags} residuals, got {n}")

    r = _autocorrelations(values, lags)
    k = np.arange(1, lags + 1)
    q_stat = float(n * (n + 2) * np.sum(r[1:] ** 2 / (n - k)))
    dof = lags - fitted_params
    critical = {level: float(stats.chi2.isf(level, dof)) for level in (0.01, 0.05, 0.10)}

    return TestReport(
        test='ljung_box',
        statistic=q_stat,
        p_value=float(stats.chi2.sf(q_stat, dof)),
        critical_values=critical,
        reject_null=q_stat > critical[SIGNIFICANCE],
        lags_used=lags,
        n_obs=n,
        null_hypothesis='residuals are not autocorrelated',
        correlogram=CorrelationSequence(r, n, 1.96 / math.sqrt(n), kind='acf'),
    )
