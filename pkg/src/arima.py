"""
ARIMA Module
Exact Gaussian maximum likelihood for ARIMA(p,d,q) via the Kalman filter, stepwise
information-criterion search, residual diagnostics and interval forecasts.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, signal, stats

from diagnostics import MIN_TEST_LENGTH, CorrelationSequence, TestReport, kpss_test, ljung_box
from errors import (
    BoundsError,
    ConfigurationError,
    ConvergenceError,
    DegenerateInputError,
    ForecastError,
    SearchFailureError,
    StationarityError,
)
from series_core import (
    DifferenceState,
    TimeSeries,
    difference,
    format_period,
    shift_period,
    undifference,
)

logger = logging.getLogger(__name__)

# Partial autocorrelations are mapped into (-PARTIAL_BOUND, PARTIAL_BOUND).
PARTIAL_BOUND = 0.9999
ROOT_MARGIN = 1e-6
STEADY_STATE_TOL = 1e-11
TIE_TOLERANCE = 1e-6
CANDIDATE_ORDERS = ((2, 0, 2), (1, 0, 0), (0, 0, 1), (2, 0, 0),
                    (1, 0, 1), (2, 0, 1), (1, 0, 2), (0, 0, 2))


@dataclass(frozen=True, order=True)
class ArimaOrder:
    p: int
    d: int
    q: int

    def __post_init__(self):
        for name in ('p', 'd', 'q'):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise BoundsError(f"ARIMA order component {name} must be a non-negative integer")
            object.__setattr__(self, name, int(value))

    def __str__(self) -> str:
        return f"ARIMA({self.p},{self.d},{self.q})"

    @classmethod
    def parse(cls, text: str) -> 'ArimaOrder':
        """Parse '1,0,1' or '(1, 0, 1)'."""
        parts = [part for part in text.strip().strip('()').replace(' ', '').split(',') if part]
        if len(parts) != 3:
            raise ConfigurationError(f"cannot parse ARIMA order '{text}'; expected p,d,q")
        return cls(*(int(part) for part in parts))

    def to_dict(self) -> dict:
        return {'p': self.p, 'd': self.d, 'q': self.q}


@dataclass
class SearchConfig:
    max_p: int = 5
    max_d: int = 2
    max_q: int = 5
    max_steps: int = 94
    criterion: str = 'aic'
    max_iter: int = 1000
    tol: float = 1e-8
    workers: int = 1
    start_orders: Tuple[Tuple[int, int], ...] = ((2, 2), (1, 0), (0, 1), (0, 0))

    def __post_init__(self):
        if self.criterion not in ('aic', 'bic'):
            raise ConfigurationError(f"criterion must be 'aic' or 'bic', got '{self.criterion}'")
        if min(self.max_p, self.max_q, self.max_d) < 0 or self.max_steps < 1:
            raise ConfigurationError("search limits must be non-negative and max_steps positive")

    @classmethod
    def from_dict(cls, config: Dict[str, Any]) -> 'SearchConfig':
        known = {key: config[key] for key in
                 ('max_p', 'max_d', 'max_q', 'max_steps', 'criterion', 'max_iter', 'tol', 'workers')
                 if key in config}
        return cls(**known)


@dataclass
class ArimaFit:
    order: ArimaOrder
    ar_coeffs: np.ndarray
    ma_coeffs: np.ndarray
    intercept: float
    sigma2: float
    log_likelihood: float
    aic: float
    bic: float
    residuals: np.ndarray
    n_obs: int
    converged: bool
    iterations: int
    with_intercept: bool = True
    series: Optional[TimeSeries] = field(default=None, repr=False)
    differenced: Optional[TimeSeries] = field(default=None, repr=False)
    difference_state: Optional[DifferenceState] = field(default=None, repr=False)
    next_state: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n_params(self) -> int:
        return self.order.p + self.order.q + int(self.with_intercept) + 1

    @property
    def ar_root_moduli(self) -> List[float]:
        return _root_moduli(np.concatenate([[1.0], -np.asarray(self.ar_coeffs)]))

    @property
    def ma_root_moduli(self) -> List[float]:
        return _root_moduli(np.concatenate([[1.0], np.asarray(self.ma_coeffs)]))

    def criterion(self, name: str) -> float:
        return self.aic if name == 'aic' else self.bic

    def to_dict(self, include_residuals: bool = True) -> dict:
        payload = {
            'order': self.order.to_dict(),
            'ar_coeffs': [float(c) for c in self.ar_coeffs],
            'ma_coeffs': [float(c) for c in self.ma_coeffs],
            'intercept': float(self.intercept),
            'with_intercept': bool(self.with_intercept),
            'sigma2': float(self.sigma2),
            'log_likelihood': float(self.log_likelihood),
            'aic': float(self.aic),
            'bic': float(self.bic),
            'n_obs': int(self.n_obs),
            'convergence': {'converged': bool(self.converged), 'iterations': int(self.iterations)},
            'ar_root_moduli': self.ar_root_moduli,
            'ma_root_moduli': self.ma_root_moduli,
        }
        if include_residuals:
            payload['residuals'] = [float(r) for r in self.residuals]
        return payload


@dataclass
class Forecast:
    horizon: int
    point: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    variance: np.ndarray = field(repr=False, default=None)
    start_period: Optional[Tuple[int, int]] = None

    def period_labels(self) -> List[str]:
        if self.start_period is None:
            return [str(h + 1) for h in range(self.horizon)]
        return [format_period(shift_period(self.start_period, h)) for h in range(self.horizon)]

    def to_dict(self) -> dict:
        return {
            'horizon': self.horizon,
            'level': self.level,
            'periods': self.period_labels(),
            'point': [float(v) for v in self.point],
            'lower': [float(v) for v in self.lower],
            'upper': [float(v) for v in self.upper],
        }


@dataclass
class CandidateResult:
    order: ArimaOrder
    with_intercept: bool
    aic: Optional[float] = None
    bic: Optional[float] = None
    failure: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.failure is None

    @property
    def key(self) -> Tuple[int, int, int, int]:
        return self.order.p, self.order.d, self.order.q, int(self.with_intercept)

    def criterion(self, name: str) -> Optional[float]:
        return self.aic if name == 'aic' else self.bic

    def to_dict(self) -> dict:
        return {
            'order': self.order.to_dict(),
            'with_intercept': self.with_intercept,
            'aic': self.aic,
            'bic': self.bic,
            'failure': self.failure,
        }


@dataclass
class SearchTrace:
    evaluated: List[CandidateResult] = field(default_factory=list)
    best: Optional[ArimaOrder] = None
    best_with_intercept: bool = True
    criterion: str = 'aic'
    step_log: List[dict] = field(default_factory=list)
    differencing_tests: List[TestReport] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            'criterion': self.criterion,
            'best': self.best.to_dict() if self.best else None,
            'best_with_intercept': self.best_with_intercept,
            'evaluated': [entry.to_dict() for entry in self.evaluated],
            'step_log': list(self.step_log),
            'differencing_tests': [report.to_dict() for report in self.differencing_tests],
        }


# -- parameter transforms -------------------------------------------------------------

def coefficients_from_partials(partials: Sequence[float]) -> np.ndarray:
    """Durbin-Levinson map from partial autocorrelations in (-1, 1) to AR coefficients."""
    coeffs = np.zeros(0)
    for reflection in partials:
        coeffs = np.append(coeffs - reflection * coeffs[::-1], reflection)
    return coeffs


def partials_from_coefficients(coeffs: Sequence[float]) -> np.ndarray:
    """Inverse of coefficients_from_partials; raises StationarityError outside the region."""
    coeffs = np.array(coeffs, dtype=np.float64)
    partials = np.zeros(coeffs.shape[0])
    for j in range(coeffs.shape[0] - 1, -1, -1):
        reflection = coeffs[j]
        if abs(reflection) >= 1.0:
            raise StationarityError("coefficients lie outside the stationary region")
        partials[j] = reflection
        head = coeffs[:j]
        coeffs = (head + reflection * head[::-1]) / (1.0 - reflection ** 2)
    return partials


def _to_unconstrained(coeffs: Sequence[float], sign: float) -> np.ndarray:
    try:
        partials = partials_from_coefficients(sign * np.asarray(coeffs, dtype=np.float64))
    except StationarityError:
        return np.zeros(len(coeffs))
    partials = np.clip(partials / PARTIAL_BOUND, -0.99, 0.99)
    return np.arctanh(partials)


def _root_moduli(polynomial: np.ndarray) -> List[float]:
    """Moduli of the roots of 1 + c1 z + ... given coefficients in ascending powers."""
    trimmed = np.trim_zeros(polynomial, 'b')
    if trimmed.shape[0] <= 1:
        return []
    return sorted(float(m) for m in np.abs(np.roots(trimmed[::-1])))


class _Parameterization:
    """Maps an unconstrained vector to (ar, ma, intercept)."""

    def __init__(self, p: int, q: int, with_intercept: bool, values: np.ndarray):
        self.p = p
        self.q = q
        self.with_intercept = with_intercept
        self.center = float(np.mean(values))
        spread = float(np.std(values))
        self.scale = spread if spread > 0 else 1.0

    @property
    def size(self) -> int:
        return self.p + self.q + int(self.with_intercept)

    def unpack(self, params: np.ndarray):
        ar = coefficients_from_partials(PARTIAL_BOUND * np.tanh(params[:self.p]))
        ma = -coefficients_from_partials(PARTIAL_BOUND * np.tanh(params[self.p:self.p + self.q]))
        intercept = self.center + self.scale * params[-1] if self.with_intercept else 0.0
        return ar, ma, intercept

    def pack(self, ar, ma, intercept: float) -> np.ndarray:
        parts = [_to_unconstrained(ar, 1.0), _to_unconstrained(ma, -1.0)]
        if self.with_intercept:
            parts.append([(intercept - self.center) / self.scale])
        return np.concatenate(parts) if parts else np.zeros(0)


# -- state space and likelihood -------------------------------------------------------

def state_space(ar: Sequence[float], ma: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Harvey form: transition T (r x r) and shock loading R (r), r = max(p, q + 1)."""
    p, q = len(ar), len(ma)
    r = max(p, q + 1)
    transition = np.zeros((r, r))
    if p:
        transition[:p, 0] = ar
    transition[:-1, 1:] = np.eye(r - 1)
    loading = np.zeros(r)
    loading[0] = 1.0
    loading[1:q + 1] = ma
    return transition, loading


def stationary_covariance(transition: np.ndarray, loading: np.ndarray) -> np.ndarray:
    """Solve P = T P T' + R R' through its vectorized form."""
    r = loading.shape[0]
    rhs = np.outer(loading, loading).ravel()
    vec = np.linalg.solve(np.eye(r * r) - np.kron(transition, transition), rhs)
    cov = vec.reshape(r, r)
    return 0.5 * (cov + cov.T)


def kalman_innovations(x: np.ndarray, ar: Sequence[float], ma: Sequence[float]):
    """Innovations and their variances for a zero-mean ARMA with unit shock variance.

    Returns (v, F, next_state). Once the predicted covariance reaches its steady state
    R R', the remaining innovations follow the invertible ARMA recursion and are produced
    with a linear filter seeded from the current state.
    """
    ar = np.asarray(ar, dtype=np.float64)
    ma = np.asarray(ma, dtype=np.float64)
    n = x.shape[0]
    transition, loading = state_space(ar, ma)
    steady = np.outer(loading, loading)
    state = np.zeros(loading.shape[0])
    cov = stationary_covariance(transition, loading)

    v = np.empty(n)
    f = np.empty(n)
    t = 0
    while t < n:
        if np.max(np.abs(cov - steady)) < STEADY_STATE_TOL:
            numerator = np.concatenate([[1.0], -ar])
            denominator = np.concatenate([[1.0], ma])
            width = max(numerator.shape[0], denominator.shape[0]) - 1
            if width == 0:
                v[t:] = x[t:]
            else:
                tail, final = signal.lfilter(numerator, denominator, x[t:], zi=-state[:width])
                v[t:] = tail
                state = np.zeros_like(state)
                state[:width] = -final
            f[t:] = 1.0
            break
        innovation = x[t] - state[0]
        variance = cov[0, 0]
        gain = cov[:, 0] / variance
        filtered_state = state + gain * innovation
        filtered_cov = cov - np.outer(cov[:, 0], cov[0, :]) / variance
        v[t], f[t] = innovation, variance
        state = transition @ filtered_state
        cov = transition @ filtered_cov @ transition.T + steady
        t += 1
    return v, f, state


def loglikelihood(values: Sequence[float], ar: Sequence[float], ma: Sequence[float],
                  intercept: float, sigma2: float) -> float:
    """Exact Gaussian log-likelihood of an ARMA(p,q) with mean `intercept`."""
    x = np.asarray(values, dtype=np.float64) - intercept
    v, f, _ = kalman_innovations(x, ar, ma)
    scaled = sigma2 * f
    return float(-0.5 * np.sum(np.log(2.0 * math.pi * scaled) + v ** 2 / scaled))


def _profile_loglikelihood(v: np.ndarray, f: np.ndarray) -> Tuple[float, float]:
    n = v.shape[0]
    sigma2 = float(np.mean(v ** 2 / f))
    if not sigma2 > 0.0:
        return -math.inf, sigma2
    ll = -0.5 * n * (math.log(2.0 * math.pi) + 1.0 + math.log(sigma2)) - 0.5 * float(np.sum(np.log(f)))
    return ll, sigma2


def _css_objective(params, values, model: _Parameterization) -> float:
    ar, ma, intercept = model.unpack(params)
    x = values - intercept
    p = model.p
    base = x[p:].copy()
    for i, phi in enumerate(ar, start=1):
        base -= phi * x[p - i:x.shape[0] - i]
    errors = signal.lfilter([1.0], np.concatenate([[1.0], ma]), base)
    return float(np.mean(errors ** 2))


def _negative_loglikelihood(params, values, model: _Parameterization) -> float:
    ar, ma, intercept = model.unpack(params)
    v, f, _ = kalman_innovations(values - intercept, ar, ma)
    ll, _ = _profile_loglikelihood(v, f)
    if not math.isfinite(ll):
        return 1e300
    return -ll


def _simplex(x0: np.ndarray, step: float) -> np.ndarray:
    return np.vstack([x0] + [x0 + step * row for row in np.eye(x0.shape[0])])


def psi_weights(ar: Sequence[float], ma: Sequence[float], d: int, horizon: int) -> np.ndarray:
    """First `horizon` MA(infinity) weights of the integrated model phi(L)(1-L)^d."""
    polynomial = np.concatenate([[1.0], -np.asarray(ar, dtype=np.float64)])
    for _ in range(d):
        polynomial = np.convolve(polynomial, [1.0, -1.0])
    phi_star = -polynomial[1:]
    ma = np.asarray(ma, dtype=np.float64)
    psi = np.zeros(horizon)
    if horizon == 0:
        return psi
    psi[0] = 1.0
    for j in range(1, horizon):
        value = ma[j - 1] if j <= ma.shape[0] else 0.0
        for i in range(1, min(j, phi_star.shape[0]) + 1):
            value += phi_star[i - 1] * psi[j - i]
        psi[j] = value
    return psi


# -- estimation -----------------------------------------------------------------------

def evaluate(series: TimeSeries, order: ArimaOrder, ar_coeffs: Sequence[float],
             ma_coeffs: Sequence[float], intercept: float = 0.0,
             sigma2: Optional[float] = None, with_intercept: bool = True,
             converged: bool = True, iterations: int = 0) -> ArimaFit:
    """Fit object at fixed parameters; sigma2 is profiled out when omitted."""
    ar = np.asarray(ar_coeffs, dtype=np.float64)
    ma = np.asarray(ma_coeffs, dtype=np.float64)
    if ar.shape[0] != order.p or ma.shape[0] != order.q:
        raise ConfigurationError(
            f"{order} needs {order.p} AR and {order.q} MA coefficients, "
            f"got {ar.shape[0]} and {ma.shape[0]}")
    ar_moduli = _root_moduli(np.concatenate([[1.0], -ar]))
    ma_moduli = _root_moduli(np.concatenate([[1.0], ma]))
    if any(m <= 1.0 + ROOT_MARGIN for m in ar_moduli + ma_moduli):
        raise StationarityError(
            f"{order} parameters are not stationary/invertible (root moduli {ar_moduli + ma_moduli})")

    differenced, state = difference(series, order.d)
    values = np.asarray(differenced.values)
    v, f, next_state = kalman_innovations(values - intercept, ar, ma)
    if sigma2 is None:
        ll, sigma2 = _profile_loglikelihood(v, f)
    else:
        scaled = sigma2 * f
        ll = float(-0.5 * np.sum(np.log(2.0 * math.pi * scaled) + v ** 2 / scaled))
    if not (sigma2 > 0.0 and math.isfinite(ll)):
        raise DegenerateInputError(f"{order} has a degenerate likelihood (sigma2={sigma2})")

    n = values.shape[0]
    k = order.p + order.q + int(with_intercept) + 1
    return ArimaFit(
        order=order,
        ar_coeffs=ar,
        ma_coeffs=ma,
        intercept=float(intercept),
        sigma2=float(sigma2),
        log_likelihood=float(ll),
        aic=float(-2.0 * ll + 2.0 * k),
        bic=float(-2.0 * ll + k * math.log(n)),
        residuals=v / np.sqrt(sigma2 * f),
        n_obs=n,
        converged=converged,
        iterations=iterations,
        with_intercept=with_intercept,
        series=series,
        differenced=differenced,
        difference_state=state,
        next_state=next_state,
    )


def fit(series: TimeSeries, order: ArimaOrder, with_intercept: bool = True,
        max_iter: int = 1000, tol: float = 1e-8) -> ArimaFit:
    """Exact maximum likelihood with CSS starting values and a Nelder-Mead simplex."""
    needed = order.d + order.p + order.q + 10
    if len(series) < needed:
        raise DegenerateInputError(
            f"{order} needs at least {needed} observations, got {len(series)}")

    differenced, _ = difference(series, order.d)
    values = np.asarray(differenced.values)
    if order.p == 0 and order.q == 0:
        intercept = float(np.mean(values)) if with_intercept else 0.0
        return evaluate(series, order, [], [], intercept, with_intercept=with_intercept)

    model = _Parameterization(order.p, order.q, with_intercept, values)
    x0 = np.zeros(model.size)
    css = optimize.minimize(
        _css_objective, x0, args=(values, model), method='Nelder-Mead',
        options={'maxiter': max_iter, 'xatol': 1e-4, 'fatol': 1e-10,
                 'initial_simplex': _simplex(x0, 0.5)})
    start = css.x if np.all(np.isfinite(css.x)) else x0

    start_value = _negative_loglikelihood(start, values, model)
    result = optimize.minimize(
        _negative_loglikelihood, start, args=(values, model), method='Nelder-Mead',
        options={'maxiter': max_iter, 'xatol': math.sqrt(tol),
                 'fatol': tol * max(1.0, abs(start_value)),
                 'initial_simplex': _simplex(start, 0.1)})
    if not result.success:
        raise ConvergenceError(
            f"{order} did not converge within {max_iter} iterations: {result.message}",
            best_params=model.unpack(result.x), best_value=float(result.fun),
            iterations=int(result.nit))

    ar, ma, intercept = model.unpack(result.x)
    fitted = evaluate(series, order, ar, ma, intercept, with_intercept=with_intercept,
                      converged=True, iterations=int(result.nit))
    logger.debug(f"Fitted {order} intercept={with_intercept}: aic={fitted.aic:.3f} "
                 f"iterations={result.nit}")
    return fitted


def forecast(fitted: ArimaFit, horizon: int, level: float = 0.95) -> Forecast:
    """Point forecasts and symmetric prediction intervals on the original scale."""
    if horizon <= 0:
        raise BoundsError(f"forecast horizon must be positive, got {horizon}")
    if not 0.0 < level < 1.0:
        raise BoundsError(f"confidence level must be in (0, 1), got {level}")
    if not fitted.converged:
        raise ConvergenceError(f"{fitted.order} fit did not converge; refusing to forecast")

    transition, _ = state_space(fitted.ar_coeffs, fitted.ma_coeffs)
    state = np.array(fitted.next_state, dtype=np.float64)
    differenced_points = np.empty(horizon)
    for h in range(horizon):
        differenced_points[h] = state[0] + fitted.intercept
        state = transition @ state

    if fitted.order.d == 0:
        point = differenced_points
    else:
        extended = fitted.differenced.with_values(
            np.concatenate([fitted.differenced.values, differenced_points]))
        point = undifference(extended, fitted.difference_state).values[-horizon:]

    psi = psi_weights(fitted.ar_coeffs, fitted.ma_coeffs, fitted.order.d, horizon)
    variance = fitted.sigma2 * np.cumsum(psi ** 2)
    half_width = stats.norm.ppf(0.5 * (1.0 + level)) * np.sqrt(variance)
    start = shift_period(fitted.series.end_period, 1) if fitted.series is not None else None
    return Forecast(horizon, np.array(point), point - half_width, point + half_width,
                    float(level), variance, start)


def diagnose(fitted: ArimaFit, lags: int) -> TestReport:
    """Ljung-Box on the standardized residuals, with the residual ACF attached."""
    return ljung_box(fitted.residuals, lags, fitted.order.p + fitted.order.q)


def residual_acf(fitted: ArimaFit, lags: int) -> CorrelationSequence:
    return diagnose(fitted, lags).correlogram


# -- stepwise search ------------------------------------------------------------------

def select_differencing(series: TimeSeries, max_d: int = 2) -> Tuple[int, List[TestReport]]:
    """Difference until KPSS no longer rejects level stationarity, at most max_d times.

    Stops early, keeping the current d, when the next difference would leave too
    few observations to test; a series too short to test at all gets d=0.
    """
    d = 0
    reports = []
    if len(series) < MIN_TEST_LENGTH:
        logger.warning(f"Series of {len(series)} observations is too short for KPSS; using d=0")
        return d, reports
    current = series
    while True:
        report = kpss_test(current)
        reports.append(report)
        if not report.reject_null or d >= max_d:
            break
        if len(series) - (d + 1) < MIN_TEST_LENGTH:
            logger.warning(f"KPSS still rejects at d={d} but {len(series) - d - 1} observations "
                           f"are too few to test d={d + 1}; keeping d={d}")
            break
        d += 1
        current, _ = difference(series, d)
    logger.info(f"KPSS differencing selection: d={d}")
    return d, reports


def _fit_candidate(series: TimeSeries, order: ArimaOrder, with_intercept: bool,
                   config: SearchConfig) -> Tuple[CandidateResult, Optional[ArimaFit]]:
    try:
        fitted = fit(series, order, with_intercept, max_iter=config.max_iter, tol=config.tol)
    except (ForecastError, np.linalg.LinAlgError, ValueError) as e:
        logger.debug(f"Candidate {order} intercept={with_intercept} failed: {e}")
        return CandidateResult(order, with_intercept, failure=str(e)), None
    return CandidateResult(order, with_intercept, fitted.aic, fitted.bic), fitted


def _preference(result: CandidateResult, criterion: str):
    return (result.order.p + result.order.q, result.order.q, int(result.with_intercept))


def _improves(candidate: CandidateResult, incumbent: Optional[CandidateResult],
              criterion: str) -> bool:
    if incumbent is None:
        return True
    new, old = candidate.criterion(criterion), incumbent.criterion(criterion)
    if new < old - TIE_TOLERANCE:
        return True
    if abs(new - old) <= TIE_TOLERANCE:
        return _preference(candidate, criterion) < _preference(incumbent, criterion)
    return False


def fit_orders(series: TimeSeries, orders: Sequence[ArimaOrder], with_intercept: bool = True,
               config: Optional[SearchConfig] = None) -> List[CandidateResult]:
    """Fit a fixed list of orders at one intercept setting, recording failures."""
    config = config or SearchConfig()
    return [_fit_candidate(series, order, with_intercept, config)[0] for order in orders]


def stepwise_search(series: TimeSeries, config: Optional[SearchConfig] = None,
                    d: Optional[int] = None) -> Tuple[ArimaFit, SearchTrace]:
    """Stepwise neighbourhood search over (p, q, intercept) minimising AIC or BIC."""
    config = config or SearchConfig()
    trace = SearchTrace(criterion=config.criterion)
    if d is None:
        d, trace.differencing_tests = select_differencing(series, config.max_d)
        tests = trace.differencing_tests
        if not tests or (tests[-1].reject_null and d < config.max_d):
            trace.step_log.append({
                'step': 0,
                'move': 'differencing',
                'd': d,
                'note': f"too few observations ({len(series)}) to test further differencing",
            })

    fits: Dict[Tuple[int, int, int, int], Tuple[CandidateResult, Optional[ArimaFit]]] = {}

    def run_batch(candidates: List[Tuple[int, int, bool]]) -> List[CandidateResult]:
        pending = []
        for p, q, intercept in candidates:
            if not (0 <= p <= config.max_p and 0 <= q <= config.max_q):
                continue
            key = (p, d, q, int(intercept))
            if key in fits or any(key == (o.p, o.d, o.q, int(i)) for o, i in pending):
                continue
            pending.append((ArimaOrder(p, d, q), intercept))
        pending.sort(key=lambda item: (item[0].p, item[0].q, int(item[1])))
        pending = pending[:max(0, config.max_steps - len(trace.evaluated))]

        if config.workers > 1 and len(pending) > 1:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                outcomes = list(pool.map(
                    lambda item: _fit_candidate(series, item[0], item[1], config), pending))
        else:
            outcomes = [_fit_candidate(series, order, intercept, config)
                        for order, intercept in pending]

        batch = []
        for outcome in outcomes:
            fits[outcome[0].key] = outcome
            trace.evaluated.append(outcome[0])
            batch.append(outcome[0])
        return batch

    best: Optional[CandidateResult] = None
    start = [(p, q, True) for p, q in config.start_orders]
    for result in run_batch(start):
        if result.ok and _improves(result, best, config.criterion):
            best = result
    if best is not None:
        trace.step_log.append({'step': 0, 'move': 'start', 'to': best.to_dict()})

    step = 0
    while best is not None and len(trace.evaluated) < config.max_steps:
        p, q, intercept = best.order.p, best.order.q, best.with_intercept
        neighbours = [(p - 1, q, intercept), (p + 1, q, intercept),
                      (p, q - 1, intercept), (p, q + 1, intercept),
                      (p, q, not intercept)]
        challenger = None
        for result in run_batch(neighbours):
            if result.ok and _improves(result, challenger, config.criterion):
                challenger = result
        if challenger is None or not _improves(challenger, best, config.criterion):
            break
        step += 1
        trace.step_log.append({
            'step': step,
            'move': 'neighbour',
            'from': best.to_dict(),
            'to': challenger.to_dict(),
            'improvement': best.criterion(config.criterion) - challenger.criterion(config.criterion),
        })
        logger.info(f"Stepwise move {step}: {best.order} -> {challenger.order} "
                    f"({config.criterion}={challenger.criterion(config.criterion):.3f})")
        best = challenger

    if best is None:
        raise SearchFailureError("every ARIMA candidate failed to fit", trace=trace)

    trace.best = best.order
    trace.best_with_intercept = best.with_intercept
    best_fit = fits[best.key][1]
    logger.info(f"Stepwise search selected {best.order} intercept={best.with_intercept} "
                f"after {len(trace.evaluated)} candidates")
    return best_fit, trace
