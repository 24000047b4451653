"""
Tests for ARIMA likelihood, estimation, forecasting, stepwise search and diagnosis.
"""

import math

import numpy as np
import pytest
from scipy import linalg, signal

import arima
from arima import ArimaOrder, SearchConfig
from errors import (
    BoundsError,
    ConvergenceError,
    DegenerateInputError,
    InvalidDofError,
    SearchFailureError,
    StationarityError,
)
from series_core import TimeSeries


def brute_force_loglikelihood(x, ar, ma, mean, sigma2):
    """Gaussian log-density with the autocovariance matrix built from the impulse response."""
    n = x.shape[0]
    impulse = np.zeros(4000)
    impulse[0] = 1.0
    psi = signal.lfilter(np.r_[1.0, ma], np.r_[1.0, -np.asarray(ar, dtype=float)], impulse)
    gamma = np.array([sigma2 * np.dot(psi[:psi.shape[0] - k], psi[k:]) for k in range(n)])
    cov = linalg.toeplitz(gamma)
    chol = linalg.cho_factor(cov, lower=True)
    centered = x - mean
    quad = centered @ linalg.cho_solve(chol, centered)
    log_det = 2.0 * np.sum(np.log(np.diag(chol[0])))
    return -0.5 * (n * math.log(2 * math.pi) + log_det + quad)


def test_order_parsing_and_validation():
    assert ArimaOrder.parse('(1, 0, 2)') == ArimaOrder(1, 0, 2)
    assert str(ArimaOrder(2, 1, 0)) == 'ARIMA(2,1,0)'
    with pytest.raises(BoundsError):
        ArimaOrder(-1, 0, 0)


def test_partial_autocorrelation_transform_round_trip(rng):
    for _ in range(200):
        partials = rng.uniform(-0.95, 0.95, int(rng.integers(1, 6)))
        coeffs = arima.coefficients_from_partials(partials)
        np.testing.assert_allclose(arima.partials_from_coefficients(coeffs), partials, atol=1e-10)
        moduli = np.abs(np.roots(np.r_[-coeffs[::-1], 1.0]))
        assert np.all(moduli > 1.0)


@pytest.mark.parametrize('ar', [[0.5], [0.6, -0.3], [0.4, 0.2, -0.25], [-0.8]])
def test_kalman_likelihood_matches_cholesky_for_ar(rng, arma, ar):
    x = arma(rng, 50, ar=ar, mean=1.5, sigma2=0.7)
    expected = brute_force_loglikelihood(x, ar, [], 1.5, 0.7)
    assert arima.loglikelihood(x, ar, [], 1.5, 0.7) == pytest.approx(expected, abs=1e-6)


def test_kalman_likelihood_matches_cholesky_for_arma(rng, arma):
    x = arma(rng, 40, ar=[0.6], ma=[0.3])
    expected = brute_force_loglikelihood(x, [0.6], [0.3], 0.0, 1.3)
    assert arima.loglikelihood(x, [0.6], [0.3], 0.0, 1.3) == pytest.approx(expected, abs=1e-6)
    expected_ma = brute_force_loglikelihood(x, [], [0.7, -0.2], 0.2, 1.0)
    assert arima.loglikelihood(x, [], [0.7, -0.2], 0.2, 1.0) == pytest.approx(expected_ma, abs=1e-6)


def test_white_noise_fit_is_closed_form(rng):
    values = rng.normal(3.0, 2.0, 120)
    fitted = arima.fit(TimeSeries(values), ArimaOrder(0, 0, 0))
    n = values.shape[0]
    variance = np.var(values)
    assert fitted.intercept == pytest.approx(values.mean(), abs=1e-12)
    assert fitted.sigma2 == pytest.approx(variance, rel=1e-12)
    closed_form = -0.5 * n * (math.log(2 * math.pi * variance) + 1.0)
    assert fitted.log_likelihood == pytest.approx(closed_form, abs=1e-8)
    assert fitted.aic == pytest.approx(-2 * closed_form + 2 * 2, abs=1e-8)
    assert fitted.bic == pytest.approx(-2 * closed_form + 2 * math.log(n), abs=1e-8)


def test_arma11_parameter_recovery(arma):
    values = arma(np.random.default_rng(7), 2000, ar=[0.6], ma=[0.3])
    fitted = arima.fit(TimeSeries(values), ArimaOrder(1, 0, 1))
    assert abs(fitted.ar_coeffs[0] - 0.6) < 0.1
    assert abs(fitted.ma_coeffs[0] - 0.3) < 0.1
    assert abs(fitted.sigma2 - 1.0) < 0.15
    assert fitted.converged
    assert fitted.aic == pytest.approx(-2 * fitted.log_likelihood + 2 * 4)
    assert all(m > 1.0 for m in fitted.ar_root_moduli + fitted.ma_root_moduli)
    assert fitted.residuals.shape[0] == 2000


def test_fit_on_differenced_series(rng):
    walk = TimeSeries(np.cumsum(rng.normal(0.3, 1.0, 300)))
    fitted = arima.fit(walk, ArimaOrder(0, 1, 0))
    steps = np.diff(walk.values)
    assert fitted.n_obs == 299
    assert fitted.intercept == pytest.approx(steps.mean(), abs=1e-12)


def test_fit_errors(rng):
    with pytest.raises(DegenerateInputError):
        arima.fit(TimeSeries(rng.normal(size=12)), ArimaOrder(2, 0, 1))
    with pytest.raises(ConvergenceError) as excinfo:
        arima.fit(TimeSeries(rng.normal(size=200)), ArimaOrder(2, 0, 2), max_iter=2)
    assert excinfo.value.best_params is not None
    assert excinfo.value.exit_code == 2


def test_evaluate_rejects_non_stationary_parameters(rng):
    series = TimeSeries(rng.normal(size=100))
    with pytest.raises(StationarityError):
        arima.evaluate(series, ArimaOrder(1, 0, 0), [1.0], [], 0.0)
    with pytest.raises(StationarityError):
        arima.evaluate(series, ArimaOrder(0, 0, 1), [], [-1.2], 0.0)


def test_white_noise_forecast_is_flat():
    fitted = arima.evaluate(TimeSeries(np.random.default_rng(3).normal(size=80)),
                            ArimaOrder(0, 0, 0), [], [], 0.4, sigma2=2.0)
    result = arima.forecast(fitted, 6, 0.95)
    np.testing.assert_allclose(result.point, 0.4, atol=1e-12)
    np.testing.assert_allclose(result.upper - result.point, 1.959964 * math.sqrt(2.0), atol=1e-5)
    np.testing.assert_allclose(result.point - result.lower, 1.959964 * math.sqrt(2.0), atol=1e-5)


def test_ar1_forecast_closed_form(rng, arma):
    values = arma(rng, 200, ar=[0.7], mean=5.0)
    fitted = arima.evaluate(TimeSeries(values), ArimaOrder(1, 0, 0), [0.7], [], 5.0)
    result = arima.forecast(fitted, 10)
    expected = 5.0 + 0.7 ** np.arange(1, 11) * (values[-1] - 5.0)
    np.testing.assert_allclose(result.point, expected, atol=1e-8)


def test_arma11_forecast_matches_conditional_expectation(rng, arma):
    phi, theta, mean, sigma2 = 0.6, 0.3, 1.0, 0.8
    values = arma(rng, 500, ar=[phi], ma=[theta], mean=mean, sigma2=sigma2)
    fitted = arima.evaluate(TimeSeries(values), ArimaOrder(1, 0, 1), [phi], [theta], mean, sigma2)
    result = arima.forecast(fitted, 12)

    x = values - mean
    shock = x[0]
    for t in range(1, x.shape[0]):
        shock = x[t] - phi * x[t - 1] - theta * shock
    expected = [phi * x[-1] + theta * shock]
    for _ in range(11):
        expected.append(phi * expected[-1])
    np.testing.assert_allclose(result.point, np.array(expected) + mean, atol=1e-6)

    psi = np.r_[1.0, (phi + theta) * phi ** np.arange(11)]
    np.testing.assert_allclose(result.variance, sigma2 * np.cumsum(psi ** 2), atol=1e-6)


def test_psi_weights_match_impulse_response():
    impulse = np.zeros(15)
    impulse[0] = 1.0
    ar, ma = [0.5, -0.2], [0.4]
    integrated = np.convolve(np.r_[1.0, -np.array(ar)], [1.0, -1.0])
    expected = signal.lfilter(np.r_[1.0, ma], integrated, impulse)
    np.testing.assert_allclose(arima.psi_weights(ar, ma, 1, 15), expected, atol=1e-12)


def test_random_walk_with_drift_forecast(rng):
    walk = TimeSeries(np.cumsum(rng.normal(0.2, 1.0, 150)), (2010, 1))
    fitted = arima.fit(walk, ArimaOrder(0, 1, 0))
    result = arima.forecast(fitted, 5)
    expected = walk.values[-1] + fitted.intercept * np.arange(1, 6)
    np.testing.assert_allclose(result.point, expected, atol=1e-8)
    np.testing.assert_allclose(result.variance, fitted.sigma2 * np.arange(1, 6), atol=1e-10)
    assert result.period_labels()[0] == '2022-07'


def test_forecast_interval_ordering(rng, arma):
    values = arma(rng, 300, ar=[0.5], ma=[-0.3], mean=2.0)
    fitted = arima.fit(TimeSeries(values), ArimaOrder(1, 0, 1))
    result = arima.forecast(fitted, 24, 0.9)
    assert np.all(result.lower <= result.point) and np.all(result.point <= result.upper)
    assert np.all(np.diff(result.upper - result.point) >= -1e-12)


def test_forecast_errors(rng):
    fitted = arima.fit(TimeSeries(rng.normal(size=60)), ArimaOrder(0, 0, 0))
    with pytest.raises(BoundsError):
        arima.forecast(fitted, 0)
    with pytest.raises(BoundsError):
        arima.forecast(fitted, 3, level=1.0)


def test_one_step_coverage(rng, arma):
    covered = 0
    for _ in range(2000):
        values = arma(rng, 61, ar=[0.5], sigma2=1.0)
        fitted = arima.evaluate(TimeSeries(values[:60]), ArimaOrder(1, 0, 0), [0.5], [], 0.0,
                                sigma2=1.0)
        result = arima.forecast(fitted, 1, 0.95)
        covered += result.lower[0] <= values[60] <= result.upper[0]
    assert abs(covered / 2000 - 0.95) <= 0.03


def test_diagnose_detects_underfit(rng, arma):
    values = arma(rng, 400, ar=[0.9])
    report = arima.diagnose(arima.fit(TimeSeries(values), ArimaOrder(0, 0, 0)), 12)
    assert report.p_value < 0.01
    assert report.correlogram.max_lag == 12


def test_diagnose_requires_positive_dof(rng):
    fitted = arima.fit(TimeSeries(rng.normal(size=100)), ArimaOrder(1, 0, 1))
    with pytest.raises(InvalidDofError):
        arima.diagnose(fitted, 2)


def test_select_differencing_on_random_walk(random_walk, white_noise):
    d, reports = arima.select_differencing(random_walk)
    assert d >= 1
    assert len(reports) == d + 1
    assert arima.select_differencing(white_noise, max_d=0)[0] == 0


@pytest.mark.parametrize('n', [15, 20])
def test_stepwise_search_on_short_trending_series(rng, n):
    series = TimeSeries(np.cumsum(rng.normal(1.0, 0.3, n)))
    fitted, trace = arima.stepwise_search(series, SearchConfig())
    assert fitted.order.d == 0
    tests = trace.differencing_tests
    assert len(tests) == (0 if n < 20 else 1)
    if not tests or tests[-1].reject_null:
        assert trace.step_log[0]['move'] == 'differencing'
        assert trace.step_log[0]['d'] == 0
    assert trace.to_dict()['best'] == fitted.order.to_dict()


def test_stepwise_finds_autoregression(rng, arma):
    values = arma(rng, 1000, ar=[0.7])
    fitted, trace = arima.stepwise_search(TimeSeries(values), SearchConfig(), d=0)
    assert fitted.order.p >= 1
    assert trace.best == fitted.order
    successes = [entry for entry in trace.evaluated if entry.ok]
    assert fitted.aic == pytest.approx(min(entry.aic for entry in successes))
    assert trace.step_log[0]['move'] == 'start'


def test_stepwise_is_deterministic_and_order_stable(rng, arma):
    series = TimeSeries(arma(rng, 300, ar=[0.4], ma=[0.3]))
    _, first = arima.stepwise_search(series, SearchConfig(), d=0)
    _, second = arima.stepwise_search(series, SearchConfig(workers=3), d=0)
    assert first.to_dict() == second.to_dict()


def test_stepwise_respects_evaluation_budget(rng):
    series = TimeSeries(rng.normal(size=200))
    _, trace = arima.stepwise_search(series, SearchConfig(max_steps=5), d=0)
    assert len(trace.evaluated) <= 5


def test_stepwise_bic_criterion(rng, arma):
    series = TimeSeries(arma(rng, 400, ar=[0.6]))
    fitted, trace = arima.stepwise_search(series, SearchConfig(criterion='bic'), d=0)
    assert trace.criterion == 'bic'
    assert fitted.bic == pytest.approx(min(e.bic for e in trace.evaluated if e.ok))


def test_stepwise_all_failures_raise(monkeypatch, rng):
    def always_fail(*args, **kwargs):
        raise ConvergenceError("forced failure")

    monkeypatch.setattr(arima, 'fit', always_fail)
    with pytest.raises(SearchFailureError) as excinfo:
        arima.stepwise_search(TimeSeries(rng.normal(size=100)), SearchConfig(), d=0)
    trace = excinfo.value.trace
    assert len(trace.evaluated) == 4
    assert all(entry.failure == 'forced failure' for entry in trace.evaluated)
    assert excinfo.value.to_dict()['trace']['best'] is None


def test_fit_serialization(rng):
    fitted = arima.fit(TimeSeries(rng.normal(size=80)), ArimaOrder(1, 0, 0))
    payload = fitted.to_dict()
    for key in ('order', 'ar_coeffs', 'ma_coeffs', 'intercept', 'sigma2', 'log_likelihood',
                'aic', 'bic', 'residuals', 'n_obs', 'convergence'):
        assert key in payload
    assert payload['order'] == {'p': 1, 'd': 0, 'q': 0}


@pytest.mark.slow
def test_arma11_recovery_across_seeds(arma):
    phi_errors, theta_errors = [], []
    for seed in range(20):
        values = arma(np.random.default_rng(1000 + seed), 2000, ar=[0.6], ma=[0.3])
        fitted = arima.fit(TimeSeries(values), ArimaOrder(1, 0, 1))
        phi_errors.append(abs(fitted.ar_coeffs[0] - 0.6))
        theta_errors.append(abs(fitted.ma_coeffs[0] - 0.3))
    assert np.median(phi_errors) < 0.05 and np.median(theta_errors) < 0.05
    assert max(phi_errors) < 0.1 and max(theta_errors) < 0.1


@pytest.mark.slow
def test_stepwise_selects_white_noise_majority():
    hits = 0
    for seed in range(50):
        values = np.random.default_rng(5000 + seed).normal(size=1000)
        fitted, _ = arima.stepwise_search(TimeSeries(values), SearchConfig(), d=0)
        hits += (fitted.order.p, fitted.order.q) == (0, 0)
    assert hits > 25


@pytest.mark.slow
def test_stepwise_ar1_family_within_aic_band(arma):
    close = 0
    for seed in range(50):
        values = arma(np.random.default_rng(7000 + seed), 1000, ar=[0.7])
        fitted, trace = arima.stepwise_search(TimeSeries(values), SearchConfig(), d=0)
        assert fitted.order.p >= 1
        family = [e.aic for e in trace.evaluated if e.ok and e.order.p == 1 and e.order.q == 0]
        close += bool(family) and min(family) - fitted.aic <= 2.0
    assert close / 50 >= 0.9


@pytest.mark.slow
def test_correct_model_residuals_pass_ljung_box(arma):
    passes = 0
    for seed in range(100):
        values = arma(np.random.default_rng(9000 + seed), 300, ar=[0.6], ma=[0.3])
        fitted = arima.fit(TimeSeries(values), ArimaOrder(1, 0, 1))
        passes += arima.diagnose(fitted, 10).p_value > 0.05
    assert passes >= 85
