"""
Evaluation Module
Forecast error metrics and the held-out comparison harness across ARIMA and neural models.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

import arima
import neural_forecast
from arima import ArimaOrder, SearchConfig
from errors import (
    ComparisonError,
    ConfigurationError,
    DegenerateInputError,
    ForecastError,
    MapeUndefinedError,
    StructuralError,
)
from neural_forecast import TrainConfig
from series_core import TimeSeries, split_train_test

logger = logging.getLogger(__name__)

ZERO_ACTUAL = 1e-12
MODEL_KINDS = ('arima', 'auto-arima', 'rnn', 'lstm')
NEURAL_MODES = ('teacher_forced', 'recursive')


@dataclass
class MetricReport:
    rmse: float
    mae: float
    mape: float
    n: int
    skipped_zero_actuals: int = 0

    def to_dict(self) -> dict:
        return {'rmse': self.rmse, 'mae': self.mae, 'mape': self.mape, 'n': self.n,
                'skipped_zero_actuals': self.skipped_zero_actuals}


def score(actual: Sequence[float], predicted: Sequence[float]) -> MetricReport:
    """RMSE, MAE and MAPE (percent, excluding zero actuals)."""
    actual = np.asarray(actual, dtype=np.float64).reshape(-1)
    predicted = np.asarray(predicted, dtype=np.float64).reshape(-1)
    if actual.shape != predicted.shape:
        raise StructuralError(
            f"actual and predicted lengths differ ({actual.shape[0]} vs {predicted.shape[0]})")
    if actual.shape[0] == 0:
        raise DegenerateInputError("cannot score an empty forecast")
    if not (np.all(np.isfinite(actual)) and np.all(np.isfinite(predicted))):
        raise DegenerateInputError("actual and predicted values must be finite")

    n = actual.shape[0]
    errors = predicted - actual
    rmse = math.sqrt(float(np.mean(errors ** 2)))
    mae = float(np.mean(np.abs(errors)))
    # floating-point mean/sqrt can put rmse one ulp under mae
    rmse = max(rmse, mae)
    usable = np.abs(actual) > ZERO_ACTUAL
    skipped = int(n - np.count_nonzero(usable))
    if skipped == n:
        raise MapeUndefinedError("MAPE is undefined: every actual value is zero", rmse, mae, n)
    mape = 100.0 * float(np.mean(np.abs(errors[usable] / actual[usable])))
    return MetricReport(rmse, mae, mape, n, skipped)


@dataclass
class ModelSpec:
    model_id: str
    kind: str
    order: Optional[ArimaOrder] = None
    with_intercept: bool = True
    train_config: Optional[TrainConfig] = None
    search_config: Optional[SearchConfig] = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigurationError(f"model kind must be one of {MODEL_KINDS}, got '{self.kind}'")
        if self.kind == 'arima' and self.order is None:
            raise ConfigurationError(f"model '{self.model_id}' needs an ARIMA order")
        if isinstance(self.order, (list, tuple)):
            self.order = ArimaOrder(*self.order)
        elif isinstance(self.order, str):
            self.order = ArimaOrder.parse(self.order)

    @classmethod
    def from_dict(cls, entry: Dict[str, Any], neural_defaults: Optional[Dict] = None,
                  search_defaults: Optional[Dict] = None) -> 'ModelSpec':
        kind = entry.get('kind')
        train_config = None
        search_config = None
        if kind in ('rnn', 'lstm'):
            merged = dict(neural_defaults or {})
            merged.update(entry.get('train', {}))
            train_config = TrainConfig.from_dict(merged)
        if kind == 'auto-arima':
            search_config = SearchConfig.from_dict(dict(search_defaults or {}))
        return cls(
            model_id=str(entry.get('id', kind)),
            kind=kind,
            order=entry.get('order'),
            with_intercept=bool(entry.get('with_intercept', True)),
            train_config=train_config,
            search_config=search_config,
        )

    def to_dict(self) -> dict:
        return {
            'id': self.model_id,
            'kind': self.kind,
            'order': self.order.to_dict() if self.order else None,
            'with_intercept': self.with_intercept,
            'train': self.train_config.to_dict() if self.train_config else None,
        }


@dataclass
class ComparisonEntry:
    model_id: str
    kind: str
    metrics: MetricReport
    prediction_mode: str
    predictions: List[float]
    index: int
    detail: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            'model_id': self.model_id,
            'kind': self.kind,
            'prediction_mode': self.prediction_mode,
            'metrics': self.metrics.to_dict(),
            'predictions': list(self.predictions),
            'detail': dict(self.detail),
        }


@dataclass
class ComparisonResult:
    ranking: List[ComparisonEntry]
    failures: Dict[str, Dict[str, str]]
    test_length: int
    neural_mode: str
    actual: List[float] = field(default_factory=list)
    test_periods: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            'test_length': self.test_length,
            'neural_mode': self.neural_mode,
            'test_periods': list(self.test_periods),
            'actual': list(self.actual),
            'ranking': [dict(rank=rank, **entry.to_dict())
                        for rank, entry in enumerate(self.ranking, start=1)],
            'failures': dict(self.failures),
        }


def _predict(spec: ModelSpec, series: TimeSeries, train: TimeSeries, test_length: int,
             neural_mode: str):
    """Test-span predictions and the mode label for one model."""
    if spec.kind in ('arima', 'auto-arima'):
        if spec.kind == 'arima':
            fitted = arima.fit(train, spec.order, spec.with_intercept)
            detail = {'order': spec.order.to_dict()}
        else:
            fitted, trace = arima.stepwise_search(train, spec.search_config)
            detail = {'order': fitted.order.to_dict(), 'with_intercept': fitted.with_intercept,
                      'candidates_evaluated': len(trace.evaluated)}
        detail['aic'] = fitted.aic
        result = arima.forecast(fitted, test_length)
        return [float(v) for v in result.point], 'forecast', detail

    config = spec.train_config or TrainConfig()
    model, scaler, report = neural_forecast.train(train, config, spec.kind)
    if neural_mode == 'teacher_forced':
        predictions = neural_forecast.predict_series(model, scaler, series, test_length,
                                                     'teacher_forced')
    else:
        predictions = neural_forecast.predict_series(model, scaler, train, test_length,
                                                     'recursive')
    return predictions, neural_mode, {'final_loss': report.final_loss,
                                      'epochs_run': report.epochs_run}


def compare(series: TimeSeries, test_length: int, model_specs: Sequence[ModelSpec],
            neural_mode: str = 'teacher_forced', workers: int = 1) -> ComparisonResult:
    """Fit every model on the training span and rank by test RMSE, then MAE."""
    if not model_specs:
        raise ConfigurationError("comparison needs at least one model spec")
    if neural_mode not in NEURAL_MODES:
        raise ConfigurationError(f"neural_mode must be one of {NEURAL_MODES}, got '{neural_mode}'")
    ids = [spec.model_id for spec in model_specs]
    if len(set(ids)) != len(ids):
        raise ConfigurationError(f"model ids must be unique, got {ids}")

    train, test = split_train_test(series, test_length)
    actual = test.values

    def run(spec: ModelSpec):
        logger.info(f"Evaluating model '{spec.model_id}' ({spec.kind})")
        try:
            predictions, mode, detail = _predict(spec, series, train, test_length, neural_mode)
            return predictions, mode, detail, score(actual, predictions)
        except ForecastError as e:
            logger.warning(f"Model '{spec.model_id}' failed: {e}")
            return e

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, model_specs))
    else:
        outcomes = [run(spec) for spec in model_specs]

    entries = []
    failures = {}
    for index, (spec, outcome) in enumerate(zip(model_specs, outcomes)):
        if isinstance(outcome, ForecastError):
            failures[spec.model_id] = outcome.to_dict()
            continue
        predictions, mode, detail, metrics = outcome
        entries.append(ComparisonEntry(spec.model_id, spec.kind, metrics, mode,
                                       predictions, index, detail))

    if not entries:
        raise ComparisonError("every model in the comparison failed",
                              failures={k: v['message'] for k, v in failures.items()})

    entries.sort(key=lambda entry: (entry.metrics.rmse, entry.metrics.mae, entry.index))
    logger.info("Comparison ranking: " + ", ".join(
        f"{entry.model_id} (rmse={entry.metrics.rmse:.4f})" for entry in entries))
    return ComparisonResult(entries, failures, test_length, neural_mode,
                            [float(v) for v in actual], test.period_labels())
