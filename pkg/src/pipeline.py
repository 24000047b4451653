"""
Pipeline Module
Runs the full workflow on one dataset: split, stationarity tests, identification,
order comparison, stepwise selection, diagnostics, forecasting, neural training,
model comparison and figures.
"""

import logging
import math
from datetime import datetime
from typing import Any, Callable, Dict, List, Optional

from tqdm import tqdm

import arima
import diagnostics
import evaluation
from arima import ArimaOrder, SearchConfig
from errors import ForecastError
from plotting import ForecastPlotter
from series_core import TimeSeries, difference, split_train_test


class ForecastPipeline:
    """Chains every analysis stage into a single report."""

    def __init__(self, config: Dict[str, Any], plots: bool = True, progress: bool = False):
        self.config = config
        self.plots = plots
        self.progress = progress
        self.logger = logging.getLogger(__name__)
        self.plotter = ForecastPlotter(config.get('output', {}))
        self.test_length = config.get('split', {}).get('test_length', 12)
        self.horizon = config.get('forecast', {}).get('horizon', 24)
        self.level = config.get('forecast', {}).get('level', 0.95)
        self.max_lag = config.get('correlogram', {}).get('max_lag', 24)
        self.search_config = SearchConfig.from_dict(config.get('arima', {}))
        self.stage_errors: Dict[str, Dict[str, Any]] = {}

    def _stage(self, name: str, action: Callable[[], Any]) -> Optional[Any]:
        """Run one stage; data and numerical failures are recorded and the run continues."""
        self.logger.info(f"Pipeline stage: {name}")
        try:
            return action()
        except ForecastError as e:
            self.logger.error(f"Stage '{name}' failed: {e}")
            self.stage_errors[name] = e.to_dict()
            return None

    def _stationarity(self, train: TimeSeries) -> Dict[str, Any]:
        stationarity = self.config.get('stationarity', {})
        results = {}
        for d in (0, 1):
            shown, _ = difference(train, d)
            results[f'd{d}'] = {
                'adf': diagnostics.adf_test(shown, stationarity.get('adf_max_lag'),
                                            stationarity.get('adf_autolag', 'aic')).to_dict(),
                'kpss': diagnostics.kpss_test(shown, stationarity.get('kpss_bandwidth')).to_dict(),
            }
        return results

    def _correlogram(self, train: TimeSeries):
        differenced, _ = difference(train, 1)
        max_lag = min(self.max_lag, math.ceil(len(differenced) / 2) - 1)
        return diagnostics.acf(differenced, max_lag), diagnostics.pacf(differenced, max_lag)

    def _order_table(self, train: TimeSeries) -> List[Dict[str, Any]]:
        orders = [ArimaOrder(*order) for order in arima.CANDIDATE_ORDERS]
        rows = []
        for order in tqdm(orders, desc="order table", disable=not self.progress):
            result = arima.fit_orders(train, [order], True, self.search_config)[0]
            rows.append(result.to_dict())
        ranked = sorted((row for row in rows if row['aic'] is not None), key=lambda row: row['aic'])
        for rank, row in enumerate(ranked, start=1):
            row['aic_rank'] = rank
        return rows

    def _comparison(self, series: TimeSeries) -> evaluation.ComparisonResult:
        evaluation_config = self.config.get('evaluation', {})
        specs = [evaluation.ModelSpec.from_dict(entry, self.config.get('neural', {}),
                                                self.config.get('arima', {}))
                 for entry in evaluation_config.get('models', [])]
        return evaluation.compare(series, self.test_length, specs,
                                  evaluation_config.get('neural_mode', 'teacher_forced'),
                                  evaluation_config.get('workers', 1))

    def run(self, series: TimeSeries) -> Dict[str, Any]:
        """Run one complete pipeline cycle and return the combined result."""
        start_time = datetime.now()
        self.stage_errors = {}
        result: Dict[str, Any] = {'n_obs': len(series), 'series': series.to_dict()}

        train, test = split_train_test(series, self.test_length)
        result['split'] = {'train': len(train), 'test': len(test),
                           'test_start': test.period_labels()[0]}

        result['stationarity'] = self._stage('stationarity', lambda: self._stationarity(train))
        correlogram = self._stage('correlogram', lambda: self._correlogram(train))
        if correlogram:
            result['correlogram'] = {'acf': correlogram[0].to_dict(), 'pacf': correlogram[1].to_dict()}
        result['order_table'] = self._stage('order_table', lambda: self._order_table(train))

        search = self._stage('stepwise_search',
                             lambda: arima.stepwise_search(train, self.search_config))
        best_fit = None
        prediction = None
        if search:
            best_fit, trace = search
            result['search'] = trace.to_dict()
            result['best_fit'] = best_fit.to_dict()
            lags = min(self.config.get('arima', {}).get('diagnostic_lags', 24), best_fit.n_obs - 1)
            diagnosis = self._stage('diagnostics', lambda: arima.diagnose(best_fit, lags))
            if diagnosis:
                result['ljung_box'] = diagnosis.to_dict()
            prediction = self._stage('forecast',
                                     lambda: arima.forecast(best_fit, self.horizon, self.level))
            if prediction:
                result['forecast'] = prediction.to_dict()
                result['forecast']['actual'] = [float(v) for v in test.values[:self.horizon]]

        comparison = self._stage('comparison', lambda: self._comparison(series))
        if comparison:
            result['comparison'] = comparison.to_dict()

        if self.plots:
            result['plots'] = self._render_plots(series, train, test, correlogram, best_fit,
                                                 prediction, comparison)

        result['stage_errors'] = dict(self.stage_errors)
        duration = datetime.now() - start_time
        self.logger.info(f"Pipeline completed with {len(self.stage_errors)} failed stages "
                         f"in {duration.total_seconds():.1f}s")
        return result

    def _render_plots(self, series, train, test, correlogram, best_fit, prediction,
                      comparison) -> Dict[str, str]:
        plots = {}

        def add(name: str, action: Callable[[], Any]):
            path = self._stage(f'plot_{name}', action)
            if path is not None:
                plots[name] = str(path)

        add('series', lambda: self.plotter.plot_series(series, 0))
        add('series_differenced', lambda: self.plotter.plot_series(series, 1))
        if correlogram:
            add('correlogram', lambda: self.plotter.plot_correlogram(*correlogram))
        if best_fit is not None:
            lags = min(self.config.get('arima', {}).get('diagnostic_lags', 24), best_fit.n_obs - 1)
            add('diagnostics', lambda: self.plotter.plot_diagnostics(best_fit, lags))
        if prediction is not None:
            add('forecast', lambda: self.plotter.plot_forecast(train, prediction, test.values))
        if comparison:
            neural = {entry.kind: entry.predictions for entry in comparison.ranking
                      if entry.kind in ('rnn', 'lstm')}
            ordered = {kind: neural[kind] for kind in ('rnn', 'lstm') if kind in neural}
            if ordered:
                add('overlay', lambda: self.plotter.plot_overlay(
                    comparison.test_periods, comparison.actual, ordered, mode=comparison.neural_mode))
        return plots
