"""
Plotting Module
Static SVG figures: the series, ARIMA forecasts with interval bands, neural test-span
overlays, correlograms and residual diagnostics.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from arima import ArimaFit, Forecast, residual_acf  # noqa: E402
from diagnostics import CorrelationSequence  # noqa: E402
from series_core import TimeSeries, difference, format_period, shift_period  # noqa: E402

SVG_HASH_SALT = 'inflation-forecast'
ACTUAL_COLOR = 'royalblue'
FORECAST_COLOR = 'tomato'


class ForecastPlotter:
    """Renders the toolkit's figure types to SVG files under an output directory."""

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        self.config = config or {}
        self.output_dir = Path(self.config.get('directory', 'output')) / 'plots'
        self.figsize = tuple(self.config.get('figsize', (10, 4.5)))
        self.logger = logging.getLogger(__name__)
        plt.rcParams['svg.hashsalt'] = SVG_HASH_SALT

    def _resolve(self, path: Optional[str], default_name: str) -> Path:
        target = Path(path) if path else self.output_dir / default_name
        target.parent.mkdir(parents=True, exist_ok=True)
        return target

    def _save(self, fig, path: Path) -> Path:
        fig.tight_layout()
        fig.savefig(path, format='svg', metadata={'Date': None})
        plt.close(fig)
        self.logger.info(f"Plot written to {path}")
        return path

    @staticmethod
    def _period_ticks(ax, start, count: int, every: int = 12):
        positions = list(range(0, count, every))
        ax.set_xticks(positions)
        ax.set_xticklabels([format_period(shift_period(start, i)) for i in positions],
                           rotation=45, ha='right')

    def plot_series(self, series: TimeSeries, d: int = 0, path: Optional[str] = None,
                    title: Optional[str] = None) -> Path:
        """Monthly series (or its d-th difference) over time."""
        shown, _ = difference(series, d)
        fig, ax = plt.subplots(figsize=self.figsize)
        line, = ax.plot(np.arange(len(shown)), shown.values, color=ACTUAL_COLOR, linewidth=1.2)
        line.set_gid('actual-series')
        if d:
            ax.axhline(0.0, color='grey', linewidth=0.8, linestyle='--')
        self._period_ticks(ax, shown.start_period, len(shown))
        ax.set_ylabel('Inflation rate (%)' if d == 0 else f'Difference of order {d}')
        ax.set_title(title or ('Monthly inflation rate' if d == 0
                               else f'Monthly inflation rate, differenced (d={d})'))
        ax.grid(True, alpha=0.3)
        return self._save(fig, self._resolve(path, f'series_d{d}.svg'))

    def plot_forecast(self, history: TimeSeries, forecast: Forecast,
                      actual: Optional[Sequence[float]] = None, path: Optional[str] = None,
                      context: int = 48) -> Path:
        """History tail, point forecasts and one interval band per horizon step."""
        tail = min(context, len(history))
        fig, ax = plt.subplots(figsize=self.figsize)
        x_history = np.arange(tail)
        line, = ax.plot(x_history, history.values[-tail:], color=ACTUAL_COLOR, label='history')
        line.set_gid('history-series')

        x_future = np.arange(tail, tail + forecast.horizon)
        for h in range(forecast.horizon):
            band = ax.fill_between([x_future[h] - 0.4, x_future[h] + 0.4],
                                   [forecast.lower[h]] * 2, [forecast.upper[h]] * 2,
                                   color=FORECAST_COLOR, alpha=0.25, linewidth=0,
                                   label=f'{int(forecast.level * 100)}% interval' if h == 0 else None)
            band.set_gid(f'interval-band-{h + 1}')
        point, = ax.plot(x_future, forecast.point, color=FORECAST_COLOR, marker='o',
                         markersize=3, label='forecast')
        point.set_gid('forecast-point')
        if actual is not None:
            observed = np.asarray(actual, dtype=float)[:forecast.horizon]
            actual_line, = ax.plot(x_future[:observed.shape[0]], observed, color='black',
                                   linestyle='--', label='actual')
            actual_line.set_gid('actual-test')

        start = shift_period(history.end_period, 1 - tail)
        self._period_ticks(ax, start, tail + forecast.horizon, every=6)
        ax.set_ylabel('Inflation rate (%)')
        ax.set_title(f'{forecast.horizon}-month forecast')
        ax.legend(loc='upper left')
        ax.grid(True, alpha=0.3)
        return self._save(fig, self._resolve(path, 'forecast.svg'))

    def plot_overlay(self, periods: Sequence[str], actual: Sequence[float],
                     predictions: Dict[str, Sequence[float]], path: Optional[str] = None,
                     mode: str = 'teacher_forced') -> Path:
        """Actual test values against each model's predictions, one panel per model."""
        names = list(predictions)
        fig, axes = plt.subplots(1, max(len(names), 1), figsize=(6 * max(len(names), 1), 4.5),
                                 sharey=True, squeeze=False)
        x = np.arange(len(actual))
        for ax, name in zip(axes[0], names):
            actual_line, = ax.plot(x, actual, color=ACTUAL_COLOR, marker='o', markersize=3,
                                   label='actual')
            actual_line.set_gid(f'overlay-actual-{name}')
            predicted_line, = ax.plot(x, predictions[name], color=FORECAST_COLOR, marker='s',
                                      markersize=3, label=f'{name} prediction')
            predicted_line.set_gid(f'overlay-prediction-{name}')
            step = max(1, len(periods) // 6)
            ax.set_xticks(x[::step])
            ax.set_xticklabels(list(periods)[::step], rotation=45, ha='right')
            ax.set_title(f'{name.upper()} ({mode.replace("_", " ")})')
            ax.legend(loc='upper left')
            ax.grid(True, alpha=0.3)
        axes[0][0].set_ylabel('Inflation rate (%)')
        return self._save(fig, self._resolve(path, 'overlay.svg'))

    def plot_correlogram(self, acf: CorrelationSequence, pacf: Optional[CorrelationSequence] = None,
                         path: Optional[str] = None) -> Path:
        """ACF (and PACF) stems from lag 1 with the 95% white-noise band."""
        panels = [seq for seq in (acf, pacf) if seq is not None]
        fig, axes = plt.subplots(len(panels), 1, figsize=(self.figsize[0], 3.2 * len(panels)),
                                 squeeze=False)
        for ax, seq in zip(axes[:, 0], panels):
            lags = np.arange(1, seq.max_lag + 1)
            values = np.asarray(seq.values)[1:]
            stems = ax.vlines(lags, 0.0, values, color=ACTUAL_COLOR, linewidth=2.0)
            stems.set_gid(f'{seq.kind}-stems')
            for sign in (1.0, -1.0):
                ax.axhline(sign * seq.confidence_band, color=FORECAST_COLOR, linestyle='--',
                           linewidth=0.9)
            ax.axhline(0.0, color='black', linewidth=0.8)
            ax.set_xlabel('Lag')
            ax.set_ylabel(seq.kind.upper())
            ax.set_title(f'{seq.kind.upper()} with ±{seq.confidence_band:.3f} band (n={seq.n})')
        return self._save(fig, self._resolve(path, 'correlogram.svg'))

    def plot_diagnostics(self, fitted: ArimaFit, lags: int = 24, path: Optional[str] = None) -> Path:
        """Standardized residuals over time and their autocorrelations."""
        correlogram = residual_acf(fitted, lags)
        fig, (top, bottom) = plt.subplots(2, 1, figsize=(self.figsize[0], 6.5))
        line, = top.plot(np.arange(fitted.residuals.shape[0]), fitted.residuals,
                         color=ACTUAL_COLOR, linewidth=1.0)
        line.set_gid('standardized-residuals')
        top.axhline(0.0, color='black', linewidth=0.8)
        for sign in (2.0, -2.0):
            top.axhline(sign, color=FORECAST_COLOR, linestyle=':', linewidth=0.9)
        top.set_title(f'{fitted.order} standardized residuals')
        top.grid(True, alpha=0.3)

        stems = bottom.vlines(np.arange(1, lags + 1), 0.0, np.asarray(correlogram.values)[1:],
                              color=ACTUAL_COLOR, linewidth=2.0)
        stems.set_gid('residual-acf-stems')
        for sign in (1.0, -1.0):
            bottom.axhline(sign * correlogram.confidence_band, color=FORECAST_COLOR,
                           linestyle='--', linewidth=0.9)
        bottom.axhline(0.0, color='black', linewidth=0.8)
        bottom.set_xlabel('Lag')
        bottom.set_title('Residual ACF')
        return self._save(fig, self._resolve(path, 'diagnostics.svg'))
