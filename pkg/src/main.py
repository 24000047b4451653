#!/usr/bin/env python3
"""
Inflation Forecast Toolkit
Command-line entry point: stationarity tests, ARIMA identification and forecasting,
recurrent network training, model comparison and figures from a monthly CSV series.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

# Add src to path for imports
sys.path.append(str(Path(__file__).parent))

import arima  # noqa: E402
import diagnostics  # noqa: E402
import evaluation  # noqa: E402
import neural_forecast  # noqa: E402
from arima import ArimaOrder, SearchConfig  # noqa: E402
from dataset import DatasetLoader  # noqa: E402
from errors import ConfigurationError, ForecastError  # noqa: E402
from neural_forecast import TrainConfig  # noqa: E402
from pipeline import ForecastPipeline  # noqa: E402
from plotting import ForecastPlotter  # noqa: E402
from reporting import build_report, render_error, render_json, render_text, write_report  # noqa: E402
from series_core import difference, split_train_test  # noqa: E402
from utils import load_config, resolve_config_path, setup_logging  # noqa: E402

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DATA_ERROR = 1
EXIT_NUMERICAL_ERROR = 2


def _set(config: Dict[str, Any], section: str, key: str, value: Any):
    """Apply a command-line override to the run config when it was given."""
    if value is not None:
        config.setdefault(section, {})[key] = value


def _order(text: Optional[str], config: Dict[str, Any]) -> ArimaOrder:
    if text:
        return ArimaOrder.parse(text)
    return ArimaOrder(*config['arima']['order'])


def _search_config(args, config: Dict[str, Any]) -> SearchConfig:
    for key in ('criterion', 'max_p', 'max_q', 'max_d', 'max_steps', 'workers'):
        _set(config, 'arima', key, getattr(args, key, None))
    return SearchConfig.from_dict(config['arima'])


def _train_config(args, config: Dict[str, Any]) -> TrainConfig:
    for key in ('look_back', 'hidden_size', 'epochs', 'learning_rate', 'optimizer', 'seed'):
        _set(config, 'neural', key, getattr(args, key, None))
    return TrainConfig.from_dict(config['neural'])


def _diagnostic_lags(args, config: Dict[str, Any], fitted) -> int:
    _set(config, 'arima', 'diagnostic_lags', getattr(args, 'lags', None))
    return min(config['arima']['diagnostic_lags'], fitted.n_obs - 1)


def cmd_make_sample(args, config, loader) -> Dict[str, Any]:
    seed = config.get('seed', 0) if args.seed is None else args.seed
    series = loader.write_sample(args.path, seed)
    return {'path': str(args.path), 'synthetic': True, 'seed': seed, 'series': series.to_dict()}


def cmd_stationarity(args, config, loader) -> Dict[str, Any]:
    _set(config, 'stationarity', 'd', args.d)
    _set(config, 'stationarity', 'adf_max_lag', args.max_lag)
    _set(config, 'stationarity', 'adf_autolag', args.autolag)
    _set(config, 'stationarity', 'kpss_bandwidth', args.bandwidth)
    settings = config['stationarity']
    series = loader.ingest(args.data)
    shown, _ = difference(series, settings['d'])
    return {
        'd': settings['d'],
        'n_obs': len(shown),
        'adf': diagnostics.adf_test(shown, settings['adf_max_lag'],
                                    settings['adf_autolag']).to_dict(),
        'kpss': diagnostics.kpss_test(shown, settings['kpss_bandwidth']).to_dict(),
    }


def cmd_correlogram(args, config, loader) -> Dict[str, Any]:
    _set(config, 'correlogram', 'max_lag', args.max_lag)
    series = loader.ingest(args.data)
    shown, _ = difference(series, args.d)
    max_lag = config['correlogram']['max_lag']
    return {
        'd': args.d,
        'acf': diagnostics.acf(shown, max_lag).to_dict(),
        'pacf': diagnostics.pacf(shown, max_lag).to_dict(),
    }


def cmd_fit_arima(args, config, loader) -> Dict[str, Any]:
    order = _order(args.order, config)
    config['arima']['order'] = [order.p, order.d, order.q]
    _set(config, 'arima', 'with_intercept', False if args.no_intercept else None)
    series = loader.ingest(args.data)
    fitted = arima.fit(series, order, config['arima']['with_intercept'],
                       config['arima']['max_iter'], config['arima']['tol'])
    lags = _diagnostic_lags(args, config, fitted)
    return {'fit': fitted.to_dict(), 'ljung_box': arima.diagnose(fitted, lags).to_dict()}


def cmd_auto_arima(args, config, loader) -> Dict[str, Any]:
    search_config = _search_config(args, config)
    series = loader.ingest(args.data)
    fitted, trace = arima.stepwise_search(series, search_config)
    return {'trace': trace.to_dict(), 'best_fit': fitted.to_dict(include_residuals=False)}


def _fit_for_forecast(args, config, series):
    if args.auto:
        fitted, _ = arima.stepwise_search(series, _search_config(args, config))
        return fitted
    order = _order(args.order, config)
    config['arima']['order'] = [order.p, order.d, order.q]
    return arima.fit(series, order, config['arima']['with_intercept'],
                     config['arima']['max_iter'], config['arima']['tol'])


def cmd_forecast(args, config, loader) -> Dict[str, Any]:
    _set(config, 'forecast', 'horizon', args.horizon)
    _set(config, 'forecast', 'level', args.level)
    series = loader.ingest(args.data)
    fitted = _fit_for_forecast(args, config, series)
    result = arima.forecast(fitted, config['forecast']['horizon'], config['forecast']['level'])
    return {'fit': fitted.to_dict(include_residuals=False), 'forecast': result.to_dict()}


def cmd_train_nn(args, config, loader) -> Dict[str, Any]:
    train_config = _train_config(args, config)
    train_config.progress = args.progress
    _set(config, 'split', 'test_length', args.test_length)
    series = loader.ingest(args.data)
    test_length = config['split']['test_length']
    train = split_train_test(series, test_length)[0] if test_length else series

    model, scaler, report = neural_forecast.train(train, train_config, args.kind)
    out_dir = Path(args.out_dir or config['output']['directory'])
    weights = Path(args.weights) if args.weights else out_dir / 'models' / f'{args.kind}.safetensors'
    neural_forecast.save_model(model, scaler, weights, train_config)

    result = {'kind': args.kind, 'weights': str(weights), 'scaler': scaler.to_dict(),
              'train': report.to_dict()}
    if test_length:
        predictions = neural_forecast.predict_series(model, scaler, series, test_length,
                                                     'teacher_forced')
        actual = series.values[-test_length:]
        result['test'] = {'prediction_mode': 'teacher_forced', 'predictions': predictions,
                          'metrics': evaluation.score(actual, predictions).to_dict()}
    return result


def _model_specs(config) -> List[evaluation.ModelSpec]:
    return [evaluation.ModelSpec.from_dict(entry, config['neural'], config['arima'])
            for entry in config['evaluation']['models']]


def cmd_evaluate(args, config, loader) -> Dict[str, Any]:
    _set(config, 'split', 'test_length', args.test_length)
    _set(config, 'evaluation', 'neural_mode', args.neural_mode)
    series = loader.ingest(args.data)
    comparison = evaluation.compare(series, config['split']['test_length'], _model_specs(config),
                                    config['evaluation']['neural_mode'],
                                    config['evaluation'].get('workers', 1))
    return comparison.to_dict()


def cmd_plot(args, config, loader) -> Dict[str, Any]:
    if args.out_dir:
        config['output']['directory'] = args.out_dir
    plotter = ForecastPlotter(config['output'])
    series = loader.ingest(args.data)

    if args.kind == 'series':
        path = plotter.plot_series(series, args.d or 0, args.path)
    elif args.kind == 'correlogram':
        shown, _ = difference(series, args.d or 0)
        max_lag = config['correlogram']['max_lag']
        path = plotter.plot_correlogram(diagnostics.acf(shown, max_lag),
                                        diagnostics.pacf(shown, max_lag), args.path)
    elif args.kind == 'forecast':
        _set(config, 'forecast', 'horizon', args.horizon)
        horizon = config['forecast']['horizon']
        if args.holdout:
            history, test = split_train_test(series, horizon)
            actual = test.values
        else:
            history, actual = series, None
        fitted = _fit_for_forecast(args, config, history)
        prediction = arima.forecast(fitted, horizon, config['forecast']['level'])
        path = plotter.plot_forecast(history, prediction, actual, args.path)
    elif args.kind == 'diagnostics':
        fitted = _fit_for_forecast(args, config, series)
        path = plotter.plot_diagnostics(fitted, _diagnostic_lags(args, config, fitted), args.path)
    elif args.kind == 'overlay':
        _set(config, 'evaluation', 'neural_mode', args.neural_mode)
        specs = [evaluation.ModelSpec(kind, kind, train_config=TrainConfig.from_dict(config['neural']))
                 for kind in ('rnn', 'lstm')]
        comparison = evaluation.compare(series, config['split']['test_length'], specs,
                                        config['evaluation']['neural_mode'])
        predictions = {entry.model_id: entry.predictions
                       for entry in sorted(comparison.ranking, key=lambda e: e.index)}
        path = plotter.plot_overlay(comparison.test_periods, comparison.actual, predictions,
                                    args.path, comparison.neural_mode)
    else:
        raise ConfigurationError(f"unknown plot kind '{args.kind}'")
    return {'kind': args.kind, 'path': str(path)}


def cmd_run_pipeline(args, config, loader) -> Dict[str, Any]:
    if args.out_dir:
        config['output']['directory'] = args.out_dir
    _set(config, 'split', 'test_length', args.test_length)
    series = loader.ingest(args.data)
    return ForecastPipeline(config, plots=not args.no_plots, progress=args.progress).run(series)


COMMANDS = {
    'make-sample': cmd_make_sample,
    'stationarity': cmd_stationarity,
    'correlogram': cmd_correlogram,
    'fit-arima': cmd_fit_arima,
    'auto-arima': cmd_auto_arima,
    'forecast': cmd_forecast,
    'train-nn': cmd_train_nn,
    'evaluate': cmd_evaluate,
    'plot': cmd_plot,
    'run-paper-pipeline': cmd_run_pipeline,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Inflation Forecast Toolkit')
    parser.add_argument('--config', type=str, default=None,
                        help='Path to configuration file (default: $INFLATION_FORECAST_CONFIG '
                             'or config/config.yaml)')
    parser.add_argument('--output', choices=['json', 'text'], default=None,
                        help='Report format written to stdout')
    parser.add_argument('--out-dir', type=str, default=None,
                        help='Also write <command>.json and <command>.meta.json here')
    parser.add_argument('--verbose', '-v', action='store_true', help='Enable verbose logging')
    sub = parser.add_subparsers(dest='command', required=True)

    def with_data(name: str, help_text: str) -> argparse.ArgumentParser:
        command = sub.add_parser(name, help=help_text)
        command.add_argument('data', nargs='?', default=None,
                             help='CSV file with period,value columns (default: data.path in config)')
        return command

    def with_order(command: argparse.ArgumentParser):
        command.add_argument('--order', type=str, help='ARIMA order as p,d,q')
        command.add_argument('--auto', action='store_true', help='Select the order by stepwise search')
        with_search(command)

    def with_search(command: argparse.ArgumentParser):
        command.add_argument('--criterion', choices=['aic', 'bic'])
        command.add_argument('--max-p', dest='max_p', type=int)
        command.add_argument('--max-q', dest='max_q', type=int)
        command.add_argument('--max-d', dest='max_d', type=int)
        command.add_argument('--max-steps', dest='max_steps', type=int)
        command.add_argument('--workers', type=int)

    sample = sub.add_parser('make-sample', help='Write the synthetic sample dataset')
    sample.add_argument('--path', default='data/sample_inflation_synthetic.csv')
    sample.add_argument('--seed', type=int)

    stationarity = with_data('stationarity', 'ADF and KPSS tests at a differencing order')
    stationarity.add_argument('--d', type=int)
    stationarity.add_argument('--max-lag', dest='max_lag', type=int)
    stationarity.add_argument('--autolag', choices=['aic', 'bic', 'none'])
    stationarity.add_argument('--bandwidth', type=int)

    correlogram = with_data('correlogram', 'ACF and PACF with the white-noise band')
    correlogram.add_argument('--d', type=int, default=0)
    correlogram.add_argument('--max-lag', dest='max_lag', type=int)

    fit_arima = with_data('fit-arima', 'Maximum-likelihood ARIMA fit with Ljung-Box diagnosis')
    fit_arima.add_argument('--order', type=str)
    fit_arima.add_argument('--no-intercept', action='store_true')
    fit_arima.add_argument('--lags', type=int)

    auto = with_data('auto-arima', 'Stepwise order search')
    with_search(auto)

    forecast = with_data('forecast', 'Point forecasts with prediction intervals')
    with_order(forecast)
    forecast.add_argument('--horizon', type=int)
    forecast.add_argument('--level', type=float)

    train_nn = with_data('train-nn', 'Train an RNN or LSTM and save its weights')
    train_nn.add_argument('--kind', choices=['rnn', 'lstm'], default='lstm')
    train_nn.add_argument('--weights', type=str, help='Output safetensors path')
    train_nn.add_argument('--look-back', dest='look_back', type=int)
    train_nn.add_argument('--hidden-size', dest='hidden_size', type=int)
    train_nn.add_argument('--epochs', type=int)
    train_nn.add_argument('--learning-rate', dest='learning_rate', type=float)
    train_nn.add_argument('--optimizer', choices=['adam', 'sgd'])
    train_nn.add_argument('--seed', type=int)
    train_nn.add_argument('--test-length', dest='test_length', type=int)
    train_nn.add_argument('--progress', action='store_true', help='Show an epoch progress bar')

    evaluate = with_data('evaluate', 'Compare the configured models on the held-out span')
    evaluate.add_argument('--test-length', dest='test_length', type=int)
    evaluate.add_argument('--neural-mode', dest='neural_mode', choices=['teacher_forced', 'recursive'])

    plot = with_data('plot', 'Render an SVG figure')
    plot.add_argument('kind', choices=['series', 'forecast', 'overlay', 'correlogram', 'diagnostics'])
    plot.add_argument('--path', type=str, help='Output SVG path')
    plot.add_argument('--d', type=int)
    plot.add_argument('--horizon', type=int)
    plot.add_argument('--lags', type=int)
    plot.add_argument('--holdout', action='store_true',
                      help='Forecast the last horizon observations and overlay them')
    plot.add_argument('--neural-mode', dest='neural_mode', choices=['teacher_forced', 'recursive'])
    with_order(plot)

    full_run = with_data('run-paper-pipeline', 'Run every stage and emit one report')
    full_run.add_argument('--test-length', dest='test_length', type=int)
    full_run.add_argument('--no-plots', action='store_true')
    full_run.add_argument('--progress', action='store_true')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main application entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    log_level = logging.DEBUG if args.verbose else logging.INFO
    setup_logging(log_level)

    output = args.output or 'json'
    try:
        config = load_config(resolve_config_path(args.config))
        output = args.output or config['output'].get('format', 'json')
        logger.info("Configuration loaded successfully")

        loader = DatasetLoader(config['data'])
        if getattr(args, 'data', 'unused') is None:
            args.data = config['data'].get('path')
            if not args.data:
                raise ConfigurationError("no dataset given and data.path is not configured")

        result = COMMANDS[args.command](args, config, loader)
        report = build_report(args.command, result, config)
        if args.out_dir:
            write_report(report, Path(args.out_dir), args.command)
        print(render_json(report) if output == 'json' else render_text(report))
        return EXIT_OK

    except ForecastError as e:
        logger.error(f"{args.command} failed: {e}")
        print(render_error(e.to_dict()) if output == 'json' else f"error [{e.code}]: {e.message}")
        return e.exit_code
    except KeyboardInterrupt:
        logger.info("Application stopped by user")
        return EXIT_DATA_ERROR
    except np.linalg.LinAlgError as e:
        logger.exception(f"{args.command} failed in linear algebra: {e}")
        _print_unexpected(output, 'linear_algebra', str(e))
        return EXIT_NUMERICAL_ERROR
    except Exception as e:
        logger.exception(f"Application error: {e}")
        _print_unexpected(output, 'internal', f"{type(e).__name__}: {e}")
        return EXIT_DATA_ERROR


def _print_unexpected(output: str, code: str, message: str):
    print(render_error({'code': code, 'message': message}) if output == 'json'
          else f"error [{code}]: {message}")


if __name__ == '__main__':
    sys.exit(main())
