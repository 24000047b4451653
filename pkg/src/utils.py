"""
Utility Functions
Helper functions for logging, configuration, and common operations.
"""

import copy
import json
import logging
import os
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

from errors import ConfigurationError

CONFIG_ENV_VAR = 'INFLATION_FORECAST_CONFIG'
DEFAULT_CONFIG_PATH = 'config/config.yaml'


def setup_logging(level: int = logging.INFO, log_file: Optional[str] = None):
    """Set up logging configuration."""
    log_dir = Path('output/logs')
    log_dir.mkdir(parents=True, exist_ok=True)

    if not log_file:
        timestamp = datetime.now().strftime("%Y%m%d")
        log_file = log_dir / f"inflation_forecast_{timestamp}.log"

    # stdout is reserved for reports
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_file),
            logging.StreamHandler()
        ]
    )

    logging.getLogger('matplotlib').setLevel(logging.WARNING)
    logging.getLogger('PIL').setLevel(logging.WARNING)


def resolve_config_path(cli_path: Optional[str] = None) -> str:
    """--config flag, then the environment variable (a .env file is honoured), then the default."""
    if cli_path:
        return cli_path
    load_dotenv()
    return os.environ.get(CONFIG_ENV_VAR) or DEFAULT_CONFIG_PATH


def merge_config(base: Dict[str, Any], override: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    """Recursive merge; values in override win, nested sections are merged key by key."""
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_config(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_config(config_path: str) -> Dict[str, Any]:
    """Load configuration from YAML file, layered over the defaults."""
    config_file = Path(config_path)

    if not config_file.exists():
        default_config = create_default_config()
        save_config(default_config, config_path)
        return default_config

    try:
        with open(config_file, 'r', encoding='utf-8') as f:
            loaded = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigurationError(f"cannot parse config file {config_path}: {e}")
    if not isinstance(loaded, dict):
        raise ConfigurationError(f"config file {config_path} must contain a mapping")
    return merge_config(create_default_config(), loaded)


def save_config(config: Dict[str, Any], config_path: str):
    """Save configuration to YAML file."""
    config_file = Path(config_path)
    config_file.parent.mkdir(parents=True, exist_ok=True)

    try:
        with open(config_file, 'w', encoding='utf-8') as f:
            yaml.dump(config, f, default_flow_style=False, indent=2, sort_keys=False)
    except OSError as e:
        logging.error(f"Error saving config: {e}")


def create_default_config() -> Dict[str, Any]:
    """Create default configuration."""
    return {
        'data': {
            'path': 'data/sample_inflation_synthetic.csv',
            'frequency': 12,
        },
        'split': {
            'test_length': 12,
        },
        'stationarity': {
            'd': 0,
            'adf_max_lag': None,
            'adf_autolag': 'aic',
            'kpss_bandwidth': None,
        },
        'correlogram': {
            'max_lag': 24,
        },
        'arima': {
            'order': [1, 0, 1],
            'with_intercept': True,
            'criterion': 'aic',
            'max_p': 5,
            'max_d': 2,
            'max_q': 5,
            'max_steps': 94,
            'max_iter': 1000,
            'tol': 1.0e-8,
            'workers': 1,
            'diagnostic_lags': 24,
        },
        'forecast': {
            'horizon': 24,
            'level': 0.95,
        },
        'neural': {
            'look_back': 12,
            'hidden_size': 32,
            'epochs': 300,
            'learning_rate': 0.001,
            'optimizer': 'adam',
            'gradient_clip': 5.0,
            'seed': 0,
        },
        'evaluation': {
            'neural_mode': 'teacher_forced',
            'workers': 1,
            'models': [
                {'id': 'arima-101', 'kind': 'arima', 'order': [1, 0, 1]},
                {'id': 'auto-arima', 'kind': 'auto-arima'},
                {'id': 'rnn', 'kind': 'rnn'},
                {'id': 'lstm', 'kind': 'lstm'},
            ],
        },
        'output': {
            'directory': 'output',
            'format': 'json',
        },
        'seed': 0,
    }


def save_json_file(data: Dict, file_path: str):
    """Save data to JSON file."""
    Path(file_path).parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, ensure_ascii=False, allow_nan=False)
        f.write('\n')
