"""
Shared pytest fixtures: seeded generators and simulated series.
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from scipy import signal

# Add src to path for imports
sys.path.append(str(Path(__file__).parent / 'src'))

from series_core import TimeSeries  # noqa: E402


def simulate_arma(rng, n, ar=(), ma=(), sigma2=1.0, mean=0.0, burn=300):
    """Gaussian ARMA sample with the '+' MA sign convention."""
    shocks = rng.normal(0.0, np.sqrt(sigma2), n + burn)
    values = signal.lfilter(np.r_[1.0, ma], np.r_[1.0, -np.asarray(ar, dtype=float)], shocks)
    return values[burn:] + mean


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def arma():
    return simulate_arma


@pytest.fixture
def white_noise(rng):
    return TimeSeries(rng.normal(0.0, 1.0, 500), (2000, 1))


@pytest.fixture
def random_walk(rng):
    return TimeSeries(np.cumsum(rng.normal(0.0, 1.0, 500)), (2000, 1))


@pytest.fixture
def monthly_csv(tmp_path):
    """Writes a small valid dataset and returns its path."""
    def write(rows, header='period,value'):
        path = tmp_path / 'series.csv'
        path.write_text('\n'.join([header] + list(rows)) + '\n', encoding='utf-8')
        return path
    return write
