"""
Series Core Module
Monthly time-series value type and the reversible transforms every model consumes.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple, Union

import numpy as np

from errors import (
    BoundsError,
    DegenerateInputError,
    StateCorruptionError,
    ZeroRangeError,
)

logger = logging.getLogger(__name__)

Period = Tuple[int, int]
ArrayLike = Union[Sequence[float], np.ndarray]


def _frozen_array(values: ArrayLike) -> np.ndarray:
    array = np.array(values, dtype=np.float64).reshape(-1)
    array.flags.writeable = False
    return array


def shift_period(period: Period, months: int) -> Period:
    """Move a (year, month) period by a signed number of months."""
    total = period[0] * 12 + (period[1] - 1) + months
    return total // 12, total % 12 + 1


def format_period(period: Period) -> str:
    return f"{period[0]:04d}-{period[1]:02d}"


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Ordered monthly observations starting at start_period."""

    values: np.ndarray
    start_period: Period = (2000, 1)
    frequency: int = 12

    def __post_init__(self):
        values = _frozen_array(self.values)
        if not np.all(np.isfinite(values)):
            raise DegenerateInputError("time series values must be finite (no NaN or infinity)")
        year, month = self.start_period
        if not 1 <= int(month) <= 12:
            raise BoundsError(f"start month must be in 1..12, got {month}")
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'start_period', (int(year), int(month)))

    def __len__(self) -> int:
        return int(self.values.shape[0])

    @property
    def end_period(self) -> Period:
        return shift_period(self.start_period, len(self) - 1)

    def period_at(self, index: int) -> Period:
        return shift_period(self.start_period, index)

    def period_labels(self) -> List[str]:
        return [format_period(self.period_at(i)) for i in range(len(self))]

    def with_values(self, values: ArrayLike, offset: int = 0) -> 'TimeSeries':
        """New series sharing the calendar, starting `offset` periods later."""
        return TimeSeries(values, shift_period(self.start_period, offset), self.frequency)

    def concat(self, other: 'TimeSeries') -> 'TimeSeries':
        return TimeSeries(np.concatenate([self.values, other.values]),
                          self.start_period, self.frequency)

    def to_dict(self) -> dict:
        return {
            'start_period': format_period(self.start_period),
            'end_period': format_period(self.end_period) if len(self) else None,
            'frequency': self.frequency,
            'n': len(self),
            'values': [float(v) for v in self.values],
        }


@dataclass(frozen=True)
class DifferenceState:
    """Seeds consumed by differencing; one per pass."""

    order: int
    seeds: Tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, 'seeds', tuple(float(s) for s in self.seeds))


@dataclass(frozen=True)
class ScalerState:
    min: float
    max: float

    def to_dict(self) -> dict:
        return {'min': self.min, 'max': self.max}


@dataclass(frozen=True, eq=False)
class WindowSet:
    look_back: int
    inputs: np.ndarray
    targets: np.ndarray

    def __len__(self) -> int:
        return int(self.targets.shape[0])


def difference(series: TimeSeries, d: int) -> Tuple[TimeSeries, DifferenceState]:
    """Apply d passes of first differencing."""
    if d < 0:
        raise BoundsError(f"differencing order must be non-negative, got {d}")
    if len(series) <= d:
        raise DegenerateInputError(
            f"differencing of order {d} needs at least {d + 1} observations, got {len(series)}")

    values = np.array(series.values)
    seeds = []
    for _ in range(d):
        seeds.append(values[0])
        values = np.diff(values)
    return series.with_values(values, offset=d), DifferenceState(d, tuple(seeds))


def undifference(series: TimeSeries, state: DifferenceState) -> TimeSeries:
    """Exact inverse of difference()."""
    if state.order < 0 or len(state.seeds) != state.order:
        raise StateCorruptionError(
            f"difference state of order {state.order} carries {len(state.seeds)} seeds")

    values = np.array(series.values)
    for seed in reversed(state.seeds):
        values = np.concatenate([[seed], seed + np.cumsum(values)])
    return series.with_values(values, offset=-state.order)


def fit_scaler(series: Union[TimeSeries, ArrayLike]) -> ScalerState:
    values = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=float)
    if values.size == 0:
        raise DegenerateInputError("cannot fit a scaler on an empty series")
    low, high = float(np.min(values)), float(np.max(values))
    if not high > low:
        raise ZeroRangeError(f"series is constant ({low}); min-max scaling is undefined")
    return ScalerState(low, high)


def apply_scaler(values: ArrayLike, state: ScalerState) -> np.ndarray:
    return (np.asarray(values, dtype=np.float64) - state.min) / (state.max - state.min)


def invert_scaler(values: ArrayLike, state: ScalerState) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) * (state.max - state.min) + state.min


def make_windows(series: Union[TimeSeries, ArrayLike], look_back: int) -> WindowSet:
    """Sliding look-back windows with the following observation as target."""
    values = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=float)
    if look_back < 1:
        raise BoundsError(f"look_back must be positive, got {look_back}")
    if values.shape[0] <= look_back:
        raise DegenerateInputError(
            f"windowing with look_back={look_back} needs at least {look_back + 1} "
            f"observations, got {values.shape[0]}")

    inputs = np.lib.stride_tricks.sliding_window_view(values, look_back)[:-1].copy()
    targets = values[look_back:].copy()
    return WindowSet(look_back, inputs, targets)


def split_train_test(series: TimeSeries, test_length: int) -> Tuple[TimeSeries, TimeSeries]:
    """Chronological split: the last test_length observations form the test span."""
    n = len(series)
    if not 0 < test_length < n:
        raise BoundsError(f"test_length must be in 1..{n - 1}, got {test_length}")
    cut = n - test_length
    train = series.with_values(series.values[:cut])
    test = series.with_values(series.values[cut:], offset=cut)
    logger.debug(f"Split {n} observations into train {len(train)} "
                 f"and test {len(test)} starting {format_period(test.start_period)}")
    return train, test
