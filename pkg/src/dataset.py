"""
Dataset Module
Loads monthly inflation series from CSV files and writes the synthetic sample dataset.
"""

import logging
import math
import re
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import pandas as pd

from errors import IngestionError
from series_core import TimeSeries, format_period, shift_period

PERIOD_PATTERN = re.compile(r'^(\d{4})-(\d{2})$')
COLUMNS = ['period', 'value']
SAMPLE_START = (2010, 1)
SAMPLE_END = (2022, 12)


class DatasetLoader:
    """Reads (period, value) CSV files into TimeSeries objects."""

    def __init__(self, config: Optional[Dict] = None):
        self.config = config or {}
        self.logger = logging.getLogger(__name__)
        self.frequency = self.config.get('frequency', 12)

    def ingest(self, path: Union[str, Path]) -> TimeSeries:
        """Parse and validate a dataset file; row numbers count the header as row 1."""
        path = Path(path)
        if not path.exists():
            raise IngestionError(f"dataset file not found: {path}")

        try:
            frame = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False)
        except pd.errors.EmptyDataError:
            raise IngestionError(f"dataset file {path} is empty")
        except pd.errors.ParserError as e:
            raise IngestionError(f"dataset file {path} is not valid CSV: {e}")

        header = [str(column).strip().lower() for column in frame.columns]
        if header != COLUMNS:
            raise IngestionError(f"expected header 'period,value', got '{','.join(header)}'", row=1)
        rows = list(frame.itertuples(index=False, name=None))
        while rows and all(_is_blank(field) for field in rows[-1]):
            rows.pop()
        if not rows:
            raise IngestionError(f"dataset file {path} has a header but no observations")

        periods = []
        values = []
        for offset, (raw_period, raw_value) in enumerate(rows):
            row = offset + 2
            if _is_blank(raw_period) and _is_blank(raw_value):
                raise IngestionError("blank row inside the data", row=row)
            period = self._parse_period(raw_period, row)
            value = self._parse_value(raw_value, row)
            if periods:
                expected = shift_period(periods[-1], 1)
                if period == periods[-1] or period < periods[-1]:
                    raise IngestionError(
                        f"duplicate or out-of-order period {format_period(period)}", row=row)
                if period != expected:
                    raise IngestionError(
                        f"gap in monthly periods: expected {format_period(expected)}, "
                        f"found {format_period(period)}", row=row)
            periods.append(period)
            values.append(value)

        series = TimeSeries(np.array(values), periods[0], self.frequency)
        self.logger.info(f"Ingested {len(series)} observations from {path} "
                         f"({format_period(series.start_period)} to {format_period(series.end_period)})")
        return series

    def _parse_period(self, raw: str, row: int):
        match = PERIOD_PATTERN.match(str(raw).strip())
        if not match:
            raise IngestionError(f"period '{raw}' is not in YYYY-MM form", row=row)
        year, month = int(match.group(1)), int(match.group(2))
        if not 1 <= month <= 12:
            raise IngestionError(f"period '{raw}' has month outside 01..12", row=row)
        return year, month

    def _parse_value(self, raw: str, row: int) -> float:
        try:
            value = float(str(raw).strip())
        except ValueError:
            raise IngestionError(f"value '{raw}' is not a decimal number", row=row)
        if not math.isfinite(value):
            raise IngestionError(f"value '{raw}' is not finite", row=row)
        return value

    def write_sample(self, path: Union[str, Path], seed: int = 0) -> TimeSeries:
        """Write a SYNTHETIC monthly inflation-like series covering 2010-01..2022-12.

        A persistent AR(1) deviation around a slowly drifting level, with two
        seeded spike episodes; not real data.
        """
        rng = np.random.default_rng(seed)
        n = (SAMPLE_END[0] - SAMPLE_START[0]) * 12 + SAMPLE_END[1] - SAMPLE_START[1] + 1
        level = 10.0 + np.cumsum(rng.normal(0.0, 0.15, n))
        deviation = np.zeros(n)
        for t in range(1, n):
            deviation[t] = 0.85 * deviation[t - 1] + rng.normal(0.0, 0.6)
        spikes = np.zeros(n)
        for centre in rng.choice(np.arange(24, n - 12), size=2, replace=False):
            width = 6
            ramp = np.exp(-0.5 * ((np.arange(n) - centre) / width) ** 2)
            spikes += rng.uniform(4.0, 12.0) * ramp
        values = np.round(np.maximum(level + deviation + spikes, 0.5), 2)

        periods = [format_period(shift_period(SAMPLE_START, i)) for i in range(n)]
        frame = pd.DataFrame({'period': periods, 'value': [f"{v:.2f}" for v in values]})
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, lineterminator='\n')
        self.logger.info(f"Wrote synthetic sample dataset ({n} months, seed={seed}) to {path}")
        return TimeSeries(values, SAMPLE_START, self.frequency)


def _is_blank(field) -> bool:
    return field is None or (isinstance(field, float) and math.isnan(field)) or not str(field).strip()


def ingest(path: Union[str, Path]) -> TimeSeries:
    return DatasetLoader().ingest(path)
