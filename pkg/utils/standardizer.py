"""Train-only z-score standardization (reale_like mode)."""
import datetime as dt
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from utils.errors import EmptyTrainingRangeError, UnknownColumnError
from utils.logger import Logger
from utils.timeseries import TimeSeriesTable

logger = Logger()


@dataclass(frozen=True)
class Standardizer:
    """Per-column mean and population stddev fitted on one training split.

    Zero-variance columns are kept in ``zero_variance`` and passed through
    untouched by ``apply_standardizer``.
    """

    means: Dict[str, float]
    stds: Dict[str, float]
    fitted_on: str = ''
    zero_variance: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def columns(self):
        return list(self.means)

    def _params(self, column: str) -> Tuple[float, float]:
        if column not in self.means:
            raise UnknownColumnError(f"Column '{column}' was not part of the standardizer fit ({self.fitted_on})")
        if column in self.zero_variance:
            return 0.0, 1.0
        return self.means[column], self.stds[column]

    def transform(self, values, column: str) -> np.ndarray:
        mean, std = self._params(column)
        return (np.asarray(values, dtype=np.float64) - mean) / std

    def inverse_transform(self, values, column: str) -> np.ndarray:
        mean, std = self._params(column)
        return np.asarray(values, dtype=np.float64) * std + mean


def identity_standardizer(columns: Iterable[str]) -> Standardizer:
    columns = list(columns)
    return Standardizer({c: 0.0 for c in columns}, {c: 1.0 for c in columns}, fitted_on='identity')


def fit_standardizer(table: TimeSeriesTable,
                     train_range: Optional[Tuple[dt.date, dt.date]] = None,
                     columns: Optional[Sequence[str]] = None,
                     train_dates: Optional[Iterable[dt.date]] = None,
                     fitted_on: str = '') -> Standardizer:
    """
    Fit means and population stddevs over non-missing training rows only.

    Either ``train_range`` (inclusive date pair) or an explicit list of
    ``train_dates`` selects the training rows; no other row is read.

    Raises:
        EmptyTrainingRangeError: when the selection contains no rows
        UnknownColumnError: when a requested column is absent
    """
    columns = list(columns) if columns is not None else table.columns
    for column in columns:
        table.require(column)

    if train_dates is not None:
        wanted = pd.DatetimeIndex(sorted({pd.Timestamp(d) for d in train_dates}))
        rows = table.frame.index.normalize().isin(wanted)
        train = table.frame.loc[rows, columns]
    elif train_range is not None:
        train = table.between_dates(train_range[0], train_range[1]).frame[columns]
    else:
        raise EmptyTrainingRangeError("No training range given")

    if train.empty:
        raise EmptyTrainingRangeError(f"Training range {train_range or 'dates'} selects no rows")

    means, stds, flagged = {}, {}, []
    for column in columns:
        values = train[column].to_numpy(dtype=np.float64)
        values = values[~np.isnan(values)]
        if values.size == 0:
            means[column], stds[column] = 0.0, 0.0
            flagged.append(column)
            continue
        mean = float(np.mean(values))
        std = float(np.sqrt(np.mean((values - mean) ** 2)))
        means[column], stds[column] = mean, std
        if not std > 0.0:
            flagged.append(column)

    if flagged:
        logger.warning(f"⚠️ Zero-variance columns passed through unstandardized: {flagged}")
    return Standardizer(means, stds, fitted_on=fitted_on, zero_variance=tuple(flagged))


def apply_standardizer(table: TimeSeriesTable, standardizer: Standardizer,
                       columns: Optional[Sequence[str]] = None) -> TimeSeriesTable:
    """Standardize ``columns`` (default: every fitted column); others are copied."""
    columns = list(columns) if columns is not None else standardizer.columns
    frame = table.frame.copy()
    for column in columns:
        table.require(column)
        frame[column] = standardizer.transform(frame[column].to_numpy(), column)
    return table.replace_values(frame)


def invert_standardizer(values, column: str, standardizer: Standardizer) -> np.ndarray:
    return standardizer.inverse_transform(values, column)
