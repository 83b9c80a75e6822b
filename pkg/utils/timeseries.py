"""Time-indexed data model, calendars, availability semantics and window arithmetic."""
import datetime as dt
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from utils.errors import (
    ColumnCollisionError,
    ConfigError,
    GapInIndexError,
    InsufficientHistoryError,
    UnknownColumnError,
)

SUPPORTED_RESOLUTIONS = (15, 60)
TARGET_COLUMNS = ('day_ahead_price', 'real_time_price')
TIMESTAMP_COLUMN = 'timestamp'


class AvailabilityClass(str, Enum):
    """When a column's value for day D+1 is knowable."""

    TARGET = 'target'
    HISTORICAL_EXOGENOUS = 'historical_exogenous'
    FUTURE_AVAILABLE_EXOGENOUS = 'future_available_exogenous'
    CONSTRUCTED_FACTOR = 'constructed_factor'
    FORECASTED_FEATURE = 'forecasted_feature'


def steps_per_day(resolution: int) -> int:
    if resolution not in SUPPORTED_RESOLUTIONS:
        raise ConfigError(f"Unsupported resolution {resolution} min (expected one of {SUPPORTED_RESOLUTIONS})")
    return 24 * 60 // resolution


@dataclass(frozen=True)
class TimeSeriesTable:
    """
    Timestamp-indexed panel of target and exogenous series.

    ``frame`` holds float64 columns on a naive DatetimeIndex in market-local
    time; NaN cells are missing and ``missing_mask`` exposes them explicitly.
    Tables are never mutated after construction; every transformation returns
    a new table.
    """

    frame: pd.DataFrame
    availability: Mapping[str, AvailabilityClass]
    resolution: int
    units: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        frame = self.frame
        if not isinstance(frame.index, pd.DatetimeIndex):
            raise GapInIndexError("Table index must be a DatetimeIndex")
        if frame.columns.has_duplicates:
            dupes = sorted(set(frame.columns[frame.columns.duplicated()]))
            raise ColumnCollisionError(f"Duplicate column names: {dupes}")

        steps_per_day(self.resolution)
        if len(frame.index) > 1:
            deltas = np.diff(frame.index.asi8)
            step_ns = self.resolution * 60 * 10**9
            if np.any(deltas <= 0):
                raise GapInIndexError("Timestamps must be strictly increasing")
            if np.any(deltas % step_ns != 0):
                raise GapInIndexError(f"Timestamps are off the {self.resolution}-minute grid")

        tags = {}
        for column in frame.columns:
            if column not in self.availability:
                raise UnknownColumnError(f"Column '{column}' carries no availability class")
            tag = AvailabilityClass(self.availability[column])
            if tag is AvailabilityClass.TARGET and column not in TARGET_COLUMNS:
                raise ColumnCollisionError(
                    f"Target column '{column}' must be one of {TARGET_COLUMNS}"
                )
            tags[column] = tag
        extra = set(self.availability) - set(frame.columns)
        if extra:
            raise UnknownColumnError(f"Availability given for absent columns: {sorted(extra)}")

        object.__setattr__(self, 'frame', frame.astype(np.float64))
        object.__setattr__(self, 'availability', tags)
        object.__setattr__(self, 'units', dict(self.units))

    @property
    def index(self) -> pd.DatetimeIndex:
        return self.frame.index

    @property
    def columns(self) -> List[str]:
        return list(self.frame.columns)

    @property
    def steps_per_day(self) -> int:
        return steps_per_day(self.resolution)

    def __len__(self):
        return len(self.frame)

    def require(self, column: str):
        if column not in self.availability:
            raise UnknownColumnError(f"Unknown column '{column}'")

    def availability_of(self, column: str) -> AvailabilityClass:
        self.require(column)
        return self.availability[column]

    def columns_with(self, *classes: AvailabilityClass) -> List[str]:
        """Columns tagged with any of ``classes``, in table order."""
        wanted = {AvailabilityClass(c) for c in classes}
        return [c for c in self.frame.columns if self.availability[c] in wanted]

    def values(self, column: str) -> np.ndarray:
        """Read-only float64 view of one column."""
        self.require(column)
        values = self.frame[column].to_numpy(dtype=np.float64, copy=True)
        values.setflags(write=False)
        return values

    def missing_mask(self, column: str) -> np.ndarray:
        self.require(column)
        return self.frame[column].isna().to_numpy()

    def series(self, column: str) -> pd.Series:
        self.require(column)
        return self.frame[column].copy()

    def until(self, end: pd.Timestamp) -> 'TimeSeriesTable':
        """Rows with timestamp strictly before ``end``."""
        stop = self.frame.index.searchsorted(pd.Timestamp(end), side='left')
        return self._with_frame(self.frame.iloc[:stop])

    def between_dates(self, start: dt.date, end: dt.date) -> 'TimeSeriesTable':
        """Rows whose calendar date lies in [start, end]."""
        lo = self.frame.index.searchsorted(pd.Timestamp(start), side='left')
        hi = self.frame.index.searchsorted(pd.Timestamp(end) + pd.Timedelta(days=1), side='left')
        return self._with_frame(self.frame.iloc[lo:hi])

    def replace_values(self, frame: pd.DataFrame) -> 'TimeSeriesTable':
        """Same schema, new values (used by standardization)."""
        return TimeSeriesTable(frame[self.columns], self.availability, self.resolution, self.units)

    def dates(self) -> List[dt.date]:
        return sorted(set(self.frame.index.date))

    def _with_frame(self, frame: pd.DataFrame) -> 'TimeSeriesTable':
        return TimeSeriesTable(frame, self.availability, self.resolution, self.units)


@dataclass(frozen=True)
class DayWindow:
    """The H steps covering one calendar day (the forecast horizon D+1)."""

    day: dt.date
    steps: pd.DatetimeIndex

    @property
    def issue_day(self) -> dt.date:
        return self.day - dt.timedelta(days=1)


@dataclass(frozen=True)
class RollingSplit:
    """Train / validation / test ranges of one evaluation window.

    Ranges are inclusive (first_date, last_date) pairs or None when empty.
    """

    window_id: str
    test_month: Optional[pd.Period]
    train_range: Optional[Tuple[dt.date, dt.date]]
    val_range: Optional[Tuple[dt.date, dt.date]]
    test_range: Tuple[dt.date, dt.date]
    workday_filter: bool = False
    holiday_calendar: FrozenSet[dt.date] = frozenset()

    def _dates(self, date_range) -> List[dt.date]:
        if date_range is None:
            return []
        days = [d.date() for d in pd.date_range(date_range[0], date_range[1], freq='D')]
        if self.workday_filter:
            days = filter_workdays(days, self.holiday_calendar)
        return days

    def train_dates(self) -> List[dt.date]:
        return self._dates(self.train_range)

    def val_dates(self) -> List[dt.date]:
        return self._dates(self.val_range)

    def test_dates(self) -> List[dt.date]:
        return self._dates(self.test_range)

    def all_dates(self) -> List[dt.date]:
        return self.train_dates() + self.val_dates() + self.test_dates()

    def first_date(self) -> dt.date:
        for date_range in (self.train_range, self.val_range, self.test_range):
            if date_range is not None:
                return date_range[0]
        return self.test_range[0]


def _day_rows(table: TimeSeriesTable, day: dt.date) -> pd.DatetimeIndex:
    index = table.index
    start = pd.Timestamp(day)
    lo = index.searchsorted(start, side='left')
    hi = index.searchsorted(start + pd.Timedelta(days=1), side='left')
    return index[lo:hi]


def day_windows_for(table: TimeSeriesTable, dates: Iterable[dt.date]) -> List[DayWindow]:
    """One DayWindow per date (chronological), each with exactly H steps."""
    expected = table.steps_per_day
    step = pd.Timedelta(minutes=table.resolution)
    windows = []
    for day in sorted(set(dates)):
        steps = _day_rows(table, day)
        if len(steps) != expected:
            raise GapInIndexError(f"{day} has {len(steps)} rows, expected {expected}")
        if steps[0] != pd.Timestamp(day) or (len(steps) > 1 and np.any(np.diff(steps.asi8) != step.value)):
            raise GapInIndexError(f"{day} steps are not on the {table.resolution}-minute grid")
        windows.append(DayWindow(day=day, steps=steps))
    return windows


def enumerate_day_windows(table: TimeSeriesTable, start: dt.date, end: dt.date) -> List[DayWindow]:
    """DayWindows for every date in the inclusive range [start, end]."""
    dates = [d.date() for d in pd.date_range(start, end, freq='D')]
    return day_windows_for(table, dates)


def _as_period(month) -> pd.Period:
    return month if isinstance(month, pd.Period) else pd.Period(str(month), freq='M')


def _month_span(first: pd.Period, last: pd.Period) -> Tuple[dt.date, dt.date]:
    return first.start_time.date(), last.end_time.date()


def build_rolling_splits(months: Sequence, train_m: int, val_m: int,
                         workday_filter: bool = False,
                         holiday_calendar: Iterable[dt.date] = (),
                         data_start: Optional[dt.date] = None) -> List[RollingSplit]:
    """
    One split per distinct test month, sorted chronologically.

    Training covers the ``train_m`` months before validation; validation the
    ``val_m`` months immediately preceding the test month.

    Raises:
        InsufficientHistoryError: when ``data_start`` is later than the first
            training day of any split
    """
    if train_m < 0 or val_m < 0:
        raise ConfigError("train_m and val_m must be non-negative")

    calendar = frozenset(holiday_calendar)
    splits = []
    for test in sorted({_as_period(m) for m in months}):
        val_first = test - val_m
        train_first = val_first - train_m
        train_range = _month_span(train_first, val_first - 1) if train_m else None
        val_range = _month_span(val_first, test - 1) if val_m else None
        split = RollingSplit(
            window_id=str(test),
            test_month=test,
            train_range=train_range,
            val_range=val_range,
            test_range=_month_span(test, test),
            workday_filter=workday_filter,
            holiday_calendar=calendar,
        )
        if data_start is not None and split.first_date() < data_start:
            raise InsufficientHistoryError(
                f"Test month {test} needs data from {split.first_date()}, "
                f"but data starts {data_start}"
            )
        splits.append(split)
    return splits


def build_ratio_split(start: dt.date, end: dt.date, ratios=(0.7, 0.1, 0.2),
                      workday_filter: bool = False,
                      holiday_calendar: Iterable[dt.date] = ()) -> RollingSplit:
    """Single chronological train/val/test split over [start, end] by day ratios."""
    if len(ratios) != 3 or any(r < 0 for r in ratios) or not np.isclose(sum(ratios), 1.0):
        raise ConfigError(f"Ratios must be three non-negative numbers summing to 1, got {ratios}")
    days = [d.date() for d in pd.date_range(start, end, freq='D')]
    n_train = int(np.floor(ratios[0] * len(days)))
    n_val = int(np.floor(ratios[1] * len(days)))
    if len(days) - n_train - n_val < 1:
        raise InsufficientHistoryError(f"Ratio split over {len(days)} days leaves no test days")

    def span(chunk):
        return (chunk[0], chunk[-1]) if chunk else None

    return RollingSplit(
        window_id='ratio',
        test_month=None,
        train_range=span(days[:n_train]),
        val_range=span(days[n_train:n_train + n_val]),
        test_range=span(days[n_train + n_val:]),
        workday_filter=workday_filter,
        holiday_calendar=frozenset(holiday_calendar),
    )


def filter_workdays(dates: Iterable, calendar: Iterable[dt.date] = ()) -> list:
    """Drop Saturdays, Sundays and calendar dates, preserving order."""
    holidays = {pd.Timestamp(d).date() for d in calendar}
    kept = []
    for d in dates:
        day = pd.Timestamp(d).date()
        if day.weekday() < 5 and day not in holidays:
            kept.append(d)
    return kept


def load_holiday_calendar(filepath: str) -> FrozenSet[dt.date]:
    """Plain date-list file: one ISO date per line, '#' starts a comment."""
    holidays = set()
    with open(filepath, 'r', encoding='utf-8') as f:
        for line in f:
            text = line.split('#', 1)[0].strip()
            if text:
                holidays.add(dt.date.fromisoformat(text))
    return frozenset(holidays)


def describe_table(table: TimeSeriesTable) -> Dict[str, object]:
    """Small summary used in logs and dry runs."""
    return {
        'rows': len(table),
        'start': str(table.index[0]) if len(table) else None,
        'end': str(table.index[-1]) if len(table) else None,
        'resolution': table.resolution,
        'columns': {tag.value: len(table.columns_with(tag)) for tag in AvailabilityClass},
    }
