import os
import datetime as dt
import threading
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from models.forecasters import ForecasterSpec, forecast_variable, required_history
from utils.errors import (
    AvailabilityViolationError,
    CorruptCacheEntryError,
    FutureBoostError,
    HorizonMismatchError,
    InsufficientHistoryError,
    UnknownVariableError,
)
from utils.fs_utils import FSUtils, sha256_hex, split_header
from utils.logger import Logger
from utils.timeseries import AvailabilityClass, TimeSeriesTable

FORECASTABLE = (AvailabilityClass.TARGET, AvailabilityClass.HISTORICAL_EXOGENOUS)
CACHE_SUFFIX = '.fc.csv'
EXTERNAL_COLUMNS = ['variable', 'issue_day', 'step', 'value']


@dataclass
class ForecastSet:
    """H-step forecasts for day D+1 issued at the end of day D."""

    issue_day: dt.date
    horizon_day: dt.date
    entries: Dict[str, np.ndarray]
    forecaster_ids: Dict[str, str] = field(default_factory=dict)
    cache_keys: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        lengths = {v.size for v in self.entries.values()}
        if len(lengths) > 1:
            raise HorizonMismatchError(f"Entries of {self.issue_day} have different lengths {sorted(lengths)}")
        for variable, values in self.entries.items():
            if not np.all(np.isfinite(values)):
                raise FutureBoostError(f"Non-finite forecast for {variable} issued {self.issue_day}")

    @property
    def forecaster_id(self) -> str:
        return '+'.join(sorted(set(self.forecaster_ids.values())))

    @property
    def horizon(self) -> int:
        return next(iter(self.entries.values())).size if self.entries else 0


class ForecastManager:
    """
    Manager class for Stage 1: per-variable day-ahead forecasts with a disk cache.

    ``evaluations`` counts forecaster calls actually executed; a run served
    entirely from the cache leaves it at 0.
    """

    def __init__(self, cache_dir: Optional[str] = None, jobs: int = 1):
        self.logger = Logger()
        self.fs = FSUtils()
        self.cache_dir = cache_dir
        self.jobs = jobs
        self.evaluations = 0
        self.cache_hits = 0
        self._lock = threading.Lock()
        self._external: Dict[str, tuple] = {}
        if cache_dir:
            self.fs.ensure_dir(cache_dir)

    # cache

    def cache_path(self, cache_key: str) -> str:
        return os.path.join(self.cache_dir, f"{cache_key}{CACHE_SUFFIX}")

    def cache_put(self, forecast_set: ForecastSet, context_hashes: Mapping[str, str]):
        """Write one cache entry per variable of ``forecast_set``."""
        if not self.cache_dir:
            return
        for variable, values in sorted(forecast_set.entries.items()):
            body = 'step,value\n' + ''.join(f"{h + 1},{float(v)!r}\n" for h, v in enumerate(values))
            header = (
                f"# forecaster_id={forecast_set.forecaster_ids[variable]};"
                f"context_hash={context_hashes[variable]};variable={variable};"
                f"issue_day={forecast_set.issue_day.isoformat()};checksum={sha256_hex(body)}\n"
            )
            self.fs.atomic_write_text(self.cache_path(forecast_set.cache_keys[variable]), header + body)

    def _read_entry(self, path: str, horizon: int) -> np.ndarray:
        with open(path, 'r', encoding='utf-8', newline='') as f:
            content = f.read()
        first, _, body = content.partition('\n')
        if not first.startswith('#'):
            raise CorruptCacheEntryError(f"{path}: missing header")
        _, fields = split_header(first)
        if fields.get('checksum') != sha256_hex(body):
            raise CorruptCacheEntryError(f"{path}: checksum mismatch")
        lines = body.splitlines()
        if not lines or lines[0] != 'step,value' or len(lines) - 1 != horizon:
            raise CorruptCacheEntryError(f"{path}: expected {horizon} rows")
        values = np.empty(horizon)
        for h, line in enumerate(lines[1:]):
            step, value = line.split(',')
            if int(step) != h + 1:
                raise CorruptCacheEntryError(f"{path}: step {step} out of order")
            values[h] = float(value)
        return values

    def cache_get(self, cache_key: str, horizon: int) -> Optional[np.ndarray]:
        """Cached values for ``cache_key``; None on a miss or a corrupt entry."""
        if not self.cache_dir:
            return None
        path = self.cache_path(cache_key)
        if not os.path.exists(path):
            return None
        try:
            return self._read_entry(path, horizon)
        except (CorruptCacheEntryError, ValueError) as e:
            self.logger.warning(f"⚠️ Corrupt cache entry treated as miss: {e}")
            return None

    # forecasting

    def _forecast_one(self, table: TimeSeriesTable, variable: str, spec: ForecasterSpec,
                      issue_day: dt.date, history_end: pd.Timestamp):
        """(values, forecaster_id, context_hash to cache or '', cache_key)"""
        horizon = table.steps_per_day
        if spec.kind == 'external_file':
            external = self.load_external_forecasts(spec.params['path'], issue_day, [variable], horizon)
            return external.entries[variable], external.forecaster_ids[variable], '', external.cache_keys[variable]

        if len(table.index) == 0 or table.index[-1] + pd.Timedelta(minutes=table.resolution) < history_end:
            raise InsufficientHistoryError(f"'{variable}' history ends before the close of {issue_day}")
        stop = table.index.searchsorted(history_end, side='left')
        history = table.values(variable)[:stop]
        needed = required_history(spec, horizon)
        context_hash = sha256_hex(history[-needed:])
        cache_key = sha256_hex(spec.forecaster_id, variable, issue_day.isoformat(), context_hash)

        cached = self.cache_get(cache_key, horizon)
        if cached is not None:
            with self._lock:
                self.cache_hits += 1
            return cached, spec.forecaster_id, '', cache_key

        values = forecast_variable(history, spec, horizon)
        with self._lock:
            self.evaluations += 1
        return values, spec.forecaster_id, context_hash, cache_key

    def forecast_day(self, table: TimeSeriesTable, variables: Sequence[str], issue_day: dt.date,
                     specs: Mapping[str, ForecasterSpec]) -> ForecastSet:
        """
        Forecast every variable for day ``issue_day + 1`` from rows up to the
        end of ``issue_day`` only.

        Raises:
            AvailabilityViolationError: a variable is not target / historical_exogenous
        """
        for variable in variables:
            tag = table.availability_of(variable)
            if tag not in FORECASTABLE:
                raise AvailabilityViolationError(
                    f"'{variable}' is {tag.value}; only target and historical_exogenous columns are forecast"
                )
        missing_specs = [v for v in variables if v not in specs]
        if missing_specs:
            raise UnknownVariableError(f"No forecaster configured for {missing_specs}")

        history_end = pd.Timestamp(issue_day) + pd.Timedelta(days=1)
        ordered = sorted(set(variables))
        if self.jobs > 1 and len(ordered) > 1:
            results = Parallel(n_jobs=self.jobs, prefer='threads')(
                delayed(self._forecast_one)(table, v, specs[v], issue_day, history_end) for v in ordered
            )
        else:
            results = [self._forecast_one(table, v, specs[v], issue_day, history_end) for v in ordered]

        forecast_set = ForecastSet(
            issue_day=issue_day,
            horizon_day=issue_day + dt.timedelta(days=1),
            entries={v: r[0] for v, r in zip(ordered, results)},
            forecaster_ids={v: r[1] for v, r in zip(ordered, results)},
            cache_keys={v: r[3] for v, r in zip(ordered, results)},
        )
        computed = {v: r[2] for v, r in zip(ordered, results) if r[2]}
        if computed:
            self.cache_put(
                ForecastSet(forecast_set.issue_day, forecast_set.horizon_day,
                            {v: forecast_set.entries[v] for v in computed},
                            {v: forecast_set.forecaster_ids[v] for v in computed},
                            {v: forecast_set.cache_keys[v] for v in computed}),
                computed,
            )
        return forecast_set

    def forecast_days(self, table: TimeSeriesTable, variables: Sequence[str], horizon_days: Iterable[dt.date],
                      specs: Mapping[str, ForecasterSpec]) -> Dict[dt.date, ForecastSet]:
        """
        ForecastSets keyed by horizon day. Days whose history is too short for
        a forecaster are skipped with a warning.
        """
        try:
            before = self.evaluations
            days = sorted(set(horizon_days))
            out: Dict[dt.date, ForecastSet] = {}
            skipped: List[dt.date] = []
            for day in tqdm(days, desc='Stage 1', unit='day', disable=None, leave=False):
                try:
                    out[day] = self.forecast_day(table, variables, day - dt.timedelta(days=1), specs)
                except InsufficientHistoryError:
                    skipped.append(day)
            if skipped:
                self.logger.warning(f"⚠️ Skipped {len(skipped)} days lacking history ({skipped[0]} .. {skipped[-1]})")
            self.logger.success(f"🔮 {self.evaluations - before} forecaster evaluations "
                                f"({len(out)} days × {len(set(variables))} variables)")
            return out

        except Exception as e:
            self.logger.error(f"❌ Stage-1 forecasting failed: {str(e)}")
            raise

    # external forecasts

    def _external_frame(self, filepath: str):
        if filepath not in self._external:
            digest = self.fs.file_sha256(filepath)
            frame = pd.read_csv(filepath, dtype={'variable': str, 'issue_day': str},
                                float_precision='round_trip')
            missing = [c for c in EXTERNAL_COLUMNS if c not in frame.columns]
            if missing:
                raise HorizonMismatchError(f"{filepath}: missing columns {missing}")
            self._external[filepath] = (digest, frame)
        return self._external[filepath]

    def load_external_forecasts(self, filepath: str, issue_day: dt.date, variables: Sequence[str],
                                horizon: int) -> ForecastSet:
        """
        Read forecasts produced elsewhere (``variable,issue_day,step,value``).

        Raises:
            UnknownVariableError: a requested variable has no rows for ``issue_day``
            HorizonMismatchError: a variable does not have exactly steps 1..H
        """
        digest, frame = self._external_frame(filepath)
        day_rows = frame[frame['issue_day'] == issue_day.isoformat()]
        extra = sorted(set(day_rows['variable']) - set(variables))
        if extra:
            self.logger.warning(f"⚠️ {filepath}: ignoring unrequested variables {extra}")

        forecaster_id = f"external:{digest}"
        entries, keys = {}, {}
        for variable in sorted(set(variables)):
            rows = day_rows[day_rows['variable'] == variable].sort_values('step')
            if rows.empty:
                raise UnknownVariableError(f"{filepath}: no forecast for '{variable}' issued {issue_day}")
            steps = rows['step'].to_numpy(dtype=np.int64)
            if steps.size != horizon or not np.array_equal(steps, np.arange(1, horizon + 1)):
                raise HorizonMismatchError(
                    f"{filepath}: '{variable}' issued {issue_day} has {steps.size} steps, expected {horizon}"
                )
            entries[variable] = rows['value'].to_numpy(dtype=np.float64)
            keys[variable] = sha256_hex(forecaster_id, variable, issue_day.isoformat())
        return ForecastSet(issue_day, issue_day + dt.timedelta(days=1), entries,
                           {v: forecaster_id for v in entries}, keys)

    def export_forecasts(self, forecast_sets: Mapping[dt.date, ForecastSet], filepath: str):
        """Write forecasts in the external-forecast format (readable by ``external_file``)."""
        lines = [','.join(EXTERNAL_COLUMNS)]
        for horizon_day in sorted(forecast_sets):
            fs = forecast_sets[horizon_day]
            for variable in sorted(fs.entries):
                for h, value in enumerate(fs.entries[variable]):
                    lines.append(f"{variable},{fs.issue_day.isoformat()},{h + 1},{float(value)!r}")
        self.fs.atomic_write_text(filepath, '\n'.join(lines) + '\n')
        self.logger.info(f"💾 Exported {len(forecast_sets)} forecast days to {filepath}")
