"""
Domain-knowledge factors, calendar fields and the enriched FeatureMatrix.

Every feature column carries a provenance tag; only the four tags in
``ALLOWED_PROVENANCE`` may enter a matrix, which is what keeps raw history
and realized drivers out of the regressor inputs.
"""
import json
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from utils.errors import (
    AvailabilityViolationError,
    ConfigError,
    EmptyDataError,
    MissingFeatureError,
)
from utils.fs_utils import FSUtils
from utils.logger import Logger
from utils.timeseries import TIMESTAMP_COLUMN, DayWindow

logger = Logger()

EPSILON = 1e-6
FORECAST_PREFIX = 'fc_'
TARGET_FIELD = 'target'


class Provenance(str, Enum):
    FORECASTED_FEATURE = 'forecasted_feature'
    CONSTRUCTED_FACTOR = 'constructed_factor'
    FUTURE_AVAILABLE = 'future_available'
    CALENDAR = 'calendar'


ALLOWED_PROVENANCE = frozenset(p.value for p in Provenance)


def forecast_feature_name(variable: str) -> str:
    return f"{FORECAST_PREFIX}{variable}"


def _guarded_ratio(numerator: np.ndarray, denominator: np.ndarray, label: str) -> np.ndarray:
    numerator = np.asarray(numerator, dtype=np.float64)
    denominator = np.asarray(denominator, dtype=np.float64)
    guarded = denominator <= EPSILON
    out = np.full(np.broadcast(numerator, denominator).shape, np.nan)
    np.divide(numerator, denominator, out=out, where=~guarded)
    if np.any(guarded):
        logger.warning(f"⚠️ {label}: {int(np.sum(guarded))} steps with denominator ≤ {EPSILON} masked")
    return out


def thermal_auction_space(thermal_capacity, committed_thermal, system_load) -> np.ndarray:
    """(capacity − committed) / load per step; load ≤ ε gives NaN."""
    headroom = np.asarray(thermal_capacity, dtype=np.float64) - np.asarray(committed_thermal, dtype=np.float64)
    return _guarded_ratio(headroom, system_load, 'thermal_auction_space')


def renewable_ratio(wind, solar, denominator, variant: str = 'vs_load') -> np.ndarray:
    """(wind + solar) / denominator per step, where the denominator is load or total generation."""
    if variant not in ('vs_load', 'vs_power'):
        raise ConfigError(f"Unknown renewable_ratio variant '{variant}'")
    renewables = np.asarray(wind, dtype=np.float64) + np.asarray(solar, dtype=np.float64)
    return _guarded_ratio(renewables, denominator, f"renewable_ratio[{variant}]")


def calendar_features(window: DayWindow) -> pd.DataFrame:
    """month, weekday (Monday=0) and day-of-month for every step of the window."""
    n = len(window.steps)
    return pd.DataFrame(
        {
            'month': np.full(n, window.day.month, dtype=np.int64),
            'weekday': np.full(n, window.day.weekday(), dtype=np.int64),
            'day': np.full(n, window.day.day, dtype=np.int64),
        },
        index=window.steps,
    )


FACTOR_ROLES = {
    'thermal_auction_space': ('capacity', 'committed', 'load'),
    'renewable_ratio': ('wind', 'solar', 'denominator'),
}


@dataclass(frozen=True)
class FactorSpec:
    """One constructed factor and the columns its formula reads.

    Bindings map formula roles to column names: either a future_available
    table column or a Stage-1 feature ``fc_<variable>``. An ``optional``
    factor whose bound table column is absent is skipped instead of failing.
    """

    name: str
    formula: str
    bindings: Mapping[str, str]
    variant: str = 'vs_load'
    optional: bool = False

    def __post_init__(self):
        if self.formula not in FACTOR_ROLES:
            raise ConfigError(f"Factor '{self.name}': unknown formula '{self.formula}'")
        missing = set(FACTOR_ROLES[self.formula]) - set(self.bindings)
        if missing:
            raise ConfigError(f"Factor '{self.name}': unbound roles {sorted(missing)}")
        object.__setattr__(self, 'bindings', dict(self.bindings))

    @property
    def columns(self) -> List[str]:
        return [self.bindings[role] for role in FACTOR_ROLES[self.formula]]

    def uses_forecasts(self) -> bool:
        return any(c.startswith(FORECAST_PREFIX) for c in self.columns)

    def evaluate(self, inputs: Mapping[str, np.ndarray]) -> np.ndarray:
        b = self.bindings
        if self.formula == 'thermal_auction_space':
            return thermal_auction_space(inputs[b['capacity']], inputs[b['committed']], inputs[b['load']])
        return renewable_ratio(inputs[b['wind']], inputs[b['solar']], inputs[b['denominator']], self.variant)

    @classmethod
    def from_dict(cls, data: Mapping) -> 'FactorSpec':
        unknown = set(data) - {'name', 'formula', 'bindings', 'variant', 'optional'}
        if unknown:
            raise ConfigError(f"Unknown factor keys: {sorted(unknown)}")
        return cls(
            name=data['name'],
            formula=data['formula'],
            bindings=data.get('bindings', {}),
            variant=data.get('variant', 'vs_load'),
            optional=bool(data.get('optional', False)),
        )


def default_factor_specs() -> List[FactorSpec]:
    """Factor bindings used when a run config declares none."""
    return [
        FactorSpec('thermal_auction_space', 'thermal_auction_space', {
            'capacity': 'thermal_capacity_plan',
            'committed': 'thermal_committed_plan',
            'load': 'system_load_forecast',
        }),
        FactorSpec('thermal_auction_space_st', 'thermal_auction_space', {
            'capacity': 'thermal_capacity_plan',
            'committed': 'thermal_committed_st',
            'load': 'system_load_forecast',
        }, variant='short_term', optional=True),
        FactorSpec('renewable_ratio_load', 'renewable_ratio', {
            'wind': 'forecast_wind_power',
            'solar': 'forecast_pv_power',
            'denominator': 'system_load_forecast',
        }, variant='vs_load'),
        FactorSpec('renewable_ratio_power', 'renewable_ratio', {
            'wind': 'forecast_wind_power',
            'solar': 'forecast_pv_power',
            'denominator': 'forecast_total_power',
        }, variant='vs_power'),
    ]


@dataclass
class FeatureMatrix:
    """
    Enriched design matrix: one row per (day, step), named feature columns
    with provenance, and the realized target aligned to the rows.

    The target may hold NaN (missing realized price); use ``scored`` to get
    the rows that count for training and metrics.
    """

    frame: pd.DataFrame
    provenance: Dict[str, Provenance]
    target: pd.Series
    target_name: str = 'day_ahead_price'
    steps_per_day: Optional[int] = None
    meta: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for column in self.frame.columns:
            tag = self.provenance.get(column)
            tag_value = tag.value if isinstance(tag, Provenance) else tag
            if tag_value not in ALLOWED_PROVENANCE:
                raise AvailabilityViolationError(
                    f"Feature column '{column}' has provenance '{tag_value}', "
                    f"allowed: {sorted(ALLOWED_PROVENANCE)}"
                )
        self.provenance = {c: Provenance(self.provenance[c]) for c in self.frame.columns}
        if not self.frame.index.equals(self.target.index):
            raise EmptyDataError("Target index does not match feature rows")
        if not self.frame.index.is_monotonic_increasing:
            order = np.argsort(self.frame.index.asi8, kind='stable')
            self.frame = self.frame.iloc[order]
            self.target = self.target.iloc[order]
        if self.frame.index.has_duplicates:
            raise EmptyDataError("Feature rows contain duplicate timestamps")

    def __len__(self):
        return len(self.frame)

    @property
    def feature_names(self) -> List[str]:
        return list(self.frame.columns)

    @property
    def index(self) -> pd.DatetimeIndex:
        return self.frame.index

    def matrix(self, names: Optional[Sequence[str]] = None) -> np.ndarray:
        """(rows, features) float64 array in ``names`` order."""
        names = list(names) if names is not None else self.feature_names
        missing = [n for n in names if n not in self.frame.columns]
        if missing:
            raise MissingFeatureError(f"Features missing from matrix: {missing}")
        return self.frame[names].to_numpy(dtype=np.float64)

    def target_values(self) -> np.ndarray:
        return self.target.to_numpy(dtype=np.float64)

    def scored(self) -> 'FeatureMatrix':
        """Rows whose realized target is present."""
        keep = self.target.notna().to_numpy()
        return self._subset(keep)

    def select_dates(self, dates: Iterable) -> 'FeatureMatrix':
        wanted = pd.DatetimeIndex(sorted({pd.Timestamp(d) for d in dates}))
        return self._subset(self.frame.index.normalize().isin(wanted))

    def drop_features(self, names: Iterable[str]) -> 'FeatureMatrix':
        names = [n for n in names if n in self.frame.columns]
        keep = [c for c in self.frame.columns if c not in names]
        return FeatureMatrix(self.frame[keep], {c: self.provenance[c] for c in keep},
                             self.target, self.target_name, self.steps_per_day, dict(self.meta))

    def _subset(self, mask) -> 'FeatureMatrix':
        return FeatureMatrix(self.frame.loc[mask], dict(self.provenance), self.target.loc[mask],
                             self.target_name, self.steps_per_day, dict(self.meta))

    @classmethod
    def concat(cls, parts: Sequence['FeatureMatrix']) -> 'FeatureMatrix':
        if not parts:
            raise EmptyDataError("Nothing to concatenate")
        first = parts[0]
        for part in parts[1:]:
            if part.feature_names != first.feature_names:
                raise EmptyDataError("Cannot concatenate matrices with different features")
        frame = pd.concat([p.frame for p in parts])
        target = pd.concat([p.target for p in parts])
        return cls(frame, dict(first.provenance), target, first.target_name, first.steps_per_day, dict(first.meta))

    def to_csv(self, filepath: str):
        """CSV (timestamp, features, target) plus a provenance JSON sidecar."""
        out = self.frame.copy()
        out[TARGET_FIELD] = self.target.to_numpy()
        out.index.name = TIMESTAMP_COLUMN
        fs = FSUtils()
        fs.atomic_write_text(filepath, out.to_csv(date_format='%Y-%m-%dT%H:%M:%S', float_format='%.17g',
                                                  lineterminator='\n'))
        sidecar = {
            'provenance': {c: self.provenance[c].value for c in self.feature_names},
            'target_name': self.target_name,
            'steps_per_day': self.steps_per_day,
        }
        fs.atomic_write_text(provenance_path(filepath), json.dumps(sidecar, sort_keys=True, indent=2) + '\n')

    @classmethod
    def from_csv(cls, filepath: str) -> 'FeatureMatrix':
        with open(provenance_path(filepath), 'r', encoding='utf-8') as f:
            sidecar = json.load(f)
        frame = pd.read_csv(filepath, index_col=TIMESTAMP_COLUMN, parse_dates=[TIMESTAMP_COLUMN],
                            float_precision='round_trip')
        target = frame.pop(TARGET_FIELD).astype(np.float64)
        unknown = [c for c in frame.columns if c not in sidecar['provenance']]
        if unknown:
            raise AvailabilityViolationError(f"Columns without provenance in {filepath}: {unknown}")
        return cls(frame.astype(np.float64), sidecar['provenance'], target,
                   sidecar.get('target_name', 'day_ahead_price'), sidecar.get('steps_per_day'))


def provenance_path(filepath: str) -> str:
    root, _ = os.path.splitext(filepath)
    return f"{root}.provenance.json"
