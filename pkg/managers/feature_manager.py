import datetime as dt
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from managers.forecast_manager import ForecastSet
from utils.errors import AvailabilityViolationError, ColumnCollisionError, MissingForecastError
from utils.features import (
    FORECAST_PREFIX,
    FactorSpec,
    FeatureMatrix,
    Provenance,
    calendar_features,
    forecast_feature_name,
)
from utils.logger import Logger
from utils.schemas import CALENDAR_FIELDS, get_schema
from utils.timeseries import AvailabilityClass, DayWindow, TimeSeriesTable

FACTOR_INPUTS = (AvailabilityClass.FUTURE_AVAILABLE_EXOGENOUS, AvailabilityClass.FORECASTED_FEATURE)


class FeatureManager:
    """Manager class for assembling the enriched feature matrix F = [forecasts, factors, future, calendar]."""

    def __init__(self):
        self.logger = Logger()

    def resolve_future_columns(self, table: TimeSeriesTable,
                               selection: Union[str, Sequence[str], None]) -> List[str]:
        """
        Future-available columns to feed the regressor.

        ``selection`` is None (every future_available column), a schema name
        (its members present in the table) or an explicit list of columns.
        """
        available = table.columns_with(AvailabilityClass.FUTURE_AVAILABLE_EXOGENOUS)
        if selection is None:
            return available
        if isinstance(selection, str):
            schema = get_schema(selection)
            chosen = [c for c in schema if c in available]
            absent = [c for c in schema if c not in available and c not in CALENDAR_FIELDS]
            if absent:
                self.logger.debug(f"Schema {selection}: {len(absent)} members not in table ({absent[:5]}...)")
            return chosen
        for column in selection:
            tag = table.availability_of(column)
            if tag != AvailabilityClass.FUTURE_AVAILABLE_EXOGENOUS:
                raise AvailabilityViolationError(
                    f"Column '{column}' is {tag.value}, only future_available columns may be used as features"
                )
        return list(selection)

    def _factor_inputs(self, factor: FactorSpec, table: TimeSeriesTable, rows: pd.DatetimeIndex,
                       forecast_block: Dict[str, np.ndarray]) -> Optional[Dict[str, np.ndarray]]:
        inputs = {}
        for column in factor.columns:
            if column in forecast_block:
                inputs[column] = forecast_block[column]
                continue
            if column.startswith(FORECAST_PREFIX) or column not in table.availability:
                if factor.optional:
                    return None
                raise MissingForecastError(f"Factor '{factor.name}': input '{column}' is not available")
            tag = table.availability[column]
            if tag not in FACTOR_INPUTS:
                raise AvailabilityViolationError(
                    f"Factor '{factor.name}' binds '{column}' ({tag.value}); "
                    f"factors may only read future_available or forecasted columns"
                )
            inputs[column] = table.frame.loc[rows, column].to_numpy(dtype=np.float64)
        return inputs

    def assemble_features(self, forecasts: Optional[Mapping[dt.date, ForecastSet]],
                          factors: Sequence[FactorSpec], table: TimeSeriesTable,
                          windows: Sequence[DayWindow], future_columns: Sequence[str],
                          target: str = 'day_ahead_price', variables: Optional[Sequence[str]] = None,
                          include_calendar: bool = True) -> FeatureMatrix:
        """
        Build the feature matrix for ``windows`` (sorted by day whatever the input order).

        ``forecasts`` maps horizon day -> ForecastSet; pass None for the
        covariate-only matrix, in which case factors reading Stage-1 outputs are
        left out. ``variables`` restricts which forecasted variables become
        ``fc_<variable>`` features (default: all in each set).

        Raises:
            AvailabilityViolationError: a bound or selected column is not plannable
            MissingForecastError: a window lacks its ForecastSet or a variable
        """
        windows = sorted(windows, key=lambda w: w.day)
        rows = pd.DatetimeIndex(np.concatenate([w.steps.asi8 for w in windows]) if windows else [])
        horizon = table.steps_per_day
        table.require(target)

        for column in future_columns:
            tag = table.availability_of(column)
            if tag != AvailabilityClass.FUTURE_AVAILABLE_EXOGENOUS:
                raise AvailabilityViolationError(f"Column '{column}' ({tag.value}) cannot be a feature")

        blocks: Dict[str, np.ndarray] = {}
        provenance: Dict[str, Provenance] = {}

        if forecasts is not None:
            if variables is None:
                first = next((forecasts[w.day] for w in windows if w.day in forecasts), None)
                variables = sorted(first.entries) if first else []
            variables = sorted(set(variables))
            stacked = {v: [] for v in variables}
            for window in windows:
                forecast_set = forecasts.get(window.day)
                if forecast_set is None:
                    raise MissingForecastError(f"No forecasts for day {window.day} (variables {variables})")
                for variable in variables:
                    if variable not in forecast_set.entries:
                        raise MissingForecastError(f"No forecast for ({window.day}, {variable})")
                    values = forecast_set.entries[variable]
                    if values.size != horizon:
                        raise MissingForecastError(f"Forecast ({window.day}, {variable}) has {values.size} steps")
                    stacked[variable].append(values)
            for variable in variables:
                name = forecast_feature_name(variable)
                blocks[name] = np.concatenate(stacked[variable]) if windows else np.zeros(0)
                provenance[name] = Provenance.FORECASTED_FEATURE

        for factor in factors:
            if forecasts is None and factor.uses_forecasts():
                self.logger.debug(f"Factor {factor.name} reads Stage-1 outputs, left out of covariate-only matrix")
                continue
            inputs = self._factor_inputs(factor, table, rows, blocks)
            if inputs is None:
                self.logger.info(f"ℹ️ Optional factor {factor.name} skipped: bound column absent")
                continue
            if factor.name in blocks:
                raise ColumnCollisionError(f"Feature '{factor.name}' defined twice")
            blocks[factor.name] = factor.evaluate(inputs)
            provenance[factor.name] = Provenance.CONSTRUCTED_FACTOR

        for column in future_columns:
            if column in blocks:
                raise ColumnCollisionError(f"Feature '{column}' defined twice")
            blocks[column] = table.frame.loc[rows, column].to_numpy(dtype=np.float64)
            provenance[column] = Provenance.FUTURE_AVAILABLE

        if include_calendar:
            calendar = pd.concat([calendar_features(w) for w in windows]) if windows else None
            for name in CALENDAR_FIELDS:
                if name in blocks:
                    raise ColumnCollisionError(f"Feature '{name}' defined twice")
                blocks[name] = calendar[name].to_numpy(dtype=np.float64) if calendar is not None else np.zeros(0)
                provenance[name] = Provenance.CALENDAR

        frame = pd.DataFrame(blocks, index=rows)
        target_values = pd.Series(table.frame.loc[rows, target].to_numpy(dtype=np.float64), index=rows, name=target)
        matrix = FeatureMatrix(frame, provenance, target_values, target_name=target, steps_per_day=horizon)
        self.logger.debug(f"🧩 Assembled {len(matrix)} rows × {len(matrix.feature_names)} features")
        return matrix
