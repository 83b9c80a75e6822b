import datetime as dt
import glob
import os

import numpy as np
import pytest

from managers.forecast_manager import ForecastManager, ForecastSet
from models.forecasters import ForecasterSpec
from utils.errors import AvailabilityViolationError, HorizonMismatchError, UnknownVariableError
from utils.timeseries import TimeSeriesTable

VARIABLES = ['day_ahead_price', 'system_load']
ISSUE = dt.date(2025, 2, 10)


@pytest.fixture
def specs():
    return {
        'day_ahead_price': ForecasterSpec('ridge_lag_ar', context_length=24 * 14),
        'system_load': ForecasterSpec('seasonal_naive', context_length=48),
    }


def test_forecast_ignores_rows_after_issue_day(market, specs):
    frame = market.frame.copy()
    after = frame.index >= np.datetime64('2025-02-11')
    frame.loc[after] = frame.loc[after] * 10 + 1e6
    tampered = TimeSeriesTable(frame, market.availability, market.resolution)

    manager = ForecastManager()
    clean = manager.forecast_day(market, VARIABLES, ISSUE, specs)
    dirty = manager.forecast_day(tampered, VARIABLES, ISSUE, specs)
    for variable in VARIABLES:
        np.testing.assert_array_equal(clean.entries[variable], dirty.entries[variable])
    assert clean.horizon_day == dt.date(2025, 2, 11)
    assert clean.horizon == 24


def test_future_column_cannot_be_forecast(market, specs):
    specs = dict(specs, system_load_forecast=specs['system_load'])
    with pytest.raises(AvailabilityViolationError):
        ForecastManager().forecast_day(market, ['system_load_forecast'], ISSUE, specs)


def test_variable_without_forecaster(market, specs):
    with pytest.raises(UnknownVariableError):
        ForecastManager().forecast_day(market, ['wind_power'], ISSUE, specs)


def test_warm_cache_serves_every_entry(tmp_path, market, specs):
    days = [dt.date(2025, 3, d) for d in range(1, 8)]
    cold = ForecastManager(str(tmp_path / 'cache'))
    first = cold.forecast_days(market, VARIABLES, days, specs)
    assert cold.evaluations == len(days) * len(VARIABLES)

    warm = ForecastManager(str(tmp_path / 'cache'))
    second = warm.forecast_days(market, VARIABLES, days, specs)
    assert warm.evaluations == 0
    assert warm.cache_hits == len(days) * len(VARIABLES)
    for day in days:
        for variable in VARIABLES:
            np.testing.assert_array_equal(first[day].entries[variable], second[day].entries[variable])


def test_cache_key_changes_with_forecaster(tmp_path, market, specs):
    ForecastManager(str(tmp_path)).forecast_day(market, VARIABLES, ISSUE, specs)
    other = dict(specs, system_load=ForecasterSpec('seasonal_naive', context_length=72))
    manager = ForecastManager(str(tmp_path))
    manager.forecast_day(market, VARIABLES, ISSUE, other)
    assert manager.evaluations == 1
    assert manager.cache_hits == 1


def test_corrupt_entry_is_a_miss(tmp_path, market, specs):
    ForecastManager(str(tmp_path)).forecast_day(market, VARIABLES, ISSUE, specs)
    entries = sorted(glob.glob(os.path.join(str(tmp_path), '*.fc.csv')))
    assert len(entries) == 2
    with open(entries[0], 'a', encoding='utf-8') as f:
        f.write('25,0.0\n')

    manager = ForecastManager(str(tmp_path))
    fresh = manager.forecast_day(market, VARIABLES, ISSUE, specs)
    assert manager.evaluations == 1
    reference = ForecastManager().forecast_day(market, VARIABLES, ISSUE, specs)
    for variable in VARIABLES:
        np.testing.assert_array_equal(fresh.entries[variable], reference.entries[variable])


def test_days_without_history_are_skipped(market, specs):
    days = [dt.date(2025, 1, 3), dt.date(2025, 1, 20)]
    out = ForecastManager().forecast_days(market, VARIABLES, days, specs)
    # the ridge forecaster needs 14 days of history
    assert list(out) == [dt.date(2025, 1, 20)]


def test_exported_forecasts_load_as_external_file(tmp_path, market, specs):
    days = [dt.date(2025, 3, 1), dt.date(2025, 3, 2)]
    manager = ForecastManager()
    computed = manager.forecast_days(market, VARIABLES, days, specs)
    path = str(tmp_path / 'forecasts.csv')
    manager.export_forecasts(computed, path)

    external = {v: ForecasterSpec('external_file', params={'path': path}) for v in VARIABLES}
    loaded = ForecastManager().forecast_days(market, VARIABLES, days, external)
    for day in days:
        for variable in VARIABLES:
            np.testing.assert_array_equal(loaded[day].entries[variable], computed[day].entries[variable])
        assert loaded[day].forecaster_id.startswith('external:')


def test_exported_values_reload_bit_for_bit(tmp_path):
    rng = np.random.default_rng(3)
    values = {'day_ahead_price': rng.normal(350.0, 120.0, 24) / 7, 'system_load': rng.normal(3e4, 5e3, 24) / 3}
    values['day_ahead_price'][0] = 0.1 + 0.2
    sets = {ISSUE + dt.timedelta(days=1): ForecastSet(ISSUE, ISSUE + dt.timedelta(days=1), values)}
    path = str(tmp_path / 'forecasts.csv')
    manager = ForecastManager()
    manager.export_forecasts(sets, path)

    loaded = manager.load_external_forecasts(path, ISSUE, VARIABLES, 24)
    for variable in VARIABLES:
        assert loaded.entries[variable].tobytes() == values[variable].tobytes()


def test_external_file_with_short_horizon(tmp_path):
    path = tmp_path / 'external.csv'
    path.write_text('variable,issue_day,step,value\n' + ''.join(
        f"day_ahead_price,2025-03-01,{h},1.0\n" for h in range(1, 24)))
    with pytest.raises(HorizonMismatchError):
        ForecastManager().load_external_forecasts(str(path), dt.date(2025, 3, 1), ['day_ahead_price'], 24)


def test_forecast_set_rejects_ragged_entries():
    with pytest.raises(HorizonMismatchError):
        ForecastSet(ISSUE, ISSUE + dt.timedelta(days=1), {'a': np.zeros(24), 'b': np.zeros(23)})
