import datetime as dt
import os

import numpy as np
import pytest

import routes
from managers.feature_manager import FeatureManager
from managers.forecast_manager import ForecastManager
from managers.protocol_manager import (
    COVARIATE_ONLY,
    FORECASTER_ONLY,
    FUTUREBOOSTING,
    ProtocolManager,
    method_names,
)
from managers.simulation_manager import SimulationManager, load_scenario
from utils.config import RegressorConfig, RunConfig
from utils.errors import WindowError
from utils.features import default_factor_specs
from utils.metrics import compute_metrics
from utils.timeseries import build_rolling_splits

VARIABLES = ['day_ahead_price', 'system_load']


def make_protocol(market, standardize=False, jobs=1, cache_dir=None):
    future = FeatureManager().resolve_future_columns(market, 'ic27')
    return ProtocolManager(ForecastManager(cache_dir), VARIABLES, default_factor_specs(), future,
                           standardize=standardize, jobs=jobs)


@pytest.fixture
def regressor(quick_gbdt):
    return RegressorConfig(kind='gbdt', gbdt=quick_gbdt, compare=True)


def test_method_names(regressor):
    assert method_names(regressor) == [FORECASTER_ONLY, COVARIATE_ONLY, FUTUREBOOSTING, 'futureboosting_ridge']


def test_single_window_report(market, naive_stage1, regressor):
    splits = build_rolling_splits(['2025-04'], train_m=2, val_m=1)
    report = make_protocol(market).run_protocol(market, splits, naive_stage1, regressor)

    assert report.methods == method_names(regressor)
    (window,) = report.windows
    assert window.window_id == '2025-04'
    assert window.n_test == 30 * 24
    assert window.best_iteration is not None
    assert report.averages == window.metrics
    assert window.delta_covariate[COVARIATE_ONLY].delta_mse_pct == 0.0
    assert set(window.delta_zs) == {FUTUREBOOSTING, 'futureboosting_ridge'}
    assert 'fc_day_ahead_price' in window.feature_names
    assert report.meta['scale'] == 'raw'


def test_forecaster_only_is_the_stage1_forecast(market, naive_stage1, regressor):
    splits = build_rolling_splits(['2025-04'], train_m=2, val_m=1)
    protocol = make_protocol(market)
    prices = market.series('day_ahead_price')
    y = prices['2025-04-01':'2025-04-30 23:00'].to_numpy()
    yesterday = prices['2025-03-31':'2025-04-29 23:00'].to_numpy()

    data = protocol.prepare_window(market, splits[0], naive_stage1)
    stage1 = np.concatenate([data.forecasts[d].entries['day_ahead_price'] for d in splits[0].test_dates()])
    np.testing.assert_array_equal(stage1, yesterday)

    report = protocol.run_protocol(market, splits, naive_stage1, regressor)
    expected = compute_metrics(y, yesterday)
    got = report.windows[0].metrics[FORECASTER_ONLY]
    assert got.mse == pytest.approx(expected.mse, rel=1e-12)
    assert got.mae == pytest.approx(expected.mae, rel=1e-12)


def test_windows_in_chronological_order_whatever_the_jobs(market, naive_stage1, regressor):
    splits = build_rolling_splits(['2025-04', '2025-03'], train_m=1, val_m=1)
    serial = make_protocol(market, jobs=1).run_protocol(market, splits, naive_stage1, regressor)
    threaded = make_protocol(market, jobs=2).run_protocol(market, splits[::-1], naive_stage1, regressor)
    assert [w.window_id for w in serial.windows] == ['2025-03', '2025-04']
    assert serial.to_dict() == threaded.to_dict()


def test_average_rows(market, naive_stage1, regressor):
    splits = build_rolling_splits(['2025-03', '2025-04'], train_m=1, val_m=1)
    report = make_protocol(market).run_protocol(market, splits, naive_stage1, regressor)
    for method in report.methods:
        assert report.averages[method].mse == pytest.approx(np.mean([w.metrics[method].mse for w in report.windows]))
    fb = report.average_delta_zs[FUTUREBOOSTING]
    zs, mine = report.averages[FORECASTER_ONLY], report.averages[FUTUREBOOSTING]
    assert fb.delta_mse_pct == pytest.approx(100 * (zs.mse - mine.mse) / zs.mse)
    assert report.average_improve_zs[FUTUREBOOSTING].delta_mse_pct == pytest.approx(
        np.mean([w.delta_zs[FUTUREBOOSTING].delta_mse_pct for w in report.windows]))


def test_futureboosting_beats_the_naive_forecast(market, naive_stage1, regressor):
    splits = build_rolling_splits(['2025-04'], train_m=2, val_m=1)
    report = make_protocol(market).run_protocol(market, splits, naive_stage1, regressor)
    assert report.windows[0].delta_zs[FUTUREBOOSTING].delta_mse_pct > 0


def test_standardized_mode(market, naive_stage1):
    splits = build_rolling_splits(['2025-04'], train_m=2, val_m=1)
    ridge = RegressorConfig(kind='ridge', gbdt=None, ridge_l2=1.0, merge_validation=True)
    protocol = make_protocol(market, standardize=True)
    data = protocol.prepare_window(market, splits[0], naive_stage1)
    train_prices = data.table.between_dates(*splits[0].train_range).values('day_ahead_price')
    assert abs(np.mean(train_prices)) < 1e-9
    assert data.standardizer.fitted_on == '2025-04'

    report = protocol.run_protocol(market, splits, naive_stage1, ridge)
    assert report.meta['scale'] == 'standardized'
    assert report.windows[0].best_iteration is None
    # z-scored prices: errors are on the order of one standard deviation
    assert report.averages[FORECASTER_ONLY].mse < 10


def test_window_without_data_names_the_window(market, naive_stage1, regressor):
    splits = build_rolling_splits(['2025-05'], train_m=1, val_m=1)
    with pytest.raises(WindowError, match='window 2025-05: GapInIndexError'):
        make_protocol(market).run_protocol(market, splits, naive_stage1, regressor)


def test_warm_cache_reuses_stage1(tmp_path, market, naive_stage1, regressor):
    splits = build_rolling_splits(['2025-04'], train_m=1, val_m=1)
    make_protocol(market, cache_dir=str(tmp_path)).run_protocol(market, splits, naive_stage1, regressor)
    warm = make_protocol(market, cache_dir=str(tmp_path))
    warm.run_protocol(market, splits, naive_stage1, regressor)
    assert warm.forecast_manager.evaluations == 0
    assert warm.forecast_manager.cache_hits > 0


def test_days_without_history_are_left_out(market, naive_stage1, regressor):
    split = build_rolling_splits(['2025-03'], train_m=2, val_m=0)[0]
    data = make_protocol(market).prepare_window(market, split, naive_stage1)
    # a week of context is needed before the first forecast
    assert min(data.forecasts) == dt.date(2025, 1, 8)
    assert len(data.segment(data.enriched, 'test')) == 31 * 24


@pytest.mark.slow
def test_demo_run_beats_both_baselines():
    config = RunConfig.load(os.path.join(os.path.dirname(__file__), '..', 'configs', 'demo.yaml'))
    table = SimulationManager().generate(load_scenario(config.paths.scenario, seed=config.seed))
    splits = routes.build_splits(config)
    future = FeatureManager().resolve_future_columns(table, config.features.future_columns)
    protocol = ProtocolManager(ForecastManager(), config.stage1.variables, config.features.factors, future,
                               target=config.target_column, include_calendar=config.features.calendar, jobs=1)
    report = protocol.run_protocol(table, splits, config.stage1.specs, config.regressor)

    assert [w.window_id for w in report.windows] == ['2025-10', '2025-11', '2025-12']
    for metrics in [w.metrics for w in report.windows] + [report.averages]:
        baseline = min(metrics[FORECASTER_ONLY].mae, metrics[COVARIATE_ONLY].mae)
        assert metrics[FUTUREBOOSTING].mae <= 0.9 * baseline
