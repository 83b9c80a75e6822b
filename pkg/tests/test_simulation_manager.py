from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from managers.simulation_manager import (
    DECOMPOSITION_TERMS,
    FUTURE_COLUMNS,
    HISTORICAL_COLUMNS,
    ScenarioSpec,
    SimulationManager,
    load_scenario,
)
from utils.errors import InvalidSpecError, SpecTableMismatchError
from utils.metrics import difficulty_indicators
from utils.timeseries import AvailabilityClass


def test_same_spec_same_table(small_spec, market):
    again = SimulationManager().generate(small_spec)
    pd.testing.assert_frame_equal(market.frame, again.frame, check_exact=True)


def test_seed_changes_the_draws(small_spec, market):
    other = SimulationManager().generate(replace(small_spec, seed=8))
    assert not np.array_equal(market.values('day_ahead_price'), other.values('day_ahead_price'))


def test_table_shape_and_tags(small_spec, market):
    assert len(market) == 120 * 24
    assert market.index[0] == pd.Timestamp('2025-01-01')
    assert market.availability_of('day_ahead_price') is AvailabilityClass.TARGET
    assert all(market.availability_of(c) is AvailabilityClass.HISTORICAL_EXOGENOUS for c in HISTORICAL_COLUMNS)
    assert all(market.availability_of(c) is AvailabilityClass.FUTURE_AVAILABLE_EXOGENOUS for c in FUTURE_COLUMNS)
    assert not market.frame.isna().to_numpy().any()


def test_quarter_hour_resolution():
    table = SimulationManager().generate(ScenarioSpec(days=3, resolution=15))
    assert len(table) == 3 * 96
    assert table.steps_per_day == 96


def test_decomposition_sums_to_the_price(small_spec, market):
    terms = SimulationManager().oracle_decomposition(small_spec, market)
    assert list(terms.columns) == list(DECOMPOSITION_TERMS)
    total = terms['base'] + terms['load_term'] + terms['renewable_term'] + terms['spike_term'] + terms['noise']
    np.testing.assert_array_equal(total.to_numpy(), market.values('day_ahead_price'))


def test_no_renewables_means_no_renewable_term(small_spec):
    spec = replace(small_spec, wind_capacity=0.0, solar_capacity=0.0)
    manager = SimulationManager()
    terms = manager.oracle_decomposition(spec, manager.generate(spec))
    assert np.all(terms['renewable_term'] == 0.0)


def test_renewable_coefficient_scales_its_term(small_spec, market):
    manager = SimulationManager()
    doubled = replace(small_spec, renewable_coef=2 * small_spec.renewable_coef)
    base_terms = manager.oracle_decomposition(small_spec, market)
    doubled_terms = manager.oracle_decomposition(doubled, manager.generate(doubled))
    np.testing.assert_array_equal(doubled_terms['renewable_term'], 2 * base_terms['renewable_term'])
    np.testing.assert_array_equal(doubled_terms['load_term'], base_terms['load_term'])


def test_decomposition_needs_the_generating_spec(small_spec, market):
    manager = SimulationManager()
    with pytest.raises(SpecTableMismatchError):
        manager.oracle_decomposition(replace(small_spec, seed=99), market)
    with pytest.raises(SpecTableMismatchError):
        manager.oracle_decomposition(replace(small_spec, days=100), market)


def test_default_year_has_heavy_tails_and_jumps():
    table = SimulationManager().generate(ScenarioSpec(seed=42, days=365))
    report = difficulty_indicators(table.series('day_ahead_price'))
    assert report.excess_kurtosis > 2
    assert report.jump_freq > 0.01
    assert report.months == 12


def test_calm_scenario_is_close_to_gaussian():
    calm = ScenarioSpec(seed=42, days=365, jump_intensity=0.0, noise_df=200.0, price_level_sigma=0.0)
    manager = SimulationManager()
    table = manager.generate(calm)
    report = difficulty_indicators(table.series('day_ahead_price'))
    assert abs(report.excess_kurtosis) < 1
    assert report.jump_freq < 0.001
    assert np.all(manager.oracle_decomposition(calm, table)['spike_term'] == 0.0)


@pytest.mark.parametrize('field, value', [
    ('days', 0),
    ('resolution', 20),
    ('price_ar_phi', 1.0),
    ('noise_df', 0.0),
    ('wind_capacity', -1.0),
    ('jump_min_steps', 5),
    ('start', '2025-13-01'),
])
def test_invalid_scenarios(field, value):
    with pytest.raises(InvalidSpecError):
        ScenarioSpec(**{field: value})


def test_scenario_file(tmp_path):
    path = tmp_path / 'scenario.yaml'
    path.write_text('seed: 5\ndays: 10\nstart: 2025-06-01\nresolution: 60\n')
    spec = load_scenario(str(path))
    assert (spec.seed, spec.days, spec.start) == (5, 10, '2025-06-01')
    assert load_scenario(str(path), seed=11).seed == 11


def test_scenario_file_with_unknown_key(tmp_path):
    path = tmp_path / 'scenario.yaml'
    path.write_text('days: 10\nwind_speed: 3\n')
    with pytest.raises(InvalidSpecError, match='wind_speed'):
        load_scenario(str(path))
