import datetime as dt

import numpy as np
import pytest

from conftest import make_table
from utils.errors import EmptyTrainingRangeError, UnknownColumnError
from utils.standardizer import apply_standardizer, fit_standardizer, identity_standardizer, invert_standardizer


def test_population_stddev():
    # one value per day, train days 1..3
    table = make_table({'day_ahead_price': np.repeat([1.0, 2.0, 3.0, 100.0], 24)})
    st = fit_standardizer(table, (dt.date(2025, 1, 1), dt.date(2025, 1, 3)))
    assert st.means['day_ahead_price'] == pytest.approx(2.0)
    assert st.stds['day_ahead_price'] == pytest.approx(np.sqrt(2.0 / 3.0))


def test_matches_brute_force_moments():
    rng = np.random.default_rng(0)
    values = rng.normal(50, 7, 24 * 10)
    values[5] = np.nan
    table = make_table({'day_ahead_price': values})
    st = fit_standardizer(table, (dt.date(2025, 1, 1), dt.date(2025, 1, 6)))
    train = values[:24 * 6]
    train = train[~np.isnan(train)]
    mean = sum(train) / len(train)
    var = sum((v - mean) ** 2 for v in train) / len(train)
    assert st.means['day_ahead_price'] == pytest.approx(mean, rel=1e-12)
    assert st.stds['day_ahead_price'] == pytest.approx(var ** 0.5, rel=1e-12)


def test_standardized_train_has_zero_mean():
    rng = np.random.default_rng(1)
    table = make_table({'day_ahead_price': rng.gamma(3, 100, 24 * 8), 'load': rng.normal(0, 1, 24 * 8)})
    train_range = (dt.date(2025, 1, 1), dt.date(2025, 1, 5))
    out = apply_standardizer(table, fit_standardizer(table, train_range))
    train = out.between_dates(*train_range)
    assert abs(np.mean(train.values('day_ahead_price'))) < 1e-12
    assert abs(np.mean(train.values('load'))) < 1e-12


def test_poisoned_test_rows_do_not_move_the_fit():
    rng = np.random.default_rng(2)
    values = rng.normal(300, 40, 24 * 10)
    poisoned = values.copy()
    poisoned[24 * 8:] = 1e12
    train_range = (dt.date(2025, 1, 1), dt.date(2025, 1, 7))
    clean = fit_standardizer(make_table({'day_ahead_price': values}), train_range)
    dirty = fit_standardizer(make_table({'day_ahead_price': poisoned}), train_range)
    assert clean.means == dirty.means
    assert clean.stds == dirty.stds


def test_constant_column_is_flagged_and_passed_through():
    table = make_table({'day_ahead_price': np.arange(48.0), 'flag': np.full(48, 7.0)})
    st = fit_standardizer(table, (dt.date(2025, 1, 1), dt.date(2025, 1, 2)))
    assert st.zero_variance == ('flag',)
    np.testing.assert_array_equal(apply_standardizer(table, st).values('flag'), np.full(48, 7.0))


def test_round_trip():
    rng = np.random.default_rng(3)
    table = make_table({'day_ahead_price': rng.standard_t(3, 24 * 4) * 500})
    st = fit_standardizer(table, (dt.date(2025, 1, 1), dt.date(2025, 1, 2)))
    z = apply_standardizer(table, st).values('day_ahead_price')
    back = invert_standardizer(z, 'day_ahead_price', st)
    assert np.max(np.abs(back - table.values('day_ahead_price'))) <= 1e-10 * np.max(np.abs(back))


def test_identity_leaves_table_unchanged():
    table = make_table({'day_ahead_price': np.arange(24.0)})
    out = apply_standardizer(table, identity_standardizer(table.columns))
    np.testing.assert_array_equal(out.values('day_ahead_price'), table.values('day_ahead_price'))


def test_unfitted_column_rejected():
    table = make_table({'day_ahead_price': np.arange(24.0), 'load': np.arange(24.0)})
    st = fit_standardizer(table, (dt.date(2025, 1, 1), dt.date(2025, 1, 1)), columns=['day_ahead_price'])
    with pytest.raises(UnknownColumnError):
        apply_standardizer(table, st, columns=['load'])


def test_empty_training_range():
    table = make_table({'day_ahead_price': np.arange(24.0)})
    with pytest.raises(EmptyTrainingRangeError):
        fit_standardizer(table, (dt.date(2024, 1, 1), dt.date(2024, 1, 31)))
