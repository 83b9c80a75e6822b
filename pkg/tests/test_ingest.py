import numpy as np
import pandas as pd
import pytest
import yaml

from managers.ingest_manager import ColumnSpec, IngestManager
from utils.errors import ColumnCollisionError, ConfigError, DuplicateTimestampError, UnparsableTimestampError
from utils.schemas import canonical_name, get_schema
from utils.timeseries import AvailabilityClass


def write_csv(path, rows, header='timestamp,value'):
    path.write_text(header + '\n' + '\n'.join(rows) + '\n', encoding='utf-8')
    return str(path)


def hourly_rows(start, n, offset=0.0):
    stamps = pd.date_range(start, periods=n, freq='60min')
    return [f"{ts.strftime('%Y-%m-%dT%H:%M:%S')},{offset + i}" for i, ts in enumerate(stamps)]


def spec(path, name, tag=AvailabilityClass.FUTURE_AVAILABLE_EXOGENOUS):
    return ColumnSpec(source_file=path, source_column='value', canonical_name=name, availability=tag, unit='MW')


def test_identical_grids_align_without_gaps(tmp_path):
    a = write_csv(tmp_path / 'a.csv', hourly_rows('2025-01-01', 48))
    b = write_csv(tmp_path / 'b.csv', hourly_rows('2025-01-01', 48, offset=100))
    table = IngestManager().ingest_sources([spec(a, 'day_ahead_price', AvailabilityClass.TARGET),
                                            spec(b, 'system_load_forecast')], resolution=60)
    assert table.columns == ['day_ahead_price', 'system_load_forecast']
    assert len(table) == 48
    assert not table.frame.isna().any().any()
    assert table.values('system_load_forecast')[0] == 100.0


def test_disjoint_months_give_complementary_masks(tmp_path):
    a = write_csv(tmp_path / 'jan.csv', hourly_rows('2025-01-31', 24))
    b = write_csv(tmp_path / 'feb.csv', hourly_rows('2025-02-01', 24))
    table = IngestManager().ingest_sources([spec(a, 'load_jan'), spec(b, 'load_feb')], resolution=60)
    assert len(table) == 48
    np.testing.assert_array_equal(table.missing_mask('load_jan'), ~table.missing_mask('load_feb'))


def test_ffill_fills_exogenous_only(tmp_path):
    a = write_csv(tmp_path / 'p.csv', hourly_rows('2025-01-01', 48))
    b = write_csv(tmp_path / 'x.csv', hourly_rows('2025-01-01', 24))
    table = IngestManager().ingest_sources([spec(a, 'day_ahead_price', AvailabilityClass.TARGET),
                                            spec(b, 'plan')], resolution=60, impute='ffill')
    assert not np.any(table.missing_mask('plan'))
    assert table.values('plan')[-1] == 23.0


def test_duplicate_timestamp_names_file_and_time(tmp_path):
    rows = hourly_rows('2025-01-01', 3)
    path = write_csv(tmp_path / 'dup.csv', rows + [rows[1]])
    with pytest.raises(DuplicateTimestampError, match=r"dup\.csv.*2025-01-01 01:00"):
        IngestManager().ingest_sources([spec(path, 'plan')], resolution=60)


def test_unparsable_timestamp(tmp_path):
    path = write_csv(tmp_path / 'bad.csv', ['yesterday,1.0'])
    with pytest.raises(UnparsableTimestampError, match='yesterday'):
        IngestManager().ingest_sources([spec(path, 'plan')], resolution=60)


def test_canonical_name_collision(tmp_path):
    a = write_csv(tmp_path / 'a.csv', hourly_rows('2025-01-01', 2))
    with pytest.raises(ColumnCollisionError):
        IngestManager().ingest_sources([spec(a, 'plan'), spec(a, 'plan')], resolution=60)


def test_non_utf8_source_is_decoded(tmp_path):
    path = tmp_path / 'gbk.csv'
    note = '山西省电力现货市场日前出清价格'
    content = 'timestamp,价格,备注\n' + ''.join(f"{r},{note}\n" for r in hourly_rows('2025-01-01', 24))
    path.write_bytes(content.encode('gb18030'))
    column = ColumnSpec(str(path), '价格', 'day_ahead_price', AvailabilityClass.TARGET)
    table = IngestManager().ingest_sources([column], resolution=60)
    assert table.values('day_ahead_price')[3] == 3.0


def test_registry_round_trip(tmp_path):
    write_csv(tmp_path / 'prices.csv', hourly_rows('2025-01-01', 24))
    registry = tmp_path / 'registry.yaml'
    registry.write_text(yaml.safe_dump({
        'resolution': 60,
        'columns': [{'file': 'prices.csv', 'source_column': 'value', 'canonical_name': 'day_ahead_price',
                     'availability': 'target', 'unit': 'CNY/MWh'}],
    }))
    manager = IngestManager()
    table = manager.ingest(str(registry))
    out = tmp_path / 'table.csv'
    manager.write_table(table, str(out))
    first = out.read_bytes()
    loaded = manager.load_table(str(out))
    assert loaded.units == {'day_ahead_price': 'CNY/MWh'}
    assert loaded.availability_of('day_ahead_price') is AvailabilityClass.TARGET
    np.testing.assert_array_equal(loaded.values('day_ahead_price'), table.values('day_ahead_price'))
    manager.write_table(loaded, str(out))
    assert out.read_bytes() == first


def test_written_table_keeps_exact_floats(tmp_path, market):
    manager = IngestManager()
    path = tmp_path / 'market.csv'
    manager.write_table(market, str(path))
    loaded = manager.load_table(str(path))
    np.testing.assert_array_equal(loaded.values('day_ahead_price'), market.values('day_ahead_price'))
    assert loaded.columns == market.columns


def test_registry_rejects_unknown_keys(tmp_path):
    registry = tmp_path / 'registry.yaml'
    registry.write_text(yaml.safe_dump({'columns': [], 'timezone': 'UTC'}))
    with pytest.raises(ConfigError):
        IngestManager().load_registry(str(registry))


def test_schema_names_are_canonical():
    assert canonical_name('Day-ahead Total Load Forecast [MW]') == 'day_ahead_total_load_forecast_mw'
    assert len(get_schema('ic27')) == 27
    with pytest.raises(ConfigError):
        get_schema('nope')
