import csv
import json

import numpy as np
import pytest

from managers.protocol_manager import (
    COVARIATE_ONLY,
    FORECASTER_ONLY,
    FUTUREBOOSTING,
    EvaluationReport,
    WindowResult,
)
from managers.report_manager import REPORT_COLUMNS, ReportManager
from utils.errors import EmptyInputError
from utils.metrics import MetricPair, difficulty_indicators, improvement

METHODS = [FORECASTER_ONLY, COVARIATE_ONLY, FUTUREBOOSTING]


def window(window_id, zs, cov, fb):
    metrics = {FORECASTER_ONLY: zs, COVARIATE_ONLY: cov, FUTUREBOOSTING: fb}
    return WindowResult(
        window_id=window_id,
        metrics=metrics,
        delta_covariate={m: improvement(cov, p) for m, p in metrics.items()},
        delta_zs={FUTUREBOOSTING: improvement(zs, fb)},
        n_train=100, n_val=20, n_test=fb.n,
    )


@pytest.fixture
def report():
    windows = [
        window('2025-03', MetricPair(76278.90, 180.0, 744), MetricPair(35658.52, 100.53, 744),
               MetricPair(33978.45, 94.78, 744)),
        window('2025-04', MetricPair(200.0, 12.0, 720), MetricPair(100.0, 8.0, 720), MetricPair(80.0, 7.0, 720)),
    ]
    averages = {m: MetricPair(float(np.mean([w.metrics[m].mse for w in windows])),
                              float(np.mean([w.metrics[m].mae for w in windows])), 1464) for m in METHODS}
    return EvaluationReport(
        methods=METHODS,
        windows=windows,
        averages=averages,
        average_delta_covariate={m: improvement(averages[COVARIATE_ONLY], averages[m]) for m in METHODS},
        average_delta_zs={FUTUREBOOSTING: improvement(averages[FORECASTER_ONLY], averages[FUTUREBOOSTING])},
        average_improve_covariate={},
        average_improve_zs={},
        meta={'scale': 'raw'},
    )


def read_rows(path):
    with open(path, newline='') as f:
        return list(csv.DictReader(f))


def test_report_table_layout(tmp_path, report):
    paths = ReportManager().render_report(report, str(tmp_path))
    with open(paths['csv']) as f:
        assert f.readline().strip() == ','.join(REPORT_COLUMNS)
    rows = read_rows(paths['csv'])
    assert len(rows) == 3 * 3
    assert [r['window'] for r in rows] == ['2025-03'] * 3 + ['2025-04'] * 3 + ['AVG'] * 3
    assert [r['method'] for r in rows[:3]] == METHODS


def test_report_deltas_and_blank_cells(tmp_path, report):
    rows = read_rows(ReportManager().render_report(report, str(tmp_path))['csv'])
    fb = rows[2]
    assert round(float(fb['mse_delta_covariate']), 2) == 4.71
    assert round(float(fb['mae_delta_covariate']), 2) == 5.72
    assert round(float(fb['mse_delta_zs']), 2) == 55.45
    assert rows[0]['mse_delta_zs'] == ''
    assert rows[1]['mae_delta_zs'] == ''
    assert float(rows[1]['mse_delta_covariate']) == 0.0


def test_average_rows_follow_the_means(tmp_path, report):
    rows = read_rows(ReportManager().render_report(report, str(tmp_path))['csv'])
    avg_fb = rows[-1]
    assert float(avg_fb['mse']) == pytest.approx((33978.45 + 80.0) / 2, abs=1e-6)
    expected = 100 * (report.averages[COVARIATE_ONLY].mse - report.averages[FUTUREBOOSTING].mse) \
        / report.averages[COVARIATE_ONLY].mse
    assert float(avg_fb['mse_delta_covariate']) == pytest.approx(expected, abs=1e-6)


def test_json_mirrors_the_report(tmp_path, report):
    manager = ReportManager()
    manager.render_report(report, str(tmp_path))
    data = manager.load_report(str(tmp_path))
    assert data == json.loads(json.dumps(report.to_dict()))
    assert data['windows'][1]['metrics'][FUTUREBOOSTING]['n'] == 720
    assert data['meta']['scale'] == 'raw'


def test_rendering_twice_gives_identical_bytes(tmp_path, report):
    manager = ReportManager()
    first = manager.render_report(report, str(tmp_path / 'a'))
    second = manager.render_report(report, str(tmp_path / 'b'))
    for key in ('csv', 'json'):
        with open(first[key], 'rb') as a, open(second[key], 'rb') as b:
            assert a.read() == b.read()


def test_report_without_methods(tmp_path, report):
    report.methods = []
    with pytest.raises(EmptyInputError):
        ReportManager().render_report(report, str(tmp_path))


def test_difficulty_file(tmp_path):
    rng = np.random.default_rng(0)
    difficulty = difficulty_indicators(rng.normal(300, 40, 2000), months=np.repeat([1, 2], 1000))
    path = tmp_path / 'difficulty.csv'
    ReportManager().write_difficulty(difficulty, str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == 'indicator,value'
    values = dict(line.split(',') for line in lines[1:])
    assert list(values) == list(difficulty.to_dict())
    assert int(values['n']) == 2000
    assert float(values['excess_kurtosis']) == difficulty.excess_kurtosis
