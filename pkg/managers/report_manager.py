import os
import json
import math
from typing import Dict, List, Optional

from managers.protocol_manager import EvaluationReport
from utils.errors import EmptyInputError
from utils.fs_utils import FSUtils
from utils.logger import Logger
from utils.metrics import DifficultyReport, ImprovementDelta

REPORT_COLUMNS = ['window', 'method', 'mse', 'mse_delta_covariate', 'mse_delta_zs',
                  'mae', 'mae_delta_covariate', 'mae_delta_zs']
AVERAGE_ROW = 'AVG'


def _fmt(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ''
    return f"{value:.6f}"


def _delta(deltas: Dict[str, ImprovementDelta], method: str, metric: str) -> Optional[float]:
    delta = deltas.get(method)
    if delta is None:
        return None
    return delta.delta_mse_pct if metric == 'mse' else delta.delta_mae_pct


class ReportManager:
    """Manager class for writing evaluation and difficulty reports."""

    def __init__(self):
        self.logger = Logger()
        self.fs = FSUtils()

    def report_rows(self, report: EvaluationReport) -> List[List[str]]:
        """
        Results-table layout: one row per (window, method), then the AVG rows.

        Deltas are percent improvements over the covariate-only regressor and
        over the Stage-1 forecaster; a blank cell means not applicable.
        """
        if not report.methods:
            raise EmptyInputError("Report has no methods")
        entries = [(w.window_id, w.metrics, w.delta_covariate, w.delta_zs) for w in report.windows]
        entries.append((AVERAGE_ROW, report.averages, report.average_delta_covariate, report.average_delta_zs))

        rows = []
        for window_id, metrics, delta_covariate, delta_zs in entries:
            for method in report.methods:
                pair = metrics[method]
                rows.append([
                    window_id,
                    method,
                    _fmt(pair.mse),
                    _fmt(_delta(delta_covariate, method, 'mse')),
                    _fmt(_delta(delta_zs, method, 'mse')),
                    _fmt(pair.mae),
                    _fmt(_delta(delta_covariate, method, 'mae')),
                    _fmt(_delta(delta_zs, method, 'mae')),
                ])
        return rows

    def render_report(self, report: EvaluationReport, output_dir: str) -> Dict[str, str]:
        """Write ``report.csv`` and ``report.json``; returns their paths."""
        try:
            rows = self.report_rows(report)
            self.fs.ensure_dir(output_dir)
            csv_path = os.path.join(output_dir, 'report.csv')
            json_path = os.path.join(output_dir, 'report.json')

            lines = [','.join(REPORT_COLUMNS)] + [','.join(row) for row in rows]
            self.fs.atomic_write_text(csv_path, '\n'.join(lines) + '\n')
            self.fs.atomic_write_text(json_path, json.dumps(report.to_dict(), indent=2, sort_keys=True) + '\n')

            self.logger.success(f"📊 Report written to {csv_path} ({len(report.windows)} windows)")
            return {'csv': csv_path, 'json': json_path}

        except Exception as e:
            self.logger.error(f"❌ Failed to render report: {str(e)}")
            raise

    def load_report(self, output_dir: str) -> dict:
        with open(os.path.join(output_dir, 'report.json'), 'r', encoding='utf-8') as f:
            return json.load(f)

    def write_difficulty(self, difficulty: DifficultyReport, filepath: str):
        """``indicator,value`` rows in field order."""
        lines = ['indicator,value']
        for name, value in difficulty.to_dict().items():
            lines.append(f"{name},{value!r}" if isinstance(value, float) else f"{name},{value}")
        self.fs.atomic_write_text(filepath, '\n'.join(lines) + '\n')
        self.logger.info(f"📈 Difficulty indicators written to {filepath}")
