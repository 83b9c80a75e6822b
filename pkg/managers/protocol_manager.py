import datetime as dt
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import psutil
from joblib import Parallel, delayed
from tqdm import tqdm

from managers.feature_manager import FeatureManager
from managers.forecast_manager import ForecastManager, ForecastSet
from models import gbdt, linreg
from models.forecasters import ForecasterSpec
from utils.config import RegressorConfig
from utils.errors import EmptyDataError, EmptyInputError, FutureBoostError, WindowError
from utils.features import FactorSpec, FeatureMatrix
from utils.logger import Logger
from utils.metrics import (
    ImprovementDelta,
    MetricPair,
    average_improvements,
    average_metrics,
    compute_metrics,
    improvement,
)
from utils.standardizer import Standardizer, apply_standardizer, fit_standardizer, identity_standardizer
from utils.timeseries import RollingSplit, TimeSeriesTable, day_windows_for

FORECASTER_ONLY = 'forecaster_only'
COVARIATE_ONLY = 'covariate_only'
FUTUREBOOSTING = 'futureboosting'


def method_names(regressor: RegressorConfig) -> List[str]:
    methods = [FORECASTER_ONLY, COVARIATE_ONLY, FUTUREBOOSTING]
    if regressor.compare:
        methods.append(f"{FUTUREBOOSTING}_{regressor.other}")
    return methods


@dataclass
class WindowData:
    """Everything one window's models are trained and scored on."""

    split: RollingSplit
    table: TimeSeriesTable
    standardizer: Standardizer
    forecasts: Dict[dt.date, ForecastSet]
    enriched: FeatureMatrix
    covariate: FeatureMatrix

    def segment(self, matrix: FeatureMatrix, name: str) -> FeatureMatrix:
        dates = {'train': self.split.train_dates, 'val': self.split.val_dates, 'test': self.split.test_dates}[name]()
        return matrix.select_dates(dates)


@dataclass
class WindowResult:
    window_id: str
    metrics: Dict[str, MetricPair]
    delta_covariate: Dict[str, ImprovementDelta]
    delta_zs: Dict[str, ImprovementDelta]
    n_train: int
    n_val: int
    n_test: int
    best_iteration: Optional[int] = None
    feature_names: List[str] = field(default_factory=list)


@dataclass
class EvaluationReport:
    """
    Per-window metrics for every method plus the AVG entry.

    AVG metrics are unweighted means over windows. ``average_delta_*`` apply
    the improvement formula to those means (the AVG rows of a results
    table); ``average_improve_*`` average the per-window deltas.
    """

    methods: List[str]
    windows: List[WindowResult]
    averages: Dict[str, MetricPair]
    average_delta_covariate: Dict[str, ImprovementDelta]
    average_delta_zs: Dict[str, ImprovementDelta]
    average_improve_covariate: Dict[str, ImprovementDelta]
    average_improve_zs: Dict[str, ImprovementDelta]
    meta: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        def deltas(d: Mapping[str, ImprovementDelta]) -> dict:
            return {m: {'delta_mse_pct': v.delta_mse_pct, 'delta_mae_pct': v.delta_mae_pct} for m, v in d.items()}

        return {
            'methods': list(self.methods),
            'windows': [
                {
                    'window_id': w.window_id,
                    'metrics': {m: asdict(p) for m, p in w.metrics.items()},
                    'delta_covariate': deltas(w.delta_covariate),
                    'delta_zs': deltas(w.delta_zs),
                    'n_train': w.n_train,
                    'n_val': w.n_val,
                    'n_test': w.n_test,
                    'best_iteration': w.best_iteration,
                    'features': list(w.feature_names),
                }
                for w in self.windows
            ],
            'average': {
                'metrics': {m: asdict(p) for m, p in self.averages.items()},
                'delta_covariate': deltas(self.average_delta_covariate),
                'delta_zs': deltas(self.average_delta_zs),
                'avg_improve_covariate': deltas(self.average_improve_covariate),
                'avg_improve_zs': deltas(self.average_improve_zs),
            },
            'meta': dict(self.meta),
        }


class ProtocolManager:
    """
    Manager class for the rolling evaluation protocol.

    Every window trains its regressors on its own train/validation days and
    scores three methods on its test days: the Stage-1 forecast of the target
    (forecaster_only), the regressor on future-available covariates only
    (covariate_only) and the regressor on the enriched matrix (futureboosting).
    """

    def __init__(self, forecast_manager: ForecastManager, variables: Sequence[str],
                 factors: Sequence[FactorSpec], future_columns: Sequence[str],
                 target: str = 'day_ahead_price', standardize: bool = False,
                 include_calendar: bool = True, jobs: int = 1):
        self.logger = Logger()
        self.forecast_manager = forecast_manager
        self.feature_manager = FeatureManager()
        self.variables = sorted(set(variables))
        self.factors = list(factors)
        self.future_columns = list(future_columns)
        self.target = target
        self.standardize = standardize
        self.include_calendar = include_calendar
        self.jobs = jobs

    @property
    def stage1_variables(self) -> List[str]:
        return sorted(set(self.variables) | {self.target})

    # window preparation

    def _window_table(self, table: TimeSeriesTable, split: RollingSplit) -> Tuple[TimeSeriesTable, Standardizer]:
        if not self.standardize:
            return table, identity_standardizer(table.columns)
        standardizer = fit_standardizer(table, train_dates=split.train_dates(), fitted_on=split.window_id)
        return apply_standardizer(table, standardizer), standardizer

    def precompute_forecasts(self, table: TimeSeriesTable, splits: Sequence[RollingSplit],
                             stage1: Mapping[str, ForecasterSpec]) -> Dict[dt.date, ForecastSet]:
        """Stage-1 forecasts for the union of all window days (raw scale)."""
        days = sorted({d for split in splits for d in split.all_dates()})
        return self.forecast_manager.forecast_days(table, self.stage1_variables, days, stage1)

    def prepare_window(self, table: TimeSeriesTable, split: RollingSplit,
                       stage1: Mapping[str, ForecasterSpec],
                       forecasts: Optional[Mapping[dt.date, ForecastSet]] = None) -> WindowData:
        """
        Standardize (reale_like), forecast and assemble both feature matrices
        for one window. Days without a Stage-1 forecast are left out.
        """
        window_table, standardizer = self._window_table(table, split)
        if forecasts is None or self.standardize:
            forecasts = self.forecast_manager.forecast_days(window_table, self.stage1_variables,
                                                            split.all_dates(), stage1)
        days = [d for d in split.all_dates() if d in forecasts]
        dropped = len(split.all_dates()) - len(days)
        if dropped:
            self.logger.warning(f"⚠️ Window {split.window_id}: {dropped} days without forecasts left out")
        if not days:
            raise EmptyDataError(f"Window {split.window_id} has no forecastable day")

        windows = day_windows_for(window_table, days)
        day_forecasts = {d: forecasts[d] for d in days}
        enriched = self.feature_manager.assemble_features(
            day_forecasts, self.factors, window_table, windows, self.future_columns,
            target=self.target, variables=self.variables, include_calendar=self.include_calendar,
        )
        covariate = self.feature_manager.assemble_features(
            None, self.factors, window_table, windows, self.future_columns,
            target=self.target, include_calendar=self.include_calendar,
        )
        return WindowData(split, window_table, standardizer, day_forecasts, enriched, covariate)

    # regressors

    @staticmethod
    def _impute(matrix: FeatureMatrix, means: pd.Series) -> FeatureMatrix:
        return FeatureMatrix(matrix.frame.fillna(means), matrix.provenance, matrix.target,
                             matrix.target_name, matrix.steps_per_day, dict(matrix.meta))

    @staticmethod
    def ridge_training_rows(regressor: RegressorConfig, train: FeatureMatrix, val: FeatureMatrix) -> FeatureMatrix:
        fit_on = FeatureMatrix.concat([train, val]) if regressor.merge_validation and len(val) else train
        fit_on = fit_on.scored()
        if len(fit_on) == 0:
            raise EmptyDataError("No scored training rows for ridge regression")
        return fit_on

    @staticmethod
    def imputation_means(matrix: FeatureMatrix) -> pd.Series:
        """Training column means filling missing ridge inputs (0 for all-missing columns)."""
        return matrix.frame.mean(axis=0, skipna=True).fillna(0.0)

    def train_regressor(self, kind: str, regressor: RegressorConfig, train: FeatureMatrix,
                        val: FeatureMatrix):
        """Fit ``kind`` ('gbdt' or 'ridge'); returns the model and the imputation means (ridge only)."""
        if kind == 'gbdt':
            params = regressor.gbdt
            if len(val.scored()) == 0:
                params = replace(params, early_stopping_rounds=0)
                return gbdt.fit(train, None, params), None
            return gbdt.fit(train, val, params), None

        fit_on = self.ridge_training_rows(regressor, train, val)
        means = self.imputation_means(fit_on)
        return linreg.fit_ridge(self._impute(fit_on, means), regressor.ridge_l2), means

    def predict_regressor(self, model, means: Optional[pd.Series], matrix: FeatureMatrix) -> np.ndarray:
        if isinstance(model, gbdt.TreeEnsemble):
            return gbdt.predict(model, matrix)
        return linreg.predict_ridge(model, self._impute(matrix, means))

    # evaluation

    def evaluate_window(self, data: WindowData, regressor: RegressorConfig) -> WindowResult:
        split = data.split
        test_enriched = data.segment(data.enriched, 'test')
        if len(test_enriched) == 0:
            raise EmptyInputError(f"Window {split.window_id} has no test rows")
        y = test_enriched.target_values()

        metrics: Dict[str, MetricPair] = {}
        stage1 = np.concatenate([data.forecasts[d].entries[self.target]
                                 for d in sorted({ts.date() for ts in test_enriched.index})])
        metrics[FORECASTER_ONLY] = compute_metrics(y, stage1)

        train_cov, val_cov = data.segment(data.covariate, 'train'), data.segment(data.covariate, 'val')
        model, means = self.train_regressor(regressor.kind, regressor, train_cov, val_cov)
        metrics[COVARIATE_ONLY] = compute_metrics(
            y, self.predict_regressor(model, means, data.segment(data.covariate, 'test')))

        train_fb, val_fb = data.segment(data.enriched, 'train'), data.segment(data.enriched, 'val')
        model, means = self.train_regressor(regressor.kind, regressor, train_fb, val_fb)
        metrics[FUTUREBOOSTING] = compute_metrics(y, self.predict_regressor(model, means, test_enriched))
        best_iteration = model.best_iteration if isinstance(model, gbdt.TreeEnsemble) else None

        if regressor.compare:
            other, other_means = self.train_regressor(regressor.other, regressor, train_fb, val_fb)
            metrics[f"{FUTUREBOOSTING}_{regressor.other}"] = compute_metrics(
                y, self.predict_regressor(other, other_means, test_enriched))

        delta_covariate = {m: improvement(metrics[COVARIATE_ONLY], p) for m, p in metrics.items()}
        delta_zs = {m: improvement(metrics[FORECASTER_ONLY], p)
                    for m, p in metrics.items() if m.startswith(FUTUREBOOSTING)}
        return WindowResult(
            window_id=split.window_id,
            metrics=metrics,
            delta_covariate=delta_covariate,
            delta_zs=delta_zs,
            n_train=len(train_fb.scored()),
            n_val=len(val_fb.scored()),
            n_test=metrics[FUTUREBOOSTING].n,
            best_iteration=best_iteration,
            feature_names=list(data.enriched.feature_names),
        )

    def _run_window(self, table: TimeSeriesTable, split: RollingSplit, stage1: Mapping[str, ForecasterSpec],
                    regressor: RegressorConfig,
                    forecasts: Optional[Mapping[dt.date, ForecastSet]]) -> WindowResult:
        try:
            data = self.prepare_window(table, split, stage1, forecasts)
            result = self.evaluate_window(data, regressor)
        except FutureBoostError as e:
            raise WindowError(split.window_id, e) from e
        rss = psutil.Process().memory_info().rss / 2 ** 20
        self.logger.debug(f"Window {split.window_id} done, RSS {rss:.0f} MiB")
        return result

    def run_protocol(self, table: TimeSeriesTable, splits: Sequence[RollingSplit],
                     stage1: Mapping[str, ForecasterSpec], stage2: RegressorConfig) -> EvaluationReport:
        """
        Evaluate every split; windows may run in parallel but the report is
        always in chronological window order.

        Raises:
            WindowError: a module error annotated with its window id
        """
        try:
            if not splits:
                raise EmptyInputError("No evaluation windows")
            ordered = sorted(splits, key=lambda s: (s.test_range[0], s.window_id))
            self.logger.info(f"🧪 Evaluating {len(ordered)} windows "
                             f"({'standardized' if self.standardize else 'raw'} scale, regressor {stage2.kind})")

            shared = None if self.standardize else self.precompute_forecasts(table, ordered, stage1)
            progress = tqdm(ordered, desc='Windows', unit='window', disable=None, leave=False)
            if self.jobs > 1 and len(ordered) > 1:
                results = Parallel(n_jobs=self.jobs, prefer='threads')(
                    delayed(self._run_window)(table, s, stage1, stage2, shared) for s in progress
                )
            else:
                results = [self._run_window(table, s, stage1, stage2, shared) for s in progress]

            methods = method_names(stage2)
            averages = {m: average_metrics([w.metrics[m] for w in results]) for m in methods}
            report = EvaluationReport(
                methods=methods,
                windows=list(results),
                averages=averages,
                average_delta_covariate={m: improvement(averages[COVARIATE_ONLY], averages[m]) for m in methods},
                average_delta_zs={m: improvement(averages[FORECASTER_ONLY], averages[m])
                                  for m in methods if m.startswith(FUTUREBOOSTING)},
                average_improve_covariate={m: average_improvements([w.delta_covariate[m] for w in results])
                                           for m in methods},
                average_improve_zs={m: average_improvements([w.delta_zs[m] for w in results])
                                    for m in methods if m.startswith(FUTUREBOOSTING)},
                meta={
                    'target': self.target,
                    'scale': 'standardized' if self.standardize else 'raw',
                    'regressor': stage2.kind,
                    'variables': self.variables,
                    'factors': [f.name for f in self.factors],
                    'future_columns': self.future_columns,
                    'forecasters': {v: s.forecaster_id for v, s in sorted(stage1.items())
                                    if v in self.stage1_variables},
                },
            )
            fb = averages[FUTUREBOOSTING]
            self.logger.success(f"📊 Protocol done: {FUTUREBOOSTING} AVG MSE {fb.mse:.2f} MAE {fb.mae:.2f}")
            return report

        except Exception as e:
            self.logger.error(f"❌ Protocol failed: {str(e)}")
            raise
