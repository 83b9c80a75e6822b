import os
import sys
import json
import logging
import argparse

import numpy as np
import pandas as pd

from managers.explain_manager import ExplainManager
from managers.feature_manager import FeatureManager
from managers.forecast_manager import ForecastManager
from managers.ingest_manager import IngestManager
from managers.protocol_manager import ProtocolManager
from managers.report_manager import ReportManager
from managers.simulation_manager import ScenarioSpec, SimulationManager, load_scenario
from models import gbdt, linreg
from utils.config import RunConfig
from utils.errors import ConfigError, FutureBoostError
from utils.fs_utils import FSUtils
from utils.logger import Logger
from utils.metrics import difficulty_indicators
from utils.timeseries import build_ratio_split, build_rolling_splits, load_holiday_calendar

COMMANDS = ('simulate', 'ingest', 'forecast', 'features', 'train', 'predict', 'evaluate', 'explain', 'report')
LOG_FILE = 'futureboost.log'


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='futureboost', description='Two-stage day-ahead price forecasting')
    parser.add_argument('command', choices=COMMANDS)
    parser.add_argument('--config', required=True, help='Run configuration (YAML)')
    parser.add_argument('--seed', type=int, help='Override the config seed')
    parser.add_argument('--jobs', type=int, help='Worker threads (default: physical cores)')
    parser.add_argument('--dry-run', action='store_true', help='Validate config and print the plan only')
    parser.add_argument('--verbose', action='store_true', help='Show debug information')
    parser.add_argument('--window', help='Evaluation window id (YYYY-MM, or "ratio"); default the last one')
    parser.add_argument('--instance', help='Timestamp of the row to explain')
    parser.add_argument('--registry', help='Column registry for ingest (overrides paths.registry)')
    parser.add_argument('--impute', choices=('mask', 'ffill'), default='mask', help='Gap handling for ingest')
    return parser


def build_splits(config: RunConfig, data_start=None):
    protocol = config.protocol
    holidays = load_holiday_calendar(protocol.holidays) if protocol.holidays else frozenset()
    if protocol.scheme == 'ratio':
        return [build_ratio_split(pd.Timestamp(protocol.start).date(), pd.Timestamp(protocol.end).date(),
                                  protocol.ratios, protocol.workday_filter, holidays)]
    return build_rolling_splits(protocol.months, protocol.train_m, protocol.val_m,
                                protocol.workday_filter, holidays, data_start=data_start)


def select_split(splits, window_id=None, instance=None):
    """Named window, else the window whose test range holds ``instance``, else the last one."""
    if window_id is None and instance is not None:
        day = pd.Timestamp(instance).date()
        for split in splits:
            if split.test_range[0] <= day <= split.test_range[1]:
                return split
    if window_id is None:
        return splits[-1]
    for split in splits:
        if split.window_id == window_id:
            return split
    raise ConfigError(f"Unknown window '{window_id}' (configured: {[s.window_id for s in splits]})")


def build_protocol(config: RunConfig, table) -> ProtocolManager:
    future = FeatureManager().resolve_future_columns(table, config.features.future_columns)
    forecast_manager = ForecastManager(config.paths.cache, jobs=config.jobs)
    return ProtocolManager(forecast_manager, config.stage1.variables, config.features.factors, future,
                           target=config.target_column, standardize=config.standardize,
                           include_calendar=config.features.calendar, jobs=config.jobs)


def model_path(config: RunConfig, window_id: str, kind: str) -> str:
    return os.path.join(config.paths.output, f"model_{window_id}.{kind}")


def print_plan(config: RunConfig, command: str):
    plan = config.plan()
    plan['command'] = command
    plan['windows'] = [s.window_id for s in build_splits(config)] if command not in ('simulate', 'ingest') else []
    print(json.dumps(plan, indent=2, sort_keys=True, default=str))


def run_simulate(config: RunConfig, logger: Logger):
    spec = load_scenario(config.paths.scenario, seed=config.seed) if config.paths.scenario \
        else ScenarioSpec(seed=config.seed)
    table = SimulationManager().generate(spec)
    IngestManager().write_table(table, config.paths.data)
    logger.success(f"✅ Synthetic market written to {config.paths.data}")


def run_ingest(config: RunConfig, args, logger: Logger):
    registry = args.registry or config.paths.registry
    if not registry:
        raise ConfigError("ingest needs paths.registry in the config or --registry")
    manager = IngestManager(jobs=config.jobs)
    table = manager.ingest(registry, impute=args.impute)
    manager.write_table(table, config.paths.data)


def run_pipeline_command(config: RunConfig, args, logger: Logger):
    table = IngestManager().load_table(config.paths.data)
    splits = build_splits(config, data_start=table.index[0].date())
    protocol = build_protocol(config, table)
    output = config.paths.output
    stage1 = config.stage1.specs

    if args.command == 'forecast':
        forecasts = protocol.precompute_forecasts(table, splits, stage1)
        protocol.forecast_manager.export_forecasts(forecasts, os.path.join(output, 'forecasts.csv'))
        return

    if args.command == 'evaluate':
        report = protocol.run_protocol(table, splits, stage1, config.regressor)
        reports = ReportManager()
        reports.render_report(report, output)
        write_difficulty(config, table, reports)
        return

    split = select_split(splits, args.window, args.instance)
    data = protocol.prepare_window(table, split, stage1)
    regressor = config.regressor

    if args.command == 'features':
        data.enriched.to_csv(os.path.join(output, f"features_{split.window_id}.csv"))
        data.covariate.to_csv(os.path.join(output, f"covariates_{split.window_id}.csv"))
        logger.success(f"🧩 Feature matrices for window {split.window_id} written to {output}")
        return

    train, val = data.segment(data.enriched, 'train'), data.segment(data.enriched, 'val')
    test = data.segment(data.enriched, 'test')
    path = model_path(config, split.window_id, regressor.kind)

    if args.command == 'train':
        model, _ = protocol.train_regressor(regressor.kind, regressor, train, val)
        if regressor.kind == 'gbdt':
            gbdt.save_model(model, path)
        else:
            linreg.save_ridge(model, path)
        logger.success(f"💾 Model for window {split.window_id} saved to {path}")
        return

    if args.command == 'predict':
        if not os.path.exists(path):
            raise ConfigError(f"No trained model at {path}; run 'train' first")
        if regressor.kind == 'gbdt':
            model, means = gbdt.load_model(path), None
        else:
            model = linreg.load_ridge(path)
            means = protocol.imputation_means(protocol.ridge_training_rows(regressor, train, val))
        prediction = protocol.predict_regressor(model, means, test)
        frame = pd.DataFrame({'prediction': prediction, 'target': test.target_values()}, index=test.index)
        frame.index.name = 'timestamp'
        target_path = os.path.join(output, f"predictions_{split.window_id}.csv")
        FSUtils().atomic_write_text(
            target_path, frame.to_csv(date_format='%Y-%m-%dT%H:%M:%S', float_format='%.17g', lineterminator='\n'))
        logger.success(f"📈 {len(frame)} predictions written to {target_path}")
        return

    if args.command == 'explain':
        if regressor.kind != 'gbdt':
            raise ConfigError("explain works on gbdt models only")
        model = gbdt.load_model(path) if os.path.exists(path) else \
            protocol.train_regressor('gbdt', regressor, train, val)[0]
        explainer = ExplainManager(jobs=config.jobs)
        importance = explainer.global_importance(model, test, max_rows=config.explain.max_rows)
        instance = args.instance or str(test.index[0])
        attribution = explainer.explain_instance(model, test, pd.Timestamp(instance))
        record = explainer.export_waterfall(attribution, config.explain.top_k)
        explainer.write_waterfall(record, output)
        explainer.write_importance(importance, output)
        logger.info(f"🔎 {attribution.instance_id}: base {record.base_value:.2f} → prediction {record.prediction:.2f}")


def write_difficulty(config: RunConfig, table, reports: ReportManager):
    prices = table.series(config.target_column)
    report = difficulty_indicators(prices, theta=config.metrics.extreme_threshold,
                                   jump_theta=config.metrics.jump_threshold)
    reports.write_difficulty(report, os.path.join(config.paths.output, 'difficulty.csv'))


def run_report(config: RunConfig, logger: Logger):
    reports = ReportManager()
    data = reports.load_report(config.paths.output)
    average = data['average']
    print(f"{'method':<28}{'MSE':>14}{'MAE':>12}{'ΔMSE cov %':>13}{'ΔMSE zs %':>12}")
    for method in data['methods']:
        pair = average['metrics'][method]
        cov = average['delta_covariate'].get(method, {}).get('delta_mse_pct', np.nan)
        zs = average['delta_zs'].get(method, {}).get('delta_mse_pct', np.nan)
        print(f"{method:<28}{pair['mse']:>14.2f}{pair['mae']:>12.2f}{cov:>13.2f}{zs:>12.2f}")
    write_difficulty(config, IngestManager().load_table(config.paths.data), reports)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    Logger.set_global_level(logging.DEBUG if args.verbose else logging.SUCCESS)
    logger = Logger()

    try:
        config = RunConfig.load(args.config, {'seed': args.seed, 'jobs': args.jobs})
        if args.dry_run:
            print_plan(config, args.command)
            return 0

        os.makedirs(config.paths.output, exist_ok=True)
        Logger.set_log_file(os.path.join(config.paths.output, LOG_FILE))
        logger.info(f"🚀 futureboost {args.command} (config {config.source}, seed {config.seed}, jobs {config.jobs})")

        # Route commands to the managers
        if args.command == 'simulate':
            run_simulate(config, logger)
        elif args.command == 'ingest':
            run_ingest(config, args, logger)
        elif args.command == 'report':
            run_report(config, logger)
        else:
            run_pipeline_command(config, args, logger)
        return 0

    except (FutureBoostError, OSError) as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
