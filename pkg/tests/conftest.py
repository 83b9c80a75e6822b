import numpy as np
import pandas as pd
import pytest

from managers.simulation_manager import ScenarioSpec, SimulationManager
from models.forecasters import ForecasterSpec
from models.gbdt import LEAF, GbdtParams, Tree, TreeEnsemble
from utils.timeseries import AvailabilityClass, TimeSeriesTable


def make_table(columns, start='2025-01-01', resolution=60, availability=None):
    """Table from {name: values}; prices are targets, everything else future-available."""
    n = len(next(iter(columns.values())))
    index = pd.date_range(start, periods=n, freq=f"{resolution}min", name='timestamp')
    frame = pd.DataFrame({k: np.asarray(v, dtype=np.float64) for k, v in columns.items()}, index=index)
    tags = {}
    for name in frame.columns:
        if availability and name in availability:
            tags[name] = availability[name]
        elif name.endswith('_price'):
            tags[name] = AvailabilityClass.TARGET
        else:
            tags[name] = AvailabilityClass.FUTURE_AVAILABLE_EXOGENOUS
    return TimeSeriesTable(frame, tags, resolution)


def make_tree(feature, threshold, left, right, value, cover, default_left=None):
    feature = np.asarray(feature, dtype=np.int64)
    return Tree(
        feature=feature,
        threshold=np.asarray(threshold, dtype=np.float64),
        threshold_bin=np.where(feature == LEAF, -1, 0).astype(np.int64),
        default_left=np.asarray(default_left if default_left is not None else [True] * feature.size, dtype=bool),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=np.float64),
        cover=np.asarray(cover, dtype=np.float64),
    )


def make_ensemble(trees, n_features, base_score=0.0):
    return TreeEnsemble(base_score=base_score, trees=list(trees),
                        feature_names=[f"x{j}" for j in range(n_features)],
                        params=GbdtParams(), best_iteration=len(trees))


@pytest.fixture
def small_spec():
    # 2025-01-01 .. 2025-04-30, hourly
    return ScenarioSpec(seed=7, days=120, resolution=60)


@pytest.fixture
def market(small_spec):
    return SimulationManager().generate(small_spec)


@pytest.fixture
def naive_stage1():
    spec = ForecasterSpec('seasonal_naive', context_length=168)
    return {v: spec for v in ('day_ahead_price', 'real_time_price', 'system_load', 'wind_power', 'pv_power')}


@pytest.fixture
def quick_gbdt():
    return GbdtParams(learning_rate=0.2, num_leaves=8, max_rounds=40, early_stopping_rounds=10,
                      min_samples_leaf=5, min_gain_to_split=0.0, seed=3)


@pytest.fixture
def depth_two_tree():
    """x0 <= 0.5 ? (x1 <= 0.5 ? 1 : 3) : (x1 <= 0.5 ? 5 : 11), uneven covers."""
    return make_tree(
        feature=[0, 1, 1, LEAF, LEAF, LEAF, LEAF],
        threshold=[0.5, 0.5, 0.5, 0, 0, 0, 0],
        left=[1, 3, 5, LEAF, LEAF, LEAF, LEAF],
        right=[2, 4, 6, LEAF, LEAF, LEAF, LEAF],
        value=[0, 0, 0, 1.0, 3.0, 5.0, 11.0],
        cover=[10, 6, 4, 2, 4, 3, 1],
    )
