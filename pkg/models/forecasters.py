"""Stage-1 stand-in forecasters: seasonal naive, ridge on lags, per-step exponential smoothing."""
import json
import warnings
from dataclasses import dataclass, field
from typing import List, Mapping, Optional

import numpy as np
import pandas as pd
from statsmodels.tsa.holtwinters import ExponentialSmoothing

from models.linreg import solve_ridge
from utils.errors import AllMissingContextError, ConfigError, InsufficientHistoryError

FORECASTER_KINDS = ('seasonal_naive', 'ridge_lag_ar', 'exp_smoothing', 'external_file')
DEFAULT_CONTEXT_LENGTH = 1440
DEFAULT_LAG_L2 = 1.0


@dataclass(frozen=True)
class ForecasterSpec:
    kind: str
    context_length: int = DEFAULT_CONTEXT_LENGTH
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FORECASTER_KINDS:
            raise ConfigError(f"Unknown forecaster kind '{self.kind}' (expected one of {FORECASTER_KINDS})")
        if self.context_length < 1:
            raise ConfigError("context_length must be positive")
        object.__setattr__(self, 'params', dict(self.params))

    @property
    def forecaster_id(self) -> str:
        params = json.dumps(self.params, sort_keys=True, separators=(',', ':'), default=str)
        return f"{self.kind}:ctx={self.context_length}:{params}"

    @classmethod
    def from_dict(cls, data: Mapping) -> 'ForecasterSpec':
        unknown = set(data) - {'kind', 'context_length', 'params'}
        if unknown:
            raise ConfigError(f"Unknown forecaster keys: {sorted(unknown)}")
        if 'kind' not in data:
            raise ConfigError(f"Forecaster needs a 'kind' (one of {FORECASTER_KINDS})")
        return cls(kind=data['kind'], context_length=int(data.get('context_length', DEFAULT_CONTEXT_LENGTH)),
                   params=data.get('params') or {})


def default_lags(horizon: int) -> List[int]:
    """Lags 1..H plus two and seven days back."""
    return sorted(set(range(1, horizon + 1)) | {2 * horizon, 7 * horizon})


def required_history(spec: ForecasterSpec, horizon: int) -> int:
    if spec.kind == 'ridge_lag_ar':
        lags = spec.params.get('lags') or default_lags(horizon)
        return max(spec.context_length, max(lags) + 1)
    return spec.context_length


def context_window(history, spec: ForecasterSpec, horizon: int) -> np.ndarray:
    """
    Last ``context_length`` values with gaps forward-filled (leading gaps
    take the first observed value).

    Raises:
        InsufficientHistoryError: history shorter than the forecaster needs
        AllMissingContextError: every value of the window is missing
    """
    values = np.asarray(history, dtype=np.float64).ravel()
    needed = required_history(spec, horizon)
    if values.size < needed:
        raise InsufficientHistoryError(f"{spec.kind} needs {needed} history steps, got {values.size}")
    window = values[-spec.context_length:]
    if np.all(np.isnan(window)):
        raise AllMissingContextError(f"Context window of {window.size} steps is entirely missing")
    if np.any(np.isnan(window)):
        window = pd.Series(window).ffill().bfill().to_numpy()
    return window


def seasonal_naive(context: np.ndarray, horizon: int, period: int) -> np.ndarray:
    steps = np.arange(horizon)
    return context[context.size - period + (steps % period)].astype(np.float64)


def exp_smoothing(context: np.ndarray, horizon: int, alpha: Optional[float]) -> np.ndarray:
    """Simple exponential smoothing of each intra-day step across days."""
    days = context.size // horizon
    matrix = context[context.size - days * horizon:].reshape(days, horizon)
    forecast = np.empty(horizon)
    for step in range(horizon):
        column = matrix[:, step]
        if days == 1 or np.ptp(column) == 0:
            forecast[step] = column[-1]
            continue
        with warnings.catch_warnings():
            warnings.simplefilter('ignore')
            if alpha is None:
                model = ExponentialSmoothing(column, trend=None, seasonal=None,
                                             initialization_method='estimated')
                fitted = model.fit(optimized=True)
            else:
                model = ExponentialSmoothing(column, trend=None, seasonal=None,
                                             initialization_method='known', initial_level=column[0])
                fitted = model.fit(smoothing_level=alpha, optimized=False)
        forecast[step] = float(fitted.forecast(1)[0])
    return forecast


def ridge_lag_ar(context: np.ndarray, horizon: int, lags: List[int], l2: float) -> np.ndarray:
    """Ridge regression on lagged values, rolled forward recursively over the horizon."""
    lags = np.asarray(sorted(set(int(l) for l in lags)), dtype=np.int64)
    max_lag = int(lags.max())
    targets = np.arange(max_lag, context.size)
    if targets.size == 0:
        raise InsufficientHistoryError(f"Context of {context.size} steps leaves no rows for lag {max_lag}")
    X = context[targets[:, None] - lags[None, :]]
    weights, intercept = solve_ridge(X, context[targets], l2)

    extended = np.concatenate([context, np.empty(horizon)])
    for h in range(horizon):
        t = context.size + h
        extended[t] = float(extended[t - lags] @ weights + intercept)
    return extended[context.size:]


def forecast_variable(history, spec: ForecasterSpec, horizon: int) -> np.ndarray:
    """
    H-step point forecast from ``history`` (oldest first, ending at the
    issue day's last step). Deterministic given (history, spec).
    """
    if spec.kind == 'external_file':
        raise ConfigError("external_file forecasts are loaded from disk, not computed")
    if spec.kind in ('seasonal_naive', 'exp_smoothing') and spec.context_length < horizon:
        raise ConfigError(f"{spec.kind} needs context_length >= {horizon}, got {spec.context_length}")
    if spec.kind == 'ridge_lag_ar':
        max_lag = max(spec.params.get('lags') or default_lags(horizon))
        if spec.context_length <= max_lag:
            raise ConfigError(f"ridge_lag_ar needs context_length > {max_lag}, got {spec.context_length}")
    if spec.kind == 'seasonal_naive':
        period = int(spec.params.get('period', horizon))
        if not 1 <= period <= spec.context_length:
            raise ConfigError(f"seasonal_naive period must be in 1..{spec.context_length}, got {period}")

    context = context_window(history, spec, horizon)
    if spec.kind == 'seasonal_naive':
        forecast = seasonal_naive(context, horizon, period)
    elif spec.kind == 'exp_smoothing':
        alpha = spec.params.get('alpha')
        forecast = exp_smoothing(context, horizon, None if alpha is None else float(alpha))
    else:
        lags = spec.params.get('lags') or default_lags(horizon)
        forecast = ridge_lag_ar(context, horizon, lags, float(spec.params.get('l2', DEFAULT_LAG_L2)))

    if not np.all(np.isfinite(forecast)):
        raise AllMissingContextError(f"{spec.kind} produced non-finite forecasts")
    return forecast
