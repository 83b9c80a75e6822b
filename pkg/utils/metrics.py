"""Forecast metrics, improvement deltas and price difficulty indicators."""
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd
import scipy.stats

from utils.errors import EmptyInputError, InsufficientDataError, ZeroBaselineError
from utils.logger import Logger

logger = Logger()

DEFAULT_EXTREME_THRESHOLD = 1000.0
DEFAULT_JUMP_THRESHOLD = 200.0


@dataclass(frozen=True)
class MetricPair:
    mse: float
    mae: float
    n: int


@dataclass(frozen=True)
class ImprovementDelta:
    """Percent improvement of ``candidate`` over ``baseline`` (positive is better)."""

    baseline: Optional[MetricPair]
    candidate: Optional[MetricPair]
    delta_mse_pct: float
    delta_mae_pct: float


@dataclass(frozen=True)
class DifficultyReport:
    n: int
    months: int
    p50: float
    p99: float
    tail_ratio: float
    extreme_freq: float
    excess_kurtosis: float
    jump_size: float
    jump_freq: float
    ks_max: float
    p95_range: float
    extreme_threshold: float
    jump_threshold: float

    def to_dict(self) -> dict:
        return asdict(self)


def compute_metrics(y, yhat) -> MetricPair:
    """
    MSE and MAE over the points where both ``y`` and ``yhat`` are present.

    Raises:
        EmptyInputError: length mismatch or no scorable point
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    if y.shape != yhat.shape:
        raise EmptyInputError(f"Length mismatch: {y.size} targets vs {yhat.size} predictions")
    keep = ~(np.isnan(y) | np.isnan(yhat))
    if not np.any(keep):
        raise EmptyInputError("No scorable points")
    err = y[keep] - yhat[keep]
    return MetricPair(mse=float(np.mean(err * err)), mae=float(np.mean(np.abs(err))), n=int(keep.sum()))


def _pct(baseline: float, candidate: float) -> float:
    return 100.0 * (baseline - candidate) / baseline


def improvement(baseline: MetricPair, candidate: MetricPair) -> ImprovementDelta:
    if not (baseline.mse > 0 and baseline.mae > 0):
        raise ZeroBaselineError(f"Baseline metrics must be positive, got mse={baseline.mse} mae={baseline.mae}")
    return ImprovementDelta(
        baseline=baseline,
        candidate=candidate,
        delta_mse_pct=_pct(baseline.mse, candidate.mse),
        delta_mae_pct=_pct(baseline.mae, candidate.mae),
    )


def average_metrics(pairs: Sequence[MetricPair]) -> MetricPair:
    """Unweighted mean over windows; ``n`` is the total point count."""
    if not pairs:
        raise EmptyInputError("No metrics to average")
    return MetricPair(
        mse=float(np.mean([p.mse for p in pairs])),
        mae=float(np.mean([p.mae for p in pairs])),
        n=int(sum(p.n for p in pairs)),
    )


def average_improvements(deltas: Sequence[ImprovementDelta]) -> ImprovementDelta:
    if not deltas:
        raise EmptyInputError("No improvements to average")
    return ImprovementDelta(
        baseline=None,
        candidate=None,
        delta_mse_pct=float(np.mean([d.delta_mse_pct for d in deltas])),
        delta_mae_pct=float(np.mean([d.delta_mae_pct for d in deltas])),
    )


def _labelled_points(prices, months, segments):
    """Normalize inputs to (values, month labels, contiguity of consecutive points)."""
    if isinstance(prices, pd.Series) and isinstance(prices.index, pd.DatetimeIndex):
        series = prices.sort_index()
        values = series.to_numpy(dtype=np.float64)
        index = series.index
        labels = np.asarray(index.to_period('M').astype(str)) if months is None else np.asarray(months)
        if len(index) > 1:
            deltas = np.diff(index.asi8)
            step = deltas[deltas > 0].min() if np.any(deltas > 0) else 0
            contiguous = deltas == step
        else:
            contiguous = np.zeros(0, dtype=bool)
        return values, labels, contiguous

    values = np.asarray(prices, dtype=np.float64).ravel()
    labels = np.zeros(values.size, dtype=np.int64) if months is None else np.asarray(months)
    if labels.size != values.size:
        raise InsufficientDataError("Month labels must align with prices")
    if segments is None:
        contiguous = np.ones(max(values.size - 1, 0), dtype=bool)
    else:
        segments = np.asarray(segments)
        contiguous = segments[1:] == segments[:-1]
    return values, labels, contiguous


def _month_key(label):
    """Months sort by calendar position ('YYYY-MM', 'Sep 2025', dates); numeric labels sort as numbers."""
    if isinstance(label, (int, float, np.integer, np.floating)):
        return (0, label)
    try:
        return (0, pd.Period(label, freq='M').ordinal)
    except (ValueError, TypeError):
        return (1, str(label))


def difficulty_indicators(prices, months=None, segments=None,
                          theta: float = DEFAULT_EXTREME_THRESHOLD,
                          jump_theta: float = DEFAULT_JUMP_THRESHOLD) -> DifficultyReport:
    """
    Heavy-tail, jump and drift statistics of a price series.

    ``prices`` is a Series on a DatetimeIndex (months and contiguity come from
    the index) or an array with optional ``months`` labels and ``segments``
    ids. Missing points are ignored; first differences are taken only between
    neighbouring present points of the same contiguous segment.
    """
    values, labels, contiguous = _labelled_points(prices, months, segments)
    present = ~np.isnan(values)
    p = values[present]
    if p.size < 2:
        raise InsufficientDataError(f"Need at least 2 observed prices, got {p.size}")

    pair_ok = contiguous & present[:-1] & present[1:]
    jumps = np.abs(np.diff(values))[pair_ok]

    p50, p99 = np.quantile(p, [0.5, 0.99])
    tail_ratio = float(p99 / p50) if p50 > 0 else float('nan')

    month_labels = labels[present]
    month_order = sorted(set(month_labels.tolist()), key=_month_key)
    monthly = [p[month_labels == m] for m in month_order]
    if len(monthly) >= 2:
        ks_max = max(scipy.stats.ks_2samp(a, b).statistic for a, b in zip(monthly[:-1], monthly[1:]))
        p95s = [np.quantile(m, 0.95) for m in monthly]
        p95_range = float(max(p95s) - min(p95s))
    else:
        logger.warning("⚠️ Fewer than 2 months of prices, drift indicators left undefined")
        ks_max, p95_range = float('nan'), float('nan')

    return DifficultyReport(
        n=int(p.size),
        months=len(monthly),
        p50=float(p50),
        p99=float(p99),
        tail_ratio=tail_ratio,
        extreme_freq=float(np.mean(p > theta)),
        excess_kurtosis=float(scipy.stats.kurtosis(p, fisher=True, bias=True)),
        jump_size=float(np.quantile(jumps, 0.99)) if jumps.size else float('nan'),
        jump_freq=float(np.mean(jumps > jump_theta)) if jumps.size else float('nan'),
        ks_max=float(ks_max),
        p95_range=p95_range,
        extreme_threshold=float(theta),
        jump_threshold=float(jump_theta),
    )
