"""Ridge / ordinary least squares regression on a FeatureMatrix."""
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import scipy.linalg

from utils.errors import EmptyDataError, MissingFeatureError, SingularSystemError
from utils.features import FeatureMatrix
from utils.fs_utils import FSUtils, decode_floats, encode_floats
from utils.logger import Logger

logger = Logger()

RIDGE_MAGIC = 'FUTUREBOOST-RIDGE'
RIDGE_FORMAT_VERSION = 1
DEFAULT_L2 = 1.0


@dataclass(frozen=True)
class RidgeModel:
    """Weights in original feature units; the intercept is never penalized."""

    weights: np.ndarray
    intercept: float
    l2: float
    feature_names: Tuple[str, ...]

    def __post_init__(self):
        if len(self.weights) != len(self.feature_names):
            raise EmptyDataError("One weight per feature name required")


def solve_ridge(X: np.ndarray, y: np.ndarray, l2: float = DEFAULT_L2,
                standardize: bool = True) -> Tuple[np.ndarray, float]:
    """
    Minimize ||y - Xw - b||^2 + l2 * ||w_s||^2 through the normal equations.

    With ``standardize`` the penalty applies to weights of the z-scored
    features (population statistics of ``X``); the returned weights are
    mapped back to the original units. Columns with zero spread get weight 0.

    Raises:
        SingularSystemError: l2 == 0 and the centred design is rank-deficient
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[0] != y.shape[0]:
        raise EmptyDataError(f"Bad design shape {X.shape} for {y.shape[0]} targets")
    if l2 < 0:
        raise ValueError("l2 must be non-negative")

    p = X.shape[1]
    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    if p == 0:
        return np.zeros(0), y_mean

    Xc = X - x_mean
    scale = np.sqrt(np.mean(Xc * Xc, axis=0)) if standardize else np.ones(p)
    live = scale > 0
    weights = np.zeros(p)
    if not np.any(live):
        return weights, y_mean

    Z = Xc[:, live] / scale[live]
    yc = y - y_mean
    gram = Z.T @ Z
    if l2 == 0 and np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise SingularSystemError(f"Rank-deficient design ({gram.shape[0]} features) with l2 = 0")
    gram[np.diag_indices_from(gram)] += l2
    try:
        factor = scipy.linalg.cho_factor(gram, lower=True, check_finite=True)
        coef = scipy.linalg.cho_solve(factor, Z.T @ yc)
    except np.linalg.LinAlgError as e:
        raise SingularSystemError(f"Normal equations not positive definite: {e}")

    weights[live] = coef / scale[live]
    intercept = y_mean - float(x_mean @ weights)
    return weights, intercept


def fit_ridge(train: FeatureMatrix, l2: float = DEFAULT_L2) -> RidgeModel:
    """Fit on rows with a realized target and no missing feature value."""
    X = train.matrix()
    y = train.target_values()
    keep = ~np.isnan(y) & ~np.any(np.isnan(X), axis=1)
    if not np.any(keep):
        raise EmptyDataError("No complete training rows for ridge regression")
    dropped = int((~keep).sum())
    if dropped:
        logger.debug(f"Ridge: dropped {dropped} incomplete rows")

    weights, intercept = solve_ridge(X[keep], y[keep], l2)
    logger.debug(f"📈 Ridge fitted on {int(keep.sum())} rows × {X.shape[1]} features (l2={l2})")
    return RidgeModel(weights=weights, intercept=intercept, l2=float(l2),
                      feature_names=tuple(train.feature_names))


def predict_ridge(model: RidgeModel, features) -> np.ndarray:
    """Xw + b; ``features`` is a FeatureMatrix holding every fitted name."""
    names: List[str] = list(model.feature_names)
    if isinstance(features, FeatureMatrix):
        missing = [n for n in names if n not in features.feature_names]
        if missing:
            raise MissingFeatureError(f"Features missing for ridge prediction: {missing}")
        X = features.matrix(names)
    else:
        X = np.asarray(features, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(names):
            raise MissingFeatureError(f"Expected {len(names)} feature columns, got shape {X.shape}")
    return X @ model.weights + model.intercept


def save_ridge(model: RidgeModel, filepath: str):
    FSUtils().write_container(filepath, RIDGE_MAGIC, RIDGE_FORMAT_VERSION, {
        'feature_names': list(model.feature_names),
        'weights': encode_floats(model.weights),
        'intercept': float(model.intercept).hex(),
        'l2': float(model.l2).hex(),
    })


def load_ridge(filepath: str) -> RidgeModel:
    payload = FSUtils().read_container(filepath, RIDGE_MAGIC, RIDGE_FORMAT_VERSION)
    return RidgeModel(
        weights=decode_floats(payload['weights']),
        intercept=float.fromhex(payload['intercept']),
        l2=float.fromhex(payload['l2']),
        feature_names=tuple(payload['feature_names']),
    )
