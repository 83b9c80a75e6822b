import os
import json
from dataclasses import dataclass
from typing import List

import numpy as np
from joblib import Parallel, delayed

from models.gbdt import TreeEnsemble
from models.treeshap import ShapAttribution, shap_values, tree_shap
from utils.errors import EmptyInputError, InsufficientDataError, MissingFeatureError
from utils.features import FeatureMatrix
from utils.fs_utils import FSUtils
from utils.logger import Logger

DEFAULT_TOP_K = 10
ROW_CHUNK = 256


@dataclass(frozen=True)
class GlobalImportance:
    features: List[str]
    mean_abs_phi: np.ndarray
    ranking: List[str]


@dataclass(frozen=True)
class WaterfallRecord:
    instance_id: str
    base_value: float
    contributions: List[tuple]
    others: float
    prediction: float

    def total(self) -> float:
        return self.base_value + sum(phi for _, phi, _ in self.contributions) + self.others

    def to_dict(self) -> dict:
        return {
            'instance_id': self.instance_id,
            'base_value': self.base_value,
            'contributions': [{'feature': f, 'phi': phi, 'value': value} for f, phi, value in self.contributions],
            'others': self.others,
            'prediction': self.prediction,
        }


class ExplainManager:
    """Manager class for TreeSHAP rankings and waterfall exports."""

    def __init__(self, jobs: int = 1):
        self.logger = Logger()
        self.fs = FSUtils()
        self.jobs = jobs

    def _matrix(self, model: TreeEnsemble, matrix: FeatureMatrix) -> np.ndarray:
        missing = [n for n in model.feature_names if n not in matrix.feature_names]
        if missing:
            raise MissingFeatureError(f"Features missing for explanation: {missing}")
        return matrix.matrix(model.feature_names)

    def global_importance(self, model: TreeEnsemble, eval_set: FeatureMatrix,
                          max_rows: int = 0) -> GlobalImportance:
        """
        Mean |phi| per feature over ``eval_set`` (its first ``max_rows`` rows
        when positive). Ties keep model feature order.
        """
        X = self._matrix(model, eval_set)
        if max_rows > 0:
            X = X[:max_rows]
        if X.shape[0] == 0:
            raise InsufficientDataError("Evaluation set is empty")

        chunks = [X[i:i + ROW_CHUNK] for i in range(0, X.shape[0], ROW_CHUNK)]
        parts = Parallel(n_jobs=self.jobs, prefer='threads')(delayed(shap_values)(model, c) for c in chunks)
        phi = np.vstack([p for p, _ in parts])
        scores = np.mean(np.abs(phi), axis=0)
        order = np.argsort(-scores, kind='stable')
        self.logger.info(f"🔎 SHAP importance over {X.shape[0]} rows, top feature "
                         f"{model.feature_names[order[0]] if len(order) else '-'}")
        return GlobalImportance(list(model.feature_names), scores, [model.feature_names[i] for i in order])

    def explain_instance(self, model: TreeEnsemble, matrix: FeatureMatrix, timestamp) -> ShapAttribution:
        """Attribution for the row of ``matrix`` at ``timestamp``."""
        rows = np.flatnonzero(matrix.index == np.datetime64(timestamp, 'ns'))
        if rows.size == 0:
            raise EmptyInputError(f"No feature row at {timestamp}")
        X = self._matrix(model, matrix)
        return tree_shap(model, X[rows[0]], instance_id=str(matrix.index[rows[0]]))

    def export_waterfall(self, attribution: ShapAttribution, top_k: int = DEFAULT_TOP_K) -> WaterfallRecord:
        """Top-k features by |phi| plus an "others" aggregate of the rest."""
        if top_k < 1:
            raise ValueError("top_k must be >= 1")
        phi = np.asarray(attribution.phi, dtype=np.float64)
        order = np.argsort(-np.abs(phi), kind='stable')
        head, tail = order[:top_k], order[top_k:]
        contributions = [(attribution.feature_names[i], float(phi[i]), float(attribution.feature_values[i]))
                         for i in head]
        return WaterfallRecord(
            instance_id=attribution.instance_id,
            base_value=float(attribution.base_value),
            contributions=contributions,
            others=float(phi[tail].sum()) if tail.size else 0.0,
            prediction=float(attribution.prediction),
        )

    def write_waterfall(self, record: WaterfallRecord, output_dir: str):
        self.fs.ensure_dir(output_dir)
        lines = ['feature,phi,value'] + [f"{f},{phi!r},{value!r}" for f, phi, value in record.contributions]
        self.fs.atomic_write_text(os.path.join(output_dir, 'waterfall.csv'), '\n'.join(lines) + '\n')
        self.fs.atomic_write_text(os.path.join(output_dir, 'waterfall.json'),
                                  json.dumps(record.to_dict(), indent=2, sort_keys=True) + '\n')

    def write_importance(self, importance: GlobalImportance, output_dir: str):
        self.fs.ensure_dir(output_dir)
        score = dict(zip(importance.features, importance.mean_abs_phi.tolist()))
        lines = ['feature,mean_abs_phi'] + [f"{f},{score[f]!r}" for f in importance.ranking]
        self.fs.atomic_write_text(os.path.join(output_dir, 'importance.csv'), '\n'.join(lines) + '\n')
        self.logger.success(f"🔎 Importance and waterfall exports written to {output_dir}")
