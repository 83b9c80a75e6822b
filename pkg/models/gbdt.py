"""
Histogram-based, leaf-wise gradient boosted trees for squared error.

Features are bucketed once into at most ``max_bins`` quantile bins (plus one
bin for missing values) before the first round; every split is then a bin
threshold, stored alongside the raw threshold so raw-value routing and
binned routing agree: ``x <= threshold`` iff ``bin(x) <= threshold_bin``.
"""
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from utils.errors import ConfigError, EmptyDataError, FeatureMismatchError, MissingFeatureError
from utils.features import FeatureMatrix
from utils.fs_utils import FSUtils, decode_floats, encode_floats
from utils.logger import Logger

logger = Logger()

GBDT_MAGIC = 'FUTUREBOOST-GBDT'
GBDT_FORMAT_VERSION = 1
LEAF = -1


@dataclass(frozen=True)
class GbdtParams:
    learning_rate: float = 0.05
    num_leaves: int = 63
    feature_fraction: float = 0.9
    bagging_fraction: float = 0.8
    bagging_freq: int = 5
    min_gain_to_split: float = 0.08
    max_rounds: int = 30000
    early_stopping_rounds: int = 1000
    l2_leaf_reg: float = 1.0
    min_samples_leaf: int = 20
    max_bins: int = 255
    seed: int = 42

    def __post_init__(self):
        if not 0 < self.learning_rate <= 1:
            raise ConfigError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if self.num_leaves < 2:
            raise ConfigError(f"num_leaves must be >= 2, got {self.num_leaves}")
        for name in ('feature_fraction', 'bagging_fraction'):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise ConfigError(f"{name} must be in (0, 1], got {value}")
        if not 2 <= self.max_bins <= 255:
            raise ConfigError(f"max_bins must be in 2..255, got {self.max_bins}")
        if self.min_samples_leaf < 1:
            raise ConfigError("min_samples_leaf must be >= 1")
        if self.l2_leaf_reg < 0 or self.max_rounds < 0 or self.early_stopping_rounds < 0 or self.bagging_freq < 0:
            raise ConfigError("l2_leaf_reg, max_rounds, early_stopping_rounds and bagging_freq must be >= 0")

    @classmethod
    def from_dict(cls, data: Optional[Mapping]) -> 'GbdtParams':
        data = dict(data or {})
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown gbdt parameters: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


class BinMapper:
    """Per-feature quantile bin edges fitted on the training split."""

    def __init__(self, max_bins: int):
        self.max_bins = max_bins
        self.edges: List[np.ndarray] = []

    def fit(self, X: np.ndarray) -> 'BinMapper':
        self.edges = []
        for j in range(X.shape[1]):
            column = X[:, j]
            values = np.unique(column[~np.isnan(column)])
            if values.size <= self.max_bins:
                edges = values[:-1]
            else:
                qs = np.linspace(0.0, 1.0, self.max_bins + 1)[1:-1]
                edges = np.unique(np.quantile(column[~np.isnan(column)], qs, method='lower'))
                if edges.size and edges[-1] == values[-1]:
                    edges = edges[:-1]
            self.edges.append(np.asarray(edges, dtype=np.float64))
        return self

    @property
    def n_bins(self) -> np.ndarray:
        """Real (non-missing) bins per feature."""
        return np.array([e.size + 1 for e in self.edges], dtype=np.int64)

    def transform(self, X: np.ndarray) -> np.ndarray:
        """Bin indices; missing values land in bin ``n_bins[j]``."""
        B = np.empty(X.shape, dtype=np.int32)
        for j, edges in enumerate(self.edges):
            column = X[:, j]
            missing = np.isnan(column)
            B[:, j] = np.searchsorted(edges, column, side='left')
            B[missing, j] = edges.size + 1
        return B


@dataclass
class Tree:
    """Flat node arrays; node 0 is the root, ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    threshold_bin: np.ndarray
    default_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature == LEAF))

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf id reached by every row of raw feature matrix ``X``."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] != LEAF)
        while active.size:
            current = node[active]
            x = X[active, self.feature[current]]
            go_left = np.where(np.isnan(x), self.default_left[current], x <= self.threshold[current])
            node[active] = np.where(go_left, self.left[current], self.right[current])
            active = active[self.feature[node[active]] != LEAF]
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_payload(self) -> dict:
        return {
            'feature': self.feature.tolist(),
            'threshold': encode_floats(self.threshold),
            'threshold_bin': self.threshold_bin.tolist(),
            'default_left': self.default_left.astype(int).tolist(),
            'left': self.left.tolist(),
            'right': self.right.tolist(),
            'value': encode_floats(self.value),
            'cover': encode_floats(self.cover),
        }

    @classmethod
    def from_payload(cls, data: Mapping) -> 'Tree':
        return cls(
            feature=np.array(data['feature'], dtype=np.int64),
            threshold=decode_floats(data['threshold']),
            threshold_bin=np.array(data['threshold_bin'], dtype=np.int64),
            default_left=np.array(data['default_left'], dtype=bool),
            left=np.array(data['left'], dtype=np.int64),
            right=np.array(data['right'], dtype=np.int64),
            value=decode_floats(data['value']),
            cover=decode_floats(data['cover']),
        )


@dataclass
class TreeEnsemble:
    """Boosted ensemble; predictions use ``trees[:best_iteration]`` only."""

    base_score: float
    trees: List[Tree]
    feature_names: List[str]
    params: GbdtParams
    best_iteration: int
    evals_result: Dict[str, List[float]] = field(default_factory=dict)

    @property
    def used_trees(self) -> List[Tree]:
        return self.trees[:self.best_iteration]

    def predict_array(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise MissingFeatureError(f"Expected {len(self.feature_names)} feature columns, got shape {X.shape}")
        out = np.full(X.shape[0], self.base_score, dtype=np.float64)
        for tree in self.used_trees:
            out += tree.predict(X)
        return out


class _Grower:
    """Leaf-wise growth of one tree on binned data."""

    def __init__(self, B: np.ndarray, bins: BinMapper, params: GbdtParams):
        self.B = B
        self.params = params
        self.edges = bins.edges
        n_bins = bins.n_bins
        self.n_features = B.shape[1]
        # each feature owns n_bins[j] real bins followed by one missing bin
        widths = n_bins + 1
        self.offsets = np.concatenate([[0], np.cumsum(widths)[:-1]]).astype(np.int64)
        self.total_bins = int(widths.sum())
        self.missing_bin = n_bins
        self.missing_index = self.offsets + n_bins

        max_bins = int(n_bins.max()) if n_bins.size else 1
        positions = np.arange(max_bins)
        real = positions[None, :] < n_bins[:, None]
        # pads point at an extra zero slot appended to every histogram
        self.pad_index = np.where(real, self.offsets[:, None] + positions[None, :], self.total_bins)
        self.threshold_ok = positions[None, :] <= (n_bins[:, None] - 2)

    def histogram(self, rows: np.ndarray, gw: np.ndarray, w: np.ndarray):
        flat = (self.B[rows] + self.offsets).ravel()
        p = self.n_features
        hist_g = np.bincount(flat, weights=np.repeat(gw[rows], p), minlength=self.total_bins)
        hist_h = np.bincount(flat, weights=np.repeat(w[rows], p), minlength=self.total_bins)
        return hist_g, hist_h

    def best_split(self, hist_g: np.ndarray, hist_h: np.ndarray, allowed: np.ndarray):
        """(gain, feature, threshold_bin, default_left); gain is -inf when nothing is valid."""
        lam = self.params.l2_leaf_reg
        msl = self.params.min_samples_leaf
        Gp = np.append(hist_g, 0.0)[self.pad_index]
        Hp = np.append(hist_h, 0.0)[self.pad_index]
        Gm = hist_g[self.missing_index][:, None]
        Hm = hist_h[self.missing_index][:, None]
        cG = np.cumsum(Gp, axis=1)
        cH = np.cumsum(Hp, axis=1)
        G = cG[:, -1:] + Gm
        H = cH[:, -1:] + Hm

        # direction axis: 0 = missing goes left, 1 = missing goes right
        GL = np.stack([cG + Gm, cG], axis=-1)
        HL = np.stack([cH + Hm, cH], axis=-1)
        GR = G[..., None] - GL
        HR = H[..., None] - HL
        valid = (self.threshold_ok & allowed[:, None])[..., None] & (HL >= msl) & (HR >= msl)
        with np.errstate(divide='ignore', invalid='ignore'):
            gain = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - (G * G / (H + lam))[..., None])
        gain = np.where(valid, gain, -np.inf)
        # argmax returns the first maximum: lowest feature, then lowest bin, then left
        flat = int(np.argmax(gain))
        best = gain.flat[flat]
        feature, threshold_bin, direction = np.unravel_index(flat, gain.shape)
        if not best > self.params.min_gain_to_split:
            return -np.inf, -1, -1, True
        return float(best), int(feature), int(threshold_bin), bool(direction == 0)

    def grow(self, g: np.ndarray, w: np.ndarray, allowed: np.ndarray):
        """Returns (tree, leaf id per training row)."""
        params = self.params
        gw = g * w
        nodes = {'feature': [LEAF], 'threshold': [0.0], 'threshold_bin': [-1], 'default_left': [True],
                 'left': [LEAF], 'right': [LEAF], 'value': [0.0], 'cover': [0.0]}
        rows_root = np.arange(self.B.shape[0])
        hist_root = self.histogram(rows_root, gw, w)
        leaves = {0: (rows_root, hist_root, self.best_split(*hist_root, allowed))}

        def new_node():
            for key, default in (('feature', LEAF), ('threshold', 0.0), ('threshold_bin', -1),
                                 ('default_left', True), ('left', LEAF), ('right', LEAF),
                                 ('value', 0.0), ('cover', 0.0)):
                nodes[key].append(default)
            return len(nodes['feature']) - 1

        while len(leaves) < params.num_leaves:
            # dict keeps creation order, so ties go to the oldest leaf
            node_id = max(leaves, key=lambda k: (leaves[k][2][0], -k))
            rows, (hist_g, hist_h), (gain, feature, t, default_left) = leaves[node_id]
            if gain == -np.inf:
                break
            binned = self.B[rows, feature]
            missing = binned == self.missing_bin[feature]
            go_left = np.where(missing, default_left, binned <= t)
            left_rows, right_rows = rows[go_left], rows[~go_left]

            left_id, right_id = new_node(), new_node()
            nodes['feature'][node_id] = feature
            nodes['threshold'][node_id] = float(self.edges[feature][t])
            nodes['threshold_bin'][node_id] = t
            nodes['default_left'][node_id] = default_left
            nodes['left'][node_id] = left_id
            nodes['right'][node_id] = right_id

            # histogram the smaller child, derive the sibling by subtraction
            if left_rows.size <= right_rows.size:
                small = self.histogram(left_rows, gw, w)
                large = (hist_g - small[0], hist_h - small[1])
                hist_left, hist_right = small, large
            else:
                small = self.histogram(right_rows, gw, w)
                large = (hist_g - small[0], hist_h - small[1])
                hist_left, hist_right = large, small

            del leaves[node_id]
            leaves[left_id] = (left_rows, hist_left, self.best_split(*hist_left, allowed))
            leaves[right_id] = (right_rows, hist_right, self.best_split(*hist_right, allowed))

        leaf_of_row = np.zeros(self.B.shape[0], dtype=np.int64)
        for node_id, (rows, _, _) in leaves.items():
            G = float(np.sum(gw[rows]))
            H = float(np.sum(w[rows]))
            nodes['value'][node_id] = -params.learning_rate * G / (H + params.l2_leaf_reg) if H > 0 else 0.0
            nodes['cover'][node_id] = H
            leaf_of_row[rows] = node_id

        tree = Tree(
            feature=np.array(nodes['feature'], dtype=np.int64),
            threshold=np.array(nodes['threshold'], dtype=np.float64),
            threshold_bin=np.array(nodes['threshold_bin'], dtype=np.int64),
            default_left=np.array(nodes['default_left'], dtype=bool),
            left=np.array(nodes['left'], dtype=np.int64),
            right=np.array(nodes['right'], dtype=np.int64),
            value=np.array(nodes['value'], dtype=np.float64),
            cover=np.array(nodes['cover'], dtype=np.float64),
        )
        _fill_internal_covers(tree)
        return tree, leaf_of_row


def _fill_internal_covers(tree: Tree):
    # children always have larger ids than their parent
    for node in range(tree.n_nodes - 1, -1, -1):
        if tree.feature[node] != LEAF:
            tree.cover[node] = tree.cover[tree.left[node]] + tree.cover[tree.right[node]]


def _mse(y: np.ndarray, pred: np.ndarray) -> float:
    err = y - pred
    return float(np.mean(err * err))


def fit_arrays(X: np.ndarray, y: np.ndarray, params: GbdtParams,
               feature_names: Optional[Sequence[str]] = None,
               X_valid: Optional[np.ndarray] = None, y_valid: Optional[np.ndarray] = None) -> TreeEnsemble:
    """
    Boost on raw arrays (NaN = missing feature value; targets must be present).

    ``evals_result['train'][k]`` and ``['valid'][k]`` hold the MSE using the
    first k trees, so index 0 is the base score alone.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[0] != y.shape[0]:
        raise EmptyDataError(f"Empty or misaligned training data: X {X.shape}, y {y.shape}")
    n, p = X.shape
    if p == 0:
        raise EmptyDataError("Training data has no feature columns")
    feature_names = list(feature_names) if feature_names is not None else [f"f{j}" for j in range(p)]
    if len(feature_names) != p:
        raise FeatureMismatchError("feature_names length does not match X")

    use_valid = X_valid is not None and y_valid is not None and len(y_valid) > 0
    if params.early_stopping_rounds > 0 and not use_valid:
        raise EmptyDataError("Early stopping needs a nonempty validation set")
    if use_valid:
        X_valid = np.asarray(X_valid, dtype=np.float64)
        y_valid = np.asarray(y_valid, dtype=np.float64)
        if X_valid.shape[1] != p:
            raise FeatureMismatchError(f"Validation has {X_valid.shape[1]} features, training {p}")

    bins = BinMapper(params.max_bins).fit(X)
    B = bins.transform(X)
    grower = _Grower(B, bins, params)
    rng = np.random.default_rng(params.seed)

    base_score = float(np.mean(y))
    pred = np.full(n, base_score)
    pred_valid = np.full(len(y_valid), base_score) if use_valid else None
    evals = {'train': [_mse(y, pred)]}
    if use_valid:
        evals['valid'] = [_mse(y_valid, pred_valid)]

    trees: List[Tree] = []
    best_iteration, best_valid = 0, evals['valid'][0] if use_valid else None
    w = np.ones(n)
    n_bag = max(1, int(round(params.bagging_fraction * n)))
    n_feat = max(1, int(round(params.feature_fraction * p)))

    for round_idx in range(params.max_rounds):
        if params.bagging_fraction < 1.0 and params.bagging_freq > 0 and round_idx % params.bagging_freq == 0:
            w = np.zeros(n)
            w[rng.choice(n, size=n_bag, replace=False)] = 1.0
        allowed = np.zeros(p, dtype=bool)
        allowed[rng.choice(p, size=n_feat, replace=False) if n_feat < p else np.arange(p)] = True

        tree, leaf_of_row = grower.grow(pred - y, w, allowed)
        if tree.n_leaves < 2:
            logger.debug(f"🌲 No split clears min_gain_to_split at round {round_idx}, stopping")
            break

        trees.append(tree)
        pred = pred + tree.value[leaf_of_row]
        evals['train'].append(_mse(y, pred))
        if use_valid:
            pred_valid = pred_valid + tree.predict(X_valid)
            valid_mse = _mse(y_valid, pred_valid)
            evals['valid'].append(valid_mse)
            if valid_mse < best_valid:
                best_valid, best_iteration = valid_mse, len(trees)
            if params.early_stopping_rounds and len(trees) - best_iteration >= params.early_stopping_rounds:
                logger.debug(f"🌲 Early stopping at round {len(trees)}, best iteration {best_iteration}")
                break
        if len(trees) % 100 == 0:
            logger.debug(f"🌲 round {len(trees)}: train mse {evals['train'][-1]:.6g}")

    if not use_valid:
        best_iteration = len(trees)
    return TreeEnsemble(base_score=base_score, trees=trees, feature_names=feature_names,
                        params=params, best_iteration=best_iteration, evals_result=evals)


def fit(train: FeatureMatrix, valid: Optional[FeatureMatrix], params: GbdtParams) -> TreeEnsemble:
    """Fit on the scored rows of ``train``, early-stopping on ``valid``."""
    try:
        train = train.scored()
        if len(train) == 0:
            raise EmptyDataError("Training matrix has no rows with a realized target")
        X_valid = y_valid = None
        if valid is not None:
            if valid.feature_names != train.feature_names:
                raise FeatureMismatchError(
                    f"Validation features differ from training: "
                    f"{sorted(set(valid.feature_names) ^ set(train.feature_names))}"
                )
            valid = valid.scored()
            X_valid, y_valid = valid.matrix(), valid.target_values()

        model = fit_arrays(train.matrix(), train.target_values(), params, train.feature_names, X_valid, y_valid)
        logger.info(
            f"🌲 GBDT: {len(model.trees)} trees grown, best iteration {model.best_iteration}"
            f" on {len(train)} rows × {len(train.feature_names)} features"
        )
        return model
    except Exception as e:
        logger.error(f"❌ GBDT training failed: {str(e)}")
        raise


def predict(model: TreeEnsemble, features) -> np.ndarray:
    """Predict rows of a FeatureMatrix (or an array in model feature order)."""
    if isinstance(features, FeatureMatrix):
        missing = [n for n in model.feature_names if n not in features.feature_names]
        if missing:
            raise MissingFeatureError(f"Features missing for prediction: {missing}")
        return model.predict_array(features.matrix(model.feature_names))
    return model.predict_array(features)


def save_model(model: TreeEnsemble, filepath: str):
    FSUtils().write_container(filepath, GBDT_MAGIC, GBDT_FORMAT_VERSION, {
        'params': model.params.to_dict(),
        'feature_names': list(model.feature_names),
        'base_score': float(model.base_score).hex(),
        'best_iteration': int(model.best_iteration),
        'trees': [tree.to_payload() for tree in model.trees],
        'evals_result': {k: encode_floats(v) for k, v in model.evals_result.items()},
    })


def load_model(filepath: str) -> TreeEnsemble:
    payload = FSUtils().read_container(filepath, GBDT_MAGIC, GBDT_FORMAT_VERSION)
    return TreeEnsemble(
        base_score=float.fromhex(payload['base_score']),
        trees=[Tree.from_payload(t) for t in payload['trees']],
        feature_names=list(payload['feature_names']),
        params=GbdtParams.from_dict(payload['params']),
        best_iteration=int(payload['best_iteration']),
        evals_result={k: decode_floats(v).tolist() for k, v in payload.get('evals_result', {}).items()},
    )
