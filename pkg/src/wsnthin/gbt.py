"""Gradient-boosted regression trees with native missing-value handling.

Squared-error boosting: every round fits a tree to the current residuals
using exact greedy split search. Missing feature values are tried on both
sides of each candidate split and the better side is stored as the node's
default direction. Training stops once the validation RMSE has not improved
for ``early_stopping_rounds`` rounds.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _gbt_kernels as _k

FORMAT_VERSION = 1


@dataclass(frozen=True)
class GbtParams:
    learning_rate: float = 0.1
    max_depth: int = 6
    subsample: float = 1.0
    early_stopping_rounds: int = 500
    max_rounds: int = 5000
    reg_lambda: float = 1.0
    gamma: float = 0.0
    # None selects exact splits; an integer enables quantile binning
    hist_bins: int | None = None

    def __post_init__(self):
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if not 0.0 < self.subsample <= 1.0:
            raise ValueError("subsample must lie in (0, 1]")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.reg_lambda < 0 or self.gamma < 0:
            raise ValueError("reg_lambda and gamma must be non-negative")
        if self.early_stopping_rounds < 1 or self.max_rounds < 0:
            raise ValueError("invalid round limits")
        if self.hist_bins is not None and not 2 <= self.hist_bins <= 65536:
            raise ValueError("hist_bins must be in [2, 65536]")

    def replace(self, **kw) -> "GbtParams":
        d = asdict(self)
        d.update(kw)
        return GbtParams(**d)


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    default_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=int)
        for k in range(self.n_nodes):
            if self.feature[k] >= 0:
                depths[self.left[k]] = depths[k] + 1
                depths[self.right[k]] = depths[k] + 1
        return int(depths.max())

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.zeros(X.shape[0])
        _k.add_tree_prediction(np.ascontiguousarray(X, dtype=np.float64), self.feature,
                               self.threshold, self.default_left, self.left, self.right,
                               self.value, out)
        return out


@dataclass
class TreeEnsemble:
    base_score: float
    trees: list[Tree]
    params: GbtParams
    best_round: int
    n_features: int
    train_rmse: list[float] = field(default_factory=list)
    val_rmse: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.best_round > len(self.trees):
            raise ValueError("best_round exceeds the number of trees")
        self._packed = None

    def _pack(self):
        if self._packed is None:
            used = self.trees[:self.best_round]
            sizes = [t.n_nodes for t in used]
            offsets = np.concatenate(([0], np.cumsum(sizes)[:-1])).astype(np.int64) \
                if used else np.zeros(0, np.int64)

            def cat(name, dtype):
                if not used:
                    return np.zeros(0, dtype)
                return np.concatenate([getattr(t, name) for t in used]).astype(dtype)

            self._packed = (offsets, len(used), cat("feature", np.int32),
                            cat("threshold", np.float64), cat("default_left", np.bool_),
                            cat("left", np.int32), cat("right", np.int32),
                            cat("value", np.float64))
        return self._packed

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return _k.predict_packed(X, float(self.base_score), *self._pack())

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        hexs = lambda a: [float(v).hex() for v in a]  # noqa: E731
        return {
            "format_version": FORMAT_VERSION,
            "params": asdict(self.params),
            "base_score": float(self.base_score).hex(),
            "best_round": self.best_round,
            "n_features": self.n_features,
            "trees": [{
                "feature": t.feature.tolist(),
                "threshold": hexs(t.threshold),
                "default_left": t.default_left.astype(int).tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "value": hexs(t.value),
            } for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeEnsemble":
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format {d.get('format_version')!r}")
        unhex = lambda a: np.array([float.fromhex(v) for v in a], dtype=np.float64)  # noqa: E731
        trees = [Tree(feature=np.array(t["feature"], dtype=np.int32),
                      threshold=unhex(t["threshold"]),
                      default_left=np.array(t["default_left"], dtype=np.bool_),
                      left=np.array(t["left"], dtype=np.int32),
                      right=np.array(t["right"], dtype=np.int32),
                      value=unhex(t["value"])) for t in d["trees"]]
        return cls(base_score=float.fromhex(d["base_score"]), trees=trees,
                   params=GbtParams(**d["params"]), best_round=int(d["best_round"]),
                   n_features=int(d["n_features"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), separators=(",", ":")))

    @classmethod
    def load(cls, path) -> "TreeEnsemble":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _presort(X: np.ndarray):
    n, n_feat = X.shape
    order, oval, ostart, miss, mstart = [], [], [0], [], [0]
    for f in range(n_feat):
        col = X[:, f]
        present = np.flatnonzero(~np.isnan(col))
        srt = present[np.argsort(col[present], kind="stable")]
        order.append(srt)
        oval.append(col[srt])
        miss.append(np.flatnonzero(np.isnan(col)))
        ostart.append(ostart[-1] + len(present))
        mstart.append(mstart[-1] + n - len(present))
    cat = lambda parts: np.concatenate(parts).astype(np.int64) if parts else np.zeros(0, np.int64)  # noqa: E731
    vals = np.concatenate(oval) if oval else np.zeros(0)
    return (cat(order), vals.astype(np.float64), np.array(ostart, np.int64),
            cat(miss), np.array(mstart, np.int64))


def _bin_features(X: np.ndarray, n_bins: int) -> np.ndarray:
    """Replace each value by the largest training value of its quantile bin.

    Splits found on the binned matrix then use those upper edges as
    thresholds, which route raw values exactly as their bins.
    """
    Xb = X.copy()
    for f in range(X.shape[1]):
        col = X[:, f]
        ok = ~np.isnan(col)
        if not ok.any():
            continue
        uniq = np.unique(col[ok])
        if len(uniq) <= n_bins:
            continue
        cuts = np.quantile(col[ok], np.linspace(0, 1, n_bins + 1)[1:-1])
        b = np.searchsorted(cuts, col[ok], side="left")
        upper = np.full(n_bins, -np.inf)
        np.maximum.at(upper, b, col[ok])
        Xb[ok, f] = upper[b]
    return Xb


def _rmse(pred, y) -> float:
    return float(np.sqrt(np.mean((pred - y) ** 2))) if len(y) else float("nan")


def train(X_train, y_train, X_val, y_val, params: GbtParams = GbtParams(),
          seed: int = 0) -> TreeEnsemble:
    """Fit a boosted ensemble with validation-based early stopping.

    Parameters
    ----------
    X_train, X_val : ndarray of shape (n, n_features)
        Predictors with NaN for missing values.
    y_train, y_val : ndarray
        Targets.
    params : GbtParams
    seed : int
        Seeds row subsampling; identical inputs give identical ensembles.

    Returns
    -------
    TreeEnsemble
        All grown trees; prediction uses the first ``best_round`` of them,
        where ``best_round`` minimises the validation RMSE (0 means base score only).
    """
    X_train = np.ascontiguousarray(X_train, dtype=np.float64)
    X_val = np.ascontiguousarray(X_val, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.float64)
    y_val = np.asarray(y_val, dtype=np.float64)
    if X_train.shape[0] == 0 or X_val.shape[0] == 0:
        raise ValueError("training and validation sets must be non-empty")
    if X_train.shape[1] != X_val.shape[1]:
        raise ValueError("train/validation feature counts differ")
    if X_train.shape[0] != len(y_train) or X_val.shape[0] != len(y_val):
        raise ValueError("row count mismatch between predictors and targets")

    n, n_feat = X_train.shape
    X_fit = X_train if params.hist_bins is None else _bin_features(X_train, params.hist_bins)
    presorted = _presort(X_fit)
    rng = np.random.default_rng(seed)

    base = float(np.mean(y_train))
    pred_tr = np.full(n, base)
    pred_val = np.full(len(y_val), base)
    train_hist = [_rmse(pred_tr, y_train)]
    val_hist = [_rmse(pred_val, y_val)]
    best, best_round, since = val_hist[0], 0, 0
    trees: list[Tree] = []
    midpoint = params.hist_bins is None

    for rnd in range(1, params.max_rounds + 1):
        if params.subsample < 1.0:
            row_node = np.where(rng.random(n) < params.subsample, 0, -1).astype(np.int64)
        else:
            row_node = np.zeros(n, np.int64)
        grad = y_train - pred_tr
        tree = Tree(*_k.grow_tree(X_fit, grad, row_node, *presorted,
                                  params.max_depth, params.reg_lambda, params.gamma,
                                  params.learning_rate, midpoint))
        trees.append(tree)
        _k.add_tree_prediction(X_train, tree.feature, tree.threshold, tree.default_left,
                               tree.left, tree.right, tree.value, pred_tr)
        _k.add_tree_prediction(X_val, tree.feature, tree.threshold, tree.default_left,
                               tree.left, tree.right, tree.value, pred_val)
        train_hist.append(_rmse(pred_tr, y_train))
        val_hist.append(_rmse(pred_val, y_val))
        if val_hist[-1] < best:
            best, best_round, since = val_hist[-1], rnd, 0
        else:
            since += 1
            if since >= params.early_stopping_rounds:
                break

    return TreeEnsemble(base_score=base, trees=trees, params=params, best_round=best_round,
                        n_features=n_feat, train_rmse=train_hist, val_rmse=val_hist)


def predict(ensemble: TreeEnsemble, X) -> np.ndarray:
    return ensemble.predict(X)
