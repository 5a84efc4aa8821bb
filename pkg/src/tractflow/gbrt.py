"""Gradient-boosted regression trees: the deployed flow predictor.

Squared-error boosting with exact greedy splits: each round fits a
depth-limited binary tree to the current residuals, choosing the split with
maximum variance reduction over sorted unique feature values. Dataset sizes
here (tens of thousands of OD pairs) make exact splitting affordable.

Determinism: rows are put into a canonical lexicographic order before
fitting, candidate features are scanned in index order and thresholds in
increasing order with strictly-better acceptance, so refitting a permuted
copy of the data reproduces the ensemble bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .errors import DegenerateGeometry, DimensionMismatch, InsufficientData


@dataclass(frozen=True)
class BoostConfig:
    rounds: int = 300
    learning_rate: float = 0.1
    max_depth: int = 6
    min_samples_leaf: int = 5
    early_stopping_rounds: int = 25

    def __post_init__(self):
        if self.rounds < 1 or self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ValueError("rounds, max_depth, min_samples_leaf must be positive")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")

    def to_dict(self) -> dict:
        return {
            "rounds": self.rounds,
            "learning_rate": self.learning_rate,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "early_stopping_rounds": self.early_stopping_rounds,
        }

    @staticmethod
    def from_dict(d: Mapping) -> "BoostConfig":
        return BoostConfig(**d)


class Tree:
    """One regression tree in flat-array form; feature < 0 marks a leaf."""

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=int)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=int)
        self.right = np.asarray(right, dtype=int)
        self.value = np.asarray(value, dtype=float)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=int)
        while True:
            feat = self.feature[node]
            at_leaf = feat < 0
            if at_leaf.all():
                return self.value[node]
            col = X[np.arange(len(X)), np.where(at_leaf, 0, feat)]
            go_left = col <= self.threshold[node]
            node = np.where(at_leaf, node,
                            np.where(go_left, self.left[node], self.right[node]))

    def leaf_of(self, x: np.ndarray) -> int:
        i = 0
        while self.feature[i] >= 0:
            i = self.left[i] if x[self.feature[i]] <= self.threshold[i] else self.right[i]
        return i

    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": [float(t) for t in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": [float(v) for v in self.value],
        }

    @staticmethod
    def from_dict(d: Mapping) -> "Tree":
        return Tree(d["feature"], d["threshold"], d["left"], d["right"], d["value"])


@dataclass
class BoostHistory:
    train_mse: list[float] = field(default_factory=list)
    val_mse: list[float] = field(default_factory=list)
    best_round: int = 0


class TreeEnsemble:
    """base_score plus learning_rate-scaled sum of fitted trees, clamped >= 0."""

    def __init__(self, base_score: float, learning_rate: float, n_features: int,
                 trees: Optional[list[Tree]] = None,
                 history: Optional[BoostHistory] = None):
        self.base_score = float(base_score)
        self.learning_rate = float(learning_rate)
        self.n_features = int(n_features)
        self.trees = trees or []
        self.history = history

    def predict_raw(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(
                f"feature length {X.shape[1]} != trained {self.n_features}")
        out = np.full(len(X), self.base_score)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Flow estimates, clamped at 0 (negative commuter counts are meaningless)."""
        return np.maximum(0.0, self.predict_raw(X))

    def to_dict(self) -> dict:
        return {
            "base_score": self.base_score,
            "learning_rate": self.learning_rate,
            "n_features": self.n_features,
            "clamp_nonnegative": True,
            "trees": [t.to_dict() for t in self.trees],
        }

    @staticmethod
    def from_dict(d: Mapping) -> "TreeEnsemble":
        return TreeEnsemble(d["base_score"], d["learning_rate"], d["n_features"],
                            [Tree.from_dict(t) for t in d["trees"]])


def make_features(e_origin: np.ndarray, e_dest: np.ndarray, distance_km: float) -> np.ndarray:
    """Concatenate [origin embedding | destination embedding | distance_km]."""
    e_origin = np.asarray(e_origin, dtype=float).ravel()
    e_dest = np.asarray(e_dest, dtype=float).ravel()
    if e_origin.shape != e_dest.shape:
        raise DimensionMismatch(
            f"embedding dims differ: {e_origin.shape[0]} vs {e_dest.shape[0]}")
    if not distance_km > 0:
        raise DegenerateGeometry(f"pair distance must be > 0, got {distance_km}")
    return np.concatenate([e_origin, e_dest, [float(distance_km)]])


def make_feature_matrix(E_origin: np.ndarray, E_dest: np.ndarray,
                        distances_km: np.ndarray) -> np.ndarray:
    """Row-wise make_features for aligned batches of pairs."""
    if E_origin.shape != E_dest.shape:
        raise DimensionMismatch("embedding blocks differ in shape")
    d = np.asarray(distances_km, dtype=float).reshape(-1, 1)
    if len(d) != len(E_origin):
        raise DimensionMismatch("one distance per pair required")
    if not (d > 0).all():
        raise DegenerateGeometry("pair distances must be > 0")
    return np.concatenate([E_origin, E_dest, d], axis=1)


def _best_split(X: np.ndarray, residual: np.ndarray, rows: np.ndarray,
                min_leaf: int) -> Optional[tuple[int, float]]:
    """Max variance-reduction split; ties go to the smallest feature index,
    then the smallest threshold midpoint."""
    n = len(rows)
    r = residual[rows]
    total = r.sum()
    base = total * total / n
    best_gain = 0.0
    best: Optional[tuple[int, float]] = None
    for f in range(X.shape[1]):
        v = X[rows, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        csum = np.cumsum(r[order])
        pos = np.nonzero(vs[:-1] < vs[1:])[0]
        if len(pos) == 0:
            continue
        n_left = pos + 1
        ok = (n_left >= min_leaf) & (n - n_left >= min_leaf)
        pos = pos[ok]
        if len(pos) == 0:
            continue
        n_left = n_left[ok]
        s_left = csum[pos]
        s_right = total - s_left
        gain = s_left * s_left / n_left + s_right * s_right / (n - n_left) - base
        k = int(np.argmax(gain))  # first max -> smallest threshold
        if gain[k] > best_gain:
            best_gain = float(gain[k])
            best = (f, float((vs[pos[k]] + vs[pos[k] + 1]) / 2.0))
    return best


def _grow(X: np.ndarray, residual: np.ndarray, rows: np.ndarray, depth: int,
          cfg: BoostConfig, nodes: list) -> int:
    idx = len(nodes)
    nodes.append(None)
    split = None
    if depth < cfg.max_depth and len(rows) >= 2 * cfg.min_samples_leaf:
        split = _best_split(X, residual, rows, cfg.min_samples_leaf)
    if split is None:
        nodes[idx] = (-1, 0.0, -1, -1, residual[rows].sum() / len(rows))
        return idx
    f, thr = split
    mask = X[rows, f] <= thr
    left = _grow(X, residual, rows[mask], depth + 1, cfg, nodes)
    right = _grow(X, residual, rows[~mask], depth + 1, cfg, nodes)
    nodes[idx] = (f, thr, left, right, 0.0)
    return idx


def _fit_tree(X: np.ndarray, residual: np.ndarray, cfg: BoostConfig) -> Tree:
    nodes: list = []
    _grow(X, residual, np.arange(len(X)), 0, cfg, nodes)
    cols = list(zip(*nodes))
    return Tree(cols[0], cols[1], cols[2], cols[3], cols[4])


def fit(features: np.ndarray, targets: np.ndarray,
        val_features: Optional[np.ndarray] = None,
        val_targets: Optional[np.ndarray] = None,
        config: BoostConfig = BoostConfig()) -> TreeEnsemble:
    """Boost depth-limited trees on squared-error residuals.

    Per-round training MSE is non-increasing (leaf values are residual means,
    learning_rate <= 1). With a validation set, boosting stops once val MSE
    has not improved for ``early_stopping_rounds`` rounds and the ensemble is
    truncated to its best round. A round whose tree is a lone zero leaf can
    make no further progress and ends fitting, so constant targets yield an
    ensemble of no trees beyond the base score.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise DimensionMismatch("features must be 2-D and aligned with targets")
    if len(y) < 2 * config.min_samples_leaf:
        raise InsufficientData(
            f"{len(y)} rows < 2 * min_samples_leaf ({config.min_samples_leaf})")

    # canonical row order: lexicographic over feature columns, then target
    keys = (y,) + tuple(X[:, f] for f in reversed(range(X.shape[1])))
    order = np.lexsort(keys)
    X = X[order]
    y = y[order]

    base = float(y.mean())
    ensemble = TreeEnsemble(base, config.learning_rate, X.shape[1],
                            history=BoostHistory())
    residual = y - base
    has_val = val_features is not None and val_targets is not None
    if has_val:
        Xv = np.asarray(val_features, dtype=float)
        yv = np.asarray(val_targets, dtype=float)
        val_pred = np.full(len(yv), base)
    best_val = np.inf
    stale = 0

    for _ in range(config.rounds):
        tree = _fit_tree(X, residual, config)
        if tree.n_leaves() == 1 and tree.value[0] == 0.0:
            break
        ensemble.trees.append(tree)
        residual = residual - config.learning_rate * tree.predict(X)
        ensemble.history.train_mse.append(float(np.mean(residual ** 2)))
        if has_val:
            val_pred = val_pred + config.learning_rate * tree.predict(Xv)
            vm = float(np.mean((yv - val_pred) ** 2))
            ensemble.history.val_mse.append(vm)
            if vm < best_val:
                best_val = vm
                ensemble.history.best_round = len(ensemble.trees)
                stale = 0
            else:
                stale += 1
                if stale >= config.early_stopping_rounds:
                    break
        else:
            ensemble.history.best_round = len(ensemble.trees)

    ensemble.trees = ensemble.trees[:ensemble.history.best_round]
    return ensemble
