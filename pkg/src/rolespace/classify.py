"""Churn classifiers and stratified cross-validation.

The random forest trains bootstrap CART trees (Gini splits, random feature
subsets) and predicts the fraction of trees whose leaf majority votes
Departed, with exactly tied leaves contributing half a vote. Trees are held
as plain index arrays, so saved models need nothing but this module to score.
The logistic baseline standardizes features internally and fits by plain
gradient descent with a step-halving safeguard.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator
from sklearn.ensemble import RandomForestClassifier

from .churn import ChurnDataset
from .evaluate import EvalReport, average_reports, evaluate_scores
from .validation import check_finite

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int | None = None
    features_per_split: int | None = None
    min_leaf: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError(f"max_depth must be >= 0, got {self.max_depth}")
        if self.min_leaf < 1:
            raise ValueError(f"min_leaf must be >= 1, got {self.min_leaf}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")


@dataclass(frozen=True)
class LogisticConfig:
    learning_rate: float = 1.0
    max_iter: int = 5000
    tol: float = 1e-8
    l2: float = 1e-3

    def __post_init__(self):
        if self.learning_rate <= 0 or self.max_iter < 1 or self.tol < 0 or self.l2 < 0:
            raise ValueError("invalid logistic learning configuration")


@dataclass(frozen=True)
class TrainedModel:
    """A scoring function plus the feature-column contract it was fit under."""

    kind: str
    feature_names: tuple[str, ...]
    params: dict

    def _check_input(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ValueError(
                f"expected shape (n, {len(self.feature_names)}), got {X.shape}")
        check_finite(X, "features")
        return X

    def predict_proba(self, X) -> np.ndarray:
        """Probability of Departed per row."""
        X = self._check_input(X)
        if self.kind == "random_forest":
            votes = np.zeros(X.shape[0])
            for tree in self.params["trees"]:
                votes += _tree_votes(tree, X)
            return votes / len(self.params["trees"])
        if self.kind == "logistic":
            p = self.params
            Xs = (X - p["mu"]) / p["sd"]
            return expit(Xs @ p["w"] + p["b"])
        if self.kind == "prior":
            return np.full(X.shape[0], self.params["base_rate"])
        raise ValueError(f"unknown model kind {self.kind!r}")

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.int64)


def _tree_votes(tree: dict, X: np.ndarray) -> np.ndarray:
    left = tree["children_left"]
    right = tree["children_right"]
    feature = tree["feature"]
    threshold = tree["threshold"]
    value = tree["value"]
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = left[node] >= 0
    while active.any():
        idx = np.flatnonzero(active)
        current = node[idx]
        go_left = X[idx, feature[current]] <= threshold[current]
        node[idx] = np.where(go_left, left[current], right[current])
        active = left[node] >= 0
    counts = value[node]
    pos, neg = counts[:, 1], counts[:, 0]
    return np.where(pos > neg, 1.0, np.where(pos == neg, 0.5, 0.0))


def _require_both_classes(y: np.ndarray) -> None:
    if len(np.unique(y)) < 2:
        raise ValueError("training data must contain both classes")


def _stump_tree(class_counts: np.ndarray) -> dict:
    return {
        "children_left": np.asarray([-1], dtype=np.int64),
        "children_right": np.asarray([-1], dtype=np.int64),
        "feature": np.asarray([-2], dtype=np.int64),
        "threshold": np.asarray([0.0]),
        "value": class_counts.reshape(1, 2).astype(np.float64),
    }


def train_random_forest(dataset: ChurnDataset, config: ForestConfig = ForestConfig()
                        ) -> TrainedModel:
    """Bootstrap-sampled Gini CART ensemble, deterministic per seed."""
    X, y = dataset.X, dataset.y
    if dataset.n_examples == 0:
        raise ValueError("cannot train on an empty dataset")
    _require_both_classes(y)
    p = dataset.n_features
    if config.max_depth == 0:
        # depth-0 trees are single leaves over the full sample: majority class
        counts = np.asarray([np.sum(y == 0), np.sum(y == 1)])
        trees = [_stump_tree(counts) for _ in range(config.n_trees)]
        return TrainedModel("random_forest", dataset.feature_names, {"trees": trees})
    features_per_split = config.features_per_split
    if features_per_split is None:
        features_per_split = max(1, round(math.sqrt(p)))
    if not 1 <= features_per_split <= p:
        raise ValueError(
            f"features_per_split must be in [1, {p}], got {features_per_split}")
    clf = RandomForestClassifier(
        n_estimators=config.n_trees,
        criterion="gini",
        max_depth=config.max_depth,
        max_features=features_per_split,
        min_samples_leaf=config.min_leaf,
        bootstrap=True,
        random_state=config.seed,
        n_jobs=1,
    )
    clf.fit(X, y)
    trees = []
    for estimator in clf.estimators_:
        t = estimator.tree_
        trees.append({
            "children_left": t.children_left.astype(np.int64),
            "children_right": t.children_right.astype(np.int64),
            "feature": t.feature.astype(np.int64),
            "threshold": t.threshold.astype(np.float64),
            "value": np.asarray(t.value)[:, 0, :].astype(np.float64),
        })
    return TrainedModel("random_forest", dataset.feature_names, {"trees": trees})


def train_logistic(dataset: ChurnDataset, config: LogisticConfig = LogisticConfig()
                   ) -> TrainedModel:
    """L2-regularized logistic regression on internally standardized features."""
    X, y = dataset.X, dataset.y
    if dataset.n_examples == 0:
        raise ValueError("cannot train on an empty dataset")
    _require_both_classes(y)
    check_finite(X, "features")
    n = X.shape[0]
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd == 0, 1.0, sd)
    Xs = (X - mu) / sd
    y_pm = 2.0 * y - 1.0
    w = np.zeros(X.shape[1])
    b = 0.0
    lr = config.learning_rate

    def objective(w, b):
        z = Xs @ w + b
        return float(np.mean(np.logaddexp(0.0, -y_pm * z))
                     + 0.5 * config.l2 * (w @ w) / n)

    current = objective(w, b)
    for _ in range(config.max_iter):
        prob = expit(Xs @ w + b)
        residual = prob - y
        grad_w = Xs.T @ residual / n + config.l2 * w / n
        grad_b = float(residual.mean())
        if math.sqrt(float(grad_w @ grad_w) + grad_b * grad_b) < config.tol:
            break
        while True:
            w_new = w - lr * grad_w
            b_new = b - lr * grad_b
            candidate = objective(w_new, b_new)
            if candidate <= current or lr < 1e-12:
                break
            lr *= 0.5
        w, b, current = w_new, b_new, candidate
    return TrainedModel("logistic", dataset.feature_names,
                        {"mu": mu, "sd": sd, "w": w, "b": float(b)})


def train_prior(dataset: ChurnDataset, config=None) -> TrainedModel:
    """Constant scorer at the training base rate (fallback for empty feature sets)."""
    if dataset.n_examples == 0:
        raise ValueError("cannot train on an empty dataset")
    return TrainedModel("prior", dataset.feature_names,
                        {"base_rate": float(dataset.y.mean())})


def dataset_subset(dataset: ChurnDataset, indices: Sequence[int]) -> ChurnDataset:
    idx = np.asarray(indices, dtype=np.int64)
    return ChurnDataset(
        user_ids=tuple(dataset.user_ids[i] for i in idx),
        window_ids=tuple(dataset.window_ids[i] for i in idx),
        X=dataset.X[idx],
        y=dataset.y[idx],
        feature_names=dataset.feature_names,
    )


def dataset_drop_columns(dataset: ChurnDataset, columns: Sequence[int]) -> ChurnDataset:
    drop = set(columns)
    keep = [i for i in range(dataset.n_features) if i not in drop]
    return ChurnDataset(
        user_ids=dataset.user_ids,
        window_ids=dataset.window_ids,
        X=dataset.X[:, keep],
        y=dataset.y,
        feature_names=tuple(dataset.feature_names[i] for i in keep),
    )


def stratified_folds(y: np.ndarray, folds: int, seed: int) -> np.ndarray:
    """Fold index per instance; each class spread round-robin after a seeded
    shuffle, so per-fold class counts differ by at most one."""
    assignment = np.empty(y.shape[0], dtype=np.int64)
    rng = np.random.default_rng(seed)
    for cls in np.unique(y):
        members = np.flatnonzero(y == cls)
        members = members[rng.permutation(members.size)]
        assignment[members] = np.arange(members.size) % folds
    return assignment


@dataclass(frozen=True)
class CrossValidationResult:
    fold_reports: tuple[EvalReport, ...]
    averaged: EvalReport


def cross_validate(dataset: ChurnDataset,
                   trainer: Callable[[ChurnDataset], TrainedModel],
                   folds: int = 10, seed: int = 0) -> CrossValidationResult:
    """Stratified k-fold: train on k-1 folds, score the held-out fold.

    A training split that degenerates to a single class falls back to the
    prior scorer for that fold (logged).
    """
    if folds < 2:
        raise ValueError(f"folds must be >= 2, got {folds}")
    if dataset.n_examples < folds:
        raise ValueError(
            f"dataset of {dataset.n_examples} instances cannot fill {folds} folds")
    assignment = stratified_folds(dataset.y, folds, seed)
    reports = []
    for fold in range(folds):
        test_idx = np.flatnonzero(assignment == fold)
        train_idx = np.flatnonzero(assignment != fold)
        train_set = dataset_subset(dataset, train_idx)
        if len(np.unique(train_set.y)) < 2:
            logger.warning("fold %d: single-class training split, using prior", fold)
            model = train_prior(train_set)
        else:
            model = trainer(train_set)
        test_set = dataset_subset(dataset, test_idx)
        scores = model.predict_proba(test_set.X)
        reports.append(evaluate_scores(scores, test_set.y))
    return CrossValidationResult(tuple(reports), average_reports(reports))


def save_model(model: TrainedModel, path: str | Path) -> None:
    """Self-describing JSON including the feature contract."""
    params = {}
    for key, val in model.params.items():
        if key == "trees":
            params["trees"] = [{k: np.asarray(v).tolist() for k, v in tree.items()}
                               for tree in val]
        elif isinstance(val, np.ndarray):
            params[key] = val.tolist()
        else:
            params[key] = val
    payload = {"kind": model.kind,
               "feature_names": list(model.feature_names),
               "params": params}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_model(path: str | Path) -> TrainedModel:
    payload = json.loads(Path(path).read_text())
    params = payload["params"]
    if payload["kind"] == "random_forest":
        trees = []
        for tree in params["trees"]:
            trees.append({
                "children_left": np.asarray(tree["children_left"], dtype=np.int64),
                "children_right": np.asarray(tree["children_right"], dtype=np.int64),
                "feature": np.asarray(tree["feature"], dtype=np.int64),
                "threshold": np.asarray(tree["threshold"], dtype=np.float64),
                "value": np.asarray(tree["value"], dtype=np.float64),
            })
        params = {"trees": trees}
    elif payload["kind"] == "logistic":
        params = {"mu": np.asarray(params["mu"]), "sd": np.asarray(params["sd"]),
                  "w": np.asarray(params["w"]), "b": float(params["b"])}
    return TrainedModel(payload["kind"], tuple(payload["feature_names"]), params)


class ForestChurnModel(BaseEstimator):
    """Estimator facade over train_random_forest."""

    def __init__(self, n_trees=100, max_depth=None, features_per_split=None,
                 min_leaf=1, seed=0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.features_per_split = features_per_split
        self.min_leaf = min_leaf
        self.seed = seed

    def _config(self) -> ForestConfig:
        return ForestConfig(n_trees=self.n_trees, max_depth=self.max_depth,
                            features_per_split=self.features_per_split,
                            min_leaf=self.min_leaf, seed=self.seed)

    def fit(self, dataset: ChurnDataset, y=None):
        self.model_ = train_random_forest(dataset, self._config())
        return self

    def predict_proba(self, X) -> np.ndarray:
        return self.model_.predict_proba(X)

    def predict(self, X) -> np.ndarray:
        return self.model_.predict(X)


class LogisticChurnModel(BaseEstimator):
    """Estimator facade over train_logistic."""

    def __init__(self, learning_rate=1.0, max_iter=5000, tol=1e-8, l2=1e-3):
        self.learning_rate = learning_rate
        self.max_iter = max_iter
        self.tol = tol
        self.l2 = l2

    def _config(self) -> LogisticConfig:
        return LogisticConfig(learning_rate=self.learning_rate,
                              max_iter=self.max_iter, tol=self.tol, l2=self.l2)

    def fit(self, dataset: ChurnDataset, y=None):
        self.model_ = train_logistic(dataset, self._config())
        return self

    def predict_proba(self, X) -> np.ndarray:
        return self.model_.predict_proba(X)

    def predict(self, X) -> np.ndarray:
        return self.model_.predict(X)
