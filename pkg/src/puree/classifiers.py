"""Random forests of Gini trees and one-vs-rest Pegasos SVMs (linear and RBF)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist, pdist


class ClassifierError(ValueError):
    pass


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[0] == 0:
        raise ClassifierError("features must be a nonempty 2-D array")
    return X


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = _as_matrix(X)
        sd = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(sd > 0, sd, 1.0))

    def transform(self, X) -> np.ndarray:
        return (_as_matrix(X) - self.mean) / self.scale


# ---------------------------------------------------------------- trees

@dataclass
class DecisionTree:
    """Array-encoded binary tree; ``feature[k] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_features: int

    def predict(self, X) -> np.ndarray:
        X = _as_matrix(X)
        node = np.zeros(X.shape[0], dtype=int)
        rows = np.arange(X.shape[0])
        while True:
            inner = self.feature[node] >= 0
            if not inner.any():
                return self.value[node]
            f = self.feature[node[inner]]
            go_left = X[rows[inner], f] <= self.threshold[node[inner]]
            node[inner] = np.where(go_left, self.left[node[inner]], self.right[node[inner]])


def _gini_counts(counts):
    n = counts.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = counts / n[..., None]
    return np.where(n > 0, 1.0 - np.sum(p * p, axis=-1), 0.0)


def _best_split(X, y, n_classes, features, max_features):
    """Lowest weighted child Gini over the first ``max_features`` non-constant features."""
    best = None
    tried = 0
    n = len(y)
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        tried += 1
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), y[order]] = 1.0
        left = np.cumsum(onehot, axis=0)[:-1]
        right = left[-1] + onehot[-1] - left
        nl = np.arange(1, n)
        score = (nl * _gini_counts(left) + (n - nl) * _gini_counts(right)) / n
        score = np.where(valid, score, np.inf)
        i = int(np.argmin(score))
        if best is None or score[i] < best[0]:
            best = (score[i], f, 0.5 * (xs[i] + xs[i + 1]))
        if max_features is not None and tried >= max_features:
            break
    return best


def train_decision_tree(X, y, n_classes=5, max_depth=20, max_features=None,
                        seed=0, min_samples_split=2) -> DecisionTree:
    """Grow a Gini tree to purity (or ``max_depth``); ties at leaves go to the lowest class."""
    X = _as_matrix(X)
    y = np.asarray(y, dtype=int)
    rng = np.random.default_rng(seed)
    feature, threshold, left, right, value = [], [], [], [], []

    def grow(idx, depth):
        node = len(feature)
        counts = np.bincount(y[idx], minlength=n_classes)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(int(np.argmax(counts)))
        if depth >= max_depth or len(idx) < min_samples_split or np.count_nonzero(counts) <= 1:
            return node
        split = _best_split(X[idx], y[idx], n_classes, rng.permutation(X.shape[1]), max_features)
        if split is None:
            return node
        _, f, t = split
        mask = X[idx, f] <= t
        feature[node], threshold[node] = int(f), float(t)
        left[node] = grow(idx[mask], depth + 1)
        right[node] = grow(idx[~mask], depth + 1)
        return node

    grow(np.arange(X.shape[0]), 0)
    return DecisionTree(np.array(feature), np.array(threshold), np.array(left),
                        np.array(right), np.array(value), X.shape[1])


@dataclass
class ForestModel:
    trees: list[DecisionTree]
    n_classes: int = 5
    seeds: list[int] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features


def train_random_forest(features, labels, n_trees=10, seed=0, n_classes=5,
                        max_depth=20) -> ForestModel:
    """Bootstrap-aggregated Gini trees with sqrt(F) candidate features per split."""
    X = _as_matrix(features)
    y = np.asarray(labels, dtype=int)
    if len(y) != X.shape[0]:
        raise ClassifierError("need one label per feature row")
    if n_trees < 1:
        raise ClassifierError("a forest needs at least one tree")
    max_features = max(1, int(np.sqrt(X.shape[1])))
    seeds = [int(s) for s in np.random.SeedSequence(seed).generate_state(n_trees)]
    trees = []
    for s in seeds:
        rng = np.random.default_rng(s)
        boot = rng.integers(0, X.shape[0], size=X.shape[0])
        trees.append(train_decision_tree(X[boot], y[boot], n_classes, max_depth,
                                         max_features, seed=s + 1))
    return ForestModel(trees, n_classes, seeds)


def forest_votes(model: ForestModel, X) -> np.ndarray:
    X = _as_matrix(X)
    votes = np.zeros((X.shape[0], model.n_classes), dtype=int)
    for tree in model.trees:
        votes[np.arange(X.shape[0]), tree.predict(X)] += 1
    return votes


# ---------------------------------------------------------------- SVMs

def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    return np.exp(-gamma * cdist(_as_matrix(A), _as_matrix(B), "sqeuclidean"))


def median_gamma(X) -> float:
    """``1 / (2 median^2)`` over pairwise Euclidean distances."""
    d = pdist(_as_matrix(X))
    med = float(np.median(d)) if d.size else 0.0
    return 1.0 / (2.0 * med * med) if med > 0 else 1.0


@dataclass
class SvmModel:
    kernel: str
    lam: float
    classes: int
    scaler: Standardizer | None
    weights: np.ndarray | None = None      # linear: (classes, d + 1), last column is the bias
    support: np.ndarray | None = None      # rbf: standardized training rows
    alpha: np.ndarray | None = None        # rbf: (classes, n) signed, pre-scaled coefficients
    gamma: float | None = None
    iterations: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        if self.kernel == "linear":
            return self.weights.shape[1] - 1
        return self.support.shape[1]

    def decision_function(self, X) -> np.ndarray:
        X = _as_matrix(X)
        if X.shape[1] != self.n_features:
            raise ClassifierError(f"expected {self.n_features} features, got {X.shape[1]}")
        if self.scaler is not None:
            X = self.scaler.transform(X)
        if self.kernel == "linear":
            return X @ self.weights[:, :-1].T + self.weights[:, -1]
        return rbf_kernel(X, self.support, self.gamma) @ self.alpha.T


def _ovr_targets(y, classes):
    return np.where(y[None, :] == np.arange(classes)[:, None], 1.0, -1.0)


def svm_objective(model: SvmModel, X, y) -> np.ndarray:
    """Regularized hinge objective of each one-vs-rest machine."""
    X = _as_matrix(X)
    Y = _ovr_targets(np.asarray(y, dtype=int), model.classes)
    margins = Y * model.decision_function(X).T
    hinge = np.maximum(0.0, 1.0 - margins).mean(axis=1)
    if model.kernel == "linear":
        sq = np.sum(model.weights ** 2, axis=1)
    else:
        K = rbf_kernel(model.support, model.support, model.gamma)
        sq = np.einsum("ci,ij,cj->c", model.alpha, K, model.alpha)
    return 0.5 * model.lam * sq + hinge


def train_svm(features, labels, kernel="linear", lam=1e-3, iterations=None, seed=0,
              n_classes=5, gamma=None, standardize=True) -> SvmModel:
    """One-vs-rest stochastic subgradient (Pegasos) training.

    Linear machines fold the bias in as a constant feature; the RBF variant is the
    kernelized update that counts margin violations per training example.
    Standardization statistics come from the training rows only.
    """
    X = _as_matrix(features)
    if not np.all(np.isfinite(X)):
        raise ClassifierError("features contain non-finite values")
    y = np.asarray(labels, dtype=int)
    if len(y) != X.shape[0]:
        raise ClassifierError("need one label per feature row")
    if lam <= 0:
        raise ClassifierError("regularization must be positive")
    scaler = Standardizer.fit(X) if standardize else None
    Z = scaler.transform(X) if scaler else X
    n, d = Z.shape
    T = int(iterations) if iterations is not None else 20 * n
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, n, size=T)
    Y = _ovr_targets(y, n_classes)

    if kernel == "linear":
        Za = np.column_stack([Z, np.ones(n)])
        W = np.zeros((n_classes, d + 1))
        for t, i in enumerate(picks, start=1):
            eta = 1.0 / (lam * t)
            viol = Y[:, i] * (W @ Za[i]) < 1.0
            W *= 1.0 - eta * lam
            W[viol] += eta * Y[viol, i][:, None] * Za[i]
        return SvmModel("linear", lam, n_classes, scaler, weights=W,
                        iterations=T, meta={"standardized": standardize})

    if kernel == "rbf":
        g = median_gamma(Z) if gamma is None else float(gamma)
        K = rbf_kernel(Z, Z, g)
        counts = np.zeros((n_classes, n))
        for t, i in enumerate(picks, start=1):
            f = (counts * Y) @ K[:, i] / (lam * t)
            counts[:, i] += Y[:, i] * f < 1.0
        alpha = counts * Y / (lam * T)
        return SvmModel("rbf", lam, n_classes, scaler, support=Z.copy(), alpha=alpha, gamma=g,
                        iterations=T, meta={"standardized": standardize, "gamma": g,
                                            "gamma_rule": "median" if gamma is None else "fixed"})
    raise ClassifierError(f"unknown kernel {kernel!r}")


# ---------------------------------------------------------------- prediction

def predict_classifier(model, X) -> np.ndarray:
    """Class per row; a 1-D input returns a 1-element array."""
    X = _as_matrix(X)
    if X.shape[1] != model.n_features:
        raise ClassifierError(f"expected {model.n_features} features, got {X.shape[1]}")
    if isinstance(model, ForestModel):
        return forest_votes(model, X).argmax(axis=1)
    if isinstance(model, SvmModel):
        return model.decision_function(X).argmax(axis=1)
    raise TypeError(f"unsupported model {type(model).__name__}")
