"""Weak multi-class labelers built on numpy.

Five families stand in for the heterogeneous on-board classifiers: a fine and
a medium CART tree, a one-vs-rest linear hinge-loss model, a one-vs-rest RBF
kernel perceptron and a distance-weighted kNN. All training is deterministic
for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Label, Sample, ValidationError

KINDS = ("tree_fine", "tree_medium", "linear_ovr", "kernel_ovr", "weighted_knn")


@dataclass(frozen=True)
class ClassifierKind:
    name: str
    max_depth: int | None = None
    min_leaf: int = 1
    reg: float = 1e-3
    epochs: int = 200
    learning_rate: float = 0.5
    kernel_width: float | None = None
    k: int = 10

    def __post_init__(self):
        if self.name not in KINDS:
            raise ValidationError(f"unknown classifier kind {self.name!r}; expected one of {KINDS}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValidationError("max_depth must be >= 1")
        if self.min_leaf < 1 or self.epochs < 1 or self.k < 1:
            raise ValidationError("min_leaf, epochs and k must be >= 1")
        if self.reg < 0 or self.learning_rate <= 0:
            raise ValidationError("reg must be >= 0 and learning_rate > 0")
        if self.kernel_width is not None and self.kernel_width <= 0:
            raise ValidationError("kernel_width must be positive")


def TreeFine(**kw) -> ClassifierKind:
    return ClassifierKind("tree_fine", max_depth=None, min_leaf=1, **kw)


def TreeMedium(max_depth: int = 4, **kw) -> ClassifierKind:
    return ClassifierKind("tree_medium", max_depth=max_depth, **kw)


def LinearOvR(**kw) -> ClassifierKind:
    return ClassifierKind("linear_ovr", **kw)


def KernelOvR(**kw) -> ClassifierKind:
    kw.setdefault("epochs", 30)
    return ClassifierKind("kernel_ovr", **kw)


def WeightedKnn(k: int = 10, **kw) -> ClassifierKind:
    return ClassifierKind("weighted_knn", k=k, **kw)


DEFAULT_KINDS = {
    "tree_fine": TreeFine(),
    "tree_medium": TreeMedium(),
    "linear_ovr": LinearOvR(),
    "kernel_ovr": KernelOvR(),
    "weighted_knn": WeightedKnn(),
}


class _Standardizer:
    def __init__(self, X: np.ndarray):
        self.mean = X.mean(axis=0)
        std = X.std(axis=0)
        self.scale = np.where(std > 0, std, 1.0)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale


class Model:
    """A fitted classifier. Instances are never mutated after ``fit``."""

    def __init__(self, kind: ClassifierKind, num_classes: int, num_features: int):
        self.kind = kind
        self.num_classes = num_classes
        self.num_features = num_features

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.num_features:
            raise ValidationError(f"expected feature vectors of length {self.num_features}, got shape {X.shape}")
        return self._predict(X)

    def _predict(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class DecisionTree(Model):
    """CART with Gini impurity; split ties resolve to the lowest feature, then lowest threshold."""

    def fit(self, X, y, seed):
        self._feature, self._threshold, self._left, self._right, self._value = [], [], [], [], []
        self._grow(X, y, depth=0)
        self._feature = np.array(self._feature)
        self._threshold = np.array(self._threshold)
        self._left = np.array(self._left)
        self._right = np.array(self._right)
        self._value = np.array(self._value)
        return self

    def _new_node(self, value):
        self._feature.append(-1)
        self._threshold.append(0.0)
        self._left.append(-1)
        self._right.append(-1)
        self._value.append(value)
        return len(self._feature) - 1

    def _grow(self, X, y, depth):
        counts = np.bincount(y, minlength=self.num_classes)
        node = self._new_node(int(np.argmax(counts)))
        max_depth = self.kind.max_depth
        if (max_depth is not None and depth >= max_depth) or np.count_nonzero(counts) <= 1:
            return node
        split = self._best_split(X, y, counts)
        if split is None:
            return node
        f, thr = split
        mask = X[:, f] <= thr
        self._feature[node] = f
        self._threshold[node] = thr
        self._left[node] = self._grow(X[mask], y[mask], depth + 1)
        self._right[node] = self._grow(X[~mask], y[~mask], depth + 1)
        return node

    def _best_split(self, X, y, counts):
        n = len(y)
        min_leaf = self.kind.min_leaf
        parent = 1.0 - np.sum((counts / n) ** 2)
        onehot = np.eye(self.num_classes)[y]
        best_gain, best = 1e-12, None
        for f in range(X.shape[1]):
            order = np.argsort(X[:, f], kind="stable")
            xs = X[order, f]
            left = np.cumsum(onehot[order], axis=0)[:-1]
            n_left = np.arange(1, n)
            valid = (xs[1:] > xs[:-1]) & (n_left >= min_leaf) & (n - n_left >= min_leaf)
            if not valid.any():
                continue
            right = counts - left
            n_right = n - n_left
            g_left = 1.0 - np.sum(left ** 2, axis=1) / n_left ** 2
            g_right = 1.0 - np.sum(right ** 2, axis=1) / n_right ** 2
            gain = parent - (n_left * g_left + n_right * g_right) / n
            gain[~valid] = -np.inf
            i = int(np.argmax(gain))
            if gain[i] > best_gain + 1e-12:
                best_gain = gain[i]
                best = (f, 0.5 * (xs[i] + xs[i + 1]))
        return best

    def _predict(self, X):
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            inner = self._feature[node] >= 0
            if not inner.any():
                return self._value[node]
            idx = np.flatnonzero(inner)
            cur = node[idx]
            go_left = X[idx, self._feature[cur]] <= self._threshold[cur]
            node[idx] = np.where(go_left, self._left[cur], self._right[cur])

    @property
    def depth(self) -> int:
        def walk(i):
            if self._feature[i] < 0:
                return 0
            return 1 + max(walk(self._left[i]), walk(self._right[i]))
        return walk(0)


def _ovr_targets(y, num_classes):
    Y = -np.ones((len(y), num_classes))
    Y[np.arange(len(y)), y] = 1.0
    return Y


class LinearHinge(Model):
    """One-vs-rest L2-regularized hinge loss, full-batch subgradient descent.

    Step size decays as ``learning_rate / sqrt(t)``; the returned weights are
    the average of the second half of the iterates.
    """

    def fit(self, X, y, seed):
        self._std = _Standardizer(X)
        Xb = np.hstack([self._std(X), np.ones((len(X), 1))])
        Y = _ovr_targets(y, self.num_classes)
        n = len(X)
        W = np.zeros((self.num_classes, Xb.shape[1]))
        avg = np.zeros_like(W)
        epochs, reg = self.kind.epochs, self.kind.reg
        start = epochs // 2
        for t in range(1, epochs + 1):
            margin = Y * (Xb @ W.T)
            active = (margin < 1.0) * Y
            grad = -(active.T @ Xb) / n
            grad[:, :-1] += reg * W[:, :-1]
            W = W - self.kind.learning_rate / np.sqrt(t) * grad
            if t > start:
                avg += W
        self._W = avg / (epochs - start)
        return self

    def decision_function(self, X):
        Xb = np.hstack([self._std(X), np.ones((len(X), 1))])
        return Xb @ self._W.T

    def _predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)


class KernelPerceptron(Model):
    """One-vs-rest batch kernel perceptron with an RBF kernel plus a constant bias term.

    Each epoch adds one unit of weight to every training point that a class's
    current score misclassifies; the averaged weights over all epochs are kept.
    """

    def _kernel(self, A, B):
        sq = np.sum(A ** 2, axis=1)[:, None] + np.sum(B ** 2, axis=1)[None, :] - 2.0 * A @ B.T
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-sq / (2.0 * self._width ** 2)) + 1.0

    def fit(self, X, y, seed):
        self._std = _Standardizer(X)
        Z = self._std(X)
        self._width = self.kind.kernel_width or float(np.sqrt(X.shape[1]))
        G = self._kernel(Z, Z)
        Y = _ovr_targets(y, self.num_classes)
        alpha = np.zeros_like(Y)
        avg = np.zeros_like(Y)
        for _ in range(self.kind.epochs):
            scores = G @ (alpha * Y)
            alpha += (Y * scores <= 0.0)
            avg += alpha
        self._Z = Z
        self._coef = avg * Y / self.kind.epochs
        return self

    def decision_function(self, X):
        return self._kernel(self._std(X), self._Z) @ self._coef

    def _predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)


class KnnModel(Model):
    """k nearest neighbours on standardized features, votes weighted by 1/distance^2.

    Exact matches (distance 0) override everything else: only they vote.
    """

    def fit(self, X, y, seed):
        self._std = _Standardizer(X)
        self._Z = self._std(X)
        self._y = np.asarray(y)
        return self

    def _predict(self, X):
        Q = self._std(X)
        d2 = (
            np.sum(Q ** 2, axis=1)[:, None]
            + np.sum(self._Z ** 2, axis=1)[None, :]
            - 2.0 * Q @ self._Z.T
        )
        np.maximum(d2, 0.0, out=d2)
        k = min(self.kind.k, len(self._y))
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        out = np.empty(len(Q), dtype=np.int64)
        for r in range(len(Q)):
            nd = d2[r, nearest[r]]
            labels = self._y[nearest[r]]
            exact = nd <= 1e-24
            if exact.any():
                w = exact.astype(float)
            else:
                w = 1.0 / nd
            votes = np.bincount(labels, weights=w, minlength=self.num_classes)
            out[r] = int(np.argmax(votes))
        return out


_MODEL_TYPES = {
    "tree_fine": DecisionTree,
    "tree_medium": DecisionTree,
    "linear_ovr": LinearHinge,
    "kernel_ovr": KernelPerceptron,
    "weighted_knn": KnnModel,
}


def _as_arrays(data):
    if isinstance(data, tuple) and len(data) == 2 and isinstance(data[0], np.ndarray):
        X, y = data
    else:
        pairs = list(data)
        if not pairs:
            raise ValidationError("training data is empty")
        X = [np.asarray(x, dtype=np.float64) for x, _ in pairs]
        if len({len(x) for x in X}) != 1:
            raise ValidationError("feature vectors have mixed dimensionality")
        y = [int(lbl) for _, lbl in pairs]
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
        raise ValidationError("training data must be a non-empty (n, d) array with n labels")
    return X, y


def train(kind: ClassifierKind, data, seed: int = 0, num_classes: int | None = None) -> Model:
    """Fit a fresh model of ``kind``.

    ``data`` is either ``(X, y)`` arrays or an iterable of ``(features, label)``
    pairs. ``num_classes`` defaults to ``max(y) + 1``.
    """
    X, y = _as_arrays(data)
    if len(np.unique(y)) < 2:
        raise ValidationError("training data must contain at least two classes")
    K = int(y.max()) + 1 if num_classes is None else num_classes
    if y.min() < 0 or y.max() >= K:
        raise ValidationError(f"labels must lie in [0, {K})")
    model = _MODEL_TYPES[kind.name](kind, K, X.shape[1])
    return model.fit(X, y, seed)


def predict(model: Model, x) -> Label:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValidationError("predict expects a single feature vector")
    return Label(int(model.predict_many(x[None, :])[0]))


def measure_accuracy(model: Model, eval_set) -> float:
    """Fraction of ``eval_set`` the model labels correctly."""
    X, y = _as_arrays(eval_set)
    hits = int(np.count_nonzero(model.predict_many(X) == y))
    return hits / len(y)


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Offline history plus the append-only online set chosen by selection."""

    base_X: np.ndarray
    base_y: np.ndarray
    online: tuple[Sample, ...] = ()
    _keys: frozenset = field(default=frozenset(), repr=False)

    def __post_init__(self):
        keys = frozenset((s.source, s.time) for s in self.online)
        if len(keys) != len(self.online):
            raise ValidationError("online set contains duplicate samples")
        object.__setattr__(self, "_keys", keys)

    def extended(self, samples: Sequence[Sample]) -> "TrainingSet":
        return TrainingSet(self.base_X, self.base_y, self.online + tuple(samples))

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.online:
            return self.base_X, self.base_y
        X = np.vstack([self.base_X] + [s.data[None, :] for s in self.online])
        y = np.concatenate([self.base_y, [s.label.class_index for s in self.online]])
        return X, y


def retrain_with(model: Model, training: TrainingSet, seed: int = 0) -> Model:
    return train(model.kind, training.arrays(), seed, num_classes=model.num_classes)


@dataclass(frozen=True, eq=False)
class LabelerProfile:
    """A vehicle's trained classifier with its measured offline accuracy.

    ``noise`` is the per-dimension standard deviation of the vehicle's view
    of an event when it ships raw data.
    """

    id: int
    kind: ClassifierKind
    model: Model
    offline_accuracy: float
    noise: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.offline_accuracy <= 1.0:
            raise ValidationError("offline_accuracy must lie in [0, 1]")
        if self.noise < 0:
            raise ValidationError("noise must be non-negative")


def holdout_split(y: np.ndarray, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Stratified split of positions ``0..len(y)-1`` into (fit, eval)."""
    rng = np.random.default_rng(seed)
    fit, ev = [], []
    for k in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == k))
        n_eval = int(round(fraction * len(idx)))
        if len(idx) > 1:
            n_eval = min(max(n_eval, 1), len(idx) - 1)
        else:
            n_eval = 0
        ev.extend(idx[:n_eval])
        fit.extend(idx[n_eval:])
    return np.sort(np.array(fit, dtype=np.int64)), np.sort(np.array(ev, dtype=np.int64))


def build_profile(
    vid: int,
    kind: ClassifierKind,
    X: np.ndarray,
    y: np.ndarray,
    num_classes: int,
    seed: int,
    noise: float = 0.0,
    holdout: float = 0.25,
) -> LabelerProfile:
    """Measure accuracy on a stratified holdout of the offline data, then refit on all of it."""
    fit, ev = holdout_split(y, holdout, seed)
    if len(ev) == 0:
        raise ValidationError("offline set too small to hold out an evaluation split")
    probe = train(kind, (X[fit], y[fit]), seed, num_classes)
    acc = measure_accuracy(probe, (X[ev], y[ev]))
    model = train(kind, (X, y), seed, num_classes)
    return LabelerProfile(vid, kind, model, acc, noise)
