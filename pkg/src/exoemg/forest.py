"""Random forest classifier over raw 8-channel EMG frames.

Each tree is grown on a bootstrap resample with Gini-impurity splits over a
random subset of channels per node. Leaves store the fraction of Open
samples that reached them, so the forest output is the mean of those
fractions: the probability that the intent is Open.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .signal_io import N_CHANNELS, EmgFrame
from .states import HandState

MODEL_FORMAT = "exoemg-forest"
MODEL_VERSION = 1
_LEAF = -1
_SEED_MASK = (1 << 64) - 1


class TrainingError(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ForestHyperparams:
    n_trees: int = 64
    max_depth: int | None = None
    features_per_split: int = 3
    min_samples_leaf: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be positive")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be positive or None")
        if not 1 <= self.features_per_split <= N_CHANNELS:
            raise ValueError(f"features_per_split must lie in [1, {N_CHANNELS}]")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be positive")
        if not -(1 << 63) <= self.rng_seed < (1 << 64):
            raise ValueError("rng_seed must fit in 64 bits")


@dataclass
class DecisionTree:
    """Flat array representation of a binary tree.

    Node ``i`` is a leaf when ``feature[i] == -1``; otherwise frames with
    ``x[feature[i]] <= threshold[i]`` go to ``left[i]``, the rest to ``right[i]``.
    ``value[i]`` is the Open fraction among training samples at the node.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def leaf_index(self, x: np.ndarray) -> int:
        node = 0
        feature, threshold, left, right = self.feature, self.threshold, self.left, self.right
        while feature[node] != _LEAF:
            node = left[node] if x[feature[node]] <= threshold[node] else right[node]
        return node

    def predict(self, x: np.ndarray) -> float:
        return float(self.value[self.leaf_index(x)])

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        nodes = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = self.feature[nodes] != _LEAF
        while active.any():
            idx = rows[active]
            n = nodes[idx]
            go_left = X[idx, self.feature[n]] <= self.threshold[n]
            nodes[idx] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[nodes] != _LEAF
        return self.value[nodes]

    def depth(self) -> int:
        depths = {0: 0}
        for i in range(self.n_nodes):
            if self.feature[i] != _LEAF:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return max(depths.values())

    def same_structure(self, other: "DecisionTree") -> bool:
        return all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in ("feature", "threshold", "left", "right", "value")
        )


@dataclass
class ForestModel:
    trees: list[DecisionTree]
    hyperparams: ForestHyperparams = field(default_factory=ForestHyperparams)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.trees:
            raise ValueError("a forest needs at least one tree")
        for tree in self.trees:
            if np.any((tree.value < 0) | (tree.value > 1)):
                raise ValueError("leaf fractions must lie in [0, 1]")
            internal = tree.feature != _LEAF
            if np.any((tree.feature[internal] < 0) | (tree.feature[internal] >= N_CHANNELS)):
                raise ValueError(f"split channels must lie in [0, {N_CHANNELS - 1}]")

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Open probability for each row of an (n, 8) array."""
        X = np.asarray(X, dtype=float)
        total = np.zeros(len(X))
        for tree in self.trees:
            total += tree.predict_many(X)
        return total / len(self.trees)

    def same_structure(self, other: "ForestModel") -> bool:
        return len(self.trees) == len(other.trees) and all(
            a.same_structure(b) for a, b in zip(self.trees, other.trees)
        )


def classify(model: ForestModel, frame: EmgFrame | Sequence[float] | np.ndarray) -> float:
    """Probability that the intent behind ``frame`` is Open.

    The Close probability is ``1 - classify(model, frame)``.
    """
    x = frame.channels if isinstance(frame, EmgFrame) else frame
    total = 0.0
    for tree in model.trees:
        total += tree.predict(x)
    return total / len(model.trees)


def _best_split(X, y, idx, features, min_leaf):
    """Best Gini split of ``idx`` over ``features``.

    Returns (score, feature, threshold) or None. ``score`` is the sum over
    children of (count of Open^2 + count of Close^2) / n_child; maximizing it
    minimizes weighted Gini impurity. Features are scanned in ascending order
    and only strictly better scores replace the incumbent, and within a
    feature the lowest threshold wins, so ties resolve to the lowest
    (channel, threshold) pair.
    """
    n = len(idx)
    yi = y[idx]
    best = None
    counts = np.arange(1, n, dtype=float)
    for f in sorted(features):
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        ones = np.cumsum(yi[order])[:-1].astype(float)
        valid = xs[1:] > xs[:-1]
        if min_leaf > 1:
            valid &= (counts >= min_leaf) & (n - counts >= min_leaf)
        if not valid.any():
            continue
        n_left = counts
        n_right = n - counts
        ones_right = yi.sum() - ones
        score = (ones**2 + (n_left - ones) ** 2) / n_left + (
            ones_right**2 + (n_right - ones_right) ** 2
        ) / n_right
        score = np.where(valid, score, -np.inf)
        k = int(np.argmax(score))
        if best is None or score[k] > best[0]:
            best = (float(score[k]), f, (xs[k] + xs[k + 1]) / 2.0)
    return best


def _grow_tree(X: np.ndarray, y: np.ndarray, hp: ForestHyperparams, rng: np.random.Generator) -> DecisionTree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def new_node(idx):
        feature.append(_LEAF)
        threshold.append(0.0)
        left.append(_LEAF)
        right.append(_LEAF)
        value.append(float(y[idx].mean()))
        return len(feature) - 1

    root = new_node(np.arange(len(y)))
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        n_open = int(y[idx].sum())
        if n_open == 0 or n_open == len(idx):
            continue
        if hp.max_depth is not None and depth >= hp.max_depth:
            continue
        if len(idx) < 2 * hp.min_samples_leaf:
            continue
        # Draw the channel subset; fall back to the remaining channels
        # (in the same random order) only when none of them can split.
        perm = rng.permutation(N_CHANNELS)
        k = hp.features_per_split
        split = _best_split(X, y, idx, perm[:k], hp.min_samples_leaf)
        while split is None and k < N_CHANNELS:
            split = _best_split(X, y, idx, perm[k : k + 1], hp.min_samples_leaf)
            k += 1
        if split is None:
            continue
        _, f, thr = split
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        lnode = new_node(li)
        rnode = new_node(ri)
        feature[node] = int(f)
        threshold[node] = float(thr)
        left[node] = lnode
        right[node] = rnode
        stack.append((rnode, ri, depth + 1))
        stack.append((lnode, li, depth + 1))

    return DecisionTree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=float),
    )


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    """Independent, reproducible RNG substream for one tree."""
    return np.random.default_rng(np.random.SeedSequence([seed & _SEED_MASK, tree_index]))


def fit_arrays(X: np.ndarray, y: np.ndarray, hp: ForestHyperparams | None = None) -> ForestModel:
    """Train on an (n, 8) channel array and a 0/1 Open indicator vector."""
    hp = hp or ForestHyperparams()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[1] != N_CHANNELS:
        raise TrainingError(f"expected an (n, {N_CHANNELS}) array, got shape {X.shape}")
    if len(X) == 0:
        raise TrainingError("empty training set")
    if len(y) != len(X):
        raise TrainingError("label count does not match sample count")
    n_open = int(y.sum())
    if n_open == 0 or n_open == len(y):
        raise TrainingError("training set must contain both Open and Close samples")

    trees = []
    n = len(X)
    for t in range(hp.n_trees):
        rng = tree_rng(hp.rng_seed, t)
        boot = rng.integers(0, n, size=n)
        trees.append(_grow_tree(X[boot], y[boot], hp, rng))
    return ForestModel(trees, hp)


def train_forest(
    samples: Iterable[tuple[EmgFrame, HandState]], hp: ForestHyperparams | None = None
) -> ForestModel:
    samples = list(samples)
    if not samples:
        raise TrainingError("empty training set")
    X = np.array([frame.channels for frame, _ in samples], dtype=float)
    y = np.array([1 if label is HandState.OPEN else 0 for _, label in samples], dtype=np.int64)
    return fit_arrays(X, y, hp)


def training_accuracy(model: ForestModel, samples: Sequence[tuple[EmgFrame, HandState]]) -> float:
    X = np.array([f.channels for f, _ in samples], dtype=float)
    truth = np.array([label is HandState.OPEN for _, label in samples])
    return float(np.mean((model.predict_proba(X) >= 0.5) == truth))


def model_to_dict(model: ForestModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "n_channels": N_CHANNELS,
        "hyperparams": asdict(model.hyperparams),
        "metadata": model.metadata,
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "value": t.value.tolist(),
            }
            for t in model.trees
        ],
    }


def model_from_dict(data: dict) -> ForestModel:
    if data.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"not a forest model file (format={data.get('format')!r})")
    if data.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {data.get('version')!r}")
    if data.get("n_channels") != N_CHANNELS:
        raise ModelFormatError(
            f"model expects {data.get('n_channels')} channels, toolkit uses {N_CHANNELS}"
        )
    try:
        trees = [
            DecisionTree(
                np.array(t["feature"], dtype=np.int64),
                np.array(t["threshold"], dtype=float),
                np.array(t["left"], dtype=np.int64),
                np.array(t["right"], dtype=np.int64),
                np.array(t["value"], dtype=float),
            )
            for t in data["trees"]
        ]
        return ForestModel(trees, ForestHyperparams(**data["hyperparams"]), dict(data.get("metadata", {})))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"corrupt model file: {exc}") from exc


def save_model(model: ForestModel, path: str | os.PathLike) -> None:
    # json writes floats via repr, so thresholds and leaf values round-trip exactly.
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, separators=(",", ":"))
        fh.write("\n")


def load_model(path: str | os.PathLike) -> ForestModel:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"model file is not valid JSON: {exc}") from exc
    return model_from_dict(data)
