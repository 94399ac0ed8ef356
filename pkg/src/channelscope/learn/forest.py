"""Gini decision trees and a bootstrap random forest with majority voting."""

from __future__ import annotations

import json
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MODEL_FORMAT = "channelscope-forest"
MODEL_VERSION = 1
LEAF = -1
_EPS = 1e-12


@dataclass
class DecisionTree:
    """Array-backed binary tree; ``value`` holds the class index at leaves."""
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max()) if self.n_nodes else 0

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            inner = self.feature[node] != LEAF
            if not inner.any():
                return node
            r, n = rows[inner], node[inner]
            go_left = X[r, self.feature[n]] <= self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])

    def predict_index(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(), "value": self.value.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> DecisionTree:
        return cls(np.asarray(d["feature"], dtype=np.int64), np.asarray(d["threshold"], dtype=np.float64),
                   np.asarray(d["left"], dtype=np.int64), np.asarray(d["right"], dtype=np.int64),
                   np.asarray(d["value"], dtype=np.int64))


def _gini(counts: np.ndarray) -> np.ndarray:
    n = counts.sum(axis=-1, keepdims=True)
    p = counts / np.maximum(n, 1)
    return 1.0 - np.sum(p * p, axis=-1)


def _best_split(X, y, idx, features, n_classes):
    """Best (gain, feature, threshold) over the candidate features.

    Candidates are midpoints between consecutive distinct values. Features are
    scanned in ascending index order and thresholds ascending; only a strictly
    larger gain replaces the incumbent.
    """
    yi = y[idx]
    n = idx.size
    total = np.bincount(yi, minlength=n_classes).astype(np.float64)
    parent = _gini(total)
    onehot = np.eye(n_classes)[yi]
    best = (-np.inf, LEAF, 0.0)
    for f in features:
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        valid = np.flatnonzero(xs[:-1] < xs[1:])
        if valid.size == 0:
            continue
        left = np.cumsum(onehot[order], axis=0)[valid]
        right = total - left
        nl = (valid + 1).astype(np.float64)
        nr = n - nl
        impurity = (nl * _gini(left) + nr * _gini(right)) / n
        gains = parent - impurity
        j = int(np.argmax(gains))
        if gains[j] > best[0] + _EPS:
            best = (float(gains[j]), int(f), float((xs[valid[j]] + xs[valid[j] + 1]) / 2.0))
    return best


def fit_tree(X: np.ndarray, y: np.ndarray, n_classes: int, max_depth: int,
             features_per_split: int, rng: np.random.Generator) -> DecisionTree:
    """Grow a tree breadth-first.

    Breadth-first growth means a deeper tree grown from the same generator
    state is a refinement of the shallower one.
    """
    n_features = X.shape[1]
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        counts = np.bincount(y[idx], minlength=n_classes)
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(int(np.argmax(counts)))  # ties -> lowest class index
        return len(feature) - 1

    queue = deque([(new_node(np.arange(y.size)), np.arange(y.size), 0)])
    while queue:
        node, idx, depth = queue.popleft()
        if depth >= max_depth or idx.size < 2 or np.all(y[idx] == y[idx[0]]):
            continue
        cand = np.sort(rng.choice(n_features, size=min(features_per_split, n_features), replace=False))
        gain, f, thr = _best_split(X, y, idx, cand, n_classes)
        if f == LEAF:
            continue
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        queue.append((left[node], li, depth + 1))
        queue.append((right[node], ri, depth + 1))
    return DecisionTree(np.asarray(feature, dtype=np.int64), np.asarray(threshold, dtype=np.float64),
                        np.asarray(left, dtype=np.int64), np.asarray(right, dtype=np.int64),
                        np.asarray(value, dtype=np.int64))


@dataclass
class ForestModel:
    trees: list[DecisionTree]
    classes: np.ndarray
    max_depth: int
    features_per_split: int
    master_seed: int
    n_features: int
    bootstrap_unique: list[float] = field(default_factory=list, repr=False)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def votes(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        v = np.zeros((X.shape[0], self.classes.size), dtype=np.int64)
        rows = np.arange(X.shape[0])
        for t in self.trees:
            np.add.at(v, (rows, t.predict_index(X)), 1)
        return v

    def predict(self, X) -> np.ndarray:
        # argmax returns the first maximum, i.e. the lowest class code on ties
        return self.classes[np.argmax(self.votes(X), axis=1)]

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "classes": self.classes.tolist(),
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "features_per_split": self.features_per_split,
            "master_seed": self.master_seed,
            "n_features": self.n_features,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> ForestModel:
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model format {d.get('format')!r} v{d.get('version')}")
        return cls([DecisionTree.from_dict(t) for t in d["trees"]], np.asarray(d["classes"]),
                   d["max_depth"], d["features_per_split"], d["master_seed"], d["n_features"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), separators=(",", ":")) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> ForestModel:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def default_features_per_split(n_features: int) -> int:
    return max(1, math.ceil(math.sqrt(n_features)))


def train_forest(X, y, max_depth: int, n_trees: int = 100, seed: int = 0,
                 features_per_split: int | None = None, n_jobs: int = 1) -> ForestModel:
    """Bootstrap-aggregated Gini trees.

    Tree ``i`` draws its bootstrap sample and split features from the ``i``-th
    child of ``SeedSequence(seed)``, so the model does not depend on
    ``n_jobs`` or scheduling order.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if y.size == 0:
        raise ValueError("training set is empty")
    if max_depth < 1 or n_trees < 1:
        raise ValueError("max_depth and n_trees must be >= 1")
    classes, yi = np.unique(y, return_inverse=True)
    n, p = X.shape
    k = features_per_split or default_features_per_split(p)
    children = np.random.SeedSequence(seed).spawn(n_trees)

    def grow(child):
        rng = np.random.default_rng(child)
        sample = rng.integers(0, n, size=n)
        tree = fit_tree(X[sample], yi[sample], classes.size, max_depth, k, rng)
        return tree, np.unique(sample).size / n

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            grown = list(pool.map(grow, children))
    else:
        grown = [grow(c) for c in children]
    return ForestModel([t for t, _ in grown], classes, max_depth, k, seed, p, [u for _, u in grown])
