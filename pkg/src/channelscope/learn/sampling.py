"""Stratified train/test splitting and SMOTE oversampling."""

from __future__ import annotations

import math

import numpy as np


class StratificationError(ValueError):
    pass


class OversamplingError(ValueError):
    pass


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split_indices(y, train_fraction: float = 0.8, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Per class, round(train_fraction * n) members go to train (at least one left for test)."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be in (0, 1)")
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    classes, counts = np.unique(y, return_counts=True)
    if classes.size < 2:
        raise StratificationError("stratified split needs at least two classes")
    small = classes[counts < 2]
    if small.size:
        raise StratificationError(f"classes {small.tolist()} have fewer than 2 members")
    train, test = [], []
    for c in classes:
        idx = rng.permutation(np.flatnonzero(y == c))
        k = min(max(_round_half_up(train_fraction * idx.size), 1), idx.size - 1)
        train.append(idx[:k])
        test.append(idx[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def split_train_test(X, y, train_fraction: float = 0.8, seed: int = 0):
    """Returns ``(X_train, y_train, X_test, y_test)``."""
    X, y = np.asarray(X), np.asarray(y)
    tr, te = stratified_split_indices(y, train_fraction, seed)
    return X[tr], y[tr], X[te], y[te]


def nearest_neighbors(X: np.ndarray, k: int, chunk: int = 1024) -> np.ndarray:
    """Indices of the k nearest other rows (Euclidean); ties go to the lower index."""
    n = X.shape[0]
    sq = np.einsum("ij,ij->i", X, X)
    out = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * X[start:stop] @ X.T
        np.maximum(d2, 0.0, out=d2)
        d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        out[start:stop] = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return out


def smote(X, y, k: int = 5, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Oversample every class up to the majority count.

    Each synthetic row is ``x + u * (x_nn - x)`` for a random minority row
    ``x``, one of its ``k`` nearest same-class neighbours ``x_nn`` and
    ``u ~ U[0, 1]``. Original rows come first, unchanged; synthetics follow,
    grouped by class in ascending label order.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(seed)
    classes, counts = np.unique(y, return_counts=True)
    target = counts.max()
    new_X, new_y = [X], [y]
    for c, n in zip(classes, counts):
        need = int(target - n)
        if need == 0:
            continue
        if n < 2:
            raise OversamplingError(f"class {c} has a single member; SMOTE needs a neighbour")
        members = X[y == c]
        kk = min(k, n - 1)
        nn = nearest_neighbors(members, kk)
        base = rng.integers(0, n, size=need)
        pick = nn[base, rng.integers(0, kk, size=need)]
        u = rng.random(size=(need, 1))
        new_X.append(members[base] + u * (members[pick] - members[base]))
        new_y.append(np.full(need, c, dtype=y.dtype))
    return np.vstack(new_X), np.concatenate(new_y)
