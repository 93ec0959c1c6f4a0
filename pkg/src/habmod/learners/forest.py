"""Random forest with class-weighted Gini splits."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .trees import Binner, GiniBuilder, Tree


class ForestModel:
    def __init__(self, trees, n_classes):
        self.trees = trees
        self.n_classes = n_classes

    def predict_proba(self, X):
        X = np.asarray(X, dtype=float)
        out = np.zeros((len(X), self.n_classes))
        for t in self.trees:
            out += t.predict(X)
        out /= len(self.trees)
        return out

    def to_dict(self) -> dict:
        return {"n_classes": self.n_classes, "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d):
        return cls([Tree.from_dict(t) for t in d["trees"]], d["n_classes"])


def _grow_one(binner, Xb, y, cw, n_classes, params, seed_seq):
    rng = np.random.default_rng(seed_seq)
    n = len(y)
    if params["bootstrap"]:
        mult = np.bincount(rng.integers(0, n, n), minlength=n).astype(float)
    else:
        mult = np.ones(n)
    rows = np.flatnonzero(mult > 0)
    F = Xb.shape[1]
    max_features = max(1, int(math.ceil(params["max_features"] * F)))
    b = GiniBuilder(
        binner, Xb, y, cw[y] * mult, n_classes,
        max_depth=params["max_depth"], min_leaf=params["min_leaf"],
        max_features=max_features, rng=rng,
    )
    tree, _ = b.build(rows)
    return tree


def fit_forest(X, y, n_classes, class_weight, params, seed, n_jobs=1) -> ForestModel:
    """Fit ``params["n_trees"]`` trees; tree ``t`` draws from child seed ``t``
    so the result does not depend on ``n_jobs``."""
    binner = Binner(params["max_bins"]).fit(X)
    Xb = binner.transform(X)
    seeds = np.random.SeedSequence(seed).spawn(params["n_trees"])
    y = np.asarray(y, dtype=np.int64)
    cw = np.asarray(class_weight, dtype=float)
    args = (binner, Xb, y, cw, n_classes, params)
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            trees = list(ex.map(lambda s: _grow_one(*args, s), seeds))
    else:
        trees = [_grow_one(*args, s) for s in seeds]
    return ForestModel(trees, n_classes)
