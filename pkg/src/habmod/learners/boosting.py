"""Second-order multiclass gradient boosting on the softmax loss.

Each round fits one regression tree per class to the per-row gradient
``p - onehot`` and hessian ``p (1 - p)``, both multiplied by the row's class
weight. Scores start at the log of the (weighted) class priors.
"""

from __future__ import annotations

import numpy as np

from .trees import Binner, NewtonBuilder, Tree


def _softmax(F):
    Z = F - F.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


class BoostingModel:
    def __init__(self, init_score, rounds, learning_rate):
        self.init_score = np.asarray(init_score, dtype=float)
        self.rounds = rounds  # list of per-class tree lists
        self.learning_rate = learning_rate

    def decision_function(self, X):
        X = np.asarray(X, dtype=float)
        F = np.tile(self.init_score, (len(X), 1))
        for trees in self.rounds:
            for k, t in enumerate(trees):
                F[:, k] += self.learning_rate * t.predict(X)[:, 0]
        return F

    def predict_proba(self, X):
        return _softmax(self.decision_function(X))

    def to_dict(self) -> dict:
        return {
            "init_score": self.init_score.tolist(),
            "learning_rate": self.learning_rate,
            "rounds": [[t.to_dict() for t in r] for r in self.rounds],
        }

    @classmethod
    def from_dict(cls, d):
        rounds = [[Tree.from_dict(t) for t in r] for r in d["rounds"]]
        return cls(d["init_score"], rounds, d["learning_rate"])


def fit_boosting(X, y, n_classes, class_weight, params, seed) -> BoostingModel:
    """Fit on labels ``y`` in ``0..n_classes-1``; every class must occur."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    n = len(y)
    K = n_classes
    w = np.asarray(class_weight, dtype=float)[y]
    prior = np.bincount(y, weights=w, minlength=K)
    prior = prior / prior.sum()
    init = np.log(prior)
    binner = Binner(params["max_bins"]).fit(X)
    Xb = binner.transform(X)
    Y = np.zeros((n, K))
    Y[np.arange(n), y] = 1.0
    F = np.tile(init, (n, 1))
    rng = np.random.default_rng(seed)
    lr = params["learning_rate"]
    n_sub = max(1, int(round(params["subsample"] * n)))
    rounds = []
    for _ in range(params["n_rounds"]):
        P = _softmax(F)
        G = (P - Y) * w[:, None]
        H = np.maximum(P * (1.0 - P), 1e-16) * w[:, None]
        if n_sub < n:
            rows = np.sort(rng.choice(n, n_sub, replace=False))
        else:
            rows = np.arange(n)
        trees = []
        for k in range(K):
            b = NewtonBuilder(
                binner, Xb, G[:, k], H[:, k], params["reg_lambda"],
                max_depth=params["max_depth"], min_leaf=params["min_leaf"],
                max_features=None, rng=rng,
            )
            tree, leaf_of = b.build(rows)
            if n_sub < n:
                step = tree.value[tree.apply_binned(Xb)][:, 0]
            else:
                step = tree.value[leaf_of][:, 0]
            F[:, k] += lr * step
            trees.append(tree)
        rounds.append(trees)
    return BoostingModel(init, rounds, lr)
