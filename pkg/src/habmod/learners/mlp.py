"""Multilayer perceptron trained with momentum SGD on a configurable loss."""

from __future__ import annotations

import numpy as np

from ..losses import LossSpec, batch_loss_and_grad
from ..metrics import macro_f1


class MLPNet:
    """ReLU hidden layers and a linear output layer (softmax lives in the loss)."""

    def __init__(self, weights, biases):
        self.weights = [np.asarray(W, dtype=float) for W in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]

    @classmethod
    def init(cls, sizes, rng):
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    def params(self):
        return self.weights + self.biases

    def copy(self):
        return MLPNet([W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def forward(self, X):
        acts = [X]
        h = X
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            h = z if i == last else np.maximum(z, 0.0)
            acts.append(h)
        return acts

    def logits(self, X):
        return self.forward(X)[-1]

    def loss_and_grads(self, X, y, spec: LossSpec, counts, sample_weight=None):
        """Mean batch loss and gradients w.r.t. every weight and bias."""
        acts = self.forward(X)
        losses, dz = batch_loss_and_grad(acts[-1], y, spec, counts, sample_weight)
        n = len(X)
        delta = dz / n
        gW = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        for i in range(len(self.weights) - 1, -1, -1):
            gW[i] = acts[i].T @ delta
            gb[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (acts[i] > 0)
        return float(losses.mean()), gW, gb

    def to_dict(self):
        return {"weights": [W.tolist() for W in self.weights], "biases": [b.tolist() for b in self.biases]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["weights"], d["biases"])


def sgd_step(net: MLPNet, velocity, X, y, spec, counts, lr, momentum):
    loss, gW, gb = net.loss_and_grads(X, y, spec, counts)
    for p, v, g in zip(net.params(), velocity, gW + gb):
        v *= momentum
        v -= lr * g
        p += v
    return loss


def fit_mlp(X, y, n_classes, spec: LossSpec, counts, params, seed) -> MLPNet:
    """Mini-batch momentum SGD with early stopping on an inner 10% split.

    ``X`` must already be scaled. Early stopping tracks macro-F1 on the inner
    split and restores the best parameters after ``patience`` epochs without
    improvement.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    rng = np.random.default_rng(seed)
    sizes = [X.shape[1], *params["hidden"], n_classes]
    net = MLPNet.init(sizes, rng)
    n = len(y)
    patience = params["patience"]
    n_val = int(round(params["validation_fraction"] * n)) if patience > 0 else 0
    if n_val >= 1 and n - n_val >= n_classes:
        perm = rng.permutation(n)
        val, tr = perm[:n_val], np.sort(perm[n_val:])
    else:
        val, tr = np.zeros(0, dtype=np.int64), np.arange(n)
    Xt, yt = X[tr], y[tr]
    velocity = [np.zeros_like(p) for p in net.params()]
    bs = min(params["batch_size"], len(tr))
    best, best_net, stale = -np.inf, net.copy(), 0
    for _ in range(params["epochs"]):
        order = rng.permutation(len(tr))
        for start in range(0, len(tr), bs):
            b = order[start:start + bs]
            sgd_step(net, velocity, Xt[b], yt[b], spec, counts, params["learning_rate"], params["momentum"])
        if len(val):
            score = np.nan_to_num(macro_f1(net.logits(X[val]).argmax(axis=1), y[val], n_classes))
            if score > best:
                best, best_net, stale = score, net.copy(), 0
            else:
                stale += 1
                if stale >= patience:
                    break
    return best_net if len(val) else net
