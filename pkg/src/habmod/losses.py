"""Class weights and imbalance-aware softmax losses with analytic gradients.

All losses act on raw logits. ``batch_loss_and_grad`` is the vectorized
workhorse used by the MLP; ``loss_and_grad`` is the single-sample form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteLogits, ValidationError, ZeroCount

WEIGHT_SCHEMES = ("uniform", "inverse_frequency", "effective_number")
LOSS_KINDS = ("CE", "WCE", "FL", "wFL", "LDAM", "wLDAM")


@dataclass(frozen=True)
class ClassWeights:
    weights: np.ndarray
    scheme: str

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValidationError("class weights must be positive and finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


def _check_counts(counts) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    if counts.ndim != 1 or counts.size == 0:
        raise ValidationError("counts must be a non-empty vector")
    if np.any(counts < 1):
        raise ZeroCount("every class needs at least one sample")
    return counts


def class_weights(counts, scheme: str = "inverse_frequency", beta: float = 0.999,
                  normalize: bool = True) -> ClassWeights:
    """Per-class weights for imbalance correction.

    ``inverse_frequency`` gives N / (K n_c); ``effective_number`` gives
    (1 - beta) / (1 - beta**n_c). With ``normalize`` (the default) weights are
    rescaled to sum to K.
    """
    counts = _check_counts(counts)
    K = counts.size
    if scheme == "uniform":
        w = np.ones(K)
    elif scheme == "inverse_frequency":
        w = counts.sum() / (K * counts)
    elif scheme == "effective_number":
        if not (0 < beta < 1):
            raise ValidationError("beta must lie in (0, 1)")
        w = (1.0 - beta) / -np.expm1(counts * np.log(beta))
    else:
        raise ValidationError(f"unknown weight scheme {scheme!r}")
    if normalize:
        w = w * (K / w.sum())
    return ClassWeights(w, scheme)


def ldam_margins(counts, max_margin: float = 0.5) -> np.ndarray:
    """Per-class margins proportional to n_c**-1/4, largest equal to ``max_margin``."""
    counts = _check_counts(counts)
    if not max_margin > 0:
        raise ValidationError("max_margin must be > 0")
    m = counts ** -0.25
    return max_margin * m / m.max()


@dataclass(frozen=True)
class LossSpec:
    kind: str = "CE"
    gamma: float = 2.0
    max_margin: float = 0.5
    weights: str | None = None  # weight scheme name, required for WCE/wFL/wLDAM
    beta: float = 0.999

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValidationError(f"unknown loss kind {self.kind!r}")
        if self.gamma < 0:
            raise ValidationError("gamma must be >= 0")
        if not self.max_margin > 0:
            raise ValidationError("max_margin must be > 0")
        if self.kind in ("WCE", "wFL", "wLDAM") and self.weights is None:
            raise ValidationError(f"{self.kind} needs a weight scheme")
        if self.weights is not None and self.weights not in WEIGHT_SCHEMES:
            raise ValidationError(f"unknown weight scheme {self.weights!r}")

    @property
    def weighted(self) -> bool:
        return self.kind in ("WCE", "wFL", "wLDAM")

    @property
    def focal(self) -> bool:
        return self.kind in ("FL", "wFL")

    @property
    def margin(self) -> bool:
        return self.kind in ("LDAM", "wLDAM")

    def to_dict(self) -> dict:
        d = {"loss": self.kind, "gamma": self.gamma, "max_margin": self.max_margin, "beta": self.beta}
        if self.weights is not None:
            d["weights"] = self.weights
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LossSpec":
        return cls(
            kind=d.get("loss", d.get("kind", "CE")),
            gamma=float(d.get("gamma", 2.0)),
            max_margin=float(d.get("max_margin", 0.5)),
            weights=d.get("weights"),
            beta=float(d.get("beta", 0.999)),
        )

    def class_weight_vector(self, counts) -> np.ndarray:
        K = len(counts)
        if not self.weighted:
            return np.ones(K)
        return class_weights(counts, self.weights, self.beta).weights


def batch_loss_and_grad(logits, y, spec: LossSpec, counts, sample_weight=None):
    """Per-sample losses and logit gradients for a batch.

    Returns ``(loss, grad)`` with ``loss`` of shape (n,) and ``grad`` of shape
    (n, K); ``grad[i]`` is the exact derivative of ``loss[i]``.
    """
    z = np.asarray(logits, dtype=float)
    if z.ndim == 1:
        z = z[None, :]
    y = np.asarray(y, dtype=int).reshape(-1)
    if not np.all(np.isfinite(z)):
        raise NonFiniteLogits("logits must be finite")
    n, K = z.shape
    counts = np.asarray(counts, dtype=float)
    if counts.shape != (K,):
        raise ValidationError("counts length must match the number of logits")
    rows = np.arange(n)

    if spec.margin:
        z = z.copy()
        z[rows, y] -= ldam_margins(np.maximum(counts, 1.0), spec.max_margin)[y]

    zs = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(zs).sum(axis=1, keepdims=True))
    logp = zs - logsum
    p = np.exp(logp)
    logpy = logp[rows, y]
    py = p[rows, y]

    w = spec.class_weight_vector(np.maximum(counts, 1.0))[y]
    if sample_weight is not None:
        w = w * np.asarray(sample_weight, dtype=float)

    d = p.copy()
    d[rows, y] -= 1.0  # d CE / dz
    if spec.focal and spec.gamma != 0:
        g = spec.gamma
        one_m = -np.expm1(logpy)  # 1 - p_y, accurate near p_y = 1
        mod = one_m ** g
        loss = -w * mod * logpy
        # dL/dz = w * [(1-p)^g - g p (1-p)^(g-1) log p] * (p - onehot)
        with np.errstate(divide="ignore", invalid="ignore"):
            extra = np.where(one_m > 0, g * py * one_m ** (g - 1) * logpy, 0.0)
        coef = w * (mod - extra)
    else:
        loss = -w * logpy
        coef = w
    grad = coef[:, None] * d
    return loss, grad


def loss_and_grad(logits, true_leaf: int, spec: LossSpec, counts):
    """Loss and gradient for a single logit vector."""
    loss, grad = batch_loss_and_grad(np.asarray(logits, float)[None, :], [true_leaf], spec, counts)
    return float(loss[0]), grad[0]
