"""Common learner contract: configuration, fitting, prediction, persistence."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..data import schema_hash
from ..errors import InsufficientData, SchemaMismatch, ValidationError
from ..losses import LossSpec, WEIGHT_SCHEMES, class_weights
from .boosting import BoostingModel, fit_boosting
from .forest import ForestModel, fit_forest
from .mlp import MLPNet, fit_mlp

FAMILIES = ("forest", "boosting", "mlp")
MODEL_FORMAT = "habmod-model"
MODEL_VERSION = 1
THREADS_ENV = "HABMOD_THREADS"

DEFAULTS = {
    "forest": {
        "n_trees": 100, "max_depth": 12, "min_leaf": 1, "max_features": 0.5,
        "bootstrap": True, "max_bins": 64,
    },
    "boosting": {
        "n_rounds": 50, "learning_rate": 0.1, "max_depth": 4, "min_leaf": 5,
        "subsample": 1.0, "reg_lambda": 1.0, "max_bins": 64,
    },
    "mlp": {
        "hidden": (64,), "learning_rate": 0.01, "batch_size": 64, "epochs": 100,
        "patience": 10, "momentum": 0.9, "validation_fraction": 0.1,
    },
}


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class LearnerConfig:
    """Family, hyperparameters and imbalance handling for one learner.

    Trees take a ``class_weight`` scheme; the MLP takes a :class:`LossSpec`.
    Missing hyperparameters are filled from the family defaults.
    """

    family: str
    params: dict = field(default_factory=dict)
    loss: LossSpec = field(default_factory=LossSpec)
    class_weight: str = "uniform"
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown learner family {self.family!r}")
        unknown = set(self.params) - set(DEFAULTS[self.family])
        if unknown:
            raise ValidationError(f"unknown {self.family} parameters: {sorted(unknown)}")
        merged = {**DEFAULTS[self.family], **self.params}
        if "hidden" in merged:
            merged["hidden"] = tuple(int(h) for h in merged["hidden"])
        object.__setattr__(self, "params", merged)
        if self.class_weight not in WEIGHT_SCHEMES:
            raise ValidationError(f"unknown class weight scheme {self.class_weight!r}")
        if isinstance(self.loss, dict):
            object.__setattr__(self, "loss", LossSpec.from_dict(self.loss))
        self._validate()

    def _validate(self):
        p = self.params
        if self.family == "mlp":
            if not 1 <= len(p["hidden"]) <= 3:
                raise ValidationError("an mlp has one to three hidden layers")
            if any(h < 1 for h in p["hidden"]):
                raise ValidationError("hidden layer sizes must be >= 1")
            counts = ("batch_size", "epochs")
            rates = ("learning_rate",)
            if not 0 <= p["momentum"] < 1:
                raise ValidationError("momentum must lie in [0, 1)")
        elif self.family == "forest":
            counts = ("n_trees", "max_depth", "min_leaf", "max_bins")
            rates = ("max_features",)
        else:
            counts = ("max_depth", "min_leaf", "max_bins")
            rates = ("learning_rate", "subsample")
            if p["n_rounds"] < 0:
                raise ValidationError("n_rounds must be >= 0")
            if p["reg_lambda"] <= 0:
                raise ValidationError("reg_lambda must be > 0")
        for k in counts:
            if int(p[k]) < 1:
                raise ValidationError(f"{k} must be >= 1")
        for k in rates:
            if not p[k] > 0:
                raise ValidationError(f"{k} must be > 0")

    def with_seed(self, seed: int) -> "LearnerConfig":
        return replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        params = dict(self.params)
        if "hidden" in params:
            params["hidden"] = list(params["hidden"])
        d = {"family": self.family, "params": params, "seed": self.seed}
        if self.family == "mlp":
            d["loss"] = self.loss.to_dict()
        else:
            d["class_weight"] = self.class_weight
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LearnerConfig":
        return cls(
            family=d["family"],
            params=dict(d.get("params", {})),
            loss=LossSpec.from_dict(d["loss"]) if "loss" in d else LossSpec(),
            class_weight=d.get("class_weight", "uniform"),
            seed=int(d.get("seed", 0)),
        )


class ConstantModel:
    """Used when the training labels contain a single class."""

    def __init__(self, n_classes, cls):
        self.n_classes = n_classes
        self.cls = cls

    def predict_proba(self, X):
        out = np.zeros((len(X), self.n_classes))
        out[:, self.cls] = 1.0
        return out

    def to_dict(self):
        return {"n_classes": self.n_classes, "cls": self.cls}

    @classmethod
    def from_dict(cls, d):
        return cls(d["n_classes"], d["cls"])


@dataclass(frozen=True, eq=False)
class FittedModel:
    """A trained learner. Probability columns follow ``classes``; classes
    absent from training (``present == False``) always get probability 0."""

    family: str
    model: object
    classes: np.ndarray
    present: np.ndarray
    config: LearnerConfig
    feature_names: tuple
    scale_mean: np.ndarray | None = None
    scale_sd: np.ndarray | None = None

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def schema_hash(self) -> str:
        return schema_hash(self.feature_names)

    @property
    def absent_classes(self) -> np.ndarray:
        return self.classes[~self.present]

    def _transform(self, X):
        if self.scale_mean is None:
            return X
        return (X - self.scale_mean) / self.scale_sd

    def to_dict(self) -> dict:
        kind = "constant" if isinstance(self.model, ConstantModel) else self.family
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "family": self.family,
            "kind": kind,
            "config": self.config.to_dict(),
            "classes": self.classes.tolist(),
            "present": self.present.tolist(),
            "feature_names": list(self.feature_names),
            "schema_hash": self.schema_hash,
            "scale_mean": None if self.scale_mean is None else self.scale_mean.tolist(),
            "scale_sd": None if self.scale_sd is None else self.scale_sd.tolist(),
            "model": self.model.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FittedModel":
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise ValidationError("not a habmod model container (or unsupported version)")
        loaders = {"forest": ForestModel, "boosting": BoostingModel, "mlp": MLPNet, "constant": ConstantModel}
        model = loaders[d["kind"]].from_dict(d["model"])
        fm = cls(
            family=d["family"],
            model=model,
            classes=np.asarray(d["classes"], dtype=int),
            present=np.asarray(d["present"], dtype=bool),
            config=LearnerConfig.from_dict(d["config"]),
            feature_names=tuple(d["feature_names"]),
            scale_mean=None if d["scale_mean"] is None else np.asarray(d["scale_mean"]),
            scale_sd=None if d["scale_sd"] is None else np.asarray(d["scale_sd"]),
        )
        if fm.schema_hash != d["schema_hash"]:
            raise ValidationError("model container schema hash does not match its feature list")
        return fm


def fit(config: LearnerConfig, X, y, n_classes: int | None = None, counts=None,
        feature_names=None, scale_mask=None, n_jobs: int | None = None,
        require_min_rows: bool = True) -> FittedModel:
    """Train one learner on leaf indices ``y`` in ``0..n_classes-1``.

    Classes with no training rows are allowed: the inner model is trained on
    the present classes and the absent columns are emitted as 0.

    Parameters
    ----------
    counts : array, optional
        Class counts used for weights and margins; defaults to counts of ``y``.
    scale_mask : bool array, optional
        Columns to standardize with training statistics (MLP only; trees are
        scale invariant). Defaults to all columns.
    require_min_rows : bool
        Enforce at least one row per class slot. Hierarchical members relax
        this for small formations.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValidationError("X must be (n, p) with one label per row")
    K = int(n_classes if n_classes is not None else y.max() + 1)
    if len(y) == 0 or (require_min_rows and len(y) < K):
        raise InsufficientData(f"{len(y)} rows for {K} classes")
    if len(y) and (y.min() < 0 or y.max() >= K):
        raise ValidationError("labels out of range")
    if feature_names is None:
        feature_names = tuple(f"x{j}" for j in range(X.shape[1]))
    if len(feature_names) != X.shape[1]:
        raise SchemaMismatch("feature_names length differs from X columns")
    counts = np.bincount(y, minlength=K) if counts is None else np.asarray(counts)
    present = np.bincount(y, minlength=K) > 0
    local_of = -np.ones(K, dtype=np.int64)
    local_of[present] = np.arange(present.sum())
    yl = local_of[y]
    Kp = int(present.sum())
    pc = np.maximum(np.asarray(counts, dtype=float)[present], 1.0)
    n_jobs = default_threads() if n_jobs is None else n_jobs

    mean = sd = None
    if Kp == 1:
        model = ConstantModel(1, 0)
    elif config.family == "mlp":
        mask = np.ones(X.shape[1], bool) if scale_mask is None else np.asarray(scale_mask, bool)
        mean = np.where(mask, X.mean(axis=0), 0.0)
        s = X.std(axis=0)
        sd = np.where(mask & (s > 0), s, 1.0)
        model = fit_mlp((X - mean) / sd, yl, Kp, config.loss, pc, config.params, config.seed)
    else:
        cw = class_weights(pc, config.class_weight).weights
        if config.family == "forest":
            model = fit_forest(X, yl, Kp, cw, config.params, config.seed, n_jobs=n_jobs)
        else:
            model = fit_boosting(X, yl, Kp, cw, config.params, config.seed)
    return FittedModel(
        family=config.family,
        model=model,
        classes=np.arange(K),
        present=present,
        config=config,
        feature_names=tuple(feature_names),
        scale_mean=mean,
        scale_sd=sd,
    )


def _softmax(Z):
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def predict_proba(model: FittedModel, X, feature_names=None) -> np.ndarray:
    """(n, K) probabilities; rows sum to 1, columns follow ``model.classes``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(model.feature_names):
        raise SchemaMismatch(
            f"expected {len(model.feature_names)} features, got {X.shape[-1] if X.ndim else 0}"
        )
    if feature_names is not None and tuple(feature_names) != model.feature_names:
        raise SchemaMismatch("feature schema differs from training")
    inner = model.model
    if isinstance(inner, MLPNet):
        P = _softmax(inner.logits(model._transform(X)))
    else:
        P = inner.predict_proba(X)
    P = P / P.sum(axis=1, keepdims=True)
    out = np.zeros((len(X), model.n_classes))
    out[:, model.present] = P
    return out


def save_model(model: FittedModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()))


def load_model(path) -> FittedModel:
    return FittedModel.from_dict(json.loads(Path(path).read_text()))
