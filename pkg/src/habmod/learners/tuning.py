"""Randomized hyperparameter search scored on a tuning holdout."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import EmptySearchSpace
from ..losses import LossSpec
from ..metrics import macro_f1
from .base import DEFAULTS, LearnerConfig, fit, predict_proba

# declared default spaces; reports echo whichever space was used
DEFAULT_SPACES = {
    "forest": {"n_trees": [50, 100], "max_depth": [8, 12, 16], "min_leaf": [1, 2, 5],
               "max_features": [0.3, 0.5, 0.8]},
    "boosting": {"n_rounds": [30, 60], "learning_rate": [0.1, 0.2], "max_depth": [3, 4, 6],
                 "min_leaf": [3, 10]},
    "mlp": {"hidden": [[64], [128], [64, 64], [64, 64, 32]], "learning_rate": [0.005, 0.01, 0.02],
            "batch_size": [32, 64]},
}


@dataclass
class TuneResult:
    config: LearnerConfig
    score: float
    trials: list  # (config dict, holdout macro-F1) in draw order


def _draw(space: dict, rng) -> dict:
    out = {}
    for key in sorted(space):
        values = space[key]
        out[key] = values[int(rng.integers(len(values)))]
    return out


def sample_configs(base: LearnerConfig, search_space: dict, budget: int, seed: int = 0) -> list:
    """``budget`` configurations drawn uniformly from ``search_space``.

    ``search_space`` maps a hyperparameter name (or ``"loss"`` /
    ``"class_weight"``) to a list of candidate values.
    """
    if budget < 1:
        raise EmptySearchSpace("budget must be >= 1")
    if not search_space or any(len(v) == 0 for v in search_space.values()):
        raise EmptySearchSpace("search space has no candidates")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(budget):
        draw = _draw(search_space, rng)
        params = {k: v for k, v in draw.items() if k in DEFAULTS[base.family]}
        cfg = replace(base, params={**base.params, **params})
        if "loss" in draw:
            loss = draw["loss"]
            cfg = replace(cfg, loss=loss if isinstance(loss, LossSpec) else LossSpec.from_dict(loss))
        if "class_weight" in draw:
            cfg = replace(cfg, class_weight=draw["class_weight"])
        out.append(cfg)
    return out


def select_best(configs: list, score_fn) -> TuneResult:
    """Score every config; the first maximum wins."""
    best = None
    trials = []
    for cfg in configs:
        score = float(score_fn(cfg))
        score = 0.0 if np.isnan(score) else score
        trials.append((cfg.to_dict(), score))
        if best is None or score > best.score:
            best = TuneResult(cfg, score, [])
    best.trials = trials
    return best


def tune_with_scores(base: LearnerConfig, search_space: dict, budget: int,
                     X_inner, y_inner, X_hold, y_hold, n_classes: int, seed: int = 0,
                     **fit_kw) -> TuneResult:
    """Draw ``budget`` configurations, score macro-F1 on the holdout, keep the best.

    Ties keep the earlier draw.
    """
    def score(cfg):
        model = fit(cfg, X_inner, y_inner, n_classes=n_classes, **fit_kw)
        pred = predict_proba(model, X_hold).argmax(axis=1)
        return macro_f1(pred, y_hold, n_classes)

    return select_best(sample_configs(base, search_space, budget, seed), score)


def tune(family: str, search_space: dict, budget: int, X_inner, y_inner, X_hold, y_hold,
         n_classes: int, seed: int = 0, base: LearnerConfig | None = None, **fit_kw) -> LearnerConfig:
    base = base or LearnerConfig(family, seed=seed)
    return tune_with_scores(base, search_space, budget, X_inner, y_inner, X_hold, y_hold,
                            n_classes, seed, **fit_kw).config
