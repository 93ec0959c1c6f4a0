from .base import (
    DEFAULTS,
    FAMILIES,
    FittedModel,
    LearnerConfig,
    default_threads,
    fit,
    load_model,
    predict_proba,
    save_model,
)
from .tuning import DEFAULT_SPACES, TuneResult, sample_configs, select_best, tune, tune_with_scores

__all__ = [
    "DEFAULTS", "DEFAULT_SPACES", "FAMILIES", "FittedModel", "LearnerConfig", "TuneResult",
    "default_threads", "sample_configs", "select_best", "fit", "load_model", "predict_proba", "save_model", "tune",
    "tune_with_scores",
]
