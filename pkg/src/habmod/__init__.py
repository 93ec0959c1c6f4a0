"""Habitat distribution modelling toolkit.

Two-level habitat taxonomies, spatial-block cross-validation, imbalance-aware
learners, flat and hierarchical classification schemes, weighted ensembles,
ranking metrics, rank-based strategy comparison and Shapley attribution.
"""

from .config import ExperimentConfig
from .harness import compare_strategies, run_ablation, run_attribution, run_cv
from .synthetic import SyntheticSpec, generate_synthetic
from .taxonomy import Taxonomy, build_taxonomy

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig",
    "SyntheticSpec",
    "Taxonomy",
    "build_taxonomy",
    "compare_strategies",
    "generate_synthetic",
    "run_ablation",
    "run_attribution",
    "run_cv",
]
