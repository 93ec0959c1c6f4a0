"""Classification strategies over the two-level taxonomy.

* ``MHDM``: one model, all leaves compete.
* ``HHDM``: one model per formation (leaves compete only within it) plus a
  formation router; joint probabilities are router x conditional.
* ``BIOGEO``: majority leaf per (formation, bioregion).
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import SampleTable
from .errors import (
    EmptyMask,
    KindMismatch,
    NoTrainingRows,
    SchemaMismatch,
    UnknownFormation,
    ValidationError,
)
from .learners import FittedModel, LearnerConfig, fit, predict_proba
from .taxonomy import Taxonomy

KINDS = ("MHDM", "HHDM", "BIOGEO")
ROUTER_SEED_OFFSET = 7919
STRATEGY_FORMAT = "habmod-strategy"

# nested HHDM variants: A, AR, ARM, ARMS
MASK_PRESETS = {
    "A": ("ABIO",),
    "AR": ("ABIO", "RSBIO"),
    "ARM": ("ABIO", "RSBIO", "MSI"),
    "ARMS": ("ABIO", "RSBIO", "MSI", "SAR"),
    "FULL": ("BIOREG", "ABIO", "RSBIO", "MSI", "SAR", "OTHER"),
}


def resolve_mask(mask) -> frozenset:
    if isinstance(mask, str):
        key = mask.upper()
        if key in MASK_PRESETS:
            return frozenset(MASK_PRESETS[key])
        mask = [m for m in mask.split(",") if m.strip()]
    return frozenset(m.strip().upper() for m in mask)


@dataclass(eq=False)
class StrategyModel:
    kind: str
    taxonomy: Taxonomy
    modality_mask: frozenset
    feature_names: tuple
    model: FittedModel | None = None  # MHDM
    router: FittedModel | None = None  # HHDM
    formation_models: dict = field(default_factory=dict)  # HHDM: formation -> FittedModel
    majority: dict = field(default_factory=dict)  # BIOGEO: (formation, bioregion) -> leaf
    formation_majority: dict = field(default_factory=dict)
    bioregion_majority: dict = field(default_factory=dict)
    global_majority: str | None = None
    flags: list = field(default_factory=list)

    def _features(self, table: SampleTable) -> np.ndarray:
        pos = {n: i for i, n in enumerate(table.feature_names)}
        missing = [n for n in self.feature_names if n not in pos]
        if missing:
            raise SchemaMismatch(f"table lacks training features {missing[:5]}")
        return np.ascontiguousarray(table.X[:, [pos[n] for n in self.feature_names]])

    def to_dict(self) -> dict:
        d = {
            "format": STRATEGY_FORMAT,
            "version": 1,
            "kind": self.kind,
            "taxonomy": self.taxonomy.to_dict(),
            "taxonomy_hash": self.taxonomy.digest(),
            "modality_mask": sorted(self.modality_mask),
            "feature_names": list(self.feature_names),
            "flags": list(self.flags),
        }
        if self.kind == "MHDM":
            d["model"] = self.model.to_dict()
        elif self.kind == "HHDM":
            d["router"] = self.router.to_dict()
            d["formation_models"] = {f: m.to_dict() for f, m in self.formation_models.items()}
        else:
            d["majority"] = [[f, b, leaf] for (f, b), leaf in sorted(self.majority.items())]
            d["formation_majority"] = self.formation_majority
            d["bioregion_majority"] = self.bioregion_majority
            d["global_majority"] = self.global_majority
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StrategyModel":
        if d.get("format") != STRATEGY_FORMAT:
            raise ValidationError("not a habmod strategy container")
        tax = Taxonomy.from_dict(d["taxonomy"])
        if tax.digest() != d["taxonomy_hash"]:
            raise ValidationError("taxonomy hash mismatch")
        sm = cls(d["kind"], tax, frozenset(d["modality_mask"]), tuple(d["feature_names"]),
                 flags=list(d.get("flags", [])))
        if sm.kind == "MHDM":
            sm.model = FittedModel.from_dict(d["model"])
        elif sm.kind == "HHDM":
            sm.router = FittedModel.from_dict(d["router"])
            sm.formation_models = {f: FittedModel.from_dict(m) for f, m in d["formation_models"].items()}
        else:
            sm.majority = {(f, b): leaf for f, b, leaf in d["majority"]}
            sm.formation_majority = d["formation_majority"]
            sm.bioregion_majority = d["bioregion_majority"]
            sm.global_majority = d["global_majority"]
        return sm


def save_strategy(model: StrategyModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()))


def load_strategy(path) -> StrategyModel:
    return StrategyModel.from_dict(json.loads(Path(path).read_text()))


def _majority(labels) -> str:
    """Most frequent code; ties go to the lexicographically smallest."""
    c = Counter(labels)
    top = max(c.values())
    return min(k for k, v in c.items() if v == top)


def train_strategy(kind: str, table: SampleTable, taxonomy: Taxonomy, modality_mask,
                   learner_config: LearnerConfig | None = None, seed: int = 0,
                   n_jobs: int | None = None) -> StrategyModel:
    kind = kind.upper()
    if kind not in KINDS:
        raise ValidationError(f"unknown scheme {kind!r}")
    if table.n == 0:
        raise NoTrainingRows("no training rows")
    mask = resolve_mask(modality_mask)
    cols = table.columns_for(mask)
    if kind != "BIOGEO" and len(cols) == 0:
        raise EmptyMask(f"modality mask {sorted(mask)} selects no features")
    names = tuple(table.feature_names[i] for i in cols)
    sm = StrategyModel(kind, taxonomy, mask, names)
    labels = table.labels
    if any(lab is None for lab in labels):
        raise ValidationError("training rows need labels")

    if kind == "BIOGEO":
        groups: dict = {}
        by_form: dict = {}
        by_reg: dict = {}
        for lab, reg in zip(labels, table.bioregion):
            f = taxonomy.parent_of[lab]
            groups.setdefault((f, reg), []).append(lab)
            by_form.setdefault(f, []).append(lab)
            by_reg.setdefault(reg, []).append(lab)
        sm.majority = {k: _majority(v) for k, v in groups.items()}
        sm.formation_majority = {k: _majority(v) for k, v in by_form.items()}
        sm.bioregion_majority = {k: _majority(v) for k, v in by_reg.items()}
        sm.global_majority = _majority(labels)
        return sm

    if learner_config is None:
        raise ValidationError(f"{kind} needs a learner configuration")
    # fancy column indexing can return Fortran order; a fixed layout keeps
    # column reductions identical between a full table and a row subset
    X = np.ascontiguousarray(table.X[:, cols])
    scale = ~table.onehot[cols]
    cfg = learner_config.with_seed(seed)
    y = table.leaf_indices()
    if kind == "MHDM":
        sm.model = fit(cfg, X, y, n_classes=taxonomy.n_leaves, feature_names=names,
                       scale_mask=scale, n_jobs=n_jobs)
        if not sm.model.present.all():
            sm.flags.append(f"unseen leaves: {[taxonomy.leaves[i] for i in sm.model.absent_classes]}")
        return sm

    fidx = table.formation_indices()
    sm.router = fit(learner_config.with_seed(seed + ROUTER_SEED_OFFSET), X, fidx,
                    n_classes=taxonomy.n_formations, feature_names=names, scale_mask=scale,
                    n_jobs=n_jobs, require_min_rows=False)
    for fi, f in enumerate(taxonomy.formations):
        rows = np.flatnonzero(fidx == fi)
        if rows.size == 0:
            sm.flags.append(f"formation {f}: no training rows, leaves get zero probability")
            continue
        leaf_idx = taxonomy.leaf_indices_of(f)
        local = {g: j for j, g in enumerate(leaf_idx)}
        yl = np.array([local[v] for v in y[rows]])
        m = fit(cfg, X[rows], yl, n_classes=len(leaf_idx), feature_names=names,
                scale_mask=scale, n_jobs=n_jobs, require_min_rows=False)
        if len(leaf_idx) >= 2 and m.present.sum() < 2:
            sm.flags.append(f"formation {f}: single training class, constant model")
        sm.formation_models[f] = m
    return sm


def predict_conditional(model: StrategyModel, table: SampleTable) -> dict:
    """Per-formation leaf probabilities; each table's rows sum to 1."""
    if model.kind != "HHDM":
        raise KindMismatch("conditional predictions need an HHDM strategy")
    X = model._features(table)
    return {f: predict_proba(m, X) for f, m in model.formation_models.items()}


def predict_router(model: StrategyModel, table: SampleTable) -> np.ndarray:
    if model.kind != "HHDM":
        raise KindMismatch("router predictions need an HHDM strategy")
    return predict_proba(model.router, model._features(table))


def combine_hierarchy(router: np.ndarray, conditionals: dict, taxonomy: Taxonomy) -> np.ndarray:
    """Joint leaf probabilities: P(leaf) = P(formation) * P(leaf | formation).

    Formations without a conditional table pass their router mass to no leaf;
    rows are renormalized over the remaining mass in that case.
    """
    n = router.shape[0]
    joint = np.zeros((n, taxonomy.n_leaves))
    for fi, f in enumerate(taxonomy.formations):
        if f not in conditionals:
            continue
        joint[:, taxonomy.leaf_indices_of(f)] = router[:, [fi]] * conditionals[f]
    missing = [f for f in taxonomy.formations if f not in conditionals]
    if missing:
        s = joint.sum(axis=1, keepdims=True)
        joint = np.divide(joint, s, out=np.full_like(joint, 1.0 / taxonomy.n_leaves), where=s > 0)
    return joint


def predict_joint(model: StrategyModel, table: SampleTable) -> np.ndarray:
    """(n, K) probabilities over all leaves in taxonomy order."""
    tax = model.taxonomy
    if model.kind == "MHDM":
        return predict_proba(model.model, model._features(table))
    if model.kind == "HHDM":
        return combine_hierarchy(predict_router(model, table), predict_conditional(model, table), tax)
    out = np.zeros((table.n, tax.n_leaves))
    for i, (lab, reg) in enumerate(zip(table.labels, table.bioregion)):
        if lab is not None:
            f = tax.parent_of[lab]
            leaf = model.majority.get((f, reg)) or model.formation_majority.get(f)
        else:
            leaf = model.bioregion_majority.get(reg)
        out[i, tax.leaf_index(leaf or model.global_majority)] = 1.0
    return out


def nested_view(joint, taxonomy: Taxonomy, formation: str, return_flags: bool = False):
    """Restrict joint probabilities to one formation's leaves and renormalize.

    Rows with no mass on the formation become uniform and are flagged.
    """
    if formation not in taxonomy.formations:
        raise UnknownFormation(f"unknown formation {formation!r}")
    cols = taxonomy.leaf_indices_of(formation)
    sub = np.asarray(joint, dtype=float)[:, cols]
    s = sub.sum(axis=1, keepdims=True)
    zero = s[:, 0] <= 0
    out = np.divide(sub, s, out=np.full_like(sub, 1.0 / len(cols)), where=s > 0)
    return (out, zero) if return_flags else out
