"""Experiment configuration (JSON) and data preparation."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import SampleTable, load_dataset
from .errors import ValidationError
from .learners import DEFAULT_SPACES, LearnerConfig
from .schemes import KINDS, resolve_mask
from .synthetic import SyntheticSpec, generate_synthetic
from .taxonomy import Taxonomy, build_taxonomy


def default_members() -> list:
    return [
        {"family": "forest", "class_weight": "inverse_frequency", "params": {"n_trees": 50}},
        {"family": "boosting", "class_weight": "inverse_frequency"},
        {"family": "mlp", "loss": {"loss": "WCE", "weights": "inverse_frequency"}},
    ]


@dataclass
class ExperimentConfig:
    dataset: str | None = None
    synthetic: dict | None = None
    taxonomy: dict | None = None  # {"formation_rule": 1 | [...] | {...}} or {"leaves", "parent_of"}
    missing: str = "drop-row"
    encode_bioregion: bool = True
    strategies: list = field(
        default_factory=lambda: [{"name": "MHDM", "scheme": "MHDM", "modalities": "FULL"}]
    )
    members: list = field(default_factory=default_members)
    search_spaces: dict = field(default_factory=dict)
    budget: int = 0
    n_folds: int = 4
    block_size: float | None = None
    split: str = "spatial"
    tuning_fraction: float = 0.10
    stratify_tolerance: float = 0.5
    top_k: list = field(default_factory=lambda: [3, 5])
    seed: int = 0
    output_dir: str | None = None
    n_jobs: int = 1
    ablation_strategy: str | None = None
    attribution: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if (self.dataset is None) == (self.synthetic is None):
            raise ValidationError("exactly one of 'dataset' or 'synthetic' is required")
        if self.synthetic is not None:
            SyntheticSpec.from_dict(self.synthetic)
        if not self.strategies:
            raise ValidationError("at least one strategy is required")
        names = set()
        for s in self.strategies:
            if not isinstance(s, dict) or "scheme" not in s:
                raise ValidationError("each strategy needs a 'scheme'")
            if s["scheme"].upper() not in KINDS:
                raise ValidationError(f"unknown scheme {s['scheme']!r}")
            s.setdefault("modalities", "FULL")
            s.setdefault("name", f"{s['modalities']}-{s['scheme'].upper()}")
            if s["name"] in names:
                raise ValidationError(f"duplicate strategy name {s['name']!r}")
            names.add(s["name"])
            resolve_mask(s["modalities"])
        if not self.members:
            raise ValidationError("at least one ensemble member is required")
        for m in self.members:
            LearnerConfig.from_dict({k: v for k, v in m.items() if k != "name"})
        if self.budget < 0:
            raise ValidationError("budget must be >= 0")
        for fam, space in self.search_spaces.items():
            if not isinstance(space, dict):
                raise ValidationError(f"search space for {fam!r} must be an object")
        if self.n_folds < 2:
            raise ValidationError("n_folds must be >= 2")
        if self.block_size is not None and not self.block_size > 0:
            raise ValidationError("block_size must be > 0")
        if self.split not in ("spatial", "random"):
            raise ValidationError("split must be 'spatial' or 'random'")
        if not 0 < self.tuning_fraction < 1:
            raise ValidationError("tuning_fraction must lie in (0, 1)")
        if not self.top_k or any(int(k) < 1 for k in self.top_k):
            raise ValidationError("top_k entries must be >= 1")
        if self.n_jobs < 1:
            raise ValidationError("n_jobs must be >= 1")

    def member_configs(self) -> list[tuple[str, LearnerConfig]]:
        out, seen = [], {}
        for m in self.members:
            cfg = LearnerConfig.from_dict({k: v for k, v in m.items() if k != "name"})
            name = m.get("name", cfg.family)
            seen[name] = seen.get(name, 0) + 1
            if seen[name] > 1:
                name = f"{name}{seen[name]}"
            out.append((name, cfg))
        return out

    def space_for(self, family: str) -> dict | None:
        if family in self.search_spaces:
            return self.search_spaces[family]
        return DEFAULT_SPACES[family] if self.budget > 0 else None

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from None
        cfg = cls.from_dict(d)
        if cfg.dataset is not None and not Path(cfg.dataset).is_absolute():
            cfg.dataset = str((Path(path).parent / cfg.dataset).resolve())
        return cfg


def taxonomy_from_file(path, rule) -> Taxonomy:
    """Taxonomy from the class/formation columns of a dataset CSV."""
    leaves, parent = [], {}
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            lab = (r.get("class") or "").strip()
            if lab and lab not in parent:
                leaves.append(lab)
                parent[lab] = (r.get("formation") or "").strip()
    if rule is None:
        if any(not f for f in parent.values()):
            raise ValidationError("formation column is empty; give taxonomy.formation_rule")
        return build_taxonomy(leaves, parent)
    return build_taxonomy(leaves, rule)


def load_experiment_data(cfg: ExperimentConfig) -> tuple[SampleTable, Taxonomy]:
    if cfg.synthetic is not None:
        table, tax = generate_synthetic(SyntheticSpec.from_dict(cfg.synthetic))
    else:
        t = cfg.taxonomy or {}
        if "leaves" in t:
            tax = Taxonomy.from_dict(t)
        else:
            tax = taxonomy_from_file(cfg.dataset, t.get("formation_rule"))
        table = load_dataset(cfg.dataset, tax, missing=cfg.missing)
    if cfg.encode_bioregion:
        table = table.with_bioregion_onehot()
    return table, tax


def data_digest(table: SampleTable) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(table.X).tobytes())
    h.update(np.ascontiguousarray(table.xy).tobytes())
    h.update("\n".join(str(x) for x in table.labels).encode())
    return h.hexdigest()[:16]

