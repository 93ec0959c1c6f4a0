"""Deterministic synthetic habitat data for desk-scale experiments.

Each leaf is a Gaussian cluster in feature space. The formation mean has
twice the standard deviation of the leaf offset (4x the variance), so
formations separate more easily than leaves of the same formation. Samples
of a leaf are placed around a few spatial cluster centres, and signal-bearing
features carry a smooth spatial random field, which makes random-split
cross-validation leak information that spatial blocking removes.
"""

from __future__ import annotations

import json
import math
import string
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import MODALITIES, SampleTable
from .errors import InvalidSpec
from .taxonomy import Taxonomy, build_taxonomy

FORMATION_VS_LEAF_SD = 2.0  # formation variance = 4 x leaf variance
N_FOURIER = 64


@dataclass(frozen=True)
class SyntheticSpec:
    n_formations: int = 3
    leaves_per_formation: int | tuple[int, ...] = 4
    features_per_modality: dict = field(
        default_factory=lambda: {"ABIO": 6, "RSBIO": 4, "MSI": 4, "SAR": 2}
    )
    # 0 makes a modality pure iid noise
    modality_signal: dict = field(
        default_factory=lambda: {"ABIO": 1.0, "RSBIO": 0.5, "MSI": 0.35, "SAR": 0.0}
    )
    samples_per_leaf: int = 100
    decay_ratio: float = 1.0
    leaf_counts: tuple[int, ...] | None = None
    leaf_scale: float = 1.0
    noise: float = 1.0
    domain_size: float = 100_000.0
    clusters_per_leaf: int = 3
    cluster_radius: float = 3_000.0
    autocorrelation_length: float = 5_000.0
    spatial_noise: float = 0.5
    n_bioregions: int = 4
    seed: int = 0

    def __post_init__(self):
        lpf = self.leaves_per_formation
        if isinstance(lpf, list):
            object.__setattr__(self, "leaves_per_formation", tuple(lpf))
        if isinstance(self.leaf_counts, list):
            object.__setattr__(self, "leaf_counts", tuple(self.leaf_counts))
        object.__setattr__(
            self, "features_per_modality",
            {k.upper(): int(v) for k, v in self.features_per_modality.items()},
        )
        object.__setattr__(
            self, "modality_signal",
            {k.upper(): float(v) for k, v in self.modality_signal.items()},
        )
        self.validate()

    def validate(self):
        if self.n_formations < 1:
            raise InvalidSpec("n_formations must be >= 1")
        per = self.leaves_per_formation_list()
        if len(per) != self.n_formations or any(c < 1 for c in per):
            raise InvalidSpec("leaves_per_formation must give >= 1 leaf per formation")
        if sum(per) < 2:
            raise InvalidSpec("need at least 2 leaves overall")
        if not self.features_per_modality or any(
            c < 1 for c in self.features_per_modality.values()
        ):
            raise InvalidSpec("every listed modality needs >= 1 feature")
        for m in self.features_per_modality:
            if m not in MODALITIES:
                raise InvalidSpec(f"unknown modality {m!r}")
        if any(v < 0 for v in self.modality_signal.values()):
            raise InvalidSpec("modality signal strengths must be >= 0")
        if self.samples_per_leaf < 1:
            raise InvalidSpec("samples_per_leaf must be >= 1")
        if not (0 < self.decay_ratio <= 1):
            raise InvalidSpec("decay_ratio must lie in (0, 1]")
        if self.leaf_counts is not None and (
            len(self.leaf_counts) != sum(per) or any(c < 1 for c in self.leaf_counts)
        ):
            raise InvalidSpec("leaf_counts must give >= 1 sample for every leaf")
        for name in ("domain_size", "cluster_radius", "autocorrelation_length"):
            if getattr(self, name) <= 0:
                raise InvalidSpec(f"{name} must be > 0")
        if self.noise < 0 or self.spatial_noise < 0 or self.leaf_scale < 0:
            raise InvalidSpec("noise levels must be >= 0")
        if self.clusters_per_leaf < 1 or self.n_bioregions < 1:
            raise InvalidSpec("clusters_per_leaf and n_bioregions must be >= 1")

    def leaves_per_formation_list(self) -> list[int]:
        lpf = self.leaves_per_formation
        if isinstance(lpf, int):
            return [lpf] * self.n_formations
        return list(lpf)

    def counts(self) -> list[int]:
        """Samples per leaf, in leaf order."""
        if self.leaf_counts is not None:
            return list(self.leaf_counts)
        k = sum(self.leaves_per_formation_list())
        return [
            max(1, int(math.floor(self.samples_per_leaf * self.decay_ratio**i + 0.5)))
            for i in range(k)
        ]

    def to_json(self) -> str:
        d = asdict(self)
        for key in ("leaves_per_formation", "leaf_counts"):
            if isinstance(d[key], tuple):
                d[key] = list(d[key])
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise InvalidSpec(f"unknown synthetic spec fields: {sorted(extra)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise InvalidSpec(str(exc)) from None


def formation_codes(n: int) -> list[str]:
    letters = string.ascii_uppercase
    if n <= len(letters):
        return list(letters[:n])
    return [f"F{i:02d}" for i in range(n)]


def generate_synthetic(spec: SyntheticSpec) -> tuple[SampleTable, Taxonomy]:
    spec.validate()
    per = spec.leaves_per_formation_list()
    fcodes = formation_codes(spec.n_formations)
    leaf_codes, parent = [], {}
    for f, nleaf in zip(fcodes, per):
        for j in range(nleaf):
            code = f"{f}{j + 1:02d}"
            leaf_codes.append(code)
            parent[code] = f
    tax = build_taxonomy(leaf_codes, parent, order=leaf_codes)
    counts = spec.counts()
    K = len(leaf_codes)

    ss = np.random.SeedSequence(spec.seed)
    rng_means, rng_space, rng_field, rng_noise = (np.random.default_rng(s) for s in ss.spawn(4))

    mods = [m for m in MODALITIES if m in spec.features_per_modality]
    dims = [spec.features_per_modality[m] for m in mods]
    p = sum(dims)
    strength = np.concatenate(
        [np.full(d, spec.modality_signal.get(m, 0.0)) for m, d in zip(mods, dims)]
    )
    form_mean = rng_means.normal(0.0, FORMATION_VS_LEAF_SD * spec.leaf_scale, (len(fcodes), p))
    leaf_mean = rng_means.normal(0.0, spec.leaf_scale, (K, p))

    centres = rng_space.uniform(0.0, spec.domain_size, (K, spec.clusters_per_leaf, 2))
    y_idx = np.repeat(np.arange(K), counts)
    n = len(y_idx)
    which = rng_space.integers(0, spec.clusters_per_leaf, n)
    xy = centres[y_idx, which] + rng_space.normal(0.0, spec.cluster_radius, (n, 2))

    omega = rng_field.normal(0.0, 1.0 / spec.autocorrelation_length, (N_FOURIER, 2))
    phase = rng_field.uniform(0.0, 2 * np.pi, N_FOURIER)
    amp = rng_field.normal(0.0, 1.0, (N_FOURIER, p))
    phi = np.sqrt(2.0 / N_FOURIER) * np.cos(xy @ omega.T + phase)
    field_vals = phi @ amp

    f_idx = np.array([fcodes.index(parent[leaf_codes[c]]) for c in y_idx], dtype=int)
    signal = strength * (form_mean[f_idx] + leaf_mean[y_idx])
    spatial = spec.spatial_noise * (strength > 0) * field_vals
    X = signal + spatial + spec.noise * rng_noise.normal(0.0, 1.0, (n, p))

    names = []
    modalities = []
    for m, d in zip(mods, dims):
        names += [f"{m.lower()}__f{j}" for j in range(d)]
        modalities += [m] * d
    strip = spec.domain_size / spec.n_bioregions
    breg = np.clip((xy[:, 0] // strip).astype(int), 0, spec.n_bioregions - 1)
    table = SampleTable(
        X=X,
        feature_names=tuple(names),
        modalities=tuple(modalities),
        labels=tuple(leaf_codes[c] for c in y_idx),
        bioregion=tuple(f"BR{b}" for b in breg),
        xy=xy,
        row_ids=tuple(f"p{i:06d}" for i in range(n)),
        onehot=np.array([m == "BIOREG" for m in modalities], dtype=bool),
        taxonomy=tax,
    )
    return table, tax
