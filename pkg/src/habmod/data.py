"""Tabular dataset model and CSV ingestion."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import NonNumericFeature, SchemaError, UnknownLabel, ValidationError
from .taxonomy import Taxonomy

MODALITIES = ("BIOREG", "ABIO", "RSBIO", "MSI", "SAR", "OTHER")
MANDATORY_COLUMNS = ("plot_id", "x", "y", "bioregion", "formation", "class")
NA_TOKENS = frozenset({"", "na", "nan", "null", "none"})
MISSING_POLICIES = ("drop-row", "median")


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SampleTable:
    """Immutable feature table with labels, coordinates and bioregions.

    ``labels`` holds leaf codes (``None`` entries at predict time). Feature
    columns are tagged with a modality; ``onehot`` marks categorical indicator
    columns, which pipelines leave unscaled.
    """

    X: np.ndarray
    feature_names: tuple[str, ...]
    modalities: tuple[str, ...]
    labels: tuple
    bioregion: tuple[str, ...]
    xy: np.ndarray
    row_ids: tuple[str, ...]
    onehot: np.ndarray = None
    taxonomy: Taxonomy | None = field(default=None, repr=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise SchemaError("feature matrix must be 2-D")
        n, p = X.shape
        if len(self.feature_names) != p or len(self.modalities) != p:
            raise SchemaError("feature names / modalities do not match the matrix")
        if len(set(self.feature_names)) != p:
            raise SchemaError("duplicate feature names")
        for m in self.modalities:
            if m not in MODALITIES:
                raise SchemaError(f"unknown modality {m!r}")
        if not (len(self.labels) == len(self.bioregion) == len(self.row_ids) == n):
            raise SchemaError("per-row fields have inconsistent lengths")
        if not np.all(np.isfinite(X)):
            raise SchemaError("feature matrix contains missing or non-finite values")
        xy = np.asarray(self.xy, dtype=float).reshape(n, 2)
        onehot = (
            np.zeros(p, dtype=bool) if self.onehot is None else np.asarray(self.onehot, bool)
        )
        if self.taxonomy is not None:
            for lab in self.labels:
                if lab is not None and not self.taxonomy.has_leaf(lab):
                    raise UnknownLabel(f"label {lab!r} not in taxonomy")
        object.__setattr__(self, "X", _frozen(X, float))
        object.__setattr__(self, "xy", _frozen(xy, float))
        object.__setattr__(self, "onehot", _frozen(onehot, bool))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "modalities", tuple(self.modalities))
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "bioregion", tuple(str(b) for b in self.bioregion))
        object.__setattr__(self, "row_ids", tuple(str(r) for r in self.row_ids))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def has_labels(self) -> bool:
        return all(lab is not None for lab in self.labels)

    def modality_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for m in self.modalities:
            out[m] = out.get(m, 0) + 1
        return out

    def present_modalities(self) -> set[str]:
        return set(self.modalities)

    def columns_for(self, modalities: Iterable[str]) -> np.ndarray:
        mods = {m.upper() for m in modalities}
        return np.array([i for i, m in enumerate(self.modalities) if m in mods], dtype=int)

    def leaf_indices(self) -> np.ndarray:
        tax = self._require_taxonomy()
        return np.array([tax.leaf_index(lab) for lab in self.labels], dtype=int)

    def formation_indices(self) -> np.ndarray:
        tax = self._require_taxonomy()
        return np.array(
            [tax.formation_index(tax.parent_of[lab]) for lab in self.labels], dtype=int
        )

    def formations(self) -> list[str]:
        tax = self._require_taxonomy()
        return [tax.parent_of[lab] for lab in self.labels]

    def leaf_counts(self) -> np.ndarray:
        tax = self._require_taxonomy()
        return np.bincount(self.leaf_indices(), minlength=tax.n_leaves)

    def _require_taxonomy(self) -> Taxonomy:
        if self.taxonomy is None:
            raise ValidationError("table has no taxonomy attached")
        if not self.has_labels:
            raise ValidationError("table has unlabeled rows")
        return self.taxonomy

    def subset(self, rows) -> "SampleTable":
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        return replace(
            self,
            X=self.X[rows],
            labels=tuple(self.labels[i] for i in rows),
            bioregion=tuple(self.bioregion[i] for i in rows),
            xy=self.xy[rows],
            row_ids=tuple(self.row_ids[i] for i in rows),
        )

    def select_features(self, cols) -> "SampleTable":
        cols = np.asarray(cols, dtype=int)
        return replace(
            self,
            X=self.X[:, cols],
            feature_names=tuple(self.feature_names[i] for i in cols),
            modalities=tuple(self.modalities[i] for i in cols),
            onehot=self.onehot[cols],
        )

    def with_bioregion_onehot(self, categories: Sequence[str] | None = None) -> "SampleTable":
        """Append BIOREG indicator columns built from the bioregion codes."""
        if categories is None:
            categories = sorted(set(self.bioregion))
        categories = list(categories)
        names = [f"bioreg__{c}" for c in categories]
        if any(nm in self.feature_names for nm in names):
            return self
        ind = np.zeros((self.n, len(categories)))
        pos = {c: j for j, c in enumerate(categories)}
        for i, b in enumerate(self.bioregion):
            if b in pos:
                ind[i, pos[b]] = 1.0
        return replace(
            self,
            X=np.hstack([self.X, ind]),
            feature_names=self.feature_names + tuple(names),
            modalities=self.modalities + ("BIOREG",) * len(names),
            onehot=np.concatenate([self.onehot, np.ones(len(names), bool)]),
        )

    def schema_hash(self) -> str:
        return schema_hash(self.feature_names)


def schema_hash(feature_names: Sequence[str]) -> str:
    return hashlib.sha256("\n".join(feature_names).encode()).hexdigest()[:16]


def parse_feature_column(name: str) -> str | None:
    """Modality tag of a ``<modality>__<name>`` column, or None."""
    if "__" not in name:
        return None
    prefix, rest = name.split("__", 1)
    tag = prefix.upper()
    if tag not in MODALITIES or not rest:
        return None
    return tag


def _is_na(tok: str) -> bool:
    return tok.strip().lower() in NA_TOKENS


def load_dataset(
    path,
    taxonomy: Taxonomy | None,
    missing: str = "drop-row",
    encode_bioregion: bool = False,
    bioregions: Sequence[str] | None = None,
) -> SampleTable:
    """Read a dataset CSV into a :class:`SampleTable`.

    Rows with missing feature values are dropped (``missing="drop-row"``) or
    imputed with the column median (``missing="median"``). Empty ``class``
    cells are allowed only if every row is unlabeled (predict-time files).
    """
    if missing not in MISSING_POLICIES:
        raise ValidationError(f"unknown missing-value policy {missing!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty file: header is mandatory") from None
        rows = [r for r in reader if r]
    header = [h.strip() for h in header]
    for col in MANDATORY_COLUMNS:
        if col not in header:
            raise SchemaError(f"missing mandatory column {col!r}")
    pos = {h: i for i, h in enumerate(header)}
    feat_cols = [h for h in header if parse_feature_column(h) is not None]
    unknown = [h for h in header if h not in MANDATORY_COLUMNS and h not in feat_cols]
    if unknown:
        raise SchemaError(f"unrecognized columns: {unknown}")

    values = np.empty((len(rows), len(feat_cols)))
    na = np.zeros((len(rows), len(feat_cols)), dtype=bool)
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise SchemaError(f"row {i + 1} has {len(r)} fields, expected {len(header)}")
        for j, h in enumerate(feat_cols):
            tok = r[pos[h]]
            if _is_na(tok):
                na[i, j] = True
                values[i, j] = np.nan
                continue
            try:
                values[i, j] = float(tok)
            except ValueError:
                raise NonNumericFeature(f"row {i + 1}, column {h!r}: {tok!r}") from None

    if missing == "drop-row":
        keep = ~na.any(axis=1)
    else:
        keep = np.ones(len(rows), dtype=bool)
        for j in range(len(feat_cols)):
            col = values[:, j]
            if na[:, j].any():
                med = np.median(col[~na[:, j]]) if (~na[:, j]).any() else 0.0
                col[na[:, j]] = med

    kept = [rows[i] for i in np.flatnonzero(keep)]
    values = values[keep]

    labels = []
    for r in kept:
        lab = r[pos["class"]].strip()
        form = r[pos["formation"]].strip()
        if not lab:
            labels.append(None)
            continue
        if taxonomy is not None:
            if not taxonomy.has_leaf(lab):
                raise UnknownLabel(f"class {lab!r} not in taxonomy")
            if form and taxonomy.parent_of[lab] != form:
                raise UnknownLabel(f"class {lab!r} belongs to {taxonomy.parent_of[lab]!r}, not {form!r}")
        labels.append(lab)
    if any(lab is None for lab in labels) and not all(lab is None for lab in labels):
        raise SchemaError("class column must be all filled or all empty")
    try:
        xy = np.array([[float(r[pos["x"]]), float(r[pos["y"]])] for r in kept]).reshape(-1, 2)
    except ValueError as exc:
        raise NonNumericFeature(f"coordinates: {exc}") from None

    modalities = [parse_feature_column(h) for h in feat_cols]
    table = SampleTable(
        X=values.reshape(len(kept), len(feat_cols)),
        feature_names=tuple(feat_cols),
        modalities=tuple(modalities),
        labels=tuple(labels),
        bioregion=tuple(r[pos["bioregion"]].strip() for r in kept),
        xy=xy,
        row_ids=tuple(r[pos["plot_id"]].strip() for r in kept),
        onehot=np.array([m == "BIOREG" for m in modalities], dtype=bool),
        taxonomy=taxonomy,
    )
    if encode_bioregion:
        table = table.with_bioregion_onehot(bioregions)
    return table


def write_dataset(table: SampleTable, path) -> None:
    """Write ``table`` in the dataset CSV schema; floats use shortest round-trip repr."""
    tax = table.taxonomy
    header = list(MANDATORY_COLUMNS) + [
        name if parse_feature_column(name) else f"{mod.lower()}__{name}"
        for name, mod in zip(table.feature_names, table.modalities)
    ]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(table.n):
            lab = table.labels[i]
            form = tax.parent_of[lab] if (lab is not None and tax is not None) else ""
            w.writerow(
                [table.row_ids[i], repr(float(table.xy[i, 0])), repr(float(table.xy[i, 1])),
                 table.bioregion[i], form, lab or ""]
                + [repr(float(v)) for v in table.X[i]]
            )
