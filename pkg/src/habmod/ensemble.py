"""Performance-weighted probability averaging and ensemble uncertainty."""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from .errors import EmptyEnsemble, ShapeMismatch, ValidationError

WEIGHT_FLOOR = 1e-6


def score_weights(scores, floor: float = WEIGHT_FLOOR) -> np.ndarray:
    """Weights proportional to ``max(score, floor)``, summing to 1."""
    s = np.asarray(scores, dtype=float)
    if s.size == 0:
        raise EmptyEnsemble("no members")
    if floor < 0:
        raise ValidationError("weight floor must be >= 0")
    s = np.where(np.isnan(s), 0.0, s)
    w = np.maximum(s, floor)
    if w.sum() <= 0:
        return np.full(s.size, 1.0 / s.size)
    return w / w.sum()


def combine(members, weights=None) -> np.ndarray:
    """Row-wise convex combination of member probability tables."""
    members = [np.asarray(m, dtype=float) for m in members]
    if not members:
        raise EmptyEnsemble("no members")
    shape = members[0].shape
    if any(m.shape != shape for m in members):
        raise ShapeMismatch("members must share shape and class order")
    w = np.full(len(members), 1.0 / len(members)) if weights is None else np.asarray(weights, float)
    if w.shape != (len(members),) or np.any(w < 0) or w.sum() <= 0:
        raise ValidationError("weights must be non-negative, one per member")
    w = w / w.sum()
    out = np.zeros(shape)
    lo = np.full(shape, np.inf)
    hi = np.full(shape, -np.inf)
    for wi, m in zip(w, members):
        out += wi * m
        np.minimum(lo, m, out=lo)
        np.maximum(hi, m, out=hi)
    # rounding can leave a cell an ulp outside the member range; clamp so the
    # combination is convex per cell exactly
    return np.clip(out, lo, hi)


def entropy(P) -> np.ndarray:
    """Shannon entropy (nats) of each row."""
    P = np.asarray(P, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(P > 0, P * np.log(P), 0.0)
    return np.maximum(-t.sum(axis=1), 0.0)


def jensen_shannon(P, Q) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    M = 0.5 * (P + Q)
    return np.clip(entropy(M) - 0.5 * (entropy(P) + entropy(Q)), 0.0, np.log(2.0))


def uncertainty(combined, members) -> dict:
    """Per-row entropy of the combined table and mean pairwise member JSD.

    Disagreement is NaN when fewer than two members are given.
    """
    ent = entropy(combined)
    members = list(members)
    if len(members) < 2:
        dis = np.full(len(ent), np.nan)
    else:
        pairs = list(combinations(range(len(members)), 2))
        dis = sum(jensen_shannon(members[i], members[j]) for i, j in pairs) / len(pairs)
    return {"entropy": ent, "disagreement": dis}


@dataclass
class EnsembleSpec:
    """Members, their validation scores and the resulting weights."""

    members: list
    scores: list
    floor: float = WEIGHT_FLOOR

    def __post_init__(self):
        if not self.members:
            raise EmptyEnsemble("an ensemble needs at least one member")
        if len(self.members) != len(self.scores):
            raise ValidationError("one score per member")

    @property
    def weights(self) -> np.ndarray:
        return score_weights(self.scores, self.floor)

    def manifest(self) -> dict:
        return {
            "members": [str(m) for m in self.members],
            "scores": [float(s) for s in self.scores],
            "weights": self.weights.tolist(),
            "weight_floor": self.floor,
            "score": "holdout macro-F1",
        }

    def write_manifest(self, path) -> None:
        Path(path).write_text(json.dumps(self.manifest(), indent=2, sort_keys=True))

    @classmethod
    def read_manifest(cls, path) -> "EnsembleSpec":
        d = json.loads(Path(path).read_text())
        return cls(d["members"], d["scores"], d.get("weight_floor", WEIGHT_FLOOR))
