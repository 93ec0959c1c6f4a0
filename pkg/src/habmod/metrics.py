"""Ranking and class-wise classification metrics.

Ranks use a deterministic tie rule: among equal probabilities, the lower
class index ranks first. Rank 1 is best.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BadK, ValidationError
from .taxonomy import Taxonomy


def true_class_rank(probs, truth) -> np.ndarray:
    """1-based rank of the true class in each row."""
    P = np.asarray(probs, dtype=float)
    truth = np.asarray(truth, dtype=int)
    if P.ndim != 2 or len(P) != len(truth):
        raise ValidationError("probs must be (n, K) with one truth per row")
    K = P.shape[1]
    if len(truth) and (truth.min() < 0 or truth.max() >= K):
        raise ValidationError("truth index out of range")
    py = P[np.arange(len(P)), truth][:, None]
    before = (P > py) | ((P == py) & (np.arange(K)[None, :] < truth[:, None]))
    return 1 + before.sum(axis=1)


def top_k_accuracy(probs, truth, k: int) -> float:
    K = np.asarray(probs).shape[1]
    if not (1 <= k <= K):
        raise BadK(f"k={k} outside [1, {K}]")
    return float(np.mean(true_class_rank(probs, truth) <= k))


def coverage_error(probs, truth) -> float:
    return float(np.mean(true_class_rank(probs, truth)))


def argmax_top1(probs) -> np.ndarray:
    """Top-1 class under the tie rule (``np.argmax`` picks the lowest index)."""
    return np.asarray(probs).argmax(axis=1)


@dataclass
class ClassMetrics:
    """Per-class P/R/F1; undefined entries are NaN.

    Precision is undefined for a class never predicted, recall for a class
    with zero support, and F1 for a class neither predicted nor present.
    Macro averages skip undefined entries.
    """

    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    n_predicted: np.ndarray
    class_labels: tuple
    formation_of: tuple | None = None

    @property
    def macro_precision(self) -> float:
        return _nanmean(self.precision)

    @property
    def macro_recall(self) -> float:
        return _nanmean(self.recall)

    @property
    def macro_f1(self) -> float:
        return _nanmean(self.f1)

    @property
    def micro_recall(self) -> float:
        tp = self.recall * self.support
        return float(np.nansum(tp) / self.support.sum()) if self.support.sum() else float("nan")

    @property
    def undefined(self) -> np.ndarray:
        return np.isnan(self.f1)

    def by_formation(self) -> dict[str, dict]:
        if self.formation_of is None:
            raise ValidationError("metrics were computed without a taxonomy")
        out = {}
        forms = np.array(self.formation_of)
        for f in dict.fromkeys(self.formation_of):
            m = forms == f
            out[f] = {
                "macro_precision": _nanmean(self.precision[m]),
                "macro_recall": _nanmean(self.recall[m]),
                "macro_f1": _nanmean(self.f1[m]),
                "support": int(self.support[m].sum()),
            }
        return out

    def rows(self, strategy: str = "") -> list[dict]:
        out = []
        for i, lab in enumerate(self.class_labels):
            out.append({
                "strategy": strategy,
                "formation": self.formation_of[i] if self.formation_of else "",
                "class": lab,
                "precision": _clean(self.precision[i]),
                "recall": _clean(self.recall[i]),
                "f1": _clean(self.f1[i]),
                "support": int(self.support[i]),
            })
        return out


def _nanmean(a) -> float:
    a = np.asarray(a, dtype=float)
    a = a[~np.isnan(a)]
    return float(a.mean()) if a.size else float("nan")


def _clean(v):
    return None if np.isnan(v) else float(v)


def class_prf(pred_top1, truth, taxonomy: Taxonomy | int | None = None,
              classes: Sequence[int] | None = None) -> ClassMetrics:
    """One-vs-rest precision, recall and F1 per class.

    ``taxonomy`` may be a :class:`Taxonomy` (classes = its leaves, grouped by
    formation) or an int number of classes. ``classes`` restricts the report
    to a subset of class indices (e.g. one formation's leaves).
    """
    pred = np.asarray(pred_top1, dtype=int)
    truth = np.asarray(truth, dtype=int)
    if pred.shape != truth.shape:
        raise ValidationError("pred and truth must have equal length")
    if isinstance(taxonomy, Taxonomy):
        K = taxonomy.n_leaves
        labels = list(taxonomy.leaves)
        forms = [taxonomy.parent_of[c] for c in labels]
    else:
        K = int(taxonomy) if taxonomy is not None else int(max(pred.max(initial=0), truth.max(initial=0)) + 1)
        labels = list(range(K))
        forms = None
    idx = np.arange(K) if classes is None else np.asarray(classes, dtype=int)
    tp = np.bincount(truth[pred == truth], minlength=K)[idx].astype(float)
    support = np.bincount(truth, minlength=K)[idx].astype(float)
    npred = np.bincount(pred, minlength=K)[idx].astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(npred > 0, tp / npred, np.nan)
        recall = np.where(support > 0, tp / support, np.nan)
        denom = support + npred
        f1 = np.where(denom > 0, 2 * tp / denom, np.nan)
    return ClassMetrics(
        precision=precision,
        recall=recall,
        f1=f1,
        support=support.astype(int),
        n_predicted=npred.astype(int),
        class_labels=tuple(labels[i] for i in idx),
        formation_of=tuple(forms[i] for i in idx) if forms else None,
    )


def macro_f1(pred_top1, truth, n_classes: int) -> float:
    return class_prf(pred_top1, truth, n_classes).macro_f1


METRIC_FIELDS = ("strategy", "formation", "class", "precision", "recall", "f1", "support")


def write_metrics_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r[k] is None else r[k]) for k in METRIC_FIELDS})


def read_metrics_csv(path) -> list[dict]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            for k in ("precision", "recall", "f1"):
                r[k] = float(r[k]) if r[k] != "" else None
            r["support"] = int(r["support"])
            out.append(r)
    return out
