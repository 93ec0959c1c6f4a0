"""Spatial block cross-validation.

Samples are binned into square grid blocks; blocks (never individual rows)
are assigned to folds so that spatially autocorrelated neighbours cannot sit
on both sides of a train/test split.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import SampleTable
from .errors import DegenerateSplit, NonPositiveBlockSize, TooFewBlocks, ValidationError


@dataclass(frozen=True, eq=False)
class BlockGrid:
    block_size: float
    origin: tuple[float, float]
    block_of_row: np.ndarray
    cells: dict = field(repr=False)  # block id -> (col, row) grid cell

    @property
    def block_ids(self) -> np.ndarray:
        return np.unique(self.block_of_row)

    @property
    def n_blocks(self) -> int:
        return len(self.cells)

    def sizes(self) -> dict[int, int]:
        ids, cnt = np.unique(self.block_of_row, return_counts=True)
        return dict(zip(ids.tolist(), cnt.tolist()))


def assign_blocks(table_or_xy, block_size: float, origin=(0.0, 0.0)) -> BlockGrid:
    """Map every sample to the square grid cell that contains it."""
    if not block_size > 0:
        raise NonPositiveBlockSize(f"block size must be > 0, got {block_size}")
    xy = table_or_xy.xy if isinstance(table_or_xy, SampleTable) else np.asarray(table_or_xy, float)
    xy = xy.reshape(-1, 2)
    ox, oy = origin
    col = np.floor((xy[:, 0] - ox) / block_size).astype(np.int64)
    row = np.floor((xy[:, 1] - oy) / block_size).astype(np.int64)
    if len(xy) == 0:
        return BlockGrid(float(block_size), (ox, oy), np.zeros(0, dtype=np.int64), {})
    c0, r0 = col.min(), row.min()
    width = int(row.max() - r0 + 1)
    flat = (col - c0) * width + (row - r0)
    # relabel to dense ids in order of first flattened cell
    uniq, dense = np.unique(flat, return_inverse=True)
    cells = {i: (int(u // width + c0), int(u % width + r0)) for i, u in enumerate(uniq)}
    block = dense.astype(np.int64)
    block.setflags(write=False)
    return BlockGrid(float(block_size), (float(ox), float(oy)), block, cells)


def default_block_size(table_or_xy, min_mean: float = 20.0) -> float:
    """Smallest block side (on a x1.25 ladder) whose mean occupied block holds >= ``min_mean`` rows."""
    xy = table_or_xy.xy if isinstance(table_or_xy, SampleTable) else np.asarray(table_or_xy, float)
    n = len(xy)
    extent = float(max(np.ptp(xy[:, 0]), np.ptp(xy[:, 1]), 1e-9))
    size = extent / max(1.0, math.sqrt(n / min_mean)) / 4
    while True:
        grid = assign_blocks(xy, size)
        if n / grid.n_blocks >= min_mean or grid.n_blocks == 1:
            return size
        size *= 1.25


@dataclass(frozen=True, eq=False)
class FoldPlan:
    n_folds: int
    block_size: float
    fold_of_block: dict
    fold_of_row: np.ndarray
    class_histograms: np.ndarray  # (n_folds, K)

    def test_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_row == fold)

    def train_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_row != fold)

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_folds": self.n_folds,
                "block_size": self.block_size,
                "assignments": [
                    {"block": int(b), "fold": int(f)} for b, f in sorted(self.fold_of_block.items())
                ],
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str, grid: BlockGrid, labels=None, n_classes: int = 0) -> "FoldPlan":
        d = json.loads(text)
        fob = {int(a["block"]): int(a["fold"]) for a in d["assignments"]}
        for b in np.unique(grid.block_of_row):
            if int(b) not in fob:
                raise ValidationError(f"block {b} missing from fold plan")
        rows = np.array([fob[int(b)] for b in grid.block_of_row], dtype=int)
        hist = np.zeros((d["n_folds"], n_classes), dtype=int)
        if labels is not None:
            np.add.at(hist, (rows, np.asarray(labels)), 1)
        return cls(int(d["n_folds"]), float(d["block_size"]), fob, rows, hist)


def _chi2_to_target(hist: np.ndarray, target: np.ndarray) -> float:
    nz = target > 0
    return float(np.sum((hist[nz] - target[nz]) ** 2 / target[nz]))


def make_folds(grid: BlockGrid, labels, n_folds: int, seed: int = 0, n_classes: int | None = None) -> FoldPlan:
    """Greedy stratified assignment of whole blocks to folds.

    Blocks are visited by decreasing size (seed shuffles equal-size blocks).
    Each goes to the fold whose chi-square distance to its share of the
    global class counts decreases most; ties go to the smaller fold, then
    the lower fold index.
    """
    if isinstance(labels, SampleTable):
        labels = labels.leaf_indices()
    labels = np.asarray(labels, dtype=int)
    if n_folds < 2:
        raise ValidationError("n_folds must be >= 2")
    blocks = grid.block_of_row
    ids = np.unique(blocks)
    if len(ids) < n_folds:
        raise TooFewBlocks(f"{len(ids)} blocks cannot fill {n_folds} folds")
    K = int(n_classes if n_classes is not None else labels.max() + 1)
    block_hist = np.zeros((len(ids), K))
    pos = np.searchsorted(ids, blocks)
    np.add.at(block_hist, (pos, labels), 1.0)
    sizes = block_hist.sum(axis=1)

    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ids))
    order = perm[np.argsort(-sizes[perm], kind="stable")]

    target = block_hist.sum(axis=0) / n_folds
    fold_hist = np.zeros((n_folds, K))
    fold_size = np.zeros(n_folds)
    fold_of_block = {}
    remaining = len(order)
    for b in order:
        empty = np.flatnonzero(fold_size == 0)
        candidates = empty if remaining <= len(empty) else np.arange(n_folds)
        best = None
        for f in candidates:
            delta = _chi2_to_target(fold_hist[f] + block_hist[b], target) - _chi2_to_target(
                fold_hist[f], target
            )
            key = (delta, fold_size[f], f)
            if best is None or key < best:
                best = key
        f = int(best[2])
        fold_hist[f] += block_hist[b]
        fold_size[f] += sizes[b]
        fold_of_block[int(ids[b])] = f
        remaining -= 1

    fold_of_row = np.array([fold_of_block[int(b)] for b in blocks], dtype=int)
    fold_of_row.setflags(write=False)
    return FoldPlan(n_folds, grid.block_size, fold_of_block, fold_of_row, fold_hist.astype(int))


def stratification_deviation(plan: FoldPlan, labels, min_count: int | None = None) -> float:
    """Max relative deviation of per-fold leaf share from global share.

    Only leaves with at least ``min_count`` samples (default ``2 * n_folds``)
    are considered.
    """
    labels = np.asarray(labels, dtype=int)
    min_count = 2 * plan.n_folds if min_count is None else min_count
    counts = np.bincount(labels)
    glob = counts / counts.sum()
    worst = 0.0
    for f in range(plan.n_folds):
        lab_f = labels[plan.fold_of_row == f]
        share = np.bincount(lab_f, minlength=len(counts)) / len(lab_f)
        for c in np.flatnonzero(counts >= min_count):
            worst = max(worst, abs(share[c] - glob[c]) / glob[c])
    return worst


def assert_no_leakage(block_of_row, train_rows, test_rows) -> None:
    """Raise if any block contributes rows to both train and test."""
    block_of_row = np.asarray(block_of_row)
    shared = np.intersect1d(block_of_row[train_rows], block_of_row[test_rows])
    if shared.size:
        raise AssertionError(f"spatial leakage: blocks {shared[:10].tolist()} in train and test")


def tuning_split(block_of_row, strata, fraction: float = 0.10, seed: int = 0, rows=None):
    """Hold out whole blocks (about ``fraction`` of rows) for tuning.

    Parameters
    ----------
    block_of_row : array of int
        Block id per row of the training set.
    strata : array
        Stratification label per row (formation index).
    rows : array of int, optional
        Row indices to return; defaults to ``arange(len(block_of_row))``.

    Returns
    -------
    inner_train, holdout : arrays of row indices
    """
    if not (0 < fraction < 1):
        raise DegenerateSplit(f"fraction must lie in (0, 1), got {fraction}")
    block_of_row = np.asarray(block_of_row)
    strata = np.asarray(strata)
    rows = np.arange(len(block_of_row)) if rows is None else np.asarray(rows)
    ids, pos = np.unique(block_of_row, return_inverse=True)
    if len(ids) < 2:
        raise DegenerateSplit("need at least two blocks to hold one out")
    svals, spos = np.unique(strata, return_inverse=True)
    bh = np.zeros((len(ids), len(svals)))
    np.add.at(bh, (pos, spos), 1.0)
    sizes = bh.sum(axis=1)
    n = sizes.sum()
    target = fraction * n
    glob = bh.sum(axis=0) / n

    def cost(h):
        size = h.sum()
        if size == 0:
            return math.inf
        share = h / size
        return (size / target - 1.0) ** 2 + float(np.sum((share - glob) ** 2 / glob))

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    chosen = np.zeros(len(ids), dtype=bool)
    hold = np.zeros(len(svals))
    current = math.inf
    while True:
        best_b, best_c = None, current
        for b in order:
            if chosen[b]:
                continue
            c = cost(hold + bh[b])
            if c < best_c:
                best_b, best_c = b, c
        if best_b is None or chosen.sum() + 1 >= len(ids):
            break
        chosen[best_b] = True
        hold += bh[best_b]
        current = best_c
    if not chosen.any():
        raise DegenerateSplit("holdout would be empty")
    is_hold = chosen[pos]
    return rows[~is_hold], rows[is_hold]


def random_folds(n: int, n_folds: int, seed: int = 0) -> np.ndarray:
    """Row-wise random fold labels; the leaky baseline spatial blocking replaces."""
    rng = np.random.default_rng(seed)
    return rng.permutation(np.arange(n) % n_folds)
