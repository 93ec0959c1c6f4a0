import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from habmod.errors import DegenerateSplit, NonPositiveBlockSize, TooFewBlocks
from habmod.spatial_cv import (FoldPlan, assert_no_leakage, assign_blocks, default_block_size, make_folds,
                               random_folds, stratification_deviation, tuning_split)


def test_same_cell():
    g = assign_blocks([[0, 0], [0.5, 0.5]], 1.0)
    assert g.block_of_row[0] == g.block_of_row[1]


def test_cell_boundary():
    g = assign_blocks([[0, 0], [1.5, 0]], 1.0)
    assert g.block_of_row[0] != g.block_of_row[1]


def test_nonpositive_size():
    with pytest.raises(NonPositiveBlockSize):
        assign_blocks([[0, 0]], 0.0)


def test_block_count_matches_hash_oracle(rng):
    xy = rng.uniform(0, 10, size=(1000, 2))
    g = assign_blocks(xy, 1.0)
    cells = {(math.floor(x), math.floor(y)) for x, y in xy}
    assert g.n_blocks == len(cells) <= 100
    # rows sharing a cell share a block and vice versa
    key = [(math.floor(x), math.floor(y)) for x, y in xy]
    for i in range(0, 1000, 37):
        for j in range(0, 1000, 41):
            assert (key[i] == key[j]) == (g.block_of_row[i] == g.block_of_row[j])


def test_origin_shifts_cells():
    g = assign_blocks([[0.9, 0], [1.1, 0]], 1.0, origin=(0.5, 0))
    assert g.block_of_row[0] == g.block_of_row[1]


def test_default_block_size_mean(rng):
    xy = rng.uniform(0, 1e4, size=(800, 2))
    s = default_block_size(xy)
    g = assign_blocks(xy, s)
    assert len(xy) / g.n_blocks >= 20


def _abab():
    # four 10-row blocks at distinct cells, labels A, B, A, B
    xy = np.repeat(np.array([[0.5, 0.5], [1.5, 0.5], [2.5, 0.5], [3.5, 0.5]]), 10, axis=0)
    labels = np.repeat([0, 1, 0, 1], 10)
    return assign_blocks(xy, 1.0), labels


def test_abab_exhaustive():
    grid, labels = _abab()
    plan = make_folds(grid, labels, 2, seed=0, n_classes=2)
    # oracle: enumerate the 3 balanced 2+2 partitions of 4 blocks and score them
    blocks = range(4)
    scores = {}
    for pair in itertools.combinations(blocks, 2):
        if 0 not in pair:
            continue
        hist = [np.bincount(labels[np.isin(grid.block_of_row, [b for b in blocks if (b in pair) == side])],
                            minlength=2) for side in (True, False)]
        scores[pair] = sum(float(np.sum((h / h.sum() - 0.5) ** 2)) for h in hist)
    assert len(scores) == 3
    optimal = {p for p, s in scores.items() if s == min(scores.values())}
    assert optimal == {(0, 1), (0, 3)}
    fold_a = tuple(b for b in blocks if plan.fold_of_block[b] == plan.fold_of_block[0])
    assert fold_a in optimal
    for f in range(2):
        assert sorted(labels[plan.test_rows(f)].tolist()) == [0] * 10 + [1] * 10


def test_too_few_blocks():
    grid, labels = _abab()
    with pytest.raises(TooFewBlocks):
        make_folds(grid, labels, 5)


def test_folds_deterministic_and_block_pure(small_synth):
    table, tax = small_synth
    grid = assign_blocks(table, default_block_size(table))
    y = table.leaf_indices()
    a = make_folds(grid, y, 4, seed=2)
    b = make_folds(grid, y, 4, seed=2)
    assert np.array_equal(a.fold_of_row, b.fold_of_row)
    for blk in np.unique(grid.block_of_row):
        assert len(set(a.fold_of_row[grid.block_of_row == blk].tolist())) == 1
    for f in range(4):
        assert len(a.test_rows(f)) > 0
        assert_no_leakage(grid.block_of_row, a.train_rows(f), a.test_rows(f))


def test_stratification_on_benchmark():
    from habmod.synthetic import SyntheticSpec, generate_synthetic
    table, tax = generate_synthetic(SyntheticSpec(samples_per_leaf=1200, decay_ratio=0.6, seed=0))
    grid = assign_blocks(table, default_block_size(table))
    plan = make_folds(grid, table.leaf_indices(), 4, seed=0)
    assert stratification_deviation(plan, table.leaf_indices()) <= 0.5


def test_leakage_detected():
    with pytest.raises(AssertionError):
        assert_no_leakage(np.array([0, 0, 1]), [0], [1])


def test_fold_plan_json(small_synth):
    table, _ = small_synth
    grid = assign_blocks(table, default_block_size(table))
    plan = make_folds(grid, table.leaf_indices(), 3, seed=1)
    d = json.loads(plan.to_json())
    assert d["n_folds"] == 3 and d["block_size"] == grid.block_size
    assert {a["block"] for a in d["assignments"]} == set(range(grid.n_blocks))
    back = FoldPlan.from_json(plan.to_json(), grid)
    assert np.array_equal(back.fold_of_row, plan.fold_of_row)


def test_tuning_split_equal_blocks():
    blocks = np.repeat(np.arange(10), 20)
    inner, hold = tuning_split(blocks, np.zeros(200), 0.1, seed=0)
    assert len(np.unique(blocks[hold])) == 1 and len(hold) == 20
    assert len(inner) + len(hold) == 200


@pytest.mark.parametrize("frac", [0.0, 1.0, -0.1])
def test_tuning_split_bad_fraction(frac):
    with pytest.raises(DegenerateSplit):
        tuning_split(np.arange(10), np.zeros(10), frac)


def _best_subset_sum(sizes, target):
    reachable = {0}
    for s in sizes:
        reachable |= {r + s for r in reachable}
    reachable.discard(0)
    return min(reachable, key=lambda r: abs(r - target))


def test_tuning_split_subset_sum_oracle(rng):
    sizes = rng.integers(1, 60, size=37)
    blocks = np.repeat(np.arange(37), sizes)
    n = len(blocks)
    inner, hold = tuning_split(blocks, np.zeros(n), 0.1, seed=3)
    ratio = len(hold) / n
    assert 0.05 <= ratio <= 0.2
    best = _best_subset_sum(sizes.tolist(), 0.1 * n)
    # greedy lands within one median block of the optimal achievable size
    assert abs(len(hold) - 0.1 * n) <= abs(best - 0.1 * n) + np.median(sizes)
    assert set(blocks[hold]).isdisjoint(blocks[inner])


def test_tuning_split_row_mapping():
    blocks = np.repeat(np.arange(10), 5)
    rows = np.arange(100, 150)
    inner, hold = tuning_split(blocks, np.zeros(50), 0.2, seed=0, rows=rows)
    assert sorted(np.concatenate([inner, hold]).tolist()) == rows.tolist()


def test_random_folds_balanced():
    f = random_folds(103, 4, seed=1)
    assert np.bincount(f).tolist() in ([26, 26, 26, 25],)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 5), st.integers(0, 10_000))
def test_fold_invariants_property(k, seed):
    r = np.random.default_rng(seed)
    n = 300
    xy = r.uniform(0, 10, size=(n, 2))
    labels = r.integers(0, 4, size=n)
    grid = assign_blocks(xy, 1.0)
    plan = make_folds(grid, labels, k, seed=seed, n_classes=4)
    assert set(plan.fold_of_row.tolist()) == set(range(k))
    for f in range(k):
        assert_no_leakage(grid.block_of_row, plan.train_rows(f), plan.test_rows(f))
    hist_total = np.sum([plan.class_histograms[f] for f in range(k)], axis=0)
    assert hist_total.tolist() == np.bincount(labels, minlength=4).tolist()
