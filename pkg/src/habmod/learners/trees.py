"""Histogram-based decision trees shared by the forest and boosting learners.

Features are pre-binned once per fit; split search then reduces to cumulative
sums of per-bin statistics. Candidate thresholds are midpoints between
consecutive distinct values (or quantiles when a feature has many values), so
a row goes left iff ``x <= threshold`` both in bin space and raw space.
"""

from __future__ import annotations

import numpy as np

LEAF = -1


class Binner:
    """Per-feature split thresholds and the matching bin codes."""

    def __init__(self, max_bins: int = 64):
        self.max_bins = max_bins

    def fit(self, X):
        X = np.asarray(X, dtype=float)
        self.thresholds_ = []
        for j in range(X.shape[1]):
            u = np.unique(X[:, j])
            if len(u) <= self.max_bins:
                thr = (u[:-1] + u[1:]) / 2.0
            else:
                q = np.quantile(X[:, j], np.linspace(0, 1, self.max_bins + 1)[1:-1])
                thr = np.unique(q)
            self.thresholds_.append(thr)
        self.n_bins_ = np.array([len(t) + 1 for t in self.thresholds_], dtype=np.int64)
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape, dtype=np.int64)
        for j, thr in enumerate(self.thresholds_):
            out[:, j] = np.searchsorted(thr, X[:, j], side="left")
        return out


class Tree:
    """Array-backed binary tree; ``value`` rows hold leaf outputs."""

    def __init__(self, feature, threshold, threshold_bin, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.threshold_bin = np.asarray(threshold_bin, dtype=np.int64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def _leaves(self, X, binned: bool):
        node = np.zeros(len(X), dtype=np.int64)
        thr = self.threshold_bin if binned else self.threshold
        while True:
            feat = self.feature[node]
            active = np.flatnonzero(feat != LEAF)
            if active.size == 0:
                return node
            n_a = node[active]
            go_left = X[active, feat[active]] <= thr[n_a]
            node[active] = np.where(go_left, self.left[n_a], self.right[n_a])

    def apply(self, X):
        return self._leaves(np.asarray(X, dtype=float), binned=False)

    def apply_binned(self, Xb):
        return self._leaves(Xb, binned=True)

    def predict(self, X):
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "threshold_bin": self.threshold_bin.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(d["feature"], d["threshold"], d["threshold_bin"], d["left"], d["right"], d["value"])


def _class_histogram(Xb_rows, y_rows, w_rows, n_features, max_bins, K):
    """(F, B, K) weighted class counts and (F, B) row counts for one node."""
    offsets = np.arange(n_features, dtype=np.int64) * max_bins
    flat = (Xb_rows + offsets).ravel()
    yy = np.repeat(y_rows, n_features)
    ww = np.repeat(w_rows, n_features)
    hist = np.bincount(flat * K + yy, weights=ww, minlength=n_features * max_bins * K)
    cnt = np.bincount(flat, minlength=n_features * max_bins)
    return hist.reshape(n_features, max_bins, K), cnt.reshape(n_features, max_bins)


def _gh_histogram(Xb_rows, g_rows, h_rows, n_features, max_bins):
    offsets = np.arange(n_features, dtype=np.int64) * max_bins
    flat = (Xb_rows + offsets).ravel()
    size = n_features * max_bins
    G = np.bincount(flat, weights=np.repeat(g_rows, n_features), minlength=size)
    H = np.bincount(flat, weights=np.repeat(h_rows, n_features), minlength=size)
    C = np.bincount(flat, minlength=size)
    shape = (n_features, max_bins)
    return G.reshape(shape), H.reshape(shape), C.reshape(shape)


def _local_bins(Xb_sub):
    """Shift each column to start at 0; returns (shifted, offsets, width)."""
    lo = Xb_sub.min(axis=0)
    sub = Xb_sub - lo
    return sub, lo, int(sub.max()) + 1


def _best_split(gain, cnt, n_bins, min_leaf, feats, lo):
    """Index of the best (feature, bin) split or None.

    ``np.argmax`` returns the first maximum, which realizes the tie rule:
    lowest feature index, then lowest threshold.
    """
    F, B = gain.shape
    left_cnt = np.cumsum(cnt, axis=1)
    total = left_cnt[:, -1:]
    right_cnt = total - left_cnt
    valid = ((lo[:, None] + np.arange(B)[None, :]) < (n_bins[feats, None] - 1)) & (left_cnt >= min_leaf) & (
        right_cnt >= min_leaf
    )
    with np.errstate(invalid="ignore"):
        gain = np.where(valid & np.isfinite(gain), gain, -np.inf)
    flat = int(np.argmax(gain))
    best = gain.flat[flat]
    if not np.isfinite(best) or best <= 1e-12:
        return None
    f, b = divmod(flat, B)
    return int(feats[f]), int(lo[f] + b)


class _Builder:
    def __init__(self, binner, Xb, max_depth, min_leaf, max_features, rng):
        self.binner = binner
        self.Xb = Xb
        self.F = Xb.shape[1]
        self.max_depth = max_depth
        self.min_leaf = max(1, int(min_leaf))
        self.max_features = max_features
        self.rng = rng
        self.feature, self.thr, self.thr_bin = [], [], []
        self.left, self.right, self.value = [], [], []

    def _candidate_features(self):
        """Sorted feature indices eligible at this node."""
        if self.max_features is None or self.max_features >= self.F:
            return np.arange(self.F)
        return np.sort(self.rng.choice(self.F, self.max_features, replace=False))

    def _new_node(self, value):
        self.feature.append(LEAF)
        self.thr.append(np.nan)
        self.thr_bin.append(-1)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.feature) - 1

    def build(self, rows):
        """Grow depth-first; returns (tree, leaf node of every grown row)."""
        leaf_of = np.empty(len(self.Xb), dtype=np.int64)
        root = self._new_node(self.leaf_value(rows))
        stack = [(root, rows, 0)]
        while stack:
            node, idx, depth = stack.pop()
            split = None
            if depth < self.max_depth and len(idx) >= 2 * self.min_leaf and not self.is_pure(idx):
                split = self.find_split(idx)
            if split is None:
                leaf_of[idx] = node
                continue
            f, b = split
            go_left = self.Xb[idx, f] <= b
            li, ri = idx[go_left], idx[~go_left]
            self.feature[node] = f
            self.thr[node] = float(self.binner.thresholds_[f][b])
            self.thr_bin[node] = b
            ln = self._new_node(self.leaf_value(li))
            rn = self._new_node(self.leaf_value(ri))
            self.left[node], self.right[node] = ln, rn
            # right pushed first so the left subtree is numbered first
            stack.append((rn, ri, depth + 1))
            stack.append((ln, li, depth + 1))
        tree = Tree(self.feature, self.thr, self.thr_bin, self.left, self.right, self.value)
        return tree, leaf_of


class GiniBuilder(_Builder):
    """Class-weighted Gini trees; leaves store weighted class frequencies."""

    def __init__(self, binner, Xb, y, w, n_classes, **kw):
        super().__init__(binner, Xb, **kw)
        self.y = y
        self.w = w
        self.K = n_classes

    def leaf_value(self, idx):
        h = np.bincount(self.y[idx], weights=self.w[idx], minlength=self.K)
        s = h.sum()
        return h / s if s > 0 else np.full(self.K, 1.0 / self.K)

    def is_pure(self, idx):
        return np.all(self.y[idx] == self.y[idx[0]])

    def find_split(self, idx):
        feats = self._candidate_features()
        sub, lo, B = _local_bins(self.Xb[np.ix_(idx, feats)])
        hist, cnt = _class_histogram(sub, self.y[idx], self.w[idx], len(feats), B, self.K)
        left = np.cumsum(hist, axis=1)
        total = left[:, -1:, :]
        right = total - left
        wl = left.sum(axis=2)
        wr = right.sum(axis=2)
        W = float(total[0, 0].sum())
        parent = float((total[0, 0] ** 2).sum()) / W
        with np.errstate(divide="ignore", invalid="ignore"):
            score = np.where(wl > 0, np.einsum("fbk,fbk->fb", left, left) / wl, 0.0) + np.where(
                wr > 0, np.einsum("fbk,fbk->fb", right, right) / wr, 0.0
            )
        gain = score - parent
        return _best_split(gain, cnt, self.binner.n_bins_, self.min_leaf, feats, lo)


class NewtonBuilder(_Builder):
    """Second-order regression trees on per-row gradient/hessian."""

    def __init__(self, binner, Xb, g, h, reg_lambda, **kw):
        super().__init__(binner, Xb, **kw)
        self.g = g
        self.h = h
        self.lam = reg_lambda

    def leaf_value(self, idx):
        return np.array([-self.g[idx].sum() / (self.h[idx].sum() + self.lam)])

    def is_pure(self, idx):
        return False

    def find_split(self, idx):
        feats = self._candidate_features()
        sub, lo, B = _local_bins(self.Xb[np.ix_(idx, feats)])
        G, H, C = _gh_histogram(sub, self.g[idx], self.h[idx], len(feats), B)
        GL = np.cumsum(G, axis=1)
        HL = np.cumsum(H, axis=1)
        Gt, Ht = GL[:, -1:], HL[:, -1:]
        GR, HR = Gt - GL, Ht - HL
        lam = self.lam
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = GL**2 / (HL + lam) + GR**2 / (HR + lam) - Gt**2 / (Ht + lam)
        return _best_split(gain, C, self.binner.n_bins_, self.min_leaf, feats, lo)
