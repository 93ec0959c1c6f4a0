"""Rank-based comparison of strategies: Friedman, Nemenyi, paired t-test."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.stats import rankdata

from .errors import DegenerateMatrix, DegeneratePairs, UnsupportedK

# Studentized range quantiles q_{alpha, k, inf} / sqrt(2), k = 2..10
NEMENYI_Q = {
    0.05: (1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164),
    0.10: (1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920),
}


@dataclass
class ScoreMatrix:
    """Blocks (rows, e.g. classes) x treatments (columns, e.g. strategies).

    Rows holding any NaN are dropped on construction; ``n_dropped`` counts them.
    """

    values: np.ndarray
    row_labels: tuple = ()
    col_labels: tuple = ()
    n_dropped: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise DegenerateMatrix("score matrix must be 2-D")
        keep = ~np.isnan(v).any(axis=1)
        self.n_dropped += int((~keep).sum())
        if self.row_labels:
            self.row_labels = tuple(r for r, k in zip(self.row_labels, keep) if k)
        self.values = v[keep]
        if not self.col_labels:
            self.col_labels = tuple(range(v.shape[1]))
        n, k = self.values.shape
        if k < 2 or n < 2:
            raise DegenerateMatrix(f"need n >= 2 blocks and k >= 2 treatments, got {n}x{k}")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]


def chi2_sf(x: float, df: int) -> float:
    return float(special.gammaincc(df / 2.0, x / 2.0)) if x > 0 else 1.0


def t_sf_two_sided(t: float, df: int) -> float:
    return float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))


def mean_ranks(m: ScoreMatrix) -> np.ndarray:
    """Average within-row ranks; rank 1 is the highest score, ties averaged."""
    r = rankdata(-m.values, axis=1)
    return r.mean(axis=0)


def friedman(m: ScoreMatrix) -> dict:
    n, k = m.n, m.k
    R = mean_ranks(m)
    chi2 = 12.0 * n / (k * (k + 1)) * float(np.sum(R**2)) - 3.0 * n * (k + 1)
    chi2 = max(chi2, 0.0)
    df = k - 1
    return {"chi2": chi2, "df": df, "p": chi2_sf(chi2, df), "mean_ranks": R, "n": n,
            "n_dropped": m.n_dropped}


def nemenyi_cd(k: int, n: int, alpha: float = 0.05) -> float:
    if alpha not in NEMENYI_Q:
        raise UnsupportedK(f"alpha must be one of {sorted(NEMENYI_Q)}")
    if not 2 <= k <= 10:
        raise UnsupportedK(f"k={k} outside the tabulated range 2..10")
    return NEMENYI_Q[alpha][k - 2] * np.sqrt(k * (k + 1) / (6.0 * n))


def nemenyi(m: ScoreMatrix, alpha: float = 0.05) -> dict:
    R = mean_ranks(m)
    cd = nemenyi_cd(m.k, m.n, alpha)
    sig = set()
    for i in range(m.k):
        for j in range(m.k):
            if i != j and abs(R[i] - R[j]) > cd:
                sig.add((i, j))
    return {"cd": float(cd), "significant_pairs": sig, "mean_ranks": R}


def paired_t(a, b) -> dict:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise DegeneratePairs("need two equal-length score vectors with >= 2 entries")
    d = a - b
    n = len(d)
    sd = d.std(ddof=1)
    if sd == 0:
        raise DegeneratePairs("differences have zero variance")
    t = d.mean() / (sd / np.sqrt(n))
    df = n - 1
    return {"t": float(t), "df": df, "p": t_sf_two_sided(float(t), df)}


def best_and_equivalent(m: ScoreMatrix, alpha: float = 0.05) -> dict:
    """Best treatment (lowest mean rank) and its Nemenyi-equivalent set.

    Nothing is highlighted when the Friedman test is not significant.
    """
    fr = friedman(m)
    out = {"friedman": fr, "best": None, "equivalent": []}
    if not fr["p"] < alpha:
        return out
    nm = nemenyi(m, alpha)
    R = fr["mean_ranks"]
    best = int(np.argmin(R))
    out["best"] = best
    out["cd"] = nm["cd"]
    out["equivalent"] = [j for j in range(m.k) if abs(R[j] - R[best]) <= nm["cd"]]
    return out

