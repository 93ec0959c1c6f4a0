"""Permutation-sampled interventional Shapley values and modality shares."""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import EmptyBackground, ValidationError


@dataclass
class AttributionResult:
    phi: np.ndarray
    target: int | None
    fx: float
    base_value: float  # mean target output over the full background
    efficiency_gap: float  # sum(phi) - (fx - base_value), signed
    standard_error: float  # Monte-Carlo SE of the sampled baseline mean
    n_permutations: int
    background_size: int
    seed: int
    feature_names: tuple = ()
    modalities: tuple = ()

    def modality_shares(self, modalities: Sequence[str] | None = None) -> dict:
        """Share of total |phi| per modality; NaN shares when all phi are zero."""
        mods = tuple(modalities) if modalities is not None else self.modalities
        if len(mods) != len(self.phi):
            raise ValidationError("one modality tag per feature is required")
        a = np.abs(self.phi)
        total = a.sum()
        out = {}
        for m in dict.fromkeys(mods):
            sel = np.array([t == m for t in mods])
            out[m] = float(a[sel].sum() / total) if total > 0 else float("nan")
        return out


def _as_target_fn(f: Callable, x: np.ndarray):
    fx = np.asarray(f(x[None, :]), dtype=float)
    if fx.ndim == 2 and fx.shape[1] > 1:
        target = int(np.argmax(fx[0]))
        return (lambda Z: np.asarray(f(Z), dtype=float)[:, target]), target, float(fx[0, target])
    return (lambda Z: np.asarray(f(Z), dtype=float).reshape(len(Z))), None, float(fx.reshape(-1)[0])


def instance_seed(seed: int, row_id) -> np.random.SeedSequence:
    """Per-instance seed from (seed, row id); independent of scheduling."""
    return np.random.SeedSequence([int(seed), zlib.crc32(str(row_id).encode())])


def sampled_shapley(f: Callable, x, background, n_permutations: int = 200, seed=0,
                    chunk: int = 20000) -> AttributionResult:
    """Monte-Carlo Shapley values of ``f`` at ``x``.

    For each random feature ordering, features are switched one at a time
    from a background row to ``x``; a feature's value is its mean marginal
    change of the target output. Background rows are used in a shuffled
    round-robin so that every row is drawn equally often. When ``f`` returns
    class probabilities, the target is the class ``f`` predicts at ``x``.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    B = np.asarray(background, dtype=float)
    if B.ndim != 2 or len(B) == 0:
        raise EmptyBackground("background must be a non-empty (n, p) array")
    if B.shape[1] != x.size:
        raise ValidationError("background and x disagree on the number of features")
    if n_permutations < 1:
        raise ValidationError("n_permutations must be >= 1")
    rng = np.random.default_rng(seed)
    g, target, fx = _as_target_fn(f, x)
    p = x.size
    M = n_permutations
    draws = np.concatenate([rng.permutation(len(B)) for _ in range(-(-M // len(B)))])[:M]
    perms = np.argsort(rng.random((M, p)), axis=1)

    # row j of a path has the first j features of the permutation switched to x
    phi = np.zeros(p)
    base_draws = np.empty(M)
    per_batch = max(1, chunk // (p + 1))
    for start in range(0, M, per_batch):
        stop = min(M, start + per_batch)
        m = stop - start
        Z = np.repeat(B[draws[start:stop]][:, None, :], p + 1, axis=1)
        pm = perms[start:stop]
        # switched[i, j, k] : feature k already switched at path step j
        pos = np.empty_like(pm)
        np.put_along_axis(pos, pm, np.arange(p)[None, :].repeat(m, 0), axis=1)
        switched = pos[:, None, :] < np.arange(p + 1)[None, :, None]
        Z = np.where(switched, x[None, None, :], Z)
        out = g(Z.reshape(-1, p)).reshape(m, p + 1)
        deltas = np.diff(out, axis=1)
        contrib = np.zeros((m, p))
        np.put_along_axis(contrib, pm, deltas, axis=1)
        phi += contrib.sum(axis=0)
        base_draws[start:stop] = out[:, 0]
    phi /= M
    base_value = float(np.mean(g(B)))
    gap = float(phi.sum() - (fx - base_value))
    se = float(base_draws.std(ddof=1) / np.sqrt(M)) if M > 1 else float("nan")
    return AttributionResult(phi, target, fx, base_value, gap, se, M, len(B), int(
        seed if isinstance(seed, (int, np.integer)) else 0))


def modality_contribution(results: Sequence[AttributionResult], modalities=None,
                          groups: Sequence | None = None) -> dict:
    """Mean per-sample modality shares, optionally per group (e.g. formation).

    Returns ``{"shares": {...}, "n_used": int, "n_undefined": int}`` or, with
    ``groups``, a dict of those keyed by group. Results whose phi are all
    zero have undefined shares; they are counted and skipped.
    """
    results = list(results)
    if not results:
        raise ValidationError("need at least one attribution result")
    if groups is not None:
        groups = list(groups)
        if len(groups) != len(results):
            raise ValidationError("one group per result")
        return {
            gname: modality_contribution([r for r, gg in zip(results, groups) if gg == gname], modalities)
            for gname in dict.fromkeys(groups)
        }
    per = [r.modality_shares(modalities) for r in results]
    keys = list(per[0])
    used = [s for s in per if not any(np.isnan(v) for v in s.values())]
    shares = {k: (float(np.mean([s[k] for s in used])) if used else float("nan")) for k in keys}
    return {"shares": shares, "n_used": len(used), "n_undefined": len(per) - len(used)}
