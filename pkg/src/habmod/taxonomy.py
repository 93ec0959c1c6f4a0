"""Two-level class taxonomy: formations containing leaf classes."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

from .errors import DuplicateCode, EmptyTaxonomy, UnmappableLeaf

FormationRule = Union[int, Mapping[str, str], Sequence[str]]


@dataclass(frozen=True)
class Taxonomy:
    """Formations (level 1) and their leaf classes (level 3).

    Leaf order defines the class index used everywhere else; formation order
    defines the router class index.
    """

    formations: tuple[str, ...]
    leaves: tuple[str, ...]
    parent_of: Mapping[str, str]
    _leaf_index: dict = field(init=False, repr=False, compare=False)
    _formation_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.leaves) < 2 or len(self.formations) < 1:
            raise EmptyTaxonomy("taxonomy needs at least 2 leaves and 1 formation")
        if len(set(self.leaves)) != len(self.leaves):
            raise DuplicateCode("duplicate leaf code")
        if len(set(self.formations)) != len(self.formations):
            raise DuplicateCode("duplicate formation code")
        for leaf in self.leaves:
            if self.parent_of.get(leaf) not in self.formations:
                raise UnmappableLeaf(f"leaf {leaf!r} has no formation")
        object.__setattr__(self, "parent_of", dict(self.parent_of))
        object.__setattr__(self, "_leaf_index", {c: i for i, c in enumerate(self.leaves)})
        object.__setattr__(
            self, "_formation_index", {f: i for i, f in enumerate(self.formations)}
        )

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    @property
    def n_formations(self) -> int:
        return len(self.formations)

    def leaf_index(self, code: str) -> int:
        return self._leaf_index[code]

    def formation_index(self, code: str) -> int:
        return self._formation_index[code]

    def has_leaf(self, code: str) -> bool:
        return code in self._leaf_index

    def leaves_of(self, formation: str) -> list[str]:
        return [c for c in self.leaves if self.parent_of[c] == formation]

    def leaf_indices_of(self, formation: str) -> list[int]:
        return [i for i, c in enumerate(self.leaves) if self.parent_of[c] == formation]

    def leaf_to_formation_index(self) -> list[int]:
        """Formation index of every leaf, in leaf order."""
        return [self._formation_index[self.parent_of[c]] for c in self.leaves]

    def counts_per_formation(self) -> dict[str, int]:
        return {f: len(self.leaves_of(f)) for f in self.formations}

    def digest(self) -> str:
        h = hashlib.sha256()
        for leaf in self.leaves:
            h.update(f"{leaf}\t{self.parent_of[leaf]}\n".encode())
        return h.hexdigest()[:16]

    def to_dict(self) -> dict:
        return {"leaves": list(self.leaves), "parent_of": dict(self.parent_of)}

    @classmethod
    def from_dict(cls, d: dict) -> "Taxonomy":
        return build_taxonomy(d["leaves"], d["parent_of"], order=d["leaves"])


def _derive_parent(leaf: str, rule: FormationRule) -> str | None:
    if isinstance(rule, int):
        if rule < 1 or len(leaf) <= rule:
            return None
        return leaf[:rule]
    if isinstance(rule, Mapping):
        return rule.get(leaf)
    # sequence of formation codes: longest matching prefix wins
    best = None
    for code in rule:
        if leaf.startswith(code) and len(leaf) > len(code):
            if best is None or len(code) > len(best):
                best = code
    return best


def build_taxonomy(
    leaf_codes: Sequence[str],
    formation_rule: FormationRule = 1,
    order: Sequence[str] | None = None,
) -> Taxonomy:
    """Build a taxonomy from leaf codes.

    Parameters
    ----------
    leaf_codes : sequence of str
        Leaf (level-3) class codes.
    formation_rule : int, mapping or sequence of str
        An int is a prefix length (``"T11"`` -> ``"T"`` for 1). A mapping gives
        the formation of every leaf explicitly. A sequence of formation codes
        assigns each leaf to the longest code that prefixes it (e.g.
        ``["MA2", "N", ...]``).
    order : sequence of str, optional
        Explicit leaf order. Defaults to lexicographic.
    """
    leaf_codes = list(leaf_codes)
    if not leaf_codes:
        raise EmptyTaxonomy("no leaf codes")
    if len(set(leaf_codes)) != len(leaf_codes):
        dup = sorted({c for c in leaf_codes if leaf_codes.count(c) > 1})
        raise DuplicateCode(f"duplicate leaf codes: {dup}")
    parent_of = {}
    for leaf in leaf_codes:
        parent = _derive_parent(leaf, formation_rule)
        if parent is None:
            raise UnmappableLeaf(f"cannot derive a formation for leaf {leaf!r}")
        parent_of[leaf] = parent
    if order is not None:
        if sorted(order) != sorted(leaf_codes):
            raise DuplicateCode("explicit order must be a permutation of the leaf codes")
        leaves = tuple(order)
    else:
        leaves = tuple(sorted(leaf_codes))
    formations = []
    for leaf in leaves:
        if parent_of[leaf] not in formations:
            formations.append(parent_of[leaf])
    if order is None:
        formations.sort()
    if len(leaves) < 2:
        raise EmptyTaxonomy("taxonomy needs at least 2 leaves")
    return Taxonomy(tuple(formations), leaves, parent_of)
