"""Finite-valued feature constraints as per-feature bitmask vectors.

A vector assigns every feature of a space one bitmask over that feature's
declared values; an unconstrained feature is all-ones.  Conjunction is
bitwise intersection per feature, and a vector is inconsistent as soon as
some mask is empty, so unification is intersect-and-check.  Failure is a
value (None), not an exception: callers explore many dead ends.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Union

from .description import And, FeatureDecl, FeatureExpr, Not, Or, Value, Var, ValueTerm

FeatureVector = tuple[int, ...]


@dataclass(frozen=True)
class FeatureSpace:
    features: tuple[str, ...]
    values: tuple[tuple[str, ...], ...]  # per feature, declaration order

    def index(self, feature: str) -> int:
        return self.features.index(feature)

    def full_mask(self, i: int) -> int:
        return (1 << len(self.values[i])) - 1

    @property
    def top(self) -> FeatureVector:
        return tuple(self.full_mask(i) for i in range(len(self.features)))

    def value_mask(self, i: int, value: str) -> int:
        return 1 << self.values[i].index(value)

    def mask_values(self, i: int, mask: int) -> tuple[str, ...]:
        return tuple(v for b, v in enumerate(self.values[i]) if mask & (1 << b))

    def is_top(self, vec: FeatureVector) -> bool:
        return all(m == self.full_mask(i) for i, m in enumerate(vec))

    def render(self, vec: FeatureVector) -> str:
        """Debug form `{feature=v1|v2,...}` listing only constrained features."""
        parts = []
        for i, mask in enumerate(vec):
            if mask == self.full_mask(i):
                continue
            parts.append(f"{self.features[i]}=" + "|".join(self.mask_values(i, mask)))
        return "{" + ",".join(parts) + "}"

    def render_constraints(self, vec: FeatureVector) -> str:
        """Statement-style form `[feature=v1|v2, ...]`."""
        parts = []
        for i, mask in enumerate(vec):
            if mask == self.full_mask(i):
                continue
            parts.append(f"{self.features[i]}=" + "|".join(self.mask_values(i, mask)))
        return "[" + ", ".join(parts) + "]"


def build_space(decls: Iterable[FeatureDecl]) -> FeatureSpace:
    """Assign bit positions in declaration order."""
    decls = list(decls)
    return FeatureSpace(
        features=tuple(d.name for d in decls),
        values=tuple(tuple(d.values) for d in decls),
    )


def _expr_mask(expr: FeatureExpr, space: FeatureSpace, i: int) -> int:
    if isinstance(expr, Value):
        return space.value_mask(i, expr.name)
    if isinstance(expr, Not):
        return space.full_mask(i) & ~_expr_mask(expr.item, space, i)
    if isinstance(expr, And):
        mask = space.full_mask(i)
        for item in expr.items:
            mask &= _expr_mask(item, space, i)
        return mask
    if isinstance(expr, Or):
        mask = 0
        for item in expr.items:
            mask |= _expr_mask(item, space, i)
        return mask
    raise TypeError(expr)


def compile_constraints(
    constraints: Iterable[tuple[str, FeatureExpr]], space: FeatureSpace
) -> FeatureVector:
    """Conjoin constraints into a vector; an empty denotation gives a zero mask."""
    masks = list(space.top)
    for feat, expr in constraints:
        i = space.index(feat)
        masks[i] &= _expr_mask(expr, space, i)
    return tuple(masks)


def is_consistent(vec: FeatureVector) -> bool:
    return all(m != 0 for m in vec)


def unify(a: FeatureVector, b: FeatureVector) -> Optional[FeatureVector]:
    """Per-feature intersection; None when some intersection is empty."""
    out = tuple(x & y for x, y in zip(a, b))
    return out if is_consistent(out) else None


# ----------------------------------------
# Categories with shared variables
# ----------------------------------------

@dataclass(frozen=True)
class CompiledCategory:
    """Major symbol plus a syntactic vector; variables link feature slots.

    `varslots` maps a variable name to the feature indices it occupies within
    this category; unification keeps all of a variable's slots equal.  A None
    major is a wildcard that unifies with anything (used for bare roots).
    """

    major: Optional[str]
    vector: FeatureVector
    varslots: tuple[tuple[str, tuple[int, ...]], ...] = ()

    def var_of(self, slot: int) -> Optional[str]:
        for name, slots in self.varslots:
            if slot in slots:
                return name
        return None


def compile_category(
    major: str,
    constraints: Iterable[tuple[str, ValueTerm]],
    space: FeatureSpace,
    var_prefix: str = "",
) -> CompiledCategory:
    """Compile a category spec; variables occupy slots and leave masks at top."""
    masks = list(space.top)
    varslots: dict[str, list[int]] = {}
    for feat, val in constraints:
        i = space.index(feat)
        if isinstance(val, Var):
            varslots.setdefault(var_prefix + val.name, []).append(i)
        else:
            masks[i] &= _expr_mask(val, space, i)
    return CompiledCategory(
        major,
        tuple(masks),
        tuple(sorted((name, tuple(sorted(set(slots)))) for name, slots in varslots.items())),
    )


def propagate_var_slots(
    masks: list[int], classes: Iterable[tuple[int, ...]]
) -> bool:
    """Equalise each class of slots to the intersection of its members.

    Slots belong to at most one class, so a single pass suffices.  Returns
    False when some class intersects to empty.
    """
    for slots in classes:
        m = -1
        for s in slots:
            m &= masks[s]
        if m == 0:
            return False
        for s in slots:
            masks[s] = m
    return True


def unify_categories(
    a: CompiledCategory, b: CompiledCategory
) -> Optional[tuple[CompiledCategory, dict[str, int]]]:
    """Unify two categories; shared variables transmit masks between slots.

    Variables of `a` and `b` occupying the same feature slot become aliases.
    Returns the unified category plus each surviving variable's mask, or None.
    """
    if a.major is not None and b.major is not None and a.major != b.major:
        return None
    major = a.major if a.major is not None else b.major
    masks = [x & y for x, y in zip(a.vector, b.vector)]
    if not all(masks):
        return None

    # Union-find over variable tokens from both sides.
    parent: dict[str, str] = {}

    def find(x: str) -> str:
        while parent.get(x, x) != x:
            parent[x] = parent.get(parent[x], parent[x])
            x = parent[x]
        return x

    def union(x: str, y: str) -> None:
        rx, ry = find(x), find(y)
        if rx != ry:
            parent[rx] = ry

    slots_by_token: dict[str, set[int]] = {}
    slot_owner: dict[int, str] = {}
    for side, cat in (("a:", a), ("b:", b)):
        for name, slots in cat.varslots:
            token = side + name
            parent.setdefault(token, token)
            slots_by_token.setdefault(token, set()).update(slots)
            for s in slots:
                if s in slot_owner and find(slot_owner[s]) != find(token):
                    union(slot_owner[s], token)
                slot_owner[s] = token

    classes: dict[str, set[int]] = {}
    for token, slots in slots_by_token.items():
        classes.setdefault(find(token), set()).update(slots)
    if not propagate_var_slots(masks, [tuple(sorted(s)) for s in classes.values()]):
        return None

    merged_slots = tuple(
        sorted((rep.split(":", 1)[1], tuple(sorted(slots))) for rep, slots in classes.items())
    )
    bindings = {
        rep.split(":", 1)[1]: masks[min(slots)] for rep, slots in classes.items() if slots
    }
    return CompiledCategory(major, tuple(masks), merged_slots), bindings


def render_category(
    cat: CompiledCategory, space: FeatureSpace, only: Optional[set[int]] = None
) -> str:
    """`major:[f=v,...]` over constrained features (optionally a subset)."""
    parts = []
    for i, mask in enumerate(cat.vector):
        if mask == space.full_mask(i):
            continue
        if only is not None and i not in only:
            continue
        parts.append(f"{space.features[i]}=" + "|".join(space.mask_values(i, mask)))
    major = cat.major if cat.major is not None else "*"
    return f"{major}:[" + ",".join(parts) + "]"
