"""Composition of production rules and spelling rules into spelling patterns.

Affix sequences are produced by top-down application of the production rules
with the root morpheme left unspecified, then each sequence is spelled by the
rule set over a templated root region

    L1 ... Lm  v(L,R)  R1 ... Rn

where the v region stands for an arbitrary-length run of default-rule copies
and the explicit edge slots carry the character constraints that rule targets
and contexts place on the start and end of the unknown root.  Lm and R1 are
required not to be matched by the default rule, which keeps the (m,n) families
disjoint.  The lexicon is deliberately *not* composed here: patterns carry a
pair of category requirements (root side, inflected side) and the root
characters stay symbolic until run time.

Obligatory-rule conditions that cannot be decided while root characters are
unknown are recorded on the pattern as deferred checks; the runtime re-verifies
the fully instantiated partitioning, which subsumes them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional, Union

from . import features as ft
from . import spelling as sp
from .description import (
    OPTIONAL,
    Daughter,
    Description,
    Diagnostic,
    IrregEntry,
    Morpheme,
    ProductionRule,
    validate_description,
)

DUMP_FORMAT = "twolevel-patterns"
DUMP_VERSION = 1


class CompileError(Exception):
    pass


# ----------------------------------------
# Character-set algebra for symbolic cells
# ----------------------------------------

class _AlphaType:
    """Sentinel: any alphabetic character (the defaulted letter class)."""

    def __repr__(self) -> str:  # pragma: no cover
        return "ALPHA"


ALPHA = _AlphaType()
Charset = Union[None, _AlphaType, frozenset]  # None = unconstrained


def cs_contains(cs: Charset, ch: str) -> bool:
    if cs is None:
        return True
    if isinstance(cs, _AlphaType):
        return ch.isalpha()
    return ch in cs


def cs_intersect(a: Charset, b: Charset) -> Charset:
    if a is None:
        return b
    if b is None:
        return a
    if isinstance(a, _AlphaType):
        if isinstance(b, _AlphaType):
            return ALPHA
        return frozenset(c for c in b if c.isalpha())
    if isinstance(b, _AlphaType):
        return frozenset(c for c in a if c.isalpha())
    return a & b


def cs_empty(cs: Charset) -> bool:
    return isinstance(cs, frozenset) and not cs


def cs_of_class(cls) -> Charset:
    return ALPHA if cls.members is None else cls.members


# ----------------------------------------
# Production trees
# ----------------------------------------

Slot = tuple[str, int]  # ("r" | "i", feature index)


@dataclass(frozen=True)
class ProductionTree:
    """A chain of production-rule applications around the unknown root."""

    id: int
    rules: tuple[str, ...]  # innermost (applied to the root) first
    prefix: tuple[str, ...]
    suffix: tuple[str, ...]
    root_cat: ft.CompiledCategory
    infl_cat: ft.CompiledCategory
    links: tuple[tuple[Slot, ...], ...]  # classes of slots sharing one variable

    @property
    def morphemes(self) -> tuple[str, ...]:
        return self.prefix + ("*",) + self.suffix

    def depth(self) -> int:
        return len(self.rules)


def _tree_state_for_rule(
    rule: ProductionRule, space: ft.FeatureSpace
) -> Optional[tuple[ft.CompiledCategory, ft.CompiledCategory, tuple[tuple[Slot, ...], ...]]]:
    root_item = rule.rhs[rule.root_index()]
    assert isinstance(root_item, Daughter)
    root = ft.compile_category(root_item.spec.major, root_item.spec.constraints, space)
    infl = ft.compile_category(rule.lhs.major, rule.lhs.constraints, space)
    classes: dict[str, set[Slot]] = {}
    for name, slots in root.varslots:
        classes.setdefault(name, set()).update(("r", s) for s in slots)
    for name, slots in infl.varslots:
        classes.setdefault(name, set()).update(("i", s) for s in slots)
    link_list = tuple(tuple(sorted(s)) for _, s in sorted(classes.items()) if len(s) > 1)
    masks_r = list(root.vector)
    masks_i = list(infl.vector)
    if not _propagate_links(masks_r, masks_i, link_list):
        return None
    return (
        replace(root, vector=tuple(masks_r), varslots=()),
        replace(infl, vector=tuple(masks_i), varslots=()),
        link_list,
    )


def _propagate_links(
    masks_r: list[int], masks_i: list[int], links: Iterable[tuple[Slot, ...]]
) -> bool:
    for cls in links:
        m = -1
        for side, i in cls:
            m &= masks_r[i] if side == "r" else masks_i[i]
        if m == 0:
            return False
        for side, i in cls:
            if side == "r":
                masks_r[i] = m
            else:
                masks_i[i] = m
    return True


def _extend_tree(
    tree: ProductionTree,
    rule: ProductionRule,
    space: ft.FeatureSpace,
    new_id: int,
) -> Optional[ProductionTree]:
    """Apply `rule` on top of `tree`: its root daughter consumes tree's result."""
    state = _tree_state_for_rule(rule, space)
    if state is None:
        return None
    r_root, r_infl, r_links = state
    if r_root.major != tree.infl_cat.major:
        return None
    # Slots: r = tree root, m = tree infl unified with the new rule's daughter,
    # i = the new rule's lhs.  Equality classes over these three namespaces,
    # masks intersected to a fixpoint, then the middle is projected away.
    masks = {
        "r": list(tree.root_cat.vector),
        "m": [a & b for a, b in zip(tree.infl_cat.vector, r_root.vector)],
        "i": list(r_infl.vector),
    }
    if not all(masks["m"]):
        return None

    renamed_inner = tuple(
        tuple((("m" if side == "i" else side), i) for side, i in cls) for cls in tree.links
    )
    renamed_outer = tuple(
        tuple((("m" if side == "r" else side), i) for side, i in cls) for cls in r_links
    )
    all_classes = merge_slot_classes(renamed_inner + renamed_outer)
    if not propagate_classes(masks, all_classes):
        return None
    out_links = []
    for cls in all_classes:
        outer = tuple(s for s in cls if s[0] in ("r", "i"))
        if len(outer) > 1:
            out_links.append(outer)
    prefix, suffix = _rule_affixes(rule)
    return ProductionTree(
        id=new_id,
        rules=tree.rules + (rule.name,),
        prefix=prefix + tree.prefix,
        suffix=tree.suffix + suffix,
        root_cat=replace(tree.root_cat, vector=tuple(masks["r"])),
        infl_cat=ft.CompiledCategory(r_infl.major, tuple(masks["i"])),
        links=tuple(sorted(out_links)),
    )


def propagate_classes(
    masks: dict[str, list[int]], classes: Iterable[tuple[Slot, ...]]
) -> bool:
    """Equalise linked slots to their intersection, to a fixpoint."""
    classes = list(classes)
    changed = True
    while changed:
        changed = False
        for cls in classes:
            m = -1
            for side, i in cls:
                m &= masks[side][i]
            if m == 0:
                return False
            for side, i in cls:
                if masks[side][i] != m:
                    masks[side][i] = m
                    changed = True
    return True


def merge_slot_classes(classes: Iterable[tuple[Slot, ...]]) -> list[tuple[Slot, ...]]:
    parent: dict[Slot, Slot] = {}

    def find(x: Slot) -> Slot:
        while parent.setdefault(x, x) != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for cls in classes:
        first = cls[0]
        for s in cls[1:]:
            ra, rb = find(first), find(s)
            if ra != rb:
                parent[ra] = rb
    grouped: dict[Slot, set[Slot]] = {}
    for s in parent:
        grouped.setdefault(find(s), set()).add(s)
    return sorted(tuple(sorted(g)) for g in grouped.values() if len(g) > 1)


def _rule_affixes(rule: ProductionRule) -> tuple[tuple[str, ...], tuple[str, ...]]:
    idx = rule.root_index()
    prefix = tuple(it.name for it in rule.rhs[:idx] if isinstance(it, Morpheme))
    suffix = tuple(it.name for it in rule.rhs[idx + 1 :] if isinstance(it, Morpheme))
    return prefix, suffix


def enumerate_trees(
    desc: Description, space: ft.FeatureSpace, depth: int
) -> tuple[list[ProductionTree], list[Diagnostic]]:
    """All production trees of depth <= `depth`, breadth-first, stable ids."""
    diags: list[Diagnostic] = []
    trees: list[ProductionTree] = []
    frontier: list[ProductionTree] = []
    next_id = 0
    for rule in desc.production_rules:
        if rule.root_index() < 0:
            continue
        state = _tree_state_for_rule(rule, space)
        if state is None:
            continue
        root, infl, links = state
        prefix, suffix = _rule_affixes(rule)
        t = ProductionTree(next_id, (rule.name,), prefix, suffix, root, infl, links)
        next_id += 1
        trees.append(t)
        frontier.append(t)
    truncated = False
    for _ in range(depth - 1):
        new_frontier: list[ProductionTree] = []
        for tree in frontier:
            for rule in desc.production_rules:
                if rule.root_index() < 0:
                    continue
                ext = _extend_tree(tree, rule, space, next_id)
                if ext is not None:
                    next_id += 1
                    trees.append(ext)
                    new_frontier.append(ext)
        frontier = new_frontier
    for tree in frontier:
        for rule in desc.production_rules:
            if rule.root_index() >= 0 and _extend_tree(tree, rule, space, -1) is not None:
                truncated = True
                break
        if truncated:
            break
    if truncated:
        diags.append(
            Diagnostic(
                "warning",
                f"derivation depth bound {depth} truncated some affix combinations",
                0, 0,
            )
        )
    return trees, diags


@dataclass(frozen=True)
class AffixSequence:
    id: int
    prefix: tuple[str, ...]
    suffix: tuple[str, ...]
    orth: ft.FeatureVector  # conjoined orth constraints of the affixes involved
    tree_ids: tuple[int, ...]

    @property
    def morphemes(self) -> tuple[str, ...]:
        return self.prefix + ("*",) + self.suffix


def enumerate_affix_sequences(
    desc: Description,
    space: ft.FeatureSpace,
    orth_space: ft.FeatureSpace,
    depth: int,
) -> tuple[list[AffixSequence], list[ProductionTree], list[Diagnostic]]:
    """Distinct affix sequences (bare root first) with their trees merged."""
    trees, diags = enumerate_trees(desc, space, depth)
    order: list[tuple[tuple[str, ...], tuple[str, ...]]] = [((), ())]
    grouped: dict[tuple, list[int]] = {((), ()): []}
    for tree in trees:
        key = (tree.prefix, tree.suffix)
        if key not in grouped:
            grouped[key] = []
            order.append(key)
        grouped[key].append(tree.id)
    sequences = []
    for i, key in enumerate(order):
        prefix, suffix = key
        orth = orth_space.top
        for name in prefix + suffix:
            decl = desc.affixes.get(name)
            if decl is not None:
                vec = ft.compile_constraints(decl.constraints, orth_space)
                merged = ft.unify(orth, vec)
                orth = merged if merged is not None else tuple(0 for _ in orth)
        sequences.append(AffixSequence(i, prefix, suffix, orth, tuple(grouped[key])))
    return sequences, trees, diags


# ----------------------------------------
# Template sizes
# ----------------------------------------

def _boundary_spec(spec, rule: sp.CompiledRule, boundary: frozenset[str]) -> bool:
    if spec.kind == "lit":
        return spec.char in boundary
    members = rule.classes[spec.char].members
    return members is not None and members <= boundary


def template_sizes(
    rules: Iterable[sp.CompiledRule], boundary: frozenset[str]
) -> frozenset[tuple[int, int]]:
    """The (m,n) root-template shapes the rule set can require.

    A rule with k lexical target characters and r right-context characters
    before a boundary symbol needs n = k + r explicit end-of-root slots (its
    target matching R(n-k+1)..Rn is the innermost case); left contexts give m
    symmetrically.  Rules whose contexts never mention a boundary are not
    anchored to the root edge and contribute nothing.
    """
    ns = {0}
    ms = {0}
    for rule in rules:
        k = len(rule.rule.lexical.target)
        rctx = rule.rule.lexical.rcontext
        for r, spec in enumerate(rctx):
            if _boundary_spec(spec, rule, boundary):
                ns.add(k + r)
                break
        lctx = rule.rule.lexical.lcontext
        for l, spec in enumerate(reversed(lctx)):
            if _boundary_spec(spec, rule, boundary):
                ms.add(k + l)
                break
    return frozenset((m, n) for m in sorted(ms) for n in sorted(ns))


# ----------------------------------------
# Spelling patterns
# ----------------------------------------

@dataclass(frozen=True)
class Cell:
    kind: str  # "lit" | "var" | "v"
    char: str = ""
    var: int = -1


V_CELL = Cell("v")


@dataclass(frozen=True)
class SymPartition:
    rule: str
    s_start: int
    s_end: int
    l_start: int
    l_end: int
    is_v: bool = False


@dataclass(frozen=True)
class SpellingPattern:
    id: int
    seq_id: int
    tree_ids: tuple[int, ...]
    prefix_morphs: tuple[str, ...]
    suffix_morphs: tuple[str, ...]
    surface_cells: tuple[Cell, ...]
    lexical_cells: tuple[Cell, ...]
    root_span: tuple[int, int]  # lexical cell range holding the citation
    vars: tuple[Charset, ...]
    partitions: tuple[SymPartition, ...]
    orth: ft.FeatureVector
    deferred: tuple[tuple[str, int], ...]  # (obligatory rule, partition index)
    surface_prefix: str = field(default="")
    surface_suffix: str = field(default="")

    def rule_names(self) -> tuple[str, ...]:
        return tuple(p.rule + ("*" if p.is_v else "") for p in self.partitions)


@dataclass
class PatternSet:
    patterns: list[SpellingPattern]
    analysis_index: dict[tuple[str, str], list[int]]
    generation_index: dict[tuple[tuple[str, ...], tuple[str, ...]], list[int]]

    def key_shapes(self) -> list[tuple[int, int]]:
        return sorted({(len(p), len(s)) for p, s in self.analysis_index})

    def by_analysis_key(self, prefix: str, suffix: str) -> list[SpellingPattern]:
        ids = self.analysis_index.get((prefix, suffix), [])
        return [self.patterns[i] for i in ids]

    def by_generation_key(
        self, prefix: tuple[str, ...], suffix: tuple[str, ...]
    ) -> list[SpellingPattern]:
        ids = self.generation_index.get((prefix, suffix), [])
        return [self.patterns[i] for i in ids]


def find_default_rule(rules: sp.RuleSet) -> Optional[sp.CompiledRule]:
    """The optional context-free identity rule that copies root interiors."""
    for rule in rules:
        r = rule.rule
        if (
            r.op == OPTIONAL
            and not r.features
            and not r.surface.lcontext and not r.surface.rcontext
            and not r.lexical.lcontext and not r.lexical.rcontext
            and len(r.lexical.target) == 1
            and r.surface.target == r.lexical.target
            and r.lexical.target[0].kind == "class"
        ):
            return rule
    return None


# Symbolic items: ("lit", ch) | ("node", node_id) | ("v",)
_Item = tuple


class _Store:
    """Union-find over symbolic character nodes with charset intersection."""

    def __init__(self) -> None:
        self.parent: dict[int, int] = {}
        self.charset: dict[int, Charset] = {}
        self.next_id = 0

    def fresh(self, cs: Charset) -> int:
        nid = self.next_id
        self.next_id += 1
        self.parent[nid] = nid
        self.charset[nid] = cs
        return nid

    def find(self, n: int) -> int:
        while self.parent[n] != n:
            self.parent[n] = self.parent[self.parent[n]]
            n = self.parent[n]
        return n

    def get(self, n: int) -> Charset:
        return self.charset[self.find(n)]

    def constrain(self, n: int, cs: Charset) -> bool:
        r = self.find(n)
        merged = cs_intersect(self.charset[r], cs)
        if cs_empty(merged):
            return False
        self.charset[r] = merged
        return True

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return True
        merged = cs_intersect(self.charset[ra], self.charset[rb])
        if cs_empty(merged):
            return False
        self.parent[ra] = rb
        self.charset[rb] = merged
        return True

    def copy(self) -> "_Store":
        out = _Store()
        out.parent = dict(self.parent)
        out.charset = dict(self.charset)
        out.next_id = self.next_id
        return out


@dataclass
class _Branch:
    """One nondeterministic spelling of a templated lexical sequence."""

    store: _Store
    scells: list[_Item]
    parts: list[tuple[str, int, int, int, int, bool]]
    orth: ft.FeatureVector
    deferred: list[tuple[str, int]]
    # Surface right contexts wait until all cells exist: (rule index, scell
    # position, owning partition index, binding environment snapshot).
    pending_rctx: list[tuple[int, int, int, dict]]

    def copy(self) -> "_Branch":
        return _Branch(
            self.store.copy(),
            list(self.scells),
            list(self.parts),
            self.orth,
            list(self.deferred),
            [(i, p, j, dict(b)) for i, p, j, b in self.pending_rctx],
        )


class _TemplateCompiler:
    """Applies the rule set to one templated lexical item sequence."""

    def __init__(
        self,
        rules: sp.RuleSet,
        default_rule: Optional[sp.CompiledRule],
        items: list[_Item],
        store: _Store,
        base_orth: ft.FeatureVector,
        lm_index: Optional[int],
        r1_index: Optional[int],
    ):
        self.rules = rules
        self.default_rule = default_rule
        self.items = items
        self.base = _Branch(store, [], [], base_orth, [], [])
        self.lm_index = lm_index
        self.r1_index = r1_index
        self.results: list[_Branch] = []

    # -- symbolic matching ------------------------------------------------

    def _bind_digit(
        self, br: _Branch, env: dict, rule: sp.CompiledRule, digit: str, item: _Item
    ) -> bool:
        """Record that `digit` matched `item`, merging with earlier bindings."""
        cls = cs_of_class(rule.classes[digit])
        if item[0] == "lit":
            ch = item[1]
            if not cs_contains(cls, ch):
                return False
            bound = env.get(digit)
            if bound is None:
                env[digit] = ("char", ch)
                return True
            if bound[0] == "char":
                return bound[1] == ch
            return br.store.constrain(bound[1], frozenset((ch,)))
        node = item[1]
        if not br.store.constrain(node, cls):
            return False
        bound = env.get(digit)
        if bound is None:
            env[digit] = ("node", node)
            return True
        if bound[0] == "char":
            return br.store.constrain(node, frozenset((bound[1],)))
        return br.store.union(node, bound[1])

    def _match_spec(
        self, br: _Branch, env: dict, rule: sp.CompiledRule, spec, item: _Item
    ) -> bool:
        if item[0] == "v":
            raise AssertionError("v items are matched atomically")
        if spec.kind == "lit":
            if item[0] == "lit":
                return item[1] == spec.char
            return br.store.constrain(item[1], frozenset((spec.char,)))
        return self._bind_digit(br, env, rule, spec.char, item)

    def _match_context(
        self,
        br: _Branch,
        env: dict,
        rule: sp.CompiledRule,
        specs,
        seq: list[_Item],
        anchor: int,
        leftward: bool,
        part_idx: int,
    ) -> Optional[bool]:
        """Match a context against symbolic items; None = fail the branch.

        Returns True when fully matched and False when the match ran into a
        v region (recorded as a deferred check for the runtime verifier).
        """
        ordered = list(reversed(specs)) if leftward else list(specs)
        pos = anchor
        for spec in ordered:
            idx = pos - 1 if leftward else pos
            if idx < 0 or idx >= len(seq):
                return None  # context beyond the string edge never matches
            item = seq[idx]
            if item[0] == "v":
                br.deferred.append((rule.name, part_idx))
                return False
            if not self._match_spec(br, env, rule, spec, item):
                return None
            pos = idx if leftward else pos + 1
        return True

    # -- search ------------------------------------------------------------

    def run(self) -> list[_Branch]:
        self._step(0, self.base)
        return self.results

    def _step(self, i: int, br: _Branch) -> None:
        if i == len(self.items):
            self._finish(br)
            return
        if self.items[i][0] == "v":
            b2 = br.copy()
            name = self.default_rule.name if self.default_rule else "default"
            part_idx = len(b2.parts)
            s_pos = len(b2.scells)
            b2.scells.append(("v",))
            b2.parts.append((name, s_pos, s_pos + 1, i, i + 1, True))
            # Any obligatory rule with a single-character lexical target might
            # veto a copy inside the region once the root is known.
            for rule in self.rules:
                if not rule.obligatory or len(rule.rule.lexical.target) != 1:
                    continue
                if ft.unify(b2.orth, rule.vector) is None:
                    continue
                b2.deferred.append((rule.name, part_idx))
            self._step(i + 1, b2)
            return
        for ridx, rule in enumerate(self.rules):
            ltarget = rule.rule.lexical.target
            if not ltarget:
                continue
            k = len(ltarget)
            if i + k > len(self.items):
                continue
            window = self.items[i : i + k]
            if any(it[0] == "v" for it in window):
                continue
            if (self.lm_index is not None or self.r1_index is not None) and self._covers_required_slot(i, k):
                if rule is self.default_rule:
                    continue
            b2 = br.copy()
            env: dict = {}
            vec = ft.unify(b2.orth, rule.vector)
            if vec is None:
                continue
            b2.orth = vec
            ok = True
            for off, spec in enumerate(ltarget):
                if not self._match_spec(b2, env, rule, spec, window[off]):
                    ok = False
                    break
            if not ok:
                continue
            part_idx = len(b2.parts)
            ctx = self._match_context(
                b2, env, rule, rule.rule.lexical.lcontext, self.items, i, True, part_idx
            )
            if ctx is None:
                continue
            ctx = self._match_context(
                b2, env, rule, rule.rule.lexical.rcontext, self.items, i + k, False, part_idx
            )
            if ctx is None:
                continue
            s_start = len(b2.scells)
            if not self._emit_surface(b2, env, rule):
                continue
            s_end = len(b2.scells)
            ctx = self._match_context(
                b2, env, rule, rule.rule.surface.lcontext, b2.scells, s_start, True, part_idx
            )
            if ctx is None:
                continue
            if rule.rule.surface.rcontext:
                b2.pending_rctx.append((ridx, s_end, part_idx, dict(env)))
            b2.parts.append((rule.name, s_start, s_end, i, i + k, False))
            self._step(i + k, b2)

    def _covers_required_slot(self, i: int, k: int) -> bool:
        for idx in (self.lm_index, self.r1_index):
            if idx is not None and i <= idx < i + k:
                return True
        return False

    def _emit_surface(self, br: _Branch, env: dict, rule: sp.CompiledRule) -> bool:
        for spec in rule.rule.surface.target:
            if spec.kind == "lit":
                br.scells.append(("lit", spec.char))
                continue
            bound = env.get(spec.char)
            cls = cs_of_class(rule.classes[spec.char])
            if bound is None:
                node = br.store.fresh(cls)
                env[spec.char] = ("node", node)
                br.scells.append(("node", node))
            elif bound[0] == "char":
                if not cs_contains(cls, bound[1]):
                    return False
                br.scells.append(("lit", bound[1]))
            else:
                if not br.store.constrain(bound[1], cls):
                    return False
                br.scells.append(("node", bound[1]))
        return True

    def _finish(self, br: _Branch) -> None:
        for ridx, pos, part_idx, env in br.pending_rctx:
            rule = self.rules.rules[ridx]
            ctx = self._match_context(
                br, env, rule, rule.rule.surface.rcontext, br.scells, pos, False, part_idx
            )
            if ctx is None:
                return
        self.results.append(br)


# ----------------------------------------
# Obligatory screening over symbolic cells
# ----------------------------------------

_YES, _NO, _MAYBE = 1, 0, -1


def _tri_window(
    specs, seq: list[_Item], start: int, store: _Store, rule: sp.CompiledRule
) -> int:
    """Can the specs match seq[start:start+len(specs)]?  Edge overrun = no.

    YES means every compared position was а definite literal match; repeated
    digit consistency is left to the concrete re-check, so a YES here only
    routes to the exact test when the whole neighbourhood is literal.
    """
    if start < 0 or start + len(specs) > len(seq):
        return _NO
    verdict = _YES
    for off, spec in enumerate(specs):
        item = seq[start + off]
        if item[0] == "v":
            return _MAYBE
        if item[0] == "lit":
            if spec.kind == "lit":
                if spec.char != item[1]:
                    return _NO
            else:
                if not rule.classes[spec.char].contains(item[1]):
                    return _NO
                verdict = _MAYBE if verdict != _YES else verdict
        else:
            cs = store.get(item[1])
            if spec.kind == "lit" and not cs_contains(cs, spec.char):
                return _NO
            if spec.kind == "class" and cs_empty(
                cs_intersect(cs, cs_of_class(rule.classes[spec.char]))
            ):
                return _NO
            verdict = _MAYBE
    return verdict


def _entails(orth: ft.FeatureVector, rule_vec: ft.FeatureVector) -> bool:
    return all((o & r) == o for o, r in zip(orth, rule_vec))


def _all_lit(seq: list[_Item], start: int, end: int) -> bool:
    return 0 <= start and end <= len(seq) and all(it[0] == "lit" for it in seq[start:end])


def _screen_obligatory(
    br: _Branch,
    items: list[_Item],
    rules: sp.RuleSet,
) -> Optional[list[tuple[str, int]]]:
    """Decide obligatory conditions where the cells allow; None kills the branch.

    A partition whose whole neighbourhood is literal gets the exact break test;
    if it breaks a rule whose features are entailed by the branch constraint,
    no root instantiation can save the pattern.  Undecidable cases become
    deferred checks for the runtime verifier.
    """
    deferred = list(br.deferred)
    for idx, (rname, s0, s1, l0, l1, is_v) in enumerate(br.parts):
        if is_v:
            continue
        for rule in rules:
            if not rule.obligatory:
                continue
            if ft.unify(br.orth, rule.vector) is None:
                continue  # impossible under any orth refinement
            r = rule.rule
            if l1 - l0 != len(r.lexical.target):
                continue  # length-mismatched targets never block
            s_lo, s_hi = s0 - len(r.surface.lcontext), s1 + len(r.surface.rcontext)
            l_lo, l_hi = l0 - len(r.lexical.lcontext), l1 + len(r.lexical.rcontext)
            concrete = (
                _all_lit(br.scells, s_lo, s_hi)
                and _all_lit(items, l_lo, l_hi)
                and _entails(br.orth, rule.vector)
            )
            if concrete:
                if _concrete_break(rule, br, items, (s0, s1, l0, l1)):
                    return None
                continue
            checks = (
                _tri_window(r.lexical.target, items, l0, br.store, rule),
                _tri_window(r.lexical.lcontext, items, l_lo, br.store, rule),
                _tri_window(r.lexical.rcontext, items, l1, br.store, rule),
                _tri_window(r.surface.lcontext, br.scells, s_lo, br.store, rule),
                _tri_window(r.surface.rcontext, br.scells, s1, br.store, rule),
            )
            if _NO in checks:
                continue
            if (rule.name, idx) not in deferred:
                deferred.append((rule.name, idx))
    return deferred


def _concrete_break(
    rule: sp.CompiledRule, br: _Branch, items: list[_Item], span: tuple[int, int, int, int]
) -> bool:
    """Exact break test on a fully literal neighbourhood."""
    s0, s1, l0, l1 = span
    r = rule.rule

    def lit_run(seq, start, end):
        if start < 0 or end > len(seq):
            return None
        chars = []
        for it in seq[start:end]:
            if it[0] != "lit":
                return None
            chars.append(it[1])
        return "".join(chars)

    s_lo = s0 - len(r.surface.lcontext)
    s_hi = s1 + len(r.surface.rcontext)
    l_lo = l0 - len(r.lexical.lcontext)
    l_hi = l1 + len(r.lexical.rcontext)
    surf = lit_run(br.scells, s_lo, s_hi)
    lex = lit_run(items, l_lo, l_hi)
    if surf is None or lex is None:
        return False
    site = sp.Site(s0 - s_lo, s1 - s_lo, l0 - l_lo, l1 - l_lo)
    return sp._breaks(rule, site, surf, lex, br.orth)


# ----------------------------------------
# Pattern assembly
# ----------------------------------------

def _resolve_cells(
    br: _Branch, items: list[_Item]
) -> tuple[tuple[Cell, ...], tuple[Cell, ...], tuple[Charset, ...]]:
    var_ids: dict[int, int] = {}
    varsets: list[Charset] = []

    def convert(seq: list[_Item]) -> tuple[Cell, ...]:
        out = []
        for it in seq:
            if it[0] == "v":
                out.append(V_CELL)
            elif it[0] == "lit":
                out.append(Cell("lit", it[1]))
            else:
                rep = br.store.find(it[1])
                cs = br.store.charset[rep]
                if isinstance(cs, frozenset) and len(cs) == 1:
                    out.append(Cell("lit", next(iter(cs))))
                    continue
                if rep not in var_ids:
                    var_ids[rep] = len(varsets)
                    varsets.append(cs)
                out.append(Cell("var", var=var_ids[rep]))
        return tuple(out)

    lex = convert(items)
    surf = convert(br.scells)
    return surf, lex, tuple(varsets)


def _pattern_key(p: SpellingPattern) -> tuple:
    return (
        p.seq_id,
        p.root_span,
        p.surface_cells,
        p.lexical_cells,
        p.partitions,
        p.orth,
        tuple(
            ("set", tuple(sorted(v))) if isinstance(v, frozenset)
            else ("alpha",) if isinstance(v, _AlphaType) else ("any",)
            for v in p.vars
        ),
    )


@dataclass
class CompiledDescription:
    description: Description
    rules: sp.RuleSet
    syn_space: ft.FeatureSpace
    trees: list[ProductionTree]
    sequences: list[AffixSequence]
    pattern_set: PatternSet
    depth: int
    diagnostics: list[Diagnostic]
    default_rule: Optional[str]

    @property
    def orth_space(self) -> ft.FeatureSpace:
        return self.rules.orth_space

    def v_charset(self) -> Charset:
        """Characters the root interior may hold: the identity rule's class.

        Without an identity rule nothing can copy interior characters, so the
        region must be empty (the empty set rejects every character).
        """
        if self.default_rule is None:
            return frozenset()
        rule = self.rules.rule(self.default_rule)
        digit = rule.rule.lexical.target[0].char
        return cs_of_class(rule.classes[digit])

    def tree(self, tree_id: int) -> ProductionTree:
        return self.trees[tree_id]

    def production_rule(self, name: str) -> ProductionRule:
        for r in self.description.production_rules:
            if r.name == name:
                return r
        raise KeyError(name)

    def admitted_trees(self, entry: IrregEntry) -> list[ProductionTree]:
        """Trees an irregular entry may build: allowed rules, affix count."""
        want = len(entry.morphemes) - 1
        allowed = set(entry.rules)
        return [
            t
            for t in self.trees
            if set(t.rules) <= allowed and len(t.prefix) + len(t.suffix) == want
        ]

    def exclusive_cells(self) -> set[tuple[str, int]]:
        out = set()
        for entry in self.description.irregulars:
            if not entry.exclusive:
                continue
            for tree in self.admitted_trees(entry):
                out.add((entry.morphemes[0], tree.id))
        return out


def compile_patterns(
    desc: Description, depth: Optional[int] = None
) -> CompiledDescription:
    """Compile a validated description into an indexed pattern set."""
    errors = [d for d in validate_description(desc) if d.severity == "error"]
    if errors:
        raise CompileError(
            "description has errors:\n" + "\n".join(d.render() for d in errors)
        )
    depth = depth if depth is not None else desc.config.depth
    rules = sp.compile_rules(desc)
    syn_space = ft.build_space(d for d in desc.features.values() if d.space == "syn")
    sequences, trees, diags = enumerate_affix_sequences(
        desc, syn_space, rules.orth_space, depth
    )
    default_rule = find_default_rule(rules)
    boundary = desc.boundary_chars()
    bchar = desc.boundary()
    sizes = sorted(template_sizes(rules.rules, boundary))

    patterns: list[SpellingPattern] = []
    seen: set[tuple] = set()
    index_a: dict[tuple[str, str], list[int]] = {}
    index_g: dict[tuple, list[int]] = {}

    for seq in sequences:
        if not ft.is_consistent(seq.orth):
            diags.append(
                Diagnostic(
                    "warning",
                    f"affix sequence {'+'.join(seq.morphemes)} has contradictory "
                    "orth constraints; skipped",
                    0, 0,
                )
            )
            continue
        produced = 0
        for m, n in sizes:
            store = _Store()
            items: list[_Item] = []
            for name in seq.prefix:
                for ch in name:
                    items.append(("lit", ch))
                items.append(("lit", bchar))
            root_start = len(items)
            l_nodes = [store.fresh(None) for _ in range(m)]
            items.extend(("node", nd) for nd in l_nodes)
            items.append(("v",))
            r_nodes = [store.fresh(None) for _ in range(n)]
            items.extend(("node", nd) for nd in r_nodes)
            root_end = len(items)
            items.append(("lit", bchar))
            for name in seq.suffix:
                for ch in name:
                    items.append(("lit", ch))
                items.append(("lit", bchar))
            lm_index = root_start + m - 1 if m else None
            r1_index = root_start + m + 1 if n else None
            compiler = _TemplateCompiler(
                rules, default_rule, items, store, seq.orth, lm_index, r1_index
            )
            for br in compiler.run():
                deferred = _screen_obligatory(br, items, rules)
                if deferred is None:
                    continue
                surf, lex, varsets = _resolve_cells(br, items)
                parts = tuple(SymPartition(*p[:5], is_v=p[5]) for p in br.parts)
                npfx = 0
                while npfx < len(surf) and surf[npfx].kind == "lit":
                    npfx += 1
                nsfx = 0
                while nsfx < len(surf) - npfx and surf[-1 - nsfx].kind == "lit":
                    nsfx += 1
                pat = SpellingPattern(
                    id=-1,
                    seq_id=seq.id,
                    tree_ids=seq.tree_ids,
                    prefix_morphs=seq.prefix,
                    suffix_morphs=seq.suffix,
                    surface_cells=surf,
                    lexical_cells=lex,
                    root_span=(root_start, root_end),
                    vars=varsets,
                    partitions=parts,
                    orth=br.orth,
                    deferred=tuple(sorted(set(deferred))),
                    surface_prefix="".join(c.char for c in surf[:npfx]),
                    surface_suffix="".join(c.char for c in surf[len(surf) - nsfx :]),
                )
                key = _pattern_key(pat)
                if key in seen:
                    continue
                seen.add(key)
                pat = replace(pat, id=len(patterns))
                patterns.append(pat)
                produced += 1
                index_a.setdefault((pat.surface_prefix, pat.surface_suffix), []).append(pat.id)
                index_g.setdefault((seq.prefix, seq.suffix), []).append(pat.id)
        if produced == 0:
            diags.append(
                Diagnostic(
                    "warning",
                    f"affix sequence {'+'.join(seq.morphemes)} has no spelling "
                    "realizations",
                    0, 0,
                )
            )
    if default_rule is None:
        diags.append(
            Diagnostic(
                "warning",
                "no context-free identity rule found; root interiors cannot "
                "be matched and roots are limited to their explicit edge slots",
                0, 0,
            )
        )
    return CompiledDescription(
        description=desc,
        rules=rules,
        syn_space=syn_space,
        trees=trees,
        sequences=sequences,
        pattern_set=PatternSet(patterns, index_a, index_g),
        depth=depth,
        diagnostics=diags,
        default_rule=default_rule.name if default_rule else None,
    )


# ----------------------------------------
# Pattern instantiation (shared by runtime and debugger)
# ----------------------------------------

@dataclass(frozen=True)
class Instantiation:
    assignment: tuple[tuple[int, str], ...]  # var id -> character
    v_chars: str
    surface: str
    lexical: str
    root: str


def _cell_char(cell: Cell, assign: dict[int, str]) -> str:
    return cell.char if cell.kind == "lit" else assign[cell.var]


def _match_cells(
    cells: tuple[Cell, ...],
    text: str,
    vars: tuple[Charset, ...],
    assign: dict[int, str],
    letter: Charset,
) -> Optional[tuple[dict[int, str], str]]:
    """Match a cell run (with one v gap) against text, binding variables."""
    v_at = next((i for i, c in enumerate(cells) if c.kind == "v"), None)
    if v_at is None:
        if len(text) != len(cells):
            return None
        left, right = cells, ()
        v_chars = ""
    else:
        left, right = cells[:v_at], cells[v_at + 1 :]
        if len(text) < len(left) + len(right):
            return None
        v_chars = text[len(left) : len(text) - len(right)]
        for ch in v_chars:
            if not cs_contains(letter, ch):
                return None
    assign = dict(assign)
    for cell, ch in zip(left, text[: len(left)]):
        if cell.kind == "lit":
            if cell.char != ch:
                return None
        else:
            prev = assign.get(cell.var)
            if prev is not None:
                if prev != ch:
                    return None
            elif cs_contains(vars[cell.var], ch):
                assign[cell.var] = ch
            else:
                return None
    for cell, ch in zip(right, text[len(text) - len(right) :]):
        if cell.kind == "lit":
            if cell.char != ch:
                return None
        else:
            prev = assign.get(cell.var)
            if prev is not None:
                if prev != ch:
                    return None
            elif cs_contains(vars[cell.var], ch):
                assign[cell.var] = ch
            else:
                return None
    return assign, v_chars


def _complete_assignment(
    cells: tuple[Cell, ...], vars: tuple[Charset, ...], assign: dict[int, str]
) -> Iterator[dict[int, str]]:
    """Enumerate values for variables the matched side left unbound."""
    free = sorted(
        {c.var for c in cells if c.kind == "var" and c.var not in assign}
    )
    if not free:
        yield assign
        return

    def rec(i: int, acc: dict[int, str]) -> Iterator[dict[int, str]]:
        if i == len(free):
            yield acc
            return
        cs = vars[free[i]]
        if not isinstance(cs, frozenset):
            raise CompileError(
                "cannot enumerate an unbounded character variable; declare a "
                "finite letter class"
            )
        for ch in sorted(cs):
            acc2 = dict(acc)
            acc2[free[i]] = ch
            yield from rec(i + 1, acc2)

    yield from rec(0, assign)


def _render_side(
    cells: tuple[Cell, ...], assign: dict[int, str], v_chars: str
) -> str:
    out = []
    for cell in cells:
        if cell.kind == "v":
            out.append(v_chars)
        else:
            out.append(_cell_char(cell, assign))
    return "".join(out)


def instantiate_for_analysis(
    pattern: SpellingPattern, word: str, letter: Charset
) -> Iterator[Instantiation]:
    """Bind the pattern's surface cells to `word`, deriving lexical roots."""
    np_, ns = len(pattern.surface_prefix), len(pattern.surface_suffix)
    if len(word) < np_ + ns:
        return
    if not word.startswith(pattern.surface_prefix) or not word.endswith(pattern.surface_suffix):
        return
    middle_cells = pattern.surface_cells[np_ : len(pattern.surface_cells) - ns]
    middle = word[np_ : len(word) - ns] if ns else word[np_:]
    res = _match_cells(middle_cells, middle, pattern.vars, {}, letter)
    if res is None:
        return
    assign, v_chars = res
    for full in _complete_assignment(pattern.lexical_cells, pattern.vars, assign):
        lexical = _render_side(pattern.lexical_cells, full, v_chars)
        r0, r1 = pattern.root_span
        root = _render_side(pattern.lexical_cells[r0:r1], full, v_chars)
        yield Instantiation(
            tuple(sorted(full.items())), v_chars, word, lexical, root
        )


def instantiate_for_generation(
    pattern: SpellingPattern, citation: str, letter: Charset
) -> Iterator[Instantiation]:
    """Bind the pattern's root cells to `citation`, deriving the surface."""
    r0, r1 = pattern.root_span
    root_cells = pattern.lexical_cells[r0:r1]
    res = _match_cells(root_cells, citation, pattern.vars, {}, letter)
    if res is None:
        return
    assign, v_chars = res
    for full in _complete_assignment(pattern.surface_cells, pattern.vars, assign):
        surface = _render_side(pattern.surface_cells, full, v_chars)
        lexical = _render_side(pattern.lexical_cells, full, v_chars)
        yield Instantiation(
            tuple(sorted(full.items())), v_chars, surface, lexical, citation
        )


def instantiated_parts(
    pattern: SpellingPattern, inst: Instantiation, default_rule: Optional[str]
) -> list[tuple[str, str, str]]:
    """Concrete (surface piece, lexical piece, rule) triples, v expanded."""
    assign = dict(inst.assignment)
    parts: list[tuple[str, str, str]] = []
    for part in pattern.partitions:
        if part.is_v:
            rule = default_rule or part.rule
            for ch in inst.v_chars:
                parts.append((ch, ch, rule))
            continue
        sp_piece = "".join(
            _cell_char(c, assign) for c in pattern.surface_cells[part.s_start : part.s_end]
        )
        lp_piece = "".join(
            _cell_char(c, assign) for c in pattern.lexical_cells[part.l_start : part.l_end]
        )
        parts.append((sp_piece, lp_piece, part.rule))
    return parts


def verify_instantiation(
    compiled: CompiledDescription,
    pattern: SpellingPattern,
    inst: Instantiation,
    orth: ft.FeatureVector,
) -> Optional[sp.Partitioning]:
    """Re-verify the instantiated partitioning; deferred checks resolve here."""
    parts = instantiated_parts(pattern, inst, compiled.default_rule)
    partitioning = sp.Partitioning(
        tuple(sp.Partition(a, b, r) for a, b, r in parts), orth
    )
    sites = partitioning.sites()
    acc = orth
    enriched = []
    for (a, b, r), site in zip(parts, sites):
        res = sp.licenses(compiled.rules.rule(r), site, inst.surface, inst.lexical, acc)
        if res is None:
            return None
        acc = res.constraint
        enriched.append(sp.Partition(a, b, r, res.bindings))
    full = sp.Partitioning(tuple(enriched), acc)
    if not sp.check_partitioning(full, compiled.rules, orth).licensed:
        return None
    return full


# ----------------------------------------
# Serialization
# ----------------------------------------

def _charset_json(cs: Charset) -> object:
    if cs is None:
        return {"k": "any"}
    if isinstance(cs, _AlphaType):
        return {"k": "alpha"}
    return {"k": "set", "chars": "".join(sorted(cs))}


def _charset_load(obj) -> Charset:
    if obj["k"] == "any":
        return None
    if obj["k"] == "alpha":
        return ALPHA
    return frozenset(obj["chars"])


def _cell_json(c: Cell) -> object:
    if c.kind == "lit":
        return ["l", c.char]
    if c.kind == "var":
        return ["x", c.var]
    return ["v"]


def _cell_load(obj) -> Cell:
    if obj[0] == "l":
        return Cell("lit", obj[1])
    if obj[0] == "x":
        return Cell("var", var=obj[1])
    return V_CELL


def _category_json(cat: ft.CompiledCategory) -> object:
    return {
        "major": cat.major,
        "vector": list(cat.vector),
        "vars": [[n, list(slots)] for n, slots in cat.varslots],
    }


def _category_load(obj) -> ft.CompiledCategory:
    return ft.CompiledCategory(
        obj["major"],
        tuple(obj["vector"]),
        tuple((n, tuple(slots)) for n, slots in obj["vars"]),
    )


def dumps(compiled: CompiledDescription) -> str:
    """Canonical reloadable dump; byte-stable for identical inputs."""
    from .description import print_description

    doc = {
        "format": DUMP_FORMAT,
        "version": DUMP_VERSION,
        "depth": compiled.depth,
        "default_rule": compiled.default_rule,
        "description": print_description(compiled.description),
        "trees": [
            {
                "id": t.id,
                "rules": list(t.rules),
                "prefix": list(t.prefix),
                "suffix": list(t.suffix),
                "root": _category_json(t.root_cat),
                "infl": _category_json(t.infl_cat),
                "links": [[list(s) for s in cls] for cls in t.links],
            }
            for t in compiled.trees
        ],
        "sequences": [
            {
                "id": s.id,
                "prefix": list(s.prefix),
                "suffix": list(s.suffix),
                "orth": list(s.orth),
                "trees": list(s.tree_ids),
            }
            for s in compiled.sequences
        ],
        "patterns": [
            {
                "id": p.id,
                "seq": p.seq_id,
                "trees": list(p.tree_ids),
                "prefix_morphs": list(p.prefix_morphs),
                "suffix_morphs": list(p.suffix_morphs),
                "surface": [_cell_json(c) for c in p.surface_cells],
                "lexical": [_cell_json(c) for c in p.lexical_cells],
                "root_span": list(p.root_span),
                "vars": [_charset_json(v) for v in p.vars],
                "partitions": [
                    [q.rule, q.s_start, q.s_end, q.l_start, q.l_end, q.is_v]
                    for q in p.partitions
                ],
                "orth": list(p.orth),
                "deferred": [list(d) for d in p.deferred],
                "surface_prefix": p.surface_prefix,
                "surface_suffix": p.surface_suffix,
            }
            for p in compiled.pattern_set.patterns
        ],
    }
    return json.dumps(doc, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def loads(text: str) -> CompiledDescription:
    """Rebuild a compiled description from a dump."""
    from .description import parse_description

    doc = json.loads(text)
    if doc.get("format") != DUMP_FORMAT or doc.get("version") != DUMP_VERSION:
        raise CompileError("unrecognized pattern dump header")
    desc = parse_description(doc["description"])
    rules = sp.compile_rules(desc)
    syn_space = ft.build_space(d for d in desc.features.values() if d.space == "syn")
    trees = [
        ProductionTree(
            id=t["id"],
            rules=tuple(t["rules"]),
            prefix=tuple(t["prefix"]),
            suffix=tuple(t["suffix"]),
            root_cat=_category_load(t["root"]),
            infl_cat=_category_load(t["infl"]),
            links=tuple(tuple(tuple(s) for s in cls) for cls in t["links"]),
        )
        for t in doc["trees"]
    ]
    sequences = [
        AffixSequence(
            s["id"], tuple(s["prefix"]), tuple(s["suffix"]),
            tuple(s["orth"]), tuple(s["trees"]),
        )
        for s in doc["sequences"]
    ]
    patterns = []
    index_a: dict[tuple[str, str], list[int]] = {}
    index_g: dict[tuple, list[int]] = {}
    for p in doc["patterns"]:
        pat = SpellingPattern(
            id=p["id"],
            seq_id=p["seq"],
            tree_ids=tuple(p["trees"]),
            prefix_morphs=tuple(p["prefix_morphs"]),
            suffix_morphs=tuple(p["suffix_morphs"]),
            surface_cells=tuple(_cell_load(c) for c in p["surface"]),
            lexical_cells=tuple(_cell_load(c) for c in p["lexical"]),
            root_span=tuple(p["root_span"]),  # type: ignore[arg-type]
            vars=tuple(_charset_load(v) for v in p["vars"]),
            partitions=tuple(
                SymPartition(q[0], q[1], q[2], q[3], q[4], q[5]) for q in p["partitions"]
            ),
            orth=tuple(p["orth"]),
            deferred=tuple((d[0], d[1]) for d in p["deferred"]),
            surface_prefix=p["surface_prefix"],
            surface_suffix=p["surface_suffix"],
        )
        patterns.append(pat)
        index_a.setdefault((pat.surface_prefix, pat.surface_suffix), []).append(pat.id)
        index_g.setdefault((pat.prefix_morphs, pat.suffix_morphs), []).append(pat.id)
    return CompiledDescription(
        description=desc,
        rules=rules,
        syn_space=syn_space,
        trees=trees,
        sequences=sequences,
        pattern_set=PatternSet(patterns, index_a, index_g),
        depth=doc["depth"],
        diagnostics=[],
        default_rule=doc["default_rule"],
    )
