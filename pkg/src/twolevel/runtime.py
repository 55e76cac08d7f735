"""Bidirectional word processing over a compiled description.

The lexicon is a pluggable provider, looked up only at run time: analysis
strips candidate affix characters, finds spelling patterns through the
surface index, derives a root spelling from the pattern's templated cells,
verifies the instantiated partitioning (resolving deferred obligatory
conditions), and only then consults the lexicon and unifies categories.
Generation runs the same machinery in reverse from the lexical side.
Entries can therefore be added freely without recompiling anything.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Protocol

from . import features as ft
from . import patterns as pt
from .description import Description, FeatureExpr, parse_description


class UnknownRootError(KeyError):
    """Raised when an operation needs a root the lexicon does not have."""


@dataclass(frozen=True)
class CompiledEntry:
    citation: str
    category: ft.CompiledCategory
    orth: ft.FeatureVector


class LexiconProvider(Protocol):
    def lookup(self, citation: str) -> tuple[CompiledEntry, ...]: ...

    def entries(self) -> Iterable[CompiledEntry]: ...


class InMemoryLexicon:
    """Dictionary-backed provider; entries compile against the description's spaces."""

    def __init__(self, syn_space: ft.FeatureSpace, orth_space: ft.FeatureSpace):
        self.syn_space = syn_space
        self.orth_space = orth_space
        self._entries: dict[str, list[CompiledEntry]] = {}

    @classmethod
    def from_description(cls, compiled: pt.CompiledDescription) -> "InMemoryLexicon":
        lex = cls(compiled.syn_space, compiled.orth_space)
        lex.add_description(compiled.description)
        return lex

    def add_description(self, desc: Description) -> None:
        """Merge the lex/orth statements of a parsed document."""
        own_citations = {e.citation for e in desc.roots}
        for entry in desc.roots:
            self.add_entry(entry.citation, entry.category.major,
                           entry.category.constraints, desc.orth_for(entry.citation))
        for stmt in desc.orth_statements:
            if stmt.citation in own_citations:
                continue
            extra = ft.compile_constraints(stmt.constraints, self.orth_space)
            old = self._entries.get(stmt.citation, [])
            self._entries[stmt.citation] = [
                CompiledEntry(
                    e.citation, e.category,
                    ft.unify(e.orth, extra) or tuple(0 for _ in e.orth),
                )
                for e in old
            ]

    def add_file(self, text: str, path: Optional[str] = None) -> None:
        desc = parse_description(text, path)
        if (
            desc.spell_rules or desc.production_rules or desc.irregulars
            or desc.classes or desc.features or desc.affixes
        ):
            raise ValueError(
                "a lexicon file may only contain lex(...) and orth(...) statements"
            )
        self.add_description(desc)

    def add_entry(
        self,
        citation: str,
        major: str,
        constraints: Iterable[tuple[str, object]] = (),
        orth: Iterable[tuple[str, FeatureExpr]] = (),
    ) -> None:
        category = ft.compile_category(major, tuple(constraints), self.syn_space)
        vec = ft.compile_constraints(tuple(orth), self.orth_space)
        self._entries.setdefault(citation, []).append(
            CompiledEntry(citation, category, vec)
        )

    def lookup(self, citation: str) -> tuple[CompiledEntry, ...]:
        return tuple(self._entries.get(citation, ()))

    def entries(self) -> Iterator[CompiledEntry]:
        for group in self._entries.values():
            yield from group

    def __len__(self) -> int:
        return sum(len(g) for g in self._entries.values())


@dataclass(frozen=True)
class Analysis:
    surface: str
    root: CompiledEntry
    morphemes: tuple[str, ...]
    category: ft.CompiledCategory  # fully instantiated inflected category
    pattern_id: Optional[int]
    tree_id: Optional[int]


def instantiate_tree(
    entry_cat: ft.CompiledCategory, tree: pt.ProductionTree
) -> Optional[tuple[ft.FeatureVector, ft.CompiledCategory]]:
    """Unify a lexicon category into a tree's root side.

    Shared variables carry the entry's information through to the inflected
    side; returns (root-side vector, instantiated inflected category).
    """
    if entry_cat.major != tree.root_cat.major:
        return None
    masks = {
        "r": [a & b for a, b in zip(entry_cat.vector, tree.root_cat.vector)],
        "i": list(tree.infl_cat.vector),
    }
    if not all(masks["r"]):
        return None
    entry_classes = tuple(
        tuple(("r", s) for s in slots) for _, slots in entry_cat.varslots if len(slots) > 1
    )
    classes = pt.merge_slot_classes(tree.links + entry_classes)
    if not pt.propagate_classes(masks, classes):
        return None
    return tuple(masks["r"]), ft.CompiledCategory(tree.infl_cat.major, tuple(masks["i"]))


class AnalysisCache:
    """Word-keyed memo; presence never changes observable results."""

    def __init__(self) -> None:
        self._memo: dict[str, frozenset[Analysis]] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, word: str) -> Optional[frozenset[Analysis]]:
        with self._lock:
            hit = self._memo.get(word)
            if hit is None:
                self.misses += 1
            else:
                self.hits += 1
            return hit

    def put(self, word: str, analyses: frozenset[Analysis]) -> None:
        with self._lock:
            self._memo[word] = analyses

    def clear(self) -> None:
        with self._lock:
            self._memo.clear()


@dataclass
class InflectionRow:
    morphemes: tuple[str, ...]
    major: str
    surface: str


class Analyzer:
    """Run-time façade binding a compiled description to a lexicon provider."""

    def __init__(self, compiled: pt.CompiledDescription, lexicon: LexiconProvider):
        self.compiled = compiled
        self.lexicon = lexicon
        self.cache = AnalysisCache()
        self._v_cs = compiled.v_charset()
        self._exclusive = compiled.exclusive_cells()
        self._irregs: dict[str, list] = {}
        for entry in compiled.description.irregulars:
            self._irregs.setdefault(entry.surface, []).append(entry)
        self._irregs_by_root: dict[str, list] = {}
        for entry in compiled.description.irregulars:
            self._irregs_by_root.setdefault(entry.morphemes[0], []).append(entry)
        self._key_shapes = compiled.pattern_set.key_shapes()

    # -- analysis ----------------------------------------------------------

    def analyze(self, word: str) -> frozenset[Analysis]:
        out: set[Analysis] = set()
        self._analyze_irregular(word, out)
        self._analyze_regular(word, out)
        return frozenset(out)

    def cached_analyze(self, word: str) -> frozenset[Analysis]:
        hit = self.cache.get(word)
        if hit is not None:
            return hit
        result = self.analyze(word)
        self.cache.put(word, result)
        return result

    def _analyze_irregular(self, word: str, out: set[Analysis]) -> None:
        for entry in self._irregs.get(word, ()):  # word equals the stored surface
            for tree in self.compiled.admitted_trees(entry):
                for lexent in self.lexicon.lookup(entry.morphemes[0]):
                    res = instantiate_tree(lexent.category, tree)
                    if res is None:
                        continue
                    out.add(
                        Analysis(word, lexent, entry.morphemes, res[1], None, tree.id)
                    )

    def _analyze_regular(self, word: str, out: set[Analysis]) -> None:
        pattern_set = self.compiled.pattern_set
        for np_, ns in self._key_shapes:
            if np_ + ns > len(word):
                continue
            key = (word[:np_], word[len(word) - ns :] if ns else "")
            for pattern in pattern_set.by_analysis_key(*key):
                for inst in pt.instantiate_for_analysis(pattern, word, self._v_cs):
                    self._finish_regular(pattern, inst, out)

    def _finish_regular(
        self, pattern: pt.SpellingPattern, inst: pt.Instantiation, out: set[Analysis]
    ) -> None:
        entries = self.lexicon.lookup(inst.root)
        if not entries:
            return
        for lexent in entries:
            orth = ft.unify(pattern.orth, lexent.orth)
            if orth is None:
                continue
            if pt.verify_instantiation(self.compiled, pattern, inst, orth) is None:
                continue
            morphemes = pattern.prefix_morphs + (lexent.citation,) + pattern.suffix_morphs
            if pattern.tree_ids:
                for tid in pattern.tree_ids:
                    if (lexent.citation, tid) in self._exclusive:
                        continue
                    res = instantiate_tree(lexent.category, self.compiled.tree(tid))
                    if res is None:
                        continue
                    out.add(
                        Analysis(inst.surface, lexent, morphemes, res[1], pattern.id, tid)
                    )
            else:
                out.add(
                    Analysis(inst.surface, lexent, morphemes, lexent.category, pattern.id, None)
                )

    # -- generation ----------------------------------------------------------

    def generate(
        self, citation: str, target: ft.CompiledCategory
    ) -> set[str]:
        entries = self.lexicon.lookup(citation)
        if not entries:
            return set()
        out: set[str] = set()
        for entry in entries:
            for irr in self._irregs_by_root.get(citation, ()):
                for tree in self.compiled.admitted_trees(irr):
                    res = instantiate_tree(entry.category, tree)
                    if res is None:
                        continue
                    if ft.unify_categories(res[1], target) is None:
                        continue
                    out.add(irr.surface)
            for pattern in self.compiled.pattern_set.patterns:
                if pattern.tree_ids:
                    for tid in pattern.tree_ids:
                        if (citation, tid) in self._exclusive:
                            continue
                        res = instantiate_tree(entry.category, self.compiled.tree(tid))
                        if res is None:
                            continue
                        if ft.unify_categories(res[1], target) is None:
                            continue
                        out.update(self._surfaces(pattern, entry))
                else:
                    if ft.unify_categories(entry.category, target) is None:
                        continue
                    out.update(self._surfaces(pattern, entry))
        return out

    def _surfaces(self, pattern: pt.SpellingPattern, entry: CompiledEntry) -> set[str]:
        orth = ft.unify(pattern.orth, entry.orth)
        if orth is None:
            return set()
        found = set()
        for inst in pt.instantiate_for_generation(pattern, entry.citation, self._v_cs):
            if pt.verify_instantiation(self.compiled, pattern, inst, orth) is not None:
                found.add(inst.surface)
        return found

    # -- inflection listing ---------------------------------------------------

    def inflections(self, citation: str) -> list[InflectionRow]:
        entries = self.lexicon.lookup(citation)
        if not entries:
            raise UnknownRootError(citation)
        rows: set[tuple[tuple[str, ...], str, str]] = set()
        for entry in entries:
            for tree in self.compiled.trees:
                if (citation, tree.id) in self._exclusive:
                    continue
                res = instantiate_tree(entry.category, tree)
                if res is None:
                    continue
                morphemes = tree.prefix + (citation,) + tree.suffix
                for pattern in self.compiled.pattern_set.by_generation_key(
                    tree.prefix, tree.suffix
                ):
                    if tree.id not in pattern.tree_ids:
                        continue
                    for surface in self._surfaces(pattern, entry):
                        rows.add((morphemes, res[1].major, surface))
            for irr in self._irregs_by_root.get(citation, ()):
                for tree in self.compiled.admitted_trees(irr):
                    res = instantiate_tree(entry.category, tree)
                    if res is None:
                        continue
                    rows.add((irr.morphemes, res[1].major, irr.surface))
        if not rows:
            for entry in entries:
                for pattern in self.compiled.pattern_set.by_generation_key((), ()):
                    if pattern.tree_ids:
                        continue
                    for surface in self._surfaces(pattern, entry):
                        rows.add(((citation,), entry.category.major or "", surface))
        return [InflectionRow(*r) for r in sorted(rows)]


# Spec-shaped convenience wrappers; `Analyzer` is the efficient interface.

def analyze(
    word: str, compiled: pt.CompiledDescription, lexicon: LexiconProvider
) -> frozenset[Analysis]:
    return Analyzer(compiled, lexicon).analyze(word)

def generate(
    citation: str,
    target: ft.CompiledCategory,
    compiled: pt.CompiledDescription,
    lexicon: LexiconProvider,
) -> set[str]:
    return Analyzer(compiled, lexicon).generate(citation, target)

def inflections(
    citation: str, compiled: pt.CompiledDescription, lexicon: LexiconProvider
) -> list[InflectionRow]:
    return Analyzer(compiled, lexicon).inflections(citation)
