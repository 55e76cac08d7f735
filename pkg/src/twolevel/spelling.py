"""Direct application of two-level spelling rules to character sequences.

A surface/lexical string pair is accepted when both strings partition into
aligned pieces such that every piece pair is licensed by some rule and no
piece pair breaks an obligatory rule.  A partition breaks an obligatory rule
when the rule's lexical target, both contexts, and feature constraints all
hold there but the produced surface differs from the rule's surface target.

This module executes that definition literally, by backtracking over rule
choices at each position.  It is deliberately independent of the pattern
compiler: it serves as the compile-time rule applier's reference semantics,
the run-time verifier for deferred obligatory conditions, and the engine
behind the direct-application debugging commands.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

from . import features as ft
from .description import (
    OBLIGATORY,
    CharClassDef,
    CharSpec,
    Description,
    SpellRule,
)

Bindings = tuple[tuple[str, str], ...]  # (digit, character), sorted


@dataclass(frozen=True)
class CompiledRule:
    rule: SpellRule
    classes: dict[str, CharClassDef]  # digit -> class
    vector: ft.FeatureVector  # compiled feature constraints

    @property
    def name(self) -> str:
        return self.rule.name

    @property
    def obligatory(self) -> bool:
        return self.rule.op == OBLIGATORY

    def members(self, digit: str) -> tuple[str, ...]:
        cls = self.classes[digit]
        if cls.members is None:
            raise ValueError(
                f"class {cls.name!r} has no finite member set; "
                "it cannot instantiate unshared digits"
            )
        return tuple(sorted(cls.members))


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[CompiledRule, ...]
    orth_space: ft.FeatureSpace

    def __iter__(self) -> Iterator[CompiledRule]:
        return iter(self.rules)

    def rule(self, name: str) -> CompiledRule:
        for r in self.rules:
            if r.name == name:
                return r
        raise KeyError(name)

    @property
    def top(self) -> ft.FeatureVector:
        return self.orth_space.top


def compile_rules(desc: Description) -> RuleSet:
    orth_space = ft.build_space(
        d for d in desc.features.values() if d.space == "orth"
    )
    compiled = []
    for rule in desc.spell_rules:
        classes = {d: desc.char_class(cname) for d, cname in rule.classes}
        vec = ft.compile_constraints(rule.features, orth_space)
        compiled.append(CompiledRule(rule, classes, vec))
    return RuleSet(tuple(compiled), orth_space)


@dataclass(frozen=True)
class Site:
    """Aligned offsets of one partition within the two full strings."""

    s_start: int
    s_end: int
    l_start: int
    l_end: int


@dataclass(frozen=True)
class Partition:
    surface_piece: str
    lexical_piece: str
    rule: str
    bindings: Bindings = ()


@dataclass(frozen=True)
class Partitioning:
    parts: tuple[Partition, ...]
    orth_constraint: ft.FeatureVector

    @property
    def surface(self) -> str:
        return "".join(p.surface_piece for p in self.parts)

    @property
    def lexical(self) -> str:
        return "".join(p.lexical_piece for p in self.parts)

    def sites(self) -> list[Site]:
        out = []
        s = l = 0
        for p in self.parts:
            out.append(Site(s, s + len(p.surface_piece), l, l + len(p.lexical_piece)))
            s += len(p.surface_piece)
            l += len(p.lexical_piece)
        return out

    def rule_names(self) -> tuple[str, ...]:
        return tuple(p.rule for p in self.parts)


@dataclass(frozen=True)
class SpellVerdict:
    outcome: str  # "licensed" | "broken" | "unlicensed"
    rule: Optional[str] = None
    index: Optional[int] = None

    @property
    def licensed(self) -> bool:
        return self.outcome == "licensed"


LICENSED = SpellVerdict("licensed")


# ----------------------------------------
# Character-spec matching against known text
# ----------------------------------------

def _match_exact(
    specs: tuple[CharSpec, ...],
    text: str,
    start: int,
    end: int,
    binds: dict[str, str],
    rule: CompiledRule,
) -> Optional[dict[str, str]]:
    """Match specs against text[start:end] exactly; extends binds or fails."""
    if end - start != len(specs):
        return None
    for i, spec in enumerate(specs):
        ch = text[start + i]
        if spec.kind == "lit":
            if ch != spec.char:
                return None
        else:
            bound = binds.get(spec.char)
            if bound is not None:
                if bound != ch:
                    return None
            else:
                if not rule.classes[spec.char].contains(ch):
                    return None
                binds = dict(binds)
                binds[spec.char] = ch
    return binds


def _match_right(
    specs: tuple[CharSpec, ...],
    text: str,
    start: int,
    binds: dict[str, str],
    rule: CompiledRule,
) -> Optional[dict[str, str]]:
    """Match a right context; fails when it would run past the string edge."""
    if start + len(specs) > len(text):
        return None
    return _match_exact(specs, text, start, start + len(specs), binds, rule)


def _match_left(
    specs: tuple[CharSpec, ...],
    text: str,
    end: int,
    binds: dict[str, str],
    rule: CompiledRule,
) -> Optional[dict[str, str]]:
    """Match a left context ending at `end`, scanning right-to-left."""
    if end - len(specs) < 0:
        return None
    for i in range(len(specs) - 1, -1, -1):
        spec = specs[i]
        ch = text[end - len(specs) + i]
        if spec.kind == "lit":
            if ch != spec.char:
                return None
        else:
            bound = binds.get(spec.char)
            if bound is not None:
                if bound != ch:
                    return None
            else:
                if not rule.classes[spec.char].contains(ch):
                    return None
                binds = dict(binds)
                binds[spec.char] = ch
    return binds


@dataclass(frozen=True)
class LicenseResult:
    bindings: Bindings
    constraint: ft.FeatureVector  # orth hypothesis unified with the rule's features


def licenses(
    rule: CompiledRule,
    site: Site,
    surface: str,
    lexical: str,
    orth: ft.FeatureVector,
) -> Optional[LicenseResult]:
    """Check that `rule` licenses the partition at `site`, or fail."""
    binds: Optional[dict[str, str]] = {}
    binds = _match_exact(rule.rule.surface.target, surface, site.s_start, site.s_end, binds, rule)
    if binds is None:
        return None
    binds = _match_exact(rule.rule.lexical.target, lexical, site.l_start, site.l_end, binds, rule)
    if binds is None:
        return None
    binds = _match_left(rule.rule.surface.lcontext, surface, site.s_start, binds, rule)
    if binds is None:
        return None
    binds = _match_right(rule.rule.surface.rcontext, surface, site.s_end, binds, rule)
    if binds is None:
        return None
    binds = _match_left(rule.rule.lexical.lcontext, lexical, site.l_start, binds, rule)
    if binds is None:
        return None
    binds = _match_right(rule.rule.lexical.rcontext, lexical, site.l_end, binds, rule)
    if binds is None:
        return None
    constraint = ft.unify(orth, rule.vector)
    if constraint is None:
        return None
    return LicenseResult(tuple(sorted(binds.items())), constraint)


def _breaks(
    rule: CompiledRule,
    site: Site,
    surface: str,
    lexical: str,
    orth: ft.FeatureVector,
) -> bool:
    """True when the obligatory `rule` vetoes the partition at `site`.

    Everything except the surface target must hold: the lexical piece must be
    the rule's lexical target (same length, so length-mismatched targets can
    never block), the contexts must match around the site, and the feature
    constraints must be consistent with `orth`.  The partition survives only
    if the surface piece also matches the rule's surface target under the
    same bindings.
    """
    binds: Optional[dict[str, str]] = {}
    binds = _match_exact(rule.rule.lexical.target, lexical, site.l_start, site.l_end, binds, rule)
    if binds is None:
        return False
    binds = _match_left(rule.rule.surface.lcontext, surface, site.s_start, binds, rule)
    if binds is None:
        return False
    binds = _match_right(rule.rule.surface.rcontext, surface, site.s_end, binds, rule)
    if binds is None:
        return False
    binds = _match_left(rule.rule.lexical.lcontext, lexical, site.l_start, binds, rule)
    if binds is None:
        return False
    binds = _match_right(rule.rule.lexical.rcontext, lexical, site.l_end, binds, rule)
    if binds is None:
        return False
    if ft.unify(orth, rule.vector) is None:
        return False
    surf = _match_exact(rule.rule.surface.target, surface, site.s_start, site.s_end, binds, rule)
    return surf is None


def check_partitioning(
    p: Partitioning,
    rules: RuleSet,
    orth: ft.FeatureVector,
) -> SpellVerdict:
    """Verify a partitioning: every piece licensed, no obligatory rule broken."""
    surface = p.surface
    lexical = p.lexical
    sites = p.sites()
    acc = orth
    for i, (part, site) in enumerate(zip(p.parts, sites)):
        try:
            rule = rules.rule(part.rule)
        except KeyError:
            return SpellVerdict("unlicensed", part.rule, i)
        res = licenses(rule, site, surface, lexical, acc)
        if res is None:
            return SpellVerdict("unlicensed", part.rule, i)
        acc = res.constraint
    for i, site in enumerate(sites):
        for rule in rules:
            if not rule.obligatory:
                continue
            if _breaks(rule, site, surface, lexical, acc):
                return SpellVerdict("broken", rule.name, i)
    return LICENSED


# ----------------------------------------
# Exhaustive analysis and generation
# ----------------------------------------

@dataclass(frozen=True)
class SpellResult:
    surface: str
    lexical: str
    partitioning: Partitioning
    verdict: SpellVerdict


def _instantiate(
    specs: tuple[CharSpec, ...],
    binds: dict[str, str],
    rule: CompiledRule,
) -> Iterator[tuple[str, dict[str, str]]]:
    """Enumerate concrete strings for a target, branching on unbound digits."""

    def rec(i: int, acc: str, b: dict[str, str]) -> Iterator[tuple[str, dict[str, str]]]:
        if i == len(specs):
            yield acc, b
            return
        spec = specs[i]
        if spec.kind == "lit":
            yield from rec(i + 1, acc + spec.char, b)
            return
        bound = b.get(spec.char)
        if bound is not None:
            yield from rec(i + 1, acc + bound, b)
            return
        for ch in rule.members(spec.char):
            b2 = dict(b)
            b2[spec.char] = ch
            yield from rec(i + 1, acc + ch, b2)

    yield from rec(0, "", binds)


def _finish(
    surface: str,
    lexical: str,
    parts: list[tuple[str, str, str]],
    rules: RuleSet,
    orth: ft.FeatureVector,
) -> Optional[SpellResult]:
    """Re-verify a complete candidate from scratch and attach its verdict.

    The search defers right contexts on the string being generated, so every
    partition is re-licensed here over the full strings; candidates whose
    deferred contexts fail are dropped entirely (they are not partitionings),
    while obligatory violations are kept and marked broken for the debugger.
    """
    partitioning = Partitioning(
        tuple(Partition(sp, lp, rn) for sp, lp, rn in parts), orth
    )
    sites = partitioning.sites()
    acc = orth
    enriched = []
    for (sp, lp, rn), site in zip(parts, sites):
        res = licenses(rules.rule(rn), site, surface, lexical, acc)
        if res is None:
            return None
        acc = res.constraint
        enriched.append(Partition(sp, lp, rn, res.bindings))
    full = Partitioning(tuple(enriched), acc)
    verdict = check_partitioning(full, rules, orth)
    if verdict.outcome == "unlicensed":
        return None
    return SpellResult(surface, lexical, full, verdict)


def analyze_trace(
    surface: str,
    rules: RuleSet,
    orth: Optional[ft.FeatureVector] = None,
    max_lexical_length: Optional[int] = None,
) -> list[SpellResult]:
    """All candidate lexical strings for `surface`, with verdicts.

    The licensed lexical set can be unbounded when a rule deletes characters
    context-freely, so candidates are capped at `max_lexical_length`
    (default 2*len(surface)+8).
    """
    hypothesis = orth if orth is not None else rules.top
    limit = max_lexical_length if max_lexical_length is not None else 2 * len(surface) + 8
    out: list[SpellResult] = []
    seen: set[tuple] = set()

    def step(s_pos: int, lex: str, parts: list[tuple[str, str, str]], acc: ft.FeatureVector) -> None:
        if s_pos == len(surface):
            res = _finish(surface, lex, parts, rules, hypothesis)
            if res is not None:
                key = (res.lexical, res.partitioning.rule_names(),
                       tuple((p.surface_piece, p.lexical_piece) for p in res.partitioning.parts))
                if key not in seen:
                    seen.add(key)
                    out.append(res)
        for rule in rules:
            starget = rule.rule.surface.target
            ltarget = rule.rule.lexical.target
            if not starget and not ltarget:
                continue  # consumes nothing; cannot terminate
            s_end = s_pos + len(starget)
            if s_end > len(surface):
                continue
            if len(lex) + len(ltarget) > limit:
                continue
            binds = _match_exact(starget, surface, s_pos, s_end, {}, rule)
            if binds is None:
                continue
            binds = _match_left(rule.rule.surface.lcontext, surface, s_pos, binds, rule)
            if binds is None:
                continue
            binds = _match_right(rule.rule.surface.rcontext, surface, s_end, binds, rule)
            if binds is None:
                continue
            vec = ft.unify(acc, rule.vector)
            if vec is None:
                continue
            for lpiece, b2 in _instantiate(ltarget, binds, rule):
                if _match_left(rule.rule.lexical.lcontext, lex, len(lex), b2, rule) is None:
                    continue
                parts.append((surface[s_pos:s_end], lpiece, rule.name))
                step(s_end, lex + lpiece, parts, vec)
                parts.pop()

    step(0, "", [], hypothesis)
    out.sort(key=lambda r: (r.lexical, r.partitioning.rule_names()))
    return out


def generate_trace(
    lexical: str,
    rules: RuleSet,
    orth: Optional[ft.FeatureVector] = None,
) -> list[SpellResult]:
    """All candidate surface strings for `lexical`, with verdicts."""
    hypothesis = orth if orth is not None else rules.top
    out: list[SpellResult] = []
    seen: set[tuple] = set()

    def step(l_pos: int, surf: str, parts: list[tuple[str, str, str]], acc: ft.FeatureVector) -> None:
        if l_pos == len(lexical):
            res = _finish(surf, lexical, parts, rules, hypothesis)
            if res is not None:
                key = (res.surface, res.partitioning.rule_names(),
                       tuple((p.surface_piece, p.lexical_piece) for p in res.partitioning.parts))
                if key not in seen:
                    seen.add(key)
                    out.append(res)
            return
        for rule in rules:
            ltarget = rule.rule.lexical.target
            if not ltarget:
                continue  # would consume no lexical characters
            l_end = l_pos + len(ltarget)
            if l_end > len(lexical):
                continue
            binds = _match_exact(ltarget, lexical, l_pos, l_end, {}, rule)
            if binds is None:
                continue
            binds = _match_left(rule.rule.lexical.lcontext, lexical, l_pos, binds, rule)
            if binds is None:
                continue
            binds = _match_right(rule.rule.lexical.rcontext, lexical, l_end, binds, rule)
            if binds is None:
                continue
            vec = ft.unify(acc, rule.vector)
            if vec is None:
                continue
            for spiece, b2 in _instantiate(rule.rule.surface.target, binds, rule):
                if _match_left(rule.rule.surface.lcontext, surf, len(surf), b2, rule) is None:
                    continue
                parts.append((spiece, lexical[l_pos:l_end], rule.name))
                step(l_end, surf + spiece, parts, vec)
                parts.pop()

    step(0, "", [], hypothesis)
    out.sort(key=lambda r: (r.surface, r.partitioning.rule_names()))
    return out


def analyze_direct(
    surface: str,
    rules: RuleSet,
    orth: Optional[ft.FeatureVector] = None,
    max_lexical_length: Optional[int] = None,
) -> list[tuple[str, Partitioning]]:
    """The licensed, unbroken lexical strings for `surface`."""
    return [
        (r.lexical, r.partitioning)
        for r in analyze_trace(surface, rules, orth, max_lexical_length)
        if r.verdict.licensed
    ]


def generate_direct(
    lexical: str,
    rules: RuleSet,
    orth: Optional[ft.FeatureVector] = None,
) -> list[tuple[str, Partitioning]]:
    """The licensed, unbroken surface realizations of `lexical`."""
    return [
        (r.surface, r.partitioning)
        for r in generate_trace(lexical, rules, orth)
        if r.verdict.licensed
    ]
