"""Morphological description files: parsing, validation, printing.

A description is a UTF-8 document of period-terminated term statements with
``%`` line comments.  The statement forms are:

    class(Name, "chars").                    character class declaration
    feature(Name, orth|syn, [v1, v2, ...]).  finite-valued feature declaration
    macro(Name, [f1, f2, ...]).              nested-value macro (see below)
    spell(Name, "Surface" OP "Lexical", [Digit/Class, ...], [Feat=Expr, ...]).
    morph(Name, [Lhs, RhsItem, ...]) [:- Var=[Feat=Val, ...], ...].
    affix(Name, [Feat=Expr, ...]).           orth constraints on an affix
    lex(Citation, Cat:[Feat=Val, ...]).      root lexical entry
    orth(Citation, [Feat=Expr, ...]).        orth constraints on a root
    irreg(Surface, [Root, Morph...], [Rule[-only], ...]).
    set(depth, N).                           configuration

Spelling-rule strings have the shape ``"LContext|Target|RContext"``; the two
vertical bars separate the parts and match nothing.  A digit in a string is a
character-class occurrence and must be bound in the rule's class list; repeated
digits denote the same character.  ``OP`` is ``=>`` (optional) or ``<=>``
(obligatory); the arrows ``⇒``/``⇔`` are accepted as aliases.

Category specs are written ``major:[feat=value, ...]`` where a value is an
atom, a boolean expression ``and(...)``/``or(...)``/``not(...)``, a capitalised
variable, or a macro call ``@name(a1, ..., ak)`` which expands to the macro's
k prefixed features (e.g. ``agr=@agr(3,sing,f)`` with
``macro(agr,[agr_person,agr_num,agr_gender])`` becomes
``agr_person=3, agr_num=sing, agr_gender=f``).  A spec may end with ``| Var``
where the rule body binds ``Var`` to a shared constraint list.

``deriv(...)`` statements are accepted and ignored.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

OPTIONAL = "optional"
OBLIGATORY = "obligatory"

DEFAULT_DEPTH = 3
DEFAULT_BOUNDARY = "+"


class DescriptionError(Exception):
    """Raised on unrecoverable parse failures; carries a Diagnostic."""

    def __init__(self, diagnostic: "Diagnostic"):
        super().__init__(diagnostic.render())
        self.diagnostic = diagnostic


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    message: str
    line: int
    col: int

    def render(self, path: str = "<description>") -> str:
        return f"{path}:{self.line}:{self.col}: {self.severity}: {self.message}"


# ----------------------------------------
# AST types
# ----------------------------------------

@dataclass(frozen=True)
class CharClassDef:
    name: str
    members: Optional[frozenset[str]]  # None: synthetic letter class (isalpha)
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)

    def contains(self, ch: str) -> bool:
        if self.members is None:
            return ch.isalpha()
        return ch in self.members


@dataclass(frozen=True)
class FeatureDecl:
    name: str
    space: str  # "orth" | "syn"
    values: tuple[str, ...]
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass(frozen=True)
class MacroDecl:
    name: str
    fields: tuple[str, ...]
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


# Boolean feature expressions.
@dataclass(frozen=True)
class Value:
    name: str


@dataclass(frozen=True)
class Not:
    item: "FeatureExpr"


@dataclass(frozen=True)
class And:
    items: tuple["FeatureExpr", ...]


@dataclass(frozen=True)
class Or:
    items: tuple["FeatureExpr", ...]


FeatureExpr = Union[Value, Not, And, Or]


@dataclass(frozen=True)
class Var:
    name: str


ValueTerm = Union[Value, Not, And, Or, Var]


@dataclass(frozen=True)
class CharSpec:
    """One position in a rule string: a literal character or a class digit."""

    kind: str  # "lit" | "class"
    char: str  # the literal character, or the digit


@dataclass(frozen=True)
class RuleString:
    lcontext: tuple[CharSpec, ...]
    target: tuple[CharSpec, ...]
    rcontext: tuple[CharSpec, ...]


@dataclass(frozen=True)
class SpellRule:
    name: str
    op: str  # OPTIONAL | OBLIGATORY
    surface: RuleString
    lexical: RuleString
    classes: tuple[tuple[str, str], ...]  # (digit, class name)
    features: tuple[tuple[str, FeatureExpr], ...]
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)

    def class_of(self, digit: str) -> str:
        for d, name in self.classes:
            if d == digit:
                return name
        raise KeyError(digit)


@dataclass(frozen=True)
class CategorySpec:
    major: str
    constraints: tuple[tuple[str, ValueTerm], ...]


@dataclass(frozen=True)
class Morpheme:
    name: str


@dataclass(frozen=True)
class Daughter:
    spec: CategorySpec


RhsItem = Union[Morpheme, Daughter]


@dataclass(frozen=True)
class ProductionRule:
    name: str
    lhs: CategorySpec
    rhs: tuple[RhsItem, ...]
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)

    def root_index(self) -> int:
        for i, item in enumerate(self.rhs):
            if isinstance(item, Daughter):
                return i
        return -1


@dataclass(frozen=True)
class LexEntry:
    citation: str
    category: CategorySpec
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass(frozen=True)
class OrthStatement:
    citation: str
    constraints: tuple[tuple[str, FeatureExpr], ...]
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass(frozen=True)
class AffixDecl:
    name: str
    constraints: tuple[tuple[str, FeatureExpr], ...]
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass(frozen=True)
class IrregEntry:
    surface: str
    morphemes: tuple[str, ...]  # root citation first, then pseudo-affixes
    rules: tuple[str, ...]
    exclusive: bool
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Config:
    depth: int = DEFAULT_DEPTH


@dataclass
class Description:
    classes: dict[str, CharClassDef] = field(default_factory=dict)
    features: dict[str, FeatureDecl] = field(default_factory=dict)
    macros: dict[str, MacroDecl] = field(default_factory=dict)
    spell_rules: list[SpellRule] = field(default_factory=list)
    production_rules: list[ProductionRule] = field(default_factory=list)
    affixes: dict[str, AffixDecl] = field(default_factory=dict)
    roots: list[LexEntry] = field(default_factory=list)
    orth_statements: list[OrthStatement] = field(default_factory=list)
    irregulars: list[IrregEntry] = field(default_factory=list)
    config: Config = field(default_factory=Config)
    source_path: Optional[str] = field(default=None, compare=False)

    def char_class(self, name: str) -> CharClassDef:
        """Resolve a class, defaulting `letter` and `bmarker` when undeclared."""
        if name in self.classes:
            return self.classes[name]
        if name == "letter":
            return CharClassDef("letter", None)
        if name == "bmarker":
            return CharClassDef("bmarker", frozenset(DEFAULT_BOUNDARY))
        raise KeyError(name)

    def boundary_chars(self) -> frozenset[str]:
        return self.char_class("bmarker").members or frozenset(DEFAULT_BOUNDARY)

    def boundary(self) -> str:
        return min(self.boundary_chars())

    def orth_for(self, citation: str) -> tuple[tuple[str, FeatureExpr], ...]:
        out: list[tuple[str, FeatureExpr]] = []
        for stmt in self.orth_statements:
            if stmt.citation == citation:
                out.extend(stmt.constraints)
        return tuple(out)

    def statements(self) -> Iterable[object]:
        yield from self.classes.values()
        yield from self.features.values()
        yield from self.macros.values()
        yield from self.spell_rules
        yield from self.production_rules
        yield from self.affixes.values()
        yield from self.roots
        yield from self.orth_statements
        yield from self.irregulars


# ----------------------------------------
# Tokenizer
# ----------------------------------------

_PUNCT_2 = {"=>", ":-", "<="}  # "<=>" handled explicitly
_SINGLE = set("()[],|/=@-.:")


@dataclass(frozen=True)
class _Token:
    kind: str  # atom var string qatom num punct end
    value: str
    line: int
    col: int


def _is_atom_start(ch: str) -> bool:
    return ch == "_" or unicodedata.category(ch) in ("Ll", "Lo")


def _is_atom_char(ch: str) -> bool:
    return ch == "_" or ch.isdigit() or unicodedata.category(ch) in ("Ll", "Lo", "Lu")


def _is_var_start(ch: str) -> bool:
    return unicodedata.category(ch) == "Lu"


def _tokenize(text: str) -> list[_Token]:
    toks: list[_Token] = []
    line, col = 1, 1
    i, n = 0, len(text)

    def err(msg: str) -> DescriptionError:
        return DescriptionError(Diagnostic("error", msg, line, col))

    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch.isspace():
            i += 1
            col += 1
            continue
        if ch == "%":
            while i < n and text[i] != "\n":
                i += 1
            continue
        start_line, start_col = line, col
        if ch == '"':
            j = i + 1
            while j < n and text[j] != '"':
                if text[j] == "\n":
                    raise err("unterminated string")
                j += 1
            if j >= n:
                raise err("unterminated string")
            toks.append(_Token("string", text[i + 1 : j], start_line, start_col))
            col += j + 1 - i
            i = j + 1
            continue
        if ch == "'":
            j = i + 1
            while j < n and text[j] != "'":
                if text[j] == "\n":
                    raise err("unterminated quoted atom")
                j += 1
            if j >= n:
                raise err("unterminated quoted atom")
            toks.append(_Token("atom", text[i + 1 : j], start_line, start_col))
            col += j + 1 - i
            i = j + 1
            continue
        if text.startswith("<=>", i):
            toks.append(_Token("punct", "<=>", start_line, start_col))
            i += 3
            col += 3
            continue
        if text.startswith("=>", i) or text.startswith(":-", i):
            toks.append(_Token("punct", text[i : i + 2], start_line, start_col))
            i += 2
            col += 2
            continue
        if ch == "⇒":  # ⇒
            toks.append(_Token("punct", "=>", start_line, start_col))
            i += 1
            col += 1
            continue
        if ch == "⇔":  # ⇔
            toks.append(_Token("punct", "<=>", start_line, start_col))
            i += 1
            col += 1
            continue
        if ch in _SINGLE:
            toks.append(_Token("punct", ch, start_line, start_col))
            i += 1
            col += 1
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            toks.append(_Token("num", text[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        if _is_var_start(ch):
            j = i
            while j < n and _is_atom_char(text[j]):
                j += 1
            toks.append(_Token("var", text[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        if _is_atom_start(ch):
            j = i
            while j < n and _is_atom_char(text[j]):
                j += 1
            toks.append(_Token("atom", text[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        raise err(f"unexpected character {ch!r}")
    toks.append(_Token("end", "", line, col))
    return toks


# ----------------------------------------
# Parser
# ----------------------------------------

class _Parser:
    def __init__(self, text: str, path: Optional[str] = None):
        self.toks = _tokenize(text)
        self.pos = 0
        self.path = path
        self.desc = Description(source_path=path)
        self.seen_names: dict[tuple[str, str], tuple[int, int]] = {}

    # token plumbing

    def peek(self) -> _Token:
        return self.toks[self.pos]

    def next(self) -> _Token:
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def error(self, msg: str, tok: Optional[_Token] = None) -> DescriptionError:
        tok = tok or self.peek()
        return DescriptionError(Diagnostic("error", msg, tok.line, tok.col))

    def expect(self, kind: str, value: Optional[str] = None) -> _Token:
        tok = self.next()
        if tok.kind != kind or (value is not None and tok.value != value):
            want = value if value is not None else kind
            raise self.error(f"expected {want!r}, found {tok.value!r}", tok)
        return tok

    def expect_punct(self, value: str) -> _Token:
        return self.expect("punct", value)

    def atom(self) -> _Token:
        tok = self.next()
        if tok.kind not in ("atom", "num"):
            raise self.error(f"expected name, found {tok.value!r}", tok)
        return tok

    # statements

    def parse(self) -> Description:
        while self.peek().kind != "end":
            self.statement()
        return self.desc

    def check_unique(self, kind: str, name: str, tok: _Token) -> None:
        key = (kind, name)
        if key in self.seen_names:
            raise self.error(f"duplicate {kind} name {name!r}", tok)
        self.seen_names[key] = (tok.line, tok.col)

    def statement(self) -> None:
        head = self.atom()
        handler = {
            "class": self.st_class,
            "feature": self.st_feature,
            "macro": self.st_macro,
            "spell": self.st_spell,
            "morph": self.st_morph,
            "affix": self.st_affix,
            "lex": self.st_lex,
            "orth": self.st_orth,
            "irreg": self.st_irreg,
            "set": self.st_set,
            "deriv": self.st_deriv,
        }.get(head.value)
        if handler is None:
            raise self.error(f"unknown statement {head.value!r}", head)
        handler(head)
        self.expect_punct(".")

    def st_class(self, head: _Token) -> None:
        self.expect_punct("(")
        name = self.atom()
        self.check_unique("class", name.value, name)
        self.expect_punct(",")
        members = self.expect("string")
        self.expect_punct(")")
        if not members.value:
            raise self.error(f"class {name.value!r} has no members", members)
        self.desc.classes[name.value] = CharClassDef(
            name.value, frozenset(members.value), line=name.line, col=name.col
        )

    def st_feature(self, head: _Token) -> None:
        self.expect_punct("(")
        name = self.atom()
        self.check_unique("feature", name.value, name)
        self.expect_punct(",")
        space = self.atom()
        if space.value not in ("orth", "syn"):
            raise self.error(f"feature space must be orth or syn, found {space.value!r}", space)
        self.expect_punct(",")
        values = self.name_list()
        self.expect_punct(")")
        if not values:
            raise self.error(f"feature {name.value!r} has no values", name)
        self.desc.features[name.value] = FeatureDecl(
            name.value, space.value, tuple(values), line=name.line, col=name.col
        )

    def st_macro(self, head: _Token) -> None:
        self.expect_punct("(")
        name = self.atom()
        self.check_unique("macro", name.value, name)
        self.expect_punct(",")
        fields = self.name_list()
        self.expect_punct(")")
        if not fields:
            raise self.error(f"macro {name.value!r} has no fields", name)
        self.desc.macros[name.value] = MacroDecl(
            name.value, tuple(fields), line=name.line, col=name.col
        )

    def st_spell(self, head: _Token) -> None:
        self.expect_punct("(")
        name = self.atom()
        self.check_unique("spell", name.value, name)
        self.expect_punct(",")
        surface = self.expect("string")
        op_tok = self.next()
        if op_tok.kind != "punct" or op_tok.value not in ("=>", "<=>"):
            raise self.error(f"expected => or <=>, found {op_tok.value!r}", op_tok)
        op = OPTIONAL if op_tok.value == "=>" else OBLIGATORY
        lexical = self.expect("string")
        self.expect_punct(",")
        classes = self.class_bindings()
        self.expect_punct(",")
        features = self.feature_constraints(allow_vars=False)
        self.expect_punct(")")
        digits = {d for d, _ in classes}
        surface_rs = self.rule_string(surface, digits)
        lexical_rs = self.rule_string(lexical, digits)
        self.desc.spell_rules.append(
            SpellRule(
                name.value, op, surface_rs, lexical_rs,
                tuple(classes), tuple(features), line=name.line, col=name.col,
            )
        )

    def rule_string(self, tok: _Token, digits: set[str]) -> RuleString:
        parts = tok.value.split("|")
        if len(parts) != 3:
            raise self.error(
                f'rule string must have the shape "lcontext|target|rcontext", found "{tok.value}"',
                tok,
            )
        out: list[tuple[CharSpec, ...]] = []
        for part in parts:
            specs: list[CharSpec] = []
            for ch in part:
                if ch.isdigit():
                    if ch not in digits:
                        raise self.error(f"unknown class digit {ch!r} in rule string", tok)
                    specs.append(CharSpec("class", ch))
                else:
                    specs.append(CharSpec("lit", ch))
            out.append(tuple(specs))
        return RuleString(out[0], out[1], out[2])

    def class_bindings(self) -> list[tuple[str, str]]:
        self.expect_punct("[")
        out: list[tuple[str, str]] = []
        if self.peek().value != "]":
            while True:
                digit = self.expect("num")
                if len(digit.value) != 1:
                    raise self.error("class occurrence must be a single digit", digit)
                self.expect_punct("/")
                cname = self.atom()
                if any(d == digit.value for d, _ in out):
                    raise self.error(f"duplicate class digit {digit.value!r}", digit)
                out.append((digit.value, cname.value))
                if self.peek().value != ",":
                    break
                self.next()
        self.expect_punct("]")
        return out

    def st_morph(self, head: _Token) -> None:
        self.expect_punct("(")
        name = self.atom()
        self.check_unique("morph", name.value, name)
        self.expect_punct(",")
        self.expect_punct("[")
        items: list[tuple[object, Optional[str]]] = []  # (parsed item, tail var)
        while True:
            items.append(self.morph_item())
            if self.peek().value != ",":
                break
            self.next()
        self.expect_punct("]")
        self.expect_punct(")")
        bindings: dict[str, list[tuple[str, ValueTerm]]] = {}
        if self.peek().value == ":-":
            self.next()
            while True:
                var = self.expect("var")
                self.expect_punct("=")
                self.expect_punct("[")
                constraints = self.constraint_list(allow_vars=True)
                self.expect_punct("]")
                bindings[var.value] = constraints
                if self.peek().value != ",":
                    break
                self.next()
        resolved: list[RhsItem] = []
        lhs: Optional[CategorySpec] = None
        for idx, (item, tail) in enumerate(items):
            if isinstance(item, CategorySpec):
                if tail is not None:
                    if tail not in bindings:
                        raise self.error(f"unbound tail variable {tail!r} in morph {name.value!r}", name)
                    item = CategorySpec(item.major, item.constraints + tuple(bindings[tail]))
                if idx == 0:
                    lhs = item
                else:
                    resolved.append(Daughter(item))
            else:
                if idx == 0:
                    raise self.error(f"morph {name.value!r} left-hand side must be a category", name)
                resolved.append(Morpheme(item))
        if lhs is None:
            raise self.error(f"morph {name.value!r} left-hand side must be a category", name)
        self.desc.production_rules.append(
            ProductionRule(name.value, lhs, tuple(resolved), line=name.line, col=name.col)
        )

    def morph_item(self) -> tuple[object, Optional[str]]:
        tok = self.peek()
        if tok.kind in ("atom", "num"):
            nxt = self.toks[self.pos + 1]
            if nxt.kind == "punct" and nxt.value == ":":
                spec, tail = self.category_spec(allow_tail=True)
                return spec, tail
            self.next()
            return tok.value, None
        raise self.error(f"expected morpheme or category, found {tok.value!r}", tok)

    def category_spec(self, allow_tail: bool = False) -> tuple[CategorySpec, Optional[str]]:
        major = self.atom()
        self.expect_punct(":")
        self.expect_punct("[")
        constraints = self.constraint_list(allow_vars=True)
        tail: Optional[str] = None
        if allow_tail and self.peek().value == "|":
            self.next()
            tail = self.expect("var").value
        self.expect_punct("]")
        return CategorySpec(major.value, tuple(constraints)), tail

    def constraint_list(self, allow_vars: bool) -> list[tuple[str, ValueTerm]]:
        out: list[tuple[str, ValueTerm]] = []
        if self.peek().value in ("]", "|"):
            return out
        while True:
            feat = self.atom()
            self.expect_punct("=")
            if self.peek().value == "@":
                self.next()
                out.extend(self.macro_call(feat))
            else:
                out.append((feat.value, self.value_term(allow_vars)))
            if self.peek().value != ",":
                break
            self.next()
        return out

    def macro_call(self, feat_tok: _Token) -> list[tuple[str, ValueTerm]]:
        name = self.atom()
        macro = self.desc.macros.get(name.value)
        if macro is None:
            raise self.error(f"unknown macro {name.value!r}", name)
        self.expect_punct("(")
        args: list[ValueTerm] = []
        while True:
            args.append(self.value_term(allow_vars=True))
            if self.peek().value != ",":
                break
            self.next()
        self.expect_punct(")")
        if len(args) != len(macro.fields):
            raise self.error(
                f"macro {name.value!r} expects {len(macro.fields)} arguments, found {len(args)}",
                name,
            )
        return list(zip(macro.fields, args))

    def value_term(self, allow_vars: bool) -> ValueTerm:
        tok = self.next()
        if tok.kind == "var":
            if not allow_vars:
                raise self.error("variables are not allowed here", tok)
            return Var(tok.value)
        if tok.kind not in ("atom", "num"):
            raise self.error(f"expected feature value, found {tok.value!r}", tok)
        if tok.value in ("and", "or", "not") and self.peek().value == "(":
            self.next()
            items: list[FeatureExpr] = []
            while True:
                item = self.value_term(allow_vars=False)
                assert not isinstance(item, Var)
                items.append(item)
                if self.peek().value != ",":
                    break
                self.next()
            self.expect_punct(")")
            if tok.value == "not":
                if len(items) != 1:
                    raise self.error("not(...) takes one argument", tok)
                return Not(items[0])
            if len(items) < 2:
                raise self.error(f"{tok.value}(...) takes at least two arguments", tok)
            return And(tuple(items)) if tok.value == "and" else Or(tuple(items))
        return Value(tok.value)

    def feature_constraints(self, allow_vars: bool) -> list[tuple[str, FeatureExpr]]:
        self.expect_punct("[")
        out = self.constraint_list(allow_vars=allow_vars)
        self.expect_punct("]")
        for feat, val in out:
            if isinstance(val, Var):
                raise self.error(f"variable value for {feat!r} is not allowed here")
        return out  # type: ignore[return-value]

    def st_affix(self, head: _Token) -> None:
        self.expect_punct("(")
        name = self.atom()
        self.check_unique("affix", name.value, name)
        self.expect_punct(",")
        constraints = self.feature_constraints(allow_vars=False)
        self.expect_punct(")")
        self.desc.affixes[name.value] = AffixDecl(
            name.value, tuple(constraints), line=name.line, col=name.col
        )

    def st_lex(self, head: _Token) -> None:
        self.expect_punct("(")
        citation = self.atom()
        self.expect_punct(",")
        spec, _ = self.category_spec()
        self.expect_punct(")")
        if not citation.value:
            raise self.error("empty citation", citation)
        self.desc.roots.append(
            LexEntry(citation.value, spec, line=citation.line, col=citation.col)
        )

    def st_orth(self, head: _Token) -> None:
        self.expect_punct("(")
        citation = self.atom()
        self.expect_punct(",")
        constraints = self.feature_constraints(allow_vars=False)
        self.expect_punct(")")
        self.desc.orth_statements.append(
            OrthStatement(citation.value, tuple(constraints), line=citation.line, col=citation.col)
        )

    def st_irreg(self, head: _Token) -> None:
        self.expect_punct("(")
        surface = self.atom()
        self.expect_punct(",")
        morphemes = self.name_list()
        self.expect_punct(",")
        self.expect_punct("[")
        rules: list[str] = []
        exclusive = False
        if self.peek().value != "]":
            while True:
                rname = self.atom()
                if self.peek().value == "-":
                    self.next()
                    only = self.atom()
                    if only.value != "only":
                        raise self.error(f"expected 'only' after '-', found {only.value!r}", only)
                    exclusive = True
                rules.append(rname.value)
                if self.peek().value != ",":
                    break
                self.next()
        self.expect_punct("]")
        self.expect_punct(")")
        if not morphemes:
            raise self.error("irregular entry lists no morphemes", surface)
        if not rules:
            raise self.error("irregular entry lists no production rules", surface)
        self.desc.irregulars.append(
            IrregEntry(
                surface.value, tuple(morphemes), tuple(rules), exclusive,
                line=surface.line, col=surface.col,
            )
        )

    def st_set(self, head: _Token) -> None:
        self.expect_punct("(")
        key = self.atom()
        self.expect_punct(",")
        if key.value == "depth":
            val = self.expect("num")
            self.desc.config = Config(depth=int(val.value))
        else:
            raise self.error(f"unknown configuration key {key.value!r}", key)
        self.expect_punct(")")

    def st_deriv(self, head: _Token) -> None:
        # Semantic rules are not interpreted; skip tokens to the terminator.
        depth = 0
        while True:
            tok = self.peek()
            if tok.kind == "end":
                raise self.error("unterminated deriv statement", head)
            if tok.kind == "punct" and tok.value == "." and depth == 0:
                return
            if tok.kind == "punct":
                if tok.value in ("(", "["):
                    depth += 1
                elif tok.value in (")", "]"):
                    depth -= 1
            self.next()

    def name_list(self) -> list[str]:
        self.expect_punct("[")
        out: list[str] = []
        if self.peek().value != "]":
            while True:
                out.append(self.atom().value)
                if self.peek().value != ",":
                    break
                self.next()
        self.expect_punct("]")
        return out


def parse_description(text: str, path: Optional[str] = None) -> Description:
    """Parse a description document; raises DescriptionError on syntax faults."""
    return _Parser(text, path).parse()


# ----------------------------------------
# Printing
# ----------------------------------------

_ATOM_OK_FIRST = _is_atom_start


def _print_atom(name: str) -> str:
    if name and _ATOM_OK_FIRST(name[0]) and all(_is_atom_char(c) for c in name):
        return name
    if name.isdigit():
        return name
    return f"'{name}'"


def _print_expr(expr: ValueTerm) -> str:
    if isinstance(expr, Value):
        return _print_atom(expr.name)
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Not):
        return f"not({_print_expr(expr.item)})"
    if isinstance(expr, And):
        return "and(" + ", ".join(_print_expr(x) for x in expr.items) + ")"
    if isinstance(expr, Or):
        return "or(" + ", ".join(_print_expr(x) for x in expr.items) + ")"
    raise TypeError(expr)


def _print_constraints(cs: Iterable[tuple[str, ValueTerm]]) -> str:
    return "[" + ", ".join(f"{f}={_print_expr(v)}" for f, v in cs) + "]"


def _print_rule_string(rs: RuleString) -> str:
    def part(specs: tuple[CharSpec, ...]) -> str:
        return "".join(s.char for s in specs)

    return f'"{part(rs.lcontext)}|{part(rs.target)}|{part(rs.rcontext)}"'


def _print_category(spec: CategorySpec) -> str:
    return f"{_print_atom(spec.major)}:{_print_constraints(spec.constraints)}"


def print_description(desc: Description) -> str:
    """Render a description back to its canonical statement form."""
    lines: list[str] = []
    for cls in desc.classes.values():
        members = "".join(sorted(cls.members or ()))
        lines.append(f'class({_print_atom(cls.name)}, "{members}").')
    for feat in desc.features.values():
        vals = ", ".join(_print_atom(v) for v in feat.values)
        lines.append(f"feature({_print_atom(feat.name)}, {feat.space}, [{vals}]).")
    for macro in desc.macros.values():
        fields = ", ".join(_print_atom(f) for f in macro.fields)
        lines.append(f"macro({_print_atom(macro.name)}, [{fields}]).")
    for rule in desc.spell_rules:
        op = "=>" if rule.op == OPTIONAL else "<=>"
        classes = "[" + ", ".join(f"{d}/{_print_atom(c)}" for d, c in rule.classes) + "]"
        lines.append(
            f"spell({_print_atom(rule.name)}, {_print_rule_string(rule.surface)} {op} "
            f"{_print_rule_string(rule.lexical)}, {classes}, "
            f"{_print_constraints(rule.features)})."
        )
    for prod in desc.production_rules:
        items = [_print_category(prod.lhs)]
        for item in prod.rhs:
            if isinstance(item, Daughter):
                items.append(_print_category(item.spec))
            else:
                items.append(_print_atom(item.name))
        lines.append(f"morph({_print_atom(prod.name)}, [" + ", ".join(items) + "]).")
    for affix in desc.affixes.values():
        lines.append(f"affix({_print_atom(affix.name)}, {_print_constraints(affix.constraints)}).")
    for entry in desc.roots:
        lines.append(f"lex({_print_atom(entry.citation)}, {_print_category(entry.category)}).")
    for stmt in desc.orth_statements:
        lines.append(f"orth({_print_atom(stmt.citation)}, {_print_constraints(stmt.constraints)}).")
    for irr in desc.irregulars:
        morphs = ", ".join(_print_atom(m) for m in irr.morphemes)
        rules = ", ".join(_print_atom(r) + ("-only" if irr.exclusive else "") for r in irr.rules)
        lines.append(f"irreg({_print_atom(irr.surface)}, [{morphs}], [{rules}]).")
    if desc.config.depth != DEFAULT_DEPTH:
        lines.append(f"set(depth, {desc.config.depth}).")
    return "\n".join(lines) + ("\n" if lines else "")


# ----------------------------------------
# Validation
# ----------------------------------------

def _expr_values(expr: ValueTerm) -> Iterable[str]:
    if isinstance(expr, Value):
        yield expr.name
    elif isinstance(expr, Not):
        yield from _expr_values(expr.item)
    elif isinstance(expr, (And, Or)):
        for item in expr.items:
            yield from _expr_values(item)


def validate_description(desc: Description) -> list[Diagnostic]:
    """Cross-reference checks; returns diagnostics, errors first."""
    out: list[Diagnostic] = []

    def err(msg: str, line: int, col: int) -> None:
        out.append(Diagnostic("error", msg, line, col))

    def warn(msg: str, line: int, col: int) -> None:
        out.append(Diagnostic("warning", msg, line, col))

    def check_constraints(
        cs: Iterable[tuple[str, ValueTerm]], space: str, line: int, col: int, where: str
    ) -> None:
        for feat, val in cs:
            decl = desc.features.get(feat)
            if decl is None:
                err(f"undeclared feature {feat!r} in {where}", line, col)
                continue
            if decl.space != space:
                err(
                    f"feature {feat!r} belongs to the {decl.space} space, "
                    f"not usable in {where}",
                    line, col,
                )
            if isinstance(val, Var):
                continue
            for v in _expr_values(val):
                if v not in decl.values:
                    err(f"value {v!r} is not declared for feature {feat!r}", line, col)

    for rule in desc.spell_rules:
        for _, cname in rule.classes:
            try:
                desc.char_class(cname)
            except KeyError:
                err(f"unknown character class {cname!r} in rule {rule.name!r}", rule.line, rule.col)
        if not rule.lexical.target:
            err(f"rule {rule.name!r} has an empty lexical target", rule.line, rule.col)
        if len(rule.lexical.target) > 1:
            warn(
                f"rule {rule.name!r} has a multi-character lexical target; "
                "lexical targets of different lengths cannot block each other, so this "
                "rule cannot veto single-character partitions",
                rule.line, rule.col,
            )
        check_constraints(rule.features, "orth", rule.line, rule.col, f"rule {rule.name!r}")

    by_shape: dict[tuple, SpellRule] = {}
    for rule in desc.spell_rules:
        shape = (rule.surface, rule.lexical, rule.classes, rule.features)
        other = by_shape.get(shape)
        if other is not None and other.op != rule.op:
            obligatory = rule if rule.op == OBLIGATORY else other
            warn(
                f"obligatory rule {obligatory.name!r} is identical to an optional rule "
                "except for its operator; the optional one can never apply",
                obligatory.line, obligatory.col,
            )
        else:
            by_shape[shape] = rule

    def var_features(rule: ProductionRule) -> None:
        slots: dict[str, list[str]] = {}
        specs = [rule.lhs] + [it.spec for it in rule.rhs if isinstance(it, Daughter)]
        for spec in specs:
            for feat, val in spec.constraints:
                if isinstance(val, Var):
                    slots.setdefault(val.name, []).append(feat)
        for var, feats in slots.items():
            value_sets = set()
            for f in feats:
                decl = desc.features.get(f)
                if decl is not None:
                    value_sets.add(decl.values)
            if len(value_sets) > 1:
                err(
                    f"variable {var!r} in rule {rule.name!r} links features with "
                    "different value sets",
                    rule.line, rule.col,
                )

    for prod in desc.production_rules:
        daughters = [it for it in prod.rhs if isinstance(it, Daughter)]
        if not daughters:
            err(f"production rule {prod.name!r} has no root daughter", prod.line, prod.col)
        elif len(daughters) > 1:
            err(
                f"production rule {prod.name!r} has {len(daughters)} category daughters; "
                "exactly one (the root) is allowed",
                prod.line, prod.col,
            )
        check_constraints(prod.lhs.constraints, "syn", prod.line, prod.col, f"rule {prod.name!r}")
        for item in daughters:
            check_constraints(item.spec.constraints, "syn", prod.line, prod.col, f"rule {prod.name!r}")
        var_features(prod)

    used_affixes = {
        item.name
        for prod in desc.production_rules
        for item in prod.rhs
        if isinstance(item, Morpheme)
    }
    for affix in desc.affixes.values():
        check_constraints(affix.constraints, "orth", affix.line, affix.col, f"affix {affix.name!r}")
        if affix.name not in used_affixes:
            warn(
                f"affix {affix.name!r} is not used by any production rule",
                affix.line, affix.col,
            )

    boundary = desc.boundary_chars()
    citations = {e.citation for e in desc.roots}
    for entry in desc.roots:
        if any(ch in boundary for ch in entry.citation):
            err(
                f"citation {entry.citation!r} contains a boundary marker",
                entry.line, entry.col,
            )
        check_constraints(
            entry.category.constraints, "syn", entry.line, entry.col,
            f"entry {entry.citation!r}",
        )
    for stmt in desc.orth_statements:
        check_constraints(
            stmt.constraints, "orth", stmt.line, stmt.col, f"orth({stmt.citation})"
        )
        if stmt.citation not in citations:
            warn(
                f"orth constraint for {stmt.citation!r}, which has no lexical entry here",
                stmt.line, stmt.col,
            )

    rule_names = {p.name for p in desc.production_rules}
    for irr in desc.irregulars:
        for rname in irr.rules:
            if rname not in rule_names:
                err(
                    f"irregular {irr.surface!r} names unknown production rule {rname!r}",
                    irr.line, irr.col,
                )

    out.sort(key=lambda d: (d.severity != "error", d.line, d.col))
    return out
