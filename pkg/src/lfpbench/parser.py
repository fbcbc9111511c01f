"""Tokenizer and recursive-descent parser for FO+LFP formulas.

Grammar (whitespace-insensitive)::

    formula := "true" | "false" | atom | "!" formula | "(" formula ")"
             | formula "&" formula | formula "|" formula | formula "->" formula
             | ("A" | "E") var "." formula
             | "[lfp" RelVar "(" varlist ")" "." formula "]" "(" varlist ")"
    atom    := RelName "(" varlist ")" | var "=" var | var "<" var

Precedence ``!`` > ``&`` > ``|`` > ``->``; ``&`` and ``|`` associate to the
left, ``->`` to the right; quantifier bodies extend as far right as possible.
``x < y`` is shorthand for the binary relation named ``<``.

A formula file is a sequence of macro definitions followed by one formula::

    # comment
    def succ(a,b) := a < b & !E c. (a < c & c < b)
    [lfp T(x). ...](u)

A definition runs until the next ``def`` line or the main formula; the main
formula is everything after the last definition.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .formula import (
    FALSE,
    TRUE,
    And,
    Atom,
    Eq,
    Exists,
    Forall,
    Formula,
    FormulaError,
    Implies,
    Lfp,
    Not,
    Or,
    Polarity,
    free_variables,
    instantiate,
    polarity,
)

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<arrow>->)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<punct>[()\[\],.!&|=<])
    """,
    re.VERBOSE,
)

_KEYWORDS = {"true", "false", "lfp", "A", "E"}


class ParseError(FormulaError):
    def __init__(self, message: str, text: str, pos: int):
        self.pos = pos
        self.line = text.count("\n", 0, pos) + 1
        self.column = pos - (text.rfind("\n", 0, pos) + 1) + 1
        self.message = message
        super().__init__(f"{message} at line {self.line}, column {self.column}")


@dataclass(frozen=True)
class Signature:
    """Relation symbols with their arities.  Equality is always available."""

    relations: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name, arity in self.relations.items():
            if not isinstance(arity, int) or arity < 1:
                raise FormulaError(f"relation {name!r} must have positive arity, got {arity!r}")
        object.__setattr__(self, "relations", dict(self.relations))

    def arity(self, name: str) -> int | None:
        return self.relations.get(name)

    def __contains__(self, name: str) -> bool:
        return name in self.relations

    def merge(self, other: Signature) -> Signature:
        rels = dict(self.relations)
        for k, v in other.relations.items():
            if rels.get(k, v) != v:
                raise FormulaError(f"relation {k} declared with arities {rels[k]} and {v}")
            rels[k] = v
        return Signature(rels)


@dataclass(frozen=True)
class Macro:
    name: str
    params: tuple[str, ...]
    body: Formula

    def expand(self, args: Iterable[str]) -> Formula:
        return instantiate(self.body, self.params, tuple(args))


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        if kind != "ws":
            value = m.group()
            tokens.append(("punct" if kind == "arrow" else kind, value, pos))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(
        self,
        text: str,
        sig: Signature,
        macros: Mapping[str, Macro],
        free_relvars: bool,
    ):
        self.text = text
        self.sig = sig
        self.macros = macros
        self.allow_free_relvars = free_relvars
        self.free_relvars: dict[str, int] = {}
        self.tokens = _tokenize(text)
        self.i = 0
        self.scopes: list[tuple[str, int]] = []

    # token helpers
    def peek(self, offset: int = 0) -> tuple[str, str, int]:
        return self.tokens[min(self.i + offset, len(self.tokens) - 1)]

    def at(self, value: str) -> bool:
        kind, v, _ = self.peek()
        return kind in ("punct", "ident") and v == value

    def advance(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str) -> int:
        kind, v, pos = self.peek()
        if v != value or kind == "eof":
            raise ParseError(f"expected {value!r}, found {v or 'end of input'!r}", self.text, pos)
        self.advance()
        return pos

    def error(self, message: str, pos: int | None = None) -> ParseError:
        if pos is None:
            pos = self.peek()[2]
        return ParseError(message, self.text, pos)

    def variable(self) -> str:
        kind, v, pos = self.peek()
        if kind != "ident" or v in _KEYWORDS:
            raise self.error(f"expected a variable, found {v or 'end of input'!r}", pos)
        self.advance()
        return v

    def varlist(self) -> tuple[str, ...]:
        self.expect("(")
        names = [self.variable()]
        while self.at(","):
            self.advance()
            names.append(self.variable())
        self.expect(")")
        return tuple(names)

    # grammar
    def parse(self) -> Formula:
        f = self.implication()
        kind, v, pos = self.peek()
        if kind != "eof":
            raise self.error(f"unexpected {v!r}", pos)
        return f

    def implication(self) -> Formula:
        left = self.disjunction()
        if self.at("->"):
            self.advance()
            return Implies(left, self.implication())
        return left

    def disjunction(self) -> Formula:
        left = self.conjunction()
        while self.at("|"):
            self.advance()
            left = Or(left, self.conjunction())
        return left

    def conjunction(self) -> Formula:
        left = self.unary()
        while self.at("&"):
            self.advance()
            left = And(left, self.unary())
        return left

    def unary(self) -> Formula:
        kind, v, pos = self.peek()
        if kind == "punct" and v == "!":
            self.advance()
            return Not(self.unary())
        if kind == "ident" and v in ("A", "E") and self.peek(1)[0] == "ident":
            self.advance()
            var = self.variable()
            self.expect(".")
            body = self.implication()
            return Exists(var, body) if v == "E" else Forall(var, body)
        return self.primary()

    def primary(self) -> Formula:
        kind, v, pos = self.peek()
        if kind == "eof":
            raise self.error("unexpected end of input", pos)
        if kind == "punct" and v == "(":
            self.advance()
            f = self.implication()
            self.expect(")")
            return f
        if kind == "punct" and v == "[":
            return self.lfp()
        if kind == "ident" and v == "true" and self.peek(1)[1] != "(":
            self.advance()
            return TRUE
        if kind == "ident" and v == "false" and self.peek(1)[1] != "(":
            self.advance()
            return FALSE
        if kind == "ident":
            nxt = self.peek(1)
            if nxt[0] == "punct" and nxt[1] == "(":
                self.advance()
                args = self.varlist()
                return self.atom(v, args, pos)
            if nxt[0] == "punct" and nxt[1] in ("=", "<"):
                left = self.variable()
                op = self.advance()[1]
                right = self.variable()
                if op == "=":
                    return Eq(left, right)
                return self.atom("<", (left, right), pos)
        raise self.error(f"unexpected {v!r}", pos)

    def atom(self, name: str, args: tuple[str, ...], pos: int) -> Formula:
        for rel, arity in reversed(self.scopes):
            if rel == name:
                if arity != len(args):
                    raise self.error(
                        f"relation variable {name} has arity {arity}, used with {len(args)} arguments", pos
                    )
                return Atom(name, args)
        if name in self.macros:
            macro = self.macros[name]
            if len(macro.params) != len(args):
                raise self.error(
                    f"macro {name} takes {len(macro.params)} arguments, got {len(args)}", pos
                )
            return macro.expand(args)
        arity = self.sig.arity(name)
        if arity is not None:
            if arity != len(args):
                raise self.error(f"relation {name} has arity {arity}, used with {len(args)} arguments", pos)
            return Atom(name, args)
        if self.allow_free_relvars and name[:1].isupper():
            prev = self.free_relvars.setdefault(name, len(args))
            if prev != len(args):
                raise self.error(f"relation variable {name} used with arities {prev} and {len(args)}", pos)
            return Atom(name, args)
        raise self.error(f"undeclared relation symbol {name!r}", pos)

    def lfp(self) -> Formula:
        start = self.expect("[")
        kind, v, pos = self.peek()
        if v != "lfp":
            raise self.error("expected 'lfp' after '['", pos)
        self.advance()
        kind, rel, pos = self.peek()
        if kind != "ident" or rel in _KEYWORDS or not rel[:1].isupper():
            raise self.error("expected an uppercase relation variable after 'lfp'", pos)
        self.advance()
        bound = self.varlist()
        if len(set(bound)) != len(bound):
            raise self.error(f"repeated variable in lfp tuple {bound}", pos)
        self.expect(".")
        self.scopes.append((rel, len(bound)))
        try:
            body = self.implication()
        finally:
            self.scopes.pop()
        self.expect("]")
        args_pos = self.peek()[2]
        args = self.varlist()
        if len(args) != len(bound):
            raise self.error(
                f"lfp {rel} binds {len(bound)} variables but is applied to {len(args)}", args_pos
            )
        pol = polarity(body, rel)
        if pol is Polarity.NEGATIVE:
            raise self.error(f"{rel} occurs negatively in its lfp body", start)
        if pol is Polarity.MIXED:
            raise self.error(f"{rel} occurs both positively and negatively in its lfp body", start)
        return Lfp(rel, bound, body, args)


def parse_formula(
    text: str,
    sig: Signature | Mapping[str, int] | None = None,
    macros: Mapping[str, Macro] | None = None,
    free_relvars: bool = False,
) -> Formula:
    """Parse ``text`` against ``sig``.

    With ``free_relvars`` set, undeclared uppercase atoms are accepted as
    free relation variables (for use with an evaluator environment).
    """
    if sig is None:
        sig = Signature()
    elif not isinstance(sig, Signature):
        sig = Signature(sig)
    return _Parser(text, sig, macros or {}, free_relvars).parse()


_DEF = re.compile(r"^def\s+([A-Za-z_][A-Za-z0-9_]*)\s*\(([^)]*)\)\s*:=", re.MULTILINE)


def parse_definitions(
    text: str,
    sig: Signature | Mapping[str, int] | None = None,
    macros: Mapping[str, Macro] | None = None,
) -> tuple[dict[str, Macro], str]:
    """Split a formula file into macros and the trailing main formula text.

    Returns the macro table (including ``macros`` passed in) and the main
    formula source, which may be empty.
    """
    if sig is None:
        sig = Signature()
    elif not isinstance(sig, Signature):
        sig = Signature(sig)
    table = dict(macros or {})
    lines = [ln for ln in text.splitlines() if not ln.lstrip().startswith("#")]
    clean = "\n".join(lines)
    matches = list(_DEF.finditer(clean))
    if not matches:
        return table, clean.strip()
    head = clean[: matches[0].start()].strip()
    if head:
        raise ParseError("text before the first definition", clean, 0)
    main = ""
    for k, m in enumerate(matches):
        end = matches[k + 1].start() if k + 1 < len(matches) else len(clean)
        chunk = clean[m.end() : end]
        if k + 1 == len(matches):
            # the last definition ends at the first blank line; the rest is the main formula
            parts = re.split(r"\n\s*\n", chunk, maxsplit=1)
            chunk = parts[0]
            main = parts[1].strip() if len(parts) > 1 else ""
        name = m.group(1)
        params = tuple(p.strip() for p in m.group(2).split(",") if p.strip())
        try:
            body = parse_formula(chunk, sig, table)
        except ParseError as exc:
            raise ParseError(exc.message, clean, m.end() + exc.pos) from None
        extra = [v for v in free_variables(body) if v not in params]
        if extra:
            raise ParseError(f"macro {name} has free variables {extra} not among its parameters", clean, m.start())
        table[name] = Macro(name, params, body)
    return table, main
