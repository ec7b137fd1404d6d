"""Parser for the user constraint language.

Comma-separated relational expressions over `INSTANCE.feature` terms with
exact decimal/rational literals, +, -, scalar * and parentheses. Nominal
features support the sugar `I.feature = Value` (one-hot indicator = 1),
equality between two nominal references, and the explicit indicator form
`I.feature^Value` so rendered answers re-parse unchanged.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

from .constraints import LinTerm, Primitive, Relation, VarId, normalize, rat

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>\d+(?:\.\d+)?)
  | (?P<op><=|>=|!=|[<>=+\-*/(),.^])
  | (?P<name>[^\s.^+\-*/(),<>=!]+)
""", re.VERBOSE)

_RELS = {"<": Relation.LT, "<=": Relation.LE, "=": Relation.EQ,
         ">=": Relation.GE, ">": Relation.GT}


class ParseError(Exception):
    def __init__(self, message: str, pos: int):
        self.pos = pos
        super().__init__(f"{message} (at position {pos})")


@dataclass(frozen=True)
class NominalRef:
    """A bare reference to a nominal feature, legal only in equality sugar."""
    instance: str
    feature: str


@dataclass(frozen=True)
class ValueAtom:
    text: str


Side = LinTerm | NominalRef | ValueAtom


@dataclass
class _Token:
    kind: str
    text: str
    pos: int


def _lex(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class Resolver:
    """What the parser needs to know about the session's variable space."""

    def resolve(self, instance: str, feature: str, onehot: Optional[str],
                pos: int) -> VarId | NominalRef:
        raise NotImplementedError

    def nominal_values(self, instance: str, feature: str) -> tuple[str, ...]:
        raise NotImplementedError


class ConstraintParser:
    def __init__(self, resolver: Resolver):
        self.resolver = resolver

    def parse(self, text: str) -> list[Primitive]:
        self.tokens = _lex(text)
        self.at = 0
        prims = self._comparison()
        while self._peek().kind == "op" and self._peek().text == ",":
            self._next()
            prims.extend(self._comparison())
        tok = self._peek()
        if tok.kind != "end":
            raise ParseError(f"unexpected {tok.text!r}", tok.pos)
        return prims

    # -- token helpers --
    def _peek(self) -> _Token:
        return self.tokens[self.at]

    def _next(self) -> _Token:
        tok = self.tokens[self.at]
        self.at += 1
        return tok

    def _expect_op(self, text: str) -> _Token:
        tok = self._next()
        if tok.kind != "op" or tok.text != text:
            raise ParseError(f"expected {text!r}", tok.pos)
        return tok

    # -- grammar --
    def _comparison(self) -> list[Primitive]:
        lpos = self._peek().pos
        left = self._sum()
        tok = self._next()
        if tok.kind != "op" or tok.text not in _RELS:
            raise ParseError("expected a relation (=, <=, >=, <, >)", tok.pos)
        rel = _RELS[tok.text]
        rpos = self._peek().pos
        right = self._sum()
        return self._combine(left, rel, right, lpos, rpos, tok.pos)

    def _combine(self, left: Side, rel: Relation, right: Side,
                 lpos: int, rpos: int, relpos: int) -> list[Primitive]:
        if isinstance(left, LinTerm) and isinstance(right, LinTerm):
            return [normalize(Primitive(left - right, rel))]
        if rel is not Relation.EQ:
            raise ParseError("nominal features only support equality", relpos)
        if isinstance(left, ValueAtom) and isinstance(right, NominalRef):
            left, right = right, left
            lpos, rpos = rpos, lpos
        if isinstance(left, NominalRef) and isinstance(right, ValueAtom):
            values = self.resolver.nominal_values(left.instance, left.feature)
            if right.text not in values:
                raise ParseError(
                    f"{right.text!r} is not a value of nominal feature "
                    f"{left.feature!r}", rpos)
            ind = VarId(left.instance, left.feature, right.text)
            return [normalize(Primitive(
                LinTerm.of_var(ind) - LinTerm.const(1), Relation.EQ))]
        if isinstance(left, NominalRef) and isinstance(right, NominalRef):
            if left.feature != right.feature:
                raise ParseError(
                    "nominal equality requires the same feature on both sides",
                    relpos)
            values = self.resolver.nominal_values(left.instance, left.feature)
            return [normalize(Primitive(
                LinTerm.of_var(VarId(left.instance, left.feature, v))
                - LinTerm.of_var(VarId(right.instance, right.feature, v)),
                Relation.EQ)) for v in values]
        raise ParseError("cannot compare these operands", relpos)

    def _sum(self) -> Side:
        first_pos = self._peek().pos
        acc = self._term()
        while True:
            tok = self._peek()
            if tok.kind == "op" and tok.text in "+-":
                if not isinstance(acc, LinTerm):
                    raise ParseError(
                        "nominal references cannot appear in arithmetic", first_pos)
                self._next()
                rhs_pos = self._peek().pos
                rhs = self._term()
                if not isinstance(rhs, LinTerm):
                    raise ParseError(
                        "nominal references cannot appear in arithmetic", rhs_pos)
                acc = acc + rhs if tok.text == "+" else acc - rhs
            else:
                return acc

    def _term(self) -> Side:
        first_pos = self._peek().pos
        acc = self._factor()
        while True:
            tok = self._peek()
            if tok.kind == "op" and tok.text == "*":
                self._next()
                rhs_pos = self._peek().pos
                rhs = self._factor()
                if not isinstance(acc, LinTerm) or not isinstance(rhs, LinTerm):
                    raise ParseError("'*' needs numeric operands", rhs_pos)
                if acc.coeffs and rhs.coeffs:
                    raise ParseError("nonlinear product of two variables", tok.pos)
                if rhs.coeffs:
                    acc, rhs = rhs, acc
                acc = acc.scale(rhs.constant)
            elif tok.kind == "op" and tok.text == "/":
                self._next()
                rhs_pos = self._peek().pos
                rhs = self._factor()
                if (not isinstance(acc, LinTerm) or not isinstance(rhs, LinTerm)
                        or rhs.coeffs):
                    raise ParseError("'/' needs a numeric divisor", rhs_pos)
                if rhs.constant == 0:
                    raise ParseError("division by zero", rhs_pos)
                acc = acc.scale(1 / rhs.constant)
            else:
                return acc

    def _factor(self) -> Side:
        tok = self._next()
        if tok.kind == "op" and tok.text in "+-":
            inner_pos = self._peek().pos
            inner = self._factor()
            if not isinstance(inner, LinTerm):
                raise ParseError("sign applies to numeric terms only", inner_pos)
            return inner if tok.text == "+" else -inner
        if tok.kind == "op" and tok.text == "(":
            inner = self._sum()
            self._expect_op(")")
            return inner
        if tok.kind == "number":
            nxt = self._peek()
            if nxt.kind == "op" and nxt.text == "/":
                # rational literal p/q (only when followed by a plain integer)
                save = self.at
                self._next()
                den = self._peek()
                if den.kind == "number" and "." not in den.text:
                    self._next()
                    return LinTerm.const(rat(tok.text) / rat(den.text))
                self.at = save
            return LinTerm.const(rat(tok.text))
        if tok.kind == "name":
            dot = self._peek()
            if not (dot.kind == "op" and dot.text == "."):
                return ValueAtom(tok.text)
            self._next()
            feat_tok = self._next()
            if feat_tok.kind not in ("name", "number"):
                raise ParseError("expected a feature name after '.'", feat_tok.pos)
            onehot = None
            nxt = self._peek()
            if nxt.kind == "op" and nxt.text == "^":
                self._next()
                val_tok = self._next()
                if val_tok.kind not in ("name", "number"):
                    raise ParseError("expected a value after '^'", val_tok.pos)
                onehot = val_tok.text
            resolved = self.resolver.resolve(tok.text, feat_tok.text, onehot,
                                             tok.pos)
            if isinstance(resolved, VarId):
                return LinTerm.of_var(resolved)
            return resolved
        raise ParseError(f"unexpected {tok.text!r}", tok.pos)
