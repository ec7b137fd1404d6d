"""Exact linear constraints over named instance features.

Values are immutable and hashable; all arithmetic is exact rational
(`fractions.Fraction`), so feasibility and projection downstream never
suffer rounding artifacts. Internally only the relations <, <= and = are
kept: >= and > are normalized away by negating the left-hand side.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import total_ordering
from math import gcd
from typing import Iterable, Mapping, Optional, Sequence

Rat = Fraction


class ConstraintError(Exception):
    pass


class MissingAssignmentError(ConstraintError):
    def __init__(self, var: "VarId"):
        self.var = var
        super().__init__(f"no value assigned to {var}")


def rat(value: int | str | Fraction) -> Fraction:
    """Coerce ints, Fractions and decimal/rational strings to an exact rational.

    Decimal literals are read exactly: "5119.01" -> 511901/100. Floats are
    rejected on purpose; parse text with `json.load(..., parse_float=rat)`
    or pass strings instead.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("bool is not a rational value")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"not a rational literal: {value!r}") from exc
    raise TypeError(f"cannot convert {type(value).__name__} to an exact rational "
                    "(floats carry binary rounding; pass a string)")


def format_rat(q: Fraction) -> str:
    """Shortest exact decimal if the denominator is 2^a*5^b, else p/q."""
    if q.denominator == 1:
        return str(q.numerator)
    d = q.denominator
    twos = fives = 0
    while d % 2 == 0:
        d //= 2
        twos += 1
    while d % 5 == 0:
        d //= 5
        fives += 1
    if d != 1:
        return f"{q.numerator}/{q.denominator}"
    exp = max(twos, fives)
    scaled = abs(q.numerator) * (10 ** exp // q.denominator)
    digits = str(scaled).rjust(exp + 1, "0")
    head, tail = digits[:-exp], digits[-exp:].rstrip("0")
    sign = "-" if q < 0 else ""
    return f"{sign}{head}.{tail}"


_NAME_RE = re.compile(r"^[^\s.^+\-*/(),<>=!]+$")


@total_ordering
@dataclass(frozen=True)
class VarId:
    """A variable: an instance feature, optionally a one-hot indicator component."""

    instance: str
    feature: str
    onehot_value: Optional[str] = None

    def sort_key(self) -> tuple[str, str, str]:
        return (self.instance, self.feature, self.onehot_value or "")

    def __lt__(self, other: "VarId") -> bool:
        return self.sort_key() < other.sort_key()

    def __str__(self) -> str:
        if self.onehot_value is not None:
            return f"{self.instance}.{self.feature}^{self.onehot_value}"
        return f"{self.instance}.{self.feature}"


class Relation(Enum):
    LT = "<"
    LE = "<="
    EQ = "="
    GE = ">="
    GT = ">"

    @property
    def strict(self) -> bool:
        return self in (Relation.LT, Relation.GT)

    @property
    def flipped(self) -> "Relation":
        return _FLIP[self]


_FLIP = {
    Relation.LT: Relation.GT,
    Relation.LE: Relation.GE,
    Relation.EQ: Relation.EQ,
    Relation.GE: Relation.LE,
    Relation.GT: Relation.LT,
}


@dataclass(frozen=True)
class LinTerm:
    """Linear form sum(coeff * var) + constant, stored sparse and sorted."""

    coeffs: tuple[tuple[VarId, Fraction], ...] = ()
    constant: Fraction = Fraction(0)

    @staticmethod
    def build(coeffs: Mapping[VarId, Fraction] | Iterable[tuple[VarId, Fraction]],
              constant: Fraction | int = 0) -> "LinTerm":
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        merged: dict[VarId, Fraction] = {}
        for var, coef in items:
            coef = Fraction(coef)
            if coef == 0:
                continue
            acc = merged.get(var, Fraction(0)) + coef
            if acc == 0:
                merged.pop(var, None)
            else:
                merged[var] = acc
        pairs = tuple(sorted(merged.items(), key=lambda kv: kv[0].sort_key()))
        return LinTerm(pairs, Fraction(constant))

    @staticmethod
    def of_var(var: VarId, coef: Fraction | int = 1) -> "LinTerm":
        return LinTerm.build({var: Fraction(coef)})

    @staticmethod
    def const(value: Fraction | int) -> "LinTerm":
        return LinTerm((), Fraction(value))

    def coeff(self, var: VarId) -> Fraction:
        for v, c in self.coeffs:
            if v == var:
                return c
        return Fraction(0)

    def variables(self) -> tuple[VarId, ...]:
        return tuple(v for v, _ in self.coeffs)

    @property
    def is_constant(self) -> bool:
        return not self.coeffs

    def __add__(self, other: "LinTerm") -> "LinTerm":
        acc = {v: c for v, c in self.coeffs}
        for v, c in other.coeffs:
            acc[v] = acc.get(v, Fraction(0)) + c
        return LinTerm.build(acc, self.constant + other.constant)

    def __sub__(self, other: "LinTerm") -> "LinTerm":
        return self + other.scale(Fraction(-1))

    def __neg__(self) -> "LinTerm":
        return self.scale(Fraction(-1))

    def scale(self, k: Fraction | int) -> "LinTerm":
        k = Fraction(k)
        if k == 0:
            return LinTerm.const(0)
        return LinTerm(tuple((v, c * k) for v, c in self.coeffs), self.constant * k)

    def shift(self, delta: Fraction) -> "LinTerm":
        return LinTerm(self.coeffs, self.constant + delta)

    def eval(self, point: Mapping[VarId, Fraction]) -> Fraction:
        total = self.constant
        for v, c in self.coeffs:
            if v not in point:
                raise MissingAssignmentError(v)
            total += c * point[v]
        return total


@dataclass(frozen=True)
class Primitive:
    """Primitive constraint `lhs rel 0`, with the right-hand side folded in."""

    lhs: LinTerm
    rel: Relation

    def holds_at(self, point: Mapping[VarId, Fraction]) -> bool:
        value = self.lhs.eval(point)
        if self.rel is Relation.LT:
            return value < 0
        if self.rel is Relation.LE:
            return value <= 0
        if self.rel is Relation.EQ:
            return value == 0
        if self.rel is Relation.GE:
            return value >= 0
        return value > 0

    @property
    def is_trivially_true(self) -> bool:
        return self.lhs.is_constant and Primitive(self.lhs, self.rel).holds_at({})

    @property
    def is_trivially_false(self) -> bool:
        return self.lhs.is_constant and not Primitive(self.lhs, self.rel).holds_at({})


TAUTOLOGY = Primitive(LinTerm.const(0), Relation.LE)
CONTRADICTION = Primitive(LinTerm.const(1), Relation.EQ)


def normalize(p: Primitive) -> Primitive:
    """Canonicalize a primitive.

    - >= / > are folded into <= / < by negating the left-hand side,
    - coefficients and constant are rescaled to integers with overall gcd 1,
    - equalities get a positive leading (lowest VarId) coefficient,
    - variable-free primitives collapse to the tautology / contradiction marker.
    """
    lhs, rel = p.lhs, p.rel
    if rel is Relation.GE:
        lhs, rel = -lhs, Relation.LE
    elif rel is Relation.GT:
        lhs, rel = -lhs, Relation.LT

    if lhs.is_constant:
        return TAUTOLOGY if Primitive(lhs, rel).holds_at({}) else CONTRADICTION

    denoms = [c.denominator for _, c in lhs.coeffs] + [lhs.constant.denominator]
    lcm = 1
    for d in denoms:
        lcm = lcm * d // gcd(lcm, d)
    nums = [abs(c.numerator * lcm) for _, c in lhs.coeffs]
    if lhs.constant != 0:
        nums.append(abs(lhs.constant.numerator * lcm))
    g = 0
    for n in nums:
        g = gcd(g, n)
    scale = Fraction(lcm, g if g else 1)
    lhs = lhs.scale(scale)
    if rel is Relation.EQ and lhs.coeffs[0][1] < 0:
        lhs = -lhs
    return Primitive(lhs, rel)


@dataclass(frozen=True)
class Tag:
    """Provenance of a conjunction: which tree path, user text or generator produced it."""

    kind: str  # "path" | "user" | "implicit" | "distance"
    instance: Optional[str] = None
    tree_id: Optional[str] = None
    leaf_id: Optional[int] = None
    label: Optional[str] = None
    confidence: Optional[Fraction] = None


USER_TAG = Tag("user")
IMPLICIT_TAG = Tag("implicit")
DISTANCE_TAG = Tag("distance")


@dataclass(frozen=True)
class Conj:
    """Conjunction of primitives plus the provenance tags that created them."""

    primitives: tuple[Primitive, ...] = ()
    provenance: tuple[Tag, ...] = ()

    @staticmethod
    def of(primitives: Iterable[Primitive], provenance: Iterable[Tag] = ()) -> "Conj":
        seen: list[Primitive] = []
        for p in primitives:
            q = normalize(p)
            if q not in seen:
                seen.append(q)
        return Conj(tuple(seen), tuple(provenance))

    def variables(self) -> tuple[VarId, ...]:
        out: list[VarId] = []
        for p in self.primitives:
            for v in p.lhs.variables():
                if v not in out:
                    out.append(v)
        return tuple(out)

    @property
    def is_contradiction_marker(self) -> bool:
        return any(p == CONTRADICTION for p in self.primitives)


def contradiction_conj(provenance: Iterable[Tag] = ()) -> Conj:
    return Conj((CONTRADICTION,), tuple(provenance))


def conjoin(a: Conj, b: Conj) -> Conj:
    """Concatenate two conjunctions, dropping exact syntactic duplicates."""
    return Conj.of(a.primitives + b.primitives, a.provenance + b.provenance)


def evaluate(c: Conj, point: Mapping[VarId, Fraction]) -> bool:
    """True iff every primitive holds at the point (strict relations strictly)."""
    return all(p.holds_at(point) for p in c.primitives)


Theory = list[Conj]


# --- textual rendering ------------------------------------------------------
#
# Constraints print as `INSTANCE.feature REL value`, joined with `+`/`-` for
# multi-variable terms. The output is compact (no spaces) and is re-parseable
# by the session constraint grammar, so answers can be fed back as inputs.

def _render_side(coeffs: Sequence[tuple[VarId, Fraction]]) -> str:
    parts: list[str] = []
    for i, (var, coef) in enumerate(coeffs):
        mag = abs(coef)
        body = str(var) if mag == 1 else f"{format_rat(mag)}*{var}"
        if i == 0:
            parts.append(body if coef > 0 else f"-{body}")
        else:
            parts.append(("+" if coef > 0 else "-") + body)
    return "".join(parts)


def render_primitive(p: Primitive) -> str:
    if p == TAUTOLOGY:
        return "0=0"
    if p == CONTRADICTION:
        return "0=1"
    if p.lhs.is_constant:
        return f"{format_rat(p.lhs.constant)}{p.rel.value}0"
    lhs, rel = p.lhs, p.rel
    if rel is not Relation.EQ and lhs.coeffs[0][1] < 0:
        lhs, rel = -lhs, rel.flipped
    return f"{_render_side(lhs.coeffs)}{rel.value}{format_rat(-lhs.constant)}"


def render_conj(c: Conj) -> str:
    return ",".join(render_primitive(p) for p in c.primitives)
