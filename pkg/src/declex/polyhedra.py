"""Decision procedures on conjunctions of linear constraints.

Satisfiability over the reals (strict inequalities handled by one shared
slack maximized by LP), Fourier-Motzkin projection with Gaussian use of
equalities, LP-based redundancy removal, and the strictness relaxation.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Optional

from .constraints import (CONTRADICTION, TAUTOLOGY, Conj, LinTerm, Primitive,
                          Relation, VarId, contradiction_conj, normalize)
from .simplex import LpResult, LpStatus, solve_lp

ZERO = Fraction(0)
ONE = Fraction(1)

_DELTA = ("~delta",)  # shared strictness slack; never a VarId, so no clashes


class Feasibility(Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"


@dataclass
class FeasibilityResult:
    status: Feasibility
    witness: Optional[dict[VarId, Fraction]] = None

    @property
    def feasible(self) -> bool:
        return self.status is Feasibility.FEASIBLE


def _lp_rows(primitives: Iterable[Primitive], delta: bool):
    """Translate primitives into solver rows; strict rows get +delta when asked."""
    rows = []
    for p in primitives:
        coeffs = {v: c for v, c in p.lhs.coeffs}
        rhs = -p.lhs.constant
        if p.rel is Relation.EQ:
            rows.append((coeffs, "=", rhs))
        elif p.rel is Relation.LE:
            rows.append((coeffs, "<=", rhs))
        elif p.rel is Relation.LT:
            if delta:
                coeffs = dict(coeffs)
                coeffs[_DELTA] = ONE
            rows.append((coeffs, "<=", rhs))
        else:  # pragma: no cover - normalize() removes GE/GT
            raise AssertionError(f"unnormalized relation {p.rel}")
    return rows


def feasible(c: Conj) -> FeasibilityResult:
    """Exact satisfiability over the reals, strictness respected.

    Phase-1 simplex on the non-strict system; strict primitives share one
    slack lower-bounding every strict gap, and the conjunction is feasible
    iff the maximal slack is positive.
    """
    prims = [normalize(p) for p in c.primitives]
    prims = [p for p in prims if p != TAUTOLOGY]
    if any(p == CONTRADICTION for p in prims):
        return FeasibilityResult(Feasibility.INFEASIBLE)
    if not prims:
        return FeasibilityResult(Feasibility.FEASIBLE, {})

    variables = sorted({v for p in prims for v in p.lhs.variables()},
                       key=lambda v: v.sort_key())
    has_strict = any(p.rel is Relation.LT for p in prims)
    if not has_strict:
        res = solve_lp(variables, _lp_rows(prims, delta=False), {})
        if res.status is LpStatus.INFEASIBLE:
            return FeasibilityResult(Feasibility.INFEASIBLE)
        return FeasibilityResult(Feasibility.FEASIBLE, dict(res.point))

    rows = _lp_rows(prims, delta=True)
    rows.append(({_DELTA: ONE}, "<=", ONE))  # cap so the slack LP stays bounded
    res = solve_lp(list(variables) + [_DELTA], rows, {_DELTA: ONE}, minimize=False)
    if res.status is LpStatus.INFEASIBLE or res.value <= 0:
        return FeasibilityResult(Feasibility.INFEASIBLE)
    witness = {v: q for v, q in res.point.items() if v != _DELTA}
    return FeasibilityResult(Feasibility.FEASIBLE, witness)


def _negation_rows(p: Primitive) -> list[Primitive]:
    """Primitives expressing ¬p; equalities split into the two strict sides."""
    if p.rel is Relation.LE:
        return [Primitive(-p.lhs, Relation.LT)]
    if p.rel is Relation.LT:
        return [Primitive(-p.lhs, Relation.LE)]
    return [Primitive(p.lhs, Relation.LT), Primitive(-p.lhs, Relation.LT)]


def _entailed(rest: list[Primitive], p: Primitive) -> bool:
    if p.rel is Relation.EQ:
        for side in _negation_rows(p):
            if feasible(Conj(tuple(rest) + (side,))).feasible:
                return False
        return True
    (neg,) = _negation_rows(p)
    return not feasible(Conj(tuple(rest) + (neg,))).feasible


def minimal_form(c: Conj) -> Conj:
    """Drop primitives entailed by the others; merge {t<=0, -t<=0} into t=0.

    Deterministic single pass in list order, re-testing against the shrunken
    list after each removal, so the result only depends on the input order.
    """
    prims = [normalize(p) for p in c.primitives]
    i = 0
    while i < len(prims):
        rest = prims[:i] + prims[i + 1:]
        if _entailed(rest, prims[i]):
            prims.pop(i)
        else:
            i += 1
    # Merge opposite non-strict pairs into equalities, keeping first positions.
    i = 0
    while i < len(prims):
        if prims[i].rel is Relation.LE:
            neg = normalize(Primitive(-prims[i].lhs, Relation.LE))
            for j in range(i + 1, len(prims)):
                if prims[j] == neg:
                    prims[i] = normalize(Primitive(prims[i].lhs, Relation.EQ))
                    prims.pop(j)
                    break
        i += 1
    return Conj(tuple(prims), c.provenance)


def _substitute(p: Primitive, eq: Primitive, var: VarId) -> Primitive:
    """Use the equality eq (containing var) to eliminate var from p."""
    b = p.lhs.coeff(var)
    if b == 0:
        return p
    a = eq.lhs.coeff(var)
    return normalize(Primitive(p.lhs - eq.lhs.scale(b / a), p.rel))


def _solved_form(eqs: list[Primitive], ineqs: list[Primitive]
                 ) -> Optional[tuple[list[Primitive], list[Primitive]]]:
    """Gauss-Jordan pass: each equality's leading variable is substituted out
    of every other primitive, mirroring the solved form a constraint store
    keeps. Returns None on a contradiction."""
    out: list[Primitive] = []
    pending = [p for p in eqs if p != TAUTOLOGY]
    while pending:
        eq = pending.pop(0)
        if eq == CONTRADICTION:
            return None
        if eq == TAUTOLOGY:
            continue
        pivot = eq.lhs.variables()[0]
        pending = [_substitute(p, eq, pivot) for p in pending]
        out = [_substitute(p, eq, pivot) for p in out]
        ineqs = [_substitute(p, eq, pivot) for p in ineqs]
        out.append(eq)
    ineqs = [p for p in ineqs if p != TAUTOLOGY]
    if any(p == CONTRADICTION for p in out + ineqs):
        return None
    return out, ineqs


def project(c: Conj, keep: Iterable[VarId]) -> Conj:
    """Fourier-Motzkin projection of the real solution set onto `keep`.

    Equalities are first used to substitute away eliminable variables;
    the remaining ones are eliminated pairwise, a combination being strict
    iff any contributing inequality is strict. The output is put into solved
    form (remaining equalities substituted through the inequalities) and
    passed through minimal_form. On infeasible input a canonical
    contradiction is returned.
    """
    keep_set = set(keep)
    prims = [normalize(p) for p in c.primitives]
    prims = [p for p in prims if p != TAUTOLOGY]
    if any(p == CONTRADICTION for p in prims):
        return contradiction_conj(c.provenance)

    eqs = [p for p in prims if p.rel is Relation.EQ]
    ineqs = [p for p in prims if p.rel is not Relation.EQ]

    # Gaussian substitution with equalities that mention eliminable variables.
    while True:
        pick = None
        for idx, eq in enumerate(eqs):
            cand = [v for v in eq.lhs.variables() if v not in keep_set]
            if cand:
                pick = (idx, min(cand, key=lambda v: v.sort_key()))
                break
        if pick is None:
            break
        idx, var = pick
        eq = eqs.pop(idx)
        eqs = [_substitute(p, eq, var) for p in eqs]
        ineqs = [_substitute(p, eq, var) for p in ineqs]

    # Fourier-Motzkin elimination on the inequalities.
    elim = sorted({v for p in ineqs for v in p.lhs.variables() if v not in keep_set},
                  key=lambda v: v.sort_key())
    while elim:
        def cost(v: VarId) -> tuple[int, tuple]:
            ups = sum(1 for p in ineqs if p.lhs.coeff(v) > 0)
            downs = sum(1 for p in ineqs if p.lhs.coeff(v) < 0)
            return (ups * downs, v.sort_key())

        var = min(elim, key=cost)
        elim.remove(var)
        uppers = [p for p in ineqs if p.lhs.coeff(var) > 0]
        lowers = [p for p in ineqs if p.lhs.coeff(var) < 0]
        others = [p for p in ineqs if p.lhs.coeff(var) == 0]
        combined: list[Primitive] = []
        for up in uppers:
            a = up.lhs.coeff(var)
            for lo in lowers:
                b = lo.lhs.coeff(var)
                lhs = up.lhs.scale(-b) + lo.lhs.scale(a)
                rel = (Relation.LT
                       if Relation.LT in (up.rel, lo.rel) else Relation.LE)
                combined.append(normalize(Primitive(lhs, rel)))
        ineqs = others + combined
        ineqs = [p for p in ineqs if p != TAUTOLOGY]
        if any(p == CONTRADICTION for p in ineqs):
            return contradiction_conj(c.provenance)

    # Solved form plus redundancy removal; the merge step of minimal_form can
    # create fresh equalities, so iterate to a fixpoint (primitive count only
    # ever shrinks).
    while True:
        solved = _solved_form(eqs, ineqs)
        if solved is None:
            return contradiction_conj(c.provenance)
        eqs, ineqs = solved
        reduced = minimal_form(Conj(tuple(eqs) + tuple(ineqs), c.provenance))
        new_eqs = [p for p in reduced.primitives if p.rel is Relation.EQ]
        new_ineqs = [p for p in reduced.primitives if p.rel is not Relation.EQ]
        if new_eqs == eqs and new_ineqs == ineqs:
            return reduced
        eqs, ineqs = new_eqs, new_ineqs


def relax(c: Conj, eps: Fraction | int = 0) -> Conj:
    """Replace each strict `t < 0` with `t <= eps`; eps must be nonnegative."""
    eps = Fraction(eps)
    if eps < 0:
        raise ValueError("relaxation margin must be nonnegative")
    out = []
    for p in c.primitives:
        q = normalize(p)
        if q.rel is Relation.LT:
            q = normalize(Primitive(q.lhs.shift(-eps), Relation.LE))
        out.append(q)
    return Conj(tuple(out), c.provenance)
