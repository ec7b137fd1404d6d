"""Infimum of a linear objective over a conjunction with integer variables.

Depth-first branch-and-bound on the exact LP relaxation: branch on the most
fractional integer variable (ties by variable order), floor branch first,
prune on bound >= incumbent. Exactly one integer witness is returned - the
first found under that deterministic order - with no enumeration of
alternative optima.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from math import floor
from typing import Iterable, Optional

from .constraints import Conj, LinTerm, Primitive, Relation, VarId, normalize
from .constraints import CONTRADICTION, TAUTOLOGY
from .simplex import LpStatus, solve_lp

ZERO = Fraction(0)
ONE = Fraction(1)
HALF = Fraction(1, 2)

_NODE_LIMIT = 200_000


class MilpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class MilpResult:
    status: MilpStatus
    value: Optional[Fraction] = None
    int_witness: Optional[dict[VarId, Fraction]] = None
    strict_coerced: bool = False


class SearchBudgetExceeded(RuntimeError):
    """Raised when branch-and-bound explores too many nodes; integer
    variables are expected to carry finite bounds (implicit constraints)."""


def _base_rows(c: Conj) -> tuple[list, bool]:
    rows = []
    coerced = False
    for p in c.primitives:
        q = normalize(p)
        if q == TAUTOLOGY:
            continue
        if q == CONTRADICTION:
            return None, coerced
        coeffs = {v: k for v, k in q.lhs.coeffs}
        rhs = -q.lhs.constant
        if q.rel is Relation.EQ:
            rows.append((coeffs, "=", rhs))
        else:
            if q.rel is Relation.LT:
                coerced = True
            rows.append((coeffs, "<=", rhs))
    return rows, coerced


def bb_inf(c: Conj, int_vars: Iterable[VarId], objective: LinTerm) -> MilpResult:
    """Minimum of `objective` over c with the given variables integral.

    Strict inequalities are expected to have been relaxed away upstream; any
    still present are treated as non-strict and flagged via strict_coerced.
    """
    ints = sorted(set(int_vars), key=lambda v: v.sort_key())
    rows, coerced = _base_rows(c)
    if rows is None:
        return MilpResult(MilpStatus.INFEASIBLE, strict_coerced=coerced)

    variables = sorted({v for p in c.primitives for v in p.lhs.variables()}
                       | set(objective.variables()) | set(ints),
                       key=lambda v: v.sort_key())
    obj = {v: k for v, k in objective.coeffs}

    incumbent_value: Optional[Fraction] = None
    incumbent_point: Optional[dict[VarId, Fraction]] = None

    stack: list[list] = [[]]
    explored = 0
    while stack:
        extra = stack.pop()
        explored += 1
        if explored > _NODE_LIMIT:
            raise SearchBudgetExceeded(
                "branch-and-bound node limit exceeded; are all integer "
                "variables bounded?")
        res = solve_lp(variables, rows + extra, obj)
        if res.status is LpStatus.INFEASIBLE:
            continue
        if res.status is LpStatus.UNBOUNDED:
            return MilpResult(MilpStatus.UNBOUNDED, strict_coerced=coerced)
        if incumbent_value is not None and res.value >= incumbent_value:
            continue
        fractional = [(v, res.point[v]) for v in ints
                      if res.point[v].denominator != 1]
        if not fractional:
            incumbent_value = res.value
            incumbent_point = dict(res.point)
            continue
        var, val = min(fractional,
                       key=lambda it: (abs(it[1] - floor(it[1]) - HALF),
                                       it[0].sort_key()))
        lo = Fraction(floor(val))
        ceil_row = ({var: -ONE}, "<=", -(lo + 1))
        floor_row = ({var: ONE}, "<=", lo)
        stack.append(extra + [ceil_row])   # explored after the floor branch
        stack.append(extra + [floor_row])

    if incumbent_value is None:
        return MilpResult(MilpStatus.INFEASIBLE, strict_coerced=coerced)
    witness = {v: incumbent_point.get(v, ZERO) for v in ints}
    return MilpResult(MilpStatus.OPTIMAL, incumbent_value, witness, coerced)


def int_feasible(c: Conj, int_vars: Iterable[VarId]) -> bool:
    """True iff a mixed solution exists (constant-zero objective minimum)."""
    res = bb_inf(c, int_vars, LinTerm.const(0))
    return res.status is MilpStatus.OPTIMAL


def mixed_witness(c: Conj, int_vars: Iterable[VarId]) -> Optional[dict[VarId, Fraction]]:
    """A full rational point satisfying c (non-strictly) with integral values
    on int_vars, or None. Used by callers that need to re-check solutions."""
    from .polyhedra import feasible  # local import to avoid a cycle

    res = bb_inf(c, int_vars, LinTerm.const(0))
    if res.status is not MilpStatus.OPTIMAL:
        return None
    pins = tuple(normalize(Primitive(LinTerm.of_var(v) - LinTerm.const(q), Relation.EQ))
                 for v, q in res.int_witness.items())
    relaxed = [normalize(p) for p in c.primitives]
    relaxed = [Primitive(p.lhs, Relation.LE) if p.rel is Relation.LT else p
               for p in relaxed]
    check = feasible(Conj(tuple(relaxed) + pins))
    return check.witness if check.feasible else None
