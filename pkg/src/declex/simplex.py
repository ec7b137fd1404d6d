"""Exact two-phase simplex over rationals.

Small dense tableau implementation used by the feasibility, projection
redundancy and branch-and-bound code. Variables are free (each one is split
into a nonnegative pair internally) and pivoting follows Bland's rule, which
terminates with exact arithmetic.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Hashable, Mapping, Optional, Sequence

Row = tuple[Mapping[Hashable, Fraction], str, Fraction]  # (coeffs, "<=" or "=", rhs)


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class LpResult:
    status: LpStatus
    value: Optional[Fraction] = None
    point: Optional[dict[Hashable, Fraction]] = None


ZERO = Fraction(0)
ONE = Fraction(1)


class _Tableau:
    def __init__(self, nrows: int, ncols: int):
        self.a = [[ZERO] * ncols for _ in range(nrows)]
        self.b = [ZERO] * nrows
        self.basis = [-1] * nrows
        self.ncols = ncols

    def pivot(self, row: int, col: int) -> None:
        piv = self.a[row][col]
        inv = ONE / piv
        arow = self.a[row]
        for j in range(self.ncols):
            if arow[j] != 0:
                arow[j] *= inv
        self.b[row] *= inv
        for i in range(len(self.a)):
            if i == row:
                continue
            factor = self.a[i][col]
            if factor == 0:
                continue
            target = self.a[i]
            for j in range(self.ncols):
                if arow[j] != 0:
                    target[j] -= factor * arow[j]
            self.b[i] -= factor * self.b[row]
        self.basis[row] = col

    def reduced_costs(self, cost: list[Fraction]) -> list[Fraction]:
        red = list(cost)
        for i, bcol in enumerate(self.basis):
            cb = cost[bcol]
            if cb == 0:
                continue
            arow = self.a[i]
            for j in range(self.ncols):
                if arow[j] != 0:
                    red[j] -= cb * arow[j]
        return red

    def objective(self, cost: list[Fraction]) -> Fraction:
        return sum((cost[col] * self.b[i] for i, col in enumerate(self.basis)), ZERO)

    def minimize(self, cost: list[Fraction]) -> LpStatus:
        """Bland's rule: lowest eligible entering column, lowest basic column on ties."""
        while True:
            red = self.reduced_costs(cost)
            enter = -1
            for j in range(self.ncols):
                if red[j] < 0:
                    enter = j
                    break
            if enter < 0:
                return LpStatus.OPTIMAL
            leave = -1
            best: Optional[Fraction] = None
            for i in range(len(self.a)):
                aij = self.a[i][enter]
                if aij > 0:
                    ratio = self.b[i] / aij
                    if best is None or ratio < best or (
                            ratio == best and self.basis[i] < self.basis[leave]):
                        best = ratio
                        leave = i
            if leave < 0:
                return LpStatus.UNBOUNDED
            self.pivot(leave, enter)


def solve_lp(variables: Sequence[Hashable],
             rows: Sequence[Row],
             objective: Mapping[Hashable, Fraction],
             minimize: bool = True) -> LpResult:
    """Minimize (or maximize) a linear objective subject to `<=` / `=` rows.

    `variables` fixes the (deterministic) column order; every variable is
    unrestricted in sign. Returns an optimal vertex assignment on success.
    """
    var_index = {v: i for i, v in enumerate(variables)}
    for coeffs, _, _ in rows:
        for v in coeffs:
            if v not in var_index:
                raise ValueError(f"row references unknown variable {v!r}")
    for v in objective:
        if v not in var_index:
            raise ValueError(f"objective references unknown variable {v!r}")

    nvars = len(variables)
    nrows = len(rows)
    # Columns: x+ / x- pairs, then one slack per inequality, then artificials.
    nslacks = sum(1 for _, op, _ in rows if op == "<=")
    base_cols = 2 * nvars + nslacks
    ncols = base_cols + nrows  # worst case: one artificial per row

    t = _Tableau(nrows, ncols)
    slack_at = 0
    art_cols: list[int] = []
    for i, (coeffs, op, rhs) in enumerate(rows):
        sign = ONE
        if rhs < 0:
            sign = -ONE
        for v, c in coeffs.items():
            j = var_index[v]
            t.a[i][2 * j] += sign * c
            t.a[i][2 * j + 1] -= sign * c
        t.b[i] = sign * rhs
        slack_col = -1
        if op == "<=":
            slack_col = 2 * nvars + slack_at
            t.a[i][slack_col] = sign
            slack_at += 1
        elif op != "=":
            raise ValueError(f"unsupported row operator {op!r}")
        if slack_col >= 0 and sign == ONE:
            t.basis[i] = slack_col
        else:
            art = base_cols + len(art_cols)
            t.a[i][art] = ONE
            t.basis[i] = art
            art_cols.append(art)

    # Phase 1: drive artificials to zero, then drop their columns entirely
    # (a positive phase-2 cost is not enough to keep them out of the basis).
    if art_cols:
        phase1 = [ZERO] * ncols
        for col in art_cols:
            phase1[col] = ONE
        status = t.minimize(phase1)
        assert status is LpStatus.OPTIMAL  # bounded below by zero
        if t.objective(phase1) > 0:
            return LpResult(LpStatus.INFEASIBLE)
        for i, col in enumerate(t.basis):
            if col in art_cols:
                # Degenerate artificial still basic: pivot it out if possible.
                for j in range(base_cols):
                    if t.a[i][j] != 0:
                        t.pivot(i, j)
                        break
    keep_rows = [i for i, col in enumerate(t.basis) if col < base_cols]
    t.a = [t.a[i][:base_cols] for i in keep_rows]
    t.b = [t.b[i] for i in keep_rows]
    t.basis = [t.basis[i] for i in keep_rows]
    t.ncols = base_cols

    cost = [ZERO] * base_cols
    for v, c in objective.items():
        j = var_index[v]
        c = Fraction(c) if minimize else -Fraction(c)
        cost[2 * j] += c
        cost[2 * j + 1] -= c

    status = t.minimize(cost)
    if status is LpStatus.UNBOUNDED:
        return LpResult(LpStatus.UNBOUNDED)

    values = [ZERO] * base_cols
    for i, col in enumerate(t.basis):
        values[col] = t.b[i]
    point = {v: values[2 * j] - values[2 * j + 1] for v, j in var_index.items()}
    value = sum((Fraction(c) * point[v] for v, c in objective.items()), ZERO)
    return LpResult(LpStatus.OPTIMAL, value, point)
