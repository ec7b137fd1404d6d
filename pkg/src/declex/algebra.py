"""AST and interpreter for the closed query algebra over constraint theories.

Expressions evaluate to a list of disjuncts (conjunctions with provenance),
in a deterministic order: path order per tree, instance order, left-to-right
cross products. Every operator consumes and produces theory-shaped values,
so results can feed back into further expressions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Mapping, Optional, Sequence, Union

from .constraints import (DISTANCE_TAG, Conj, LinTerm, Primitive, Relation,
                          VarId, conjoin, contradiction_conj, format_rat,
                          normalize)
from .milp import MilpStatus, bb_inf, int_feasible
from .model import PathFact, instantiate
from .polyhedra import feasible, project, relax


class AlgebraError(Exception):
    pass


@dataclass(frozen=True)
class Inst:
    instance: str
    tree_id: str
    label: str
    minconf: Fraction = Fraction(0)


@dataclass(frozen=True)
class UserC:
    pass


@dataclass(frozen=True)
class TypeC:
    pass


@dataclass(frozen=True)
class Lit:
    conj: Conj


@dataclass(frozen=True)
class Cross:
    parts: tuple["Expr", ...]


@dataclass(frozen=True)
class Sat:
    inner: "Expr"


@dataclass(frozen=True)
class Project:
    inner: "Expr"
    keep: frozenset[VarId]


@dataclass(frozen=True)
class Relax:
    inner: "Expr"
    eps: Fraction = Fraction(0)


@dataclass(frozen=True)
class Inf:
    inner: "Expr"
    objective: LinTerm
    aux: tuple[Primitive, ...] = ()


Expr = Union[Inst, UserC, TypeC, Lit, Cross, Sat, Project, Relax, Inf]


@dataclass
class EvalContext:
    trees: Mapping[str, Sequence[PathFact]]
    instances: Sequence[str]
    user_constraints: Conj
    implicit_constraints: Conj
    integer_vars: frozenset[VarId] = frozenset()


@dataclass
class Disjunct:
    conj: Conj
    min_value: Optional[Fraction] = None


def solve(e: Expr, ctx: EvalContext) -> list[Disjunct]:
    if isinstance(e, Inst):
        if e.tree_id not in ctx.trees:
            raise AlgebraError(f"unknown tree {e.tree_id!r}")
        if e.instance not in ctx.instances:
            raise AlgebraError(f"unknown instance {e.instance!r}")
        out = []
        for pf in ctx.trees[e.tree_id]:
            if pf.label == e.label and pf.confidence >= e.minconf:
                out.append(Disjunct(instantiate(pf, e.instance)))
        return out

    if isinstance(e, UserC):
        return [Disjunct(ctx.user_constraints)]

    if isinstance(e, TypeC):
        return [Disjunct(ctx.implicit_constraints)]

    if isinstance(e, Lit):
        return [Disjunct(e.conj)]

    if isinstance(e, Cross):
        theories = [solve(part, ctx) for part in e.parts]
        out = []
        for combo in product(*theories):
            conj = Conj()
            for d in combo:
                conj = conjoin(conj, d.conj)
            values = [d.min_value for d in combo if d.min_value is not None]
            out.append(Disjunct(conj, sum(values) if values else None))
        return out

    if isinstance(e, Sat):
        out = []
        for d in solve(e.inner, ctx):
            if not feasible(d.conj).feasible:
                continue
            ints = ctx.integer_vars & set(d.conj.variables())
            if ints and not int_feasible(d.conj, ints):
                continue
            out.append(d)
        return out

    if isinstance(e, Project):
        for var in e.keep:
            if var.instance not in ctx.instances:
                raise AlgebraError(
                    f"projection keeps variable of unknown instance {var.instance!r}")
        return [Disjunct(project(d.conj, e.keep), d.min_value)
                for d in solve(e.inner, ctx)]

    if isinstance(e, Relax):
        return [Disjunct(relax(d.conj, e.eps), d.min_value)
                for d in solve(e.inner, ctx)]

    if isinstance(e, Inf):
        aux_conj = Conj.of(e.aux, (DISTANCE_TAG,))
        out = []
        for d in solve(e.inner, ctx):
            work = conjoin(d.conj, aux_conj)
            ints = ctx.integer_vars & set(work.variables())
            res = bb_inf(work, ints, e.objective)
            if res.status is MilpStatus.INFEASIBLE:
                continue
            if res.status is MilpStatus.UNBOUNDED:
                out.append(Disjunct(contradiction_conj(work.provenance)))
                continue
            pins = [normalize(Primitive(e.objective - LinTerm.const(res.value),
                                        Relation.EQ))]
            for var, val in sorted(res.int_witness.items(),
                                   key=lambda kv: kv[0].sort_key()):
                pins.append(normalize(Primitive(
                    LinTerm.of_var(var) - LinTerm.const(val), Relation.EQ)))
            grounded = conjoin(work, Conj(tuple(pins), (DISTANCE_TAG,)))
            out.append(Disjunct(grounded, res.value))
        return out

    raise AlgebraError(f"unknown expression node {type(e).__name__}")


def format_expr(e: Expr) -> str:
    """Prefix-notation text form for logging and query replay."""
    if isinstance(e, Inst):
        return (f"inst({e.instance},{e.tree_id},{e.label},"
                f"{format_rat(e.minconf)})")
    if isinstance(e, UserC):
        return "userc"
    if isinstance(e, TypeC):
        return "typec"
    if isinstance(e, Lit):
        from .constraints import render_conj
        return "{" + render_conj(e.conj) + "}"
    if isinstance(e, Cross):
        return "cross(" + ",".join(format_expr(p) for p in e.parts) + ")"
    if isinstance(e, Sat):
        return f"sat({format_expr(e.inner)})"
    if isinstance(e, Project):
        keys = ",".join(str(v) for v in sorted(e.keep, key=lambda v: v.sort_key()))
        return f"project([{keys}],{format_expr(e.inner)})"
    if isinstance(e, Relax):
        return f"relax({format_expr(e.inner)},{format_rat(e.eps)})"
    if isinstance(e, Inf):
        return f"inf({format_expr(e.inner)})"
    raise AlgebraError(f"unknown expression node {type(e).__name__}")
