"""Shared fixtures: small trees, schemas, random-system generators and the
independent brute-force oracles used by the property and acceptance suites."""
from __future__ import annotations

import random
from fractions import Fraction
from itertools import product as iproduct

from declex.constraints import (Conj, LinTerm, Primitive, Relation, VarId,
                                normalize)
from declex.model import Feature, FeatureSchema, tree_from_json
from declex.simplex import LpStatus, solve_lp

F = Fraction


def continuous_schema(names, target="cls"):
    return FeatureSchema([Feature(n, "continuous") for n in names], target)


def threshold_tree(tree_id: str, threshold, below_label="0", above_label="1"):
    """Single split x1+x2 < threshold: the below side carries below_label."""
    return tree_from_json({
        "tree_id": tree_id,
        "root": {
            "split": {"coeffs": {"x1": -1, "x2": -1}, "op": "<=",
                      "threshold": -threshold},
            "left": {"leaf": {"counts": {above_label: 10}}},
            "right": {"leaf": {"counts": {below_label: 10}}},
        },
    })


def cup_tree():
    """Root: T1+T2 <= 0 -> "not liquid"; else T1+T2 >= 100 -> "not liquid",
    complement (T1+T2 < 100) -> "liquid"."""
    return tree_from_json({
        "tree_id": "CUP",
        "root": {
            "split": {"coeffs": {"T1": 1, "T2": 1}, "op": "<=", "threshold": 0},
            "left": {"leaf": {"counts": {"not liquid": 5}}},
            "right": {
                "split": {"coeffs": {"T1": -1, "T2": -1}, "op": "<=",
                          "threshold": -100},
                "left": {"leaf": {"counts": {"not liquid": 5}}},
                "right": {"leaf": {"counts": {"liquid": 5}}},
            },
        },
    })


def cup_schema():
    return FeatureSchema([Feature("T1", "continuous"), Feature("T2", "continuous")],
                         "state")


def lin(coeffs, const=0):
    return LinTerm.build({v: F(k) for v, k in coeffs.items()}, F(const))


def prim(coeffs, rel, const=0):
    return normalize(Primitive(lin(coeffs, const), rel))


def rand_conj(rng: random.Random, nvars=4, nprims=6, coef_range=3,
              relations=(Relation.LT, Relation.LE, Relation.EQ,
                         Relation.GE, Relation.GT),
              instance="I") -> Conj:
    variables = [VarId(instance, f"x{i}") for i in range(rng.randint(1, nvars))]
    prims = []
    for _ in range(rng.randint(1, nprims)):
        coeffs = {}
        for v in variables:
            k = rng.randint(-coef_range, coef_range)
            if k:
                coeffs[v] = F(k)
        if not coeffs:
            coeffs[rng.choice(variables)] = F(rng.choice([-2, -1, 1, 2]))
        const = F(rng.randint(-coef_range, coef_range))
        rel = rng.choice(relations)
        prims.append(Primitive(LinTerm.build(coeffs, const), rel))
    return Conj.of(prims)


def grid_points(variables, lo=-3, hi=3):
    for combo in iproduct(range(lo, hi + 1), repeat=len(variables)):
        yield {v: F(k) for v, k in zip(variables, combo)}


# --- independent MILP oracle -------------------------------------------------

def grid_milp_oracle(conj: Conj, int_vars, bounds, objective: LinTerm):
    """Brute-force minimum over the integer grid of per-assignment LP infima.

    `bounds` maps each integer variable to an inclusive (lo, hi) range. The
    continuous remainder of each grounded system is solved as a plain LP.
    Returns the optimal value or None when no grounding is feasible.
    """
    int_vars = sorted(set(int_vars), key=lambda v: v.sort_key())
    all_vars = sorted(set(conj.variables()) | set(objective.variables())
                      | set(int_vars), key=lambda v: v.sort_key())
    rows = []
    for p in conj.primitives:
        q = normalize(p)
        coeffs = {v: k for v, k in q.lhs.coeffs}
        rhs = -q.lhs.constant
        rows.append((coeffs, "=" if q.rel is Relation.EQ else "<=", rhs))
    best = None
    ranges = [range(bounds[v][0], bounds[v][1] + 1) for v in int_vars]
    for combo in iproduct(*ranges):
        pins = [({v: F(1)}, "=", F(k)) for v, k in zip(int_vars, combo)]
        res = solve_lp(all_vars, rows + pins,
                       {v: k for v, k in objective.coeffs})
        if res.status is LpStatus.OPTIMAL:
            value = res.value + objective.constant
            if best is None or value < best:
                best = value
    return best


# --- independent diversity oracle ----------------------------------------------

def diversity_oracle(prox, pair, size, lam):
    """Exhaustive minimum of the proximity/diversity objective over all
    subsets, ties resolved by lexicographic index order."""
    from itertools import combinations

    def score(idx):
        k = len(idx)
        proximity = sum((prox[i] for i in idx), F(0))
        spread = sum((pair[i][j] for i in idx for j in idx), F(0))
        return F(lam) / k * proximity - F(1, k * k) * spread

    best = None
    for subset in combinations(range(len(prox)), size):
        s = score(subset)
        if best is None or s < best[0]:
            best = (s, subset)
    return list(best[1])
