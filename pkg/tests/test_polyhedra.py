import random
from fractions import Fraction

import pytest

from declex.constraints import (CONTRADICTION, Conj, LinTerm, Primitive,
                                Relation, VarId, conjoin, evaluate, normalize)
from declex.polyhedra import feasible, minimal_form, project, relax
from helpers import grid_points, lin, prim, rand_conj

F = Fraction
X = VarId("I", "x")
Y = VarId("I", "y")


def negation_sides(p: Primitive) -> list[Primitive]:
    """Independent reconstruction of the negation used to certify removals."""
    if p.rel is Relation.LE:
        return [normalize(Primitive(-p.lhs, Relation.LT))]
    if p.rel is Relation.LT:
        return [normalize(Primitive(-p.lhs, Relation.LE))]
    assert p.rel is Relation.EQ
    return [normalize(Primitive(p.lhs, Relation.LT)),
            normalize(Primitive(-p.lhs, Relation.LT))]


class TestFeasible:
    def test_contradictory_strict_pair(self):
        c = Conj.of([prim({X: 1}, Relation.LT, -5), prim({X: 1}, Relation.GT, -5)])
        assert not feasible(c).feasible

    def test_worked_unsatisfiable_equality_chain(self):
        i1, i2 = VarId("I1", "x2"), VarId("I2", "x2")
        c = Conj.of([prim({i2: 1, i1: -1}, Relation.EQ),
                     prim({i1: 1}, Relation.LT, -3),
                     prim({i2: 1}, Relation.GE, -3)])
        assert not feasible(c).feasible

    def test_worked_feasible_with_witness(self):
        x1, x2 = VarId("I1", "x1"), VarId("I1", "x2")
        c = Conj.of([prim({x1: 1, x2: 1}, Relation.LT, -5),
                     prim({x1: 1}, Relation.EQ, -2),
                     prim({x2: 1}, Relation.EQ, -2)])
        res = feasible(c)
        assert res.feasible
        assert res.witness == {x1: F(2), x2: F(2)}

    def test_empty_conj_feasible(self):
        res = feasible(Conj())
        assert res.feasible and res.witness == {}

    def test_witness_soundness_random(self):
        rng = random.Random(23)
        for _ in range(300):
            c = rand_conj(rng)
            res = feasible(c)
            if res.feasible:
                assert evaluate(c, res.witness)


class TestProject:
    def test_worked_contrastive_projection(self):
        i1x1, i1x2 = VarId("I1", "x1"), VarId("I1", "x2")
        i2x1, i2x2 = VarId("I2", "x1"), VarId("I2", "x2")
        c = Conj.of([
            prim({i2x1: 1, i2x2: 1}, Relation.GE, -5),
            prim({i1x1: 1}, Relation.EQ, -2),
            prim({i1x2: 1}, Relation.EQ, -2),
            prim({i2x1: 1, i1x1: -1}, Relation.EQ),
        ])
        out = project(c, {i2x1, i2x2})
        assert set(out.primitives) == {
            prim({i2x1: 1}, Relation.EQ, -2),
            prim({i2x2: 1}, Relation.GE, -3),
        }

    def test_identity_when_nothing_eliminated(self):
        c = Conj.of([prim({X: 1}, Relation.LT, -5)])
        assert project(c, {X}).primitives == c.primitives

    def test_single_fm_step(self):
        c = Conj.of([prim({X: 1, Y: -1}, Relation.LE),  # x <= y
                     prim({Y: 1}, Relation.LE, -1)])    # y <= 1
        out = project(c, {X})
        assert out.primitives == (prim({X: 1}, Relation.LE, -1),)

    def test_strictness_propagates(self):
        c = Conj.of([prim({X: 1, Y: -1}, Relation.LT),  # x < y
                     prim({Y: 1}, Relation.LE, -1)])
        out = project(c, {X})
        assert out.primitives == (prim({X: 1}, Relation.LT, -1),)

    def test_infeasible_input_yields_contradiction(self):
        c = Conj.of([prim({X: 1}, Relation.LT), prim({X: 1}, Relation.GT)])
        out = project(c, {Y})
        assert out.is_contradiction_marker

    def test_provenance_preserved(self):
        from declex.constraints import USER_TAG
        c = Conj(tuple(Conj.of([prim({X: 1, Y: 1}, Relation.LE)]).primitives),
                 (USER_TAG,))
        assert project(c, {X}).provenance == (USER_TAG,)

    def test_sampling_oracle(self):
        """Acceptance property: witnesses restrict into the projection and
        satisfying grid points extend back to full witnesses."""
        rng = random.Random(31)
        cases = 0
        while cases < 500:
            c = rand_conj(rng, nvars=4, nprims=5)
            variables = sorted(set(c.variables()), key=lambda v: v.sort_key())
            if len(variables) < 2:
                continue
            cases += 1
            keep = variables[:rng.randint(1, min(2, len(variables) - 1))]
            projected = project(c, keep)
            res = feasible(c)
            if res.feasible:
                restricted = {v: res.witness[v] for v in keep}
                assert evaluate(projected, restricted)
            checked = 0
            for pt in grid_points(keep, -2, 2):
                if checked >= 6:
                    break
                if not evaluate(projected, pt):
                    continue
                checked += 1
                pins = [prim({v: 1}, Relation.EQ, -q) for v, q in pt.items()]
                assert feasible(Conj(c.primitives + tuple(pins))).feasible


class TestMinimalForm:
    def test_dominated_bound(self):
        c = Conj.of([prim({X: 1}, Relation.GE), prim({X: 1}, Relation.GE, -5)])
        assert minimal_form(c).primitives == (prim({X: 1}, Relation.GE, -5),)

    def test_equality_merge(self):
        c = Conj.of([prim({X: 1}, Relation.LE, -3), prim({X: 1}, Relation.GE, -3)])
        assert minimal_form(c).primitives == (prim({X: 1}, Relation.EQ, -3),)

    def test_worked_redundant_path_constraint(self):
        x1, x2 = VarId("I1", "x1"), VarId("I1", "x2")
        c = Conj.of([prim({x1: 1, x2: 1}, Relation.LT, -5),
                     prim({x1: 1}, Relation.EQ, -2),
                     prim({x2: 1}, Relation.EQ, -2)])
        assert set(minimal_form(c).primitives) == {
            prim({x1: 1}, Relation.EQ, -2), prim({x2: 1}, Relation.EQ, -2)}

    def test_solution_set_preserved(self):
        """Acceptance property: each removed primitive is entailed by what
        remains (feasibility of remainder plus its negation is Infeasible)."""
        rng = random.Random(37)
        for _ in range(500):
            c = rand_conj(rng, nvars=3, nprims=5)
            reduced = minimal_form(c)
            removed = [p for p in c.primitives if p not in reduced.primitives]
            for p in removed:
                for side in negation_sides(p):
                    assert not feasible(
                        Conj(reduced.primitives + (side,))).feasible


class TestRelax:
    def test_zero_margin_drops_strictness(self):
        c = Conj.of([prim({X: 1}, Relation.LT, -5)])
        assert relax(c, 0).primitives == (prim({X: 1}, Relation.LE, -5),)

    def test_margin_widens(self):
        c = Conj.of([prim({X: 1}, Relation.LT, -5)])
        assert relax(c, F(1, 100)).primitives == (
            prim({X: 1}, Relation.LE, F(-501, 100)),)

    def test_nonstrict_untouched(self):
        c = Conj.of([prim({X: 1}, Relation.LE, -5), prim({Y: 1}, Relation.EQ, -2)])
        assert relax(c, 1).primitives == c.primitives

    def test_negative_margin_rejected(self):
        with pytest.raises(ValueError):
            relax(Conj(), -1)

    def test_monotone(self):
        """Acceptance property: every solution survives any nonnegative margin."""
        rng = random.Random(41)
        cases = 0
        while cases < 500:
            c = rand_conj(rng, nvars=3, nprims=4)
            res = feasible(c)
            if not res.feasible:
                continue
            cases += 1
            for eps in (F(0), F(1, 7), F(2)):
                assert evaluate(relax(c, eps), res.witness)
