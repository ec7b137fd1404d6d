import json
import random
from fractions import Fraction

import pytest

from declex.constraints import Conj, Relation, VarId, evaluate
from declex.model import Feature, FeatureSchema, tree_from_json
from declex.parser import ParseError
from declex.session import (AnswerBundle, DistanceSpec, Session, SessionError,
                            confidence_str, structured_record,
                            transcript_lines)
from helpers import (continuous_schema, diversity_oracle, prim,
                     threshold_tree)

F = Fraction
MINCONF = F(19, 20)


def synthetic_session():
    s = Session(continuous_schema(["x1", "x2"]))
    s.add_model(threshold_tree("DT1", 5))
    return s


def adult_schema():
    return FeatureSchema([
        Feature("age", "continuous", norm_range=(F(17), F(90))),
        Feature("education", "ordinal", bounds=(1, 16), norm_range=(F(1), F(16))),
        Feature("sex", "nominal", values=("Male", "Female")),
    ], "income")


class TestParseConstraint:
    def setup_method(self):
        self.s = synthetic_session()
        self.s.declare_instance("F", "0", features=[2, 2])
        self.s.declare_instance("CE", "1")

    def test_equality_between_instances(self):
        conj = self.s.parse_constraint("CE.x2 = F.x2")
        a, b = VarId("CE", "x2"), VarId("F", "x2")
        assert conj.primitives == (prim({a: 1, b: -1}, Relation.EQ),)

    def test_ge_between_instances(self):
        conj = self.s.parse_constraint("CE.x1 >= F.x1")
        a, b = VarId("CE", "x1"), VarId("F", "x1")
        assert conj.primitives == (prim({a: -1, b: 1}, Relation.LE),)

    def test_decimal_scalar_coefficient(self):
        conj = self.s.parse_constraint("CE.x1 = 1.16 * CE.x2")
        a, b = VarId("CE", "x1"), VarId("CE", "x2")
        (p,) = conj.primitives
        assert p.rel is Relation.EQ
        ratio = -p.lhs.coeff(b) / p.lhs.coeff(a)
        assert ratio == F(29, 25)

    def test_currency_symbol_feature_names(self):
        s = Session(continuous_schema(["€", "$"]))
        s.add_model(threshold_tree("DT1", 5))
        s.declare_instance("CE", "0")
        conj = s.parse_constraint("CE.€ = 1.16 * CE.$")
        (p,) = conj.primitives
        eur, usd = VarId("CE", "€"), VarId("CE", "$")
        assert -p.lhs.coeff(usd) / p.lhs.coeff(eur) == F(29, 25)

    def test_comma_separated_and_parentheses(self):
        conj = self.s.parse_constraint("F.x1 >= 1, 2*(CE.x1 - F.x1) <= 3")
        assert len(conj.primitives) == 2

    def test_rational_literal(self):
        conj = self.s.parse_constraint("CE.x1 = 1/3")
        (p,) = conj.primitives
        assert p.holds_at({VarId("CE", "x1"): F(1, 3)})

    def test_syntax_error_reports_position(self):
        with pytest.raises(ParseError) as err:
            self.s.parse_constraint("CE.x1 = * 2")
        assert err.value.pos == 8

    def test_unknown_instance_rejected(self):
        with pytest.raises(ParseError):
            self.s.parse_constraint("GHOST.x1 = 2")

    def test_unknown_feature_rejected(self):
        with pytest.raises(ParseError):
            self.s.parse_constraint("CE.bogus = 2")


class TestNominalConstraints:
    def setup_method(self):
        self.s = Session(adult_schema())
        self.s.add_model(threshold_tree("DT1", 5))  # splits never consulted here

    def test_value_sugar_sets_indicator(self):
        self.s.declare_instance("F", "0")
        conj = self.s.parse_constraint("F.sex = Female")
        ind = VarId("F", "sex", "Female")
        assert conj.primitives == (prim({ind: 1}, Relation.EQ, -1),)

    def test_unknown_value_rejected(self):
        self.s.declare_instance("F", "0")
        with pytest.raises(ParseError):
            self.s.parse_constraint("F.sex = Blue")

    def test_instance_equality_expands_per_value(self):
        self.s.declare_instance("F", "0")
        self.s.declare_instance("CE", "1")
        conj = self.s.parse_constraint("CE.sex = F.sex")
        assert len(conj.primitives) == 2

    def test_indicator_form_round_trips(self):
        self.s.declare_instance("F", "0")
        conj = self.s.parse_constraint("F.sex^Female = 1")
        ind = VarId("F", "sex", "Female")
        assert conj.primitives == (prim({ind: 1}, Relation.EQ, -1),)


class TestDeclareInstance:
    def test_fixed_features_become_equalities(self):
        s = synthetic_session()
        s.declare_instance("F", "0", features=[1100, 661])
        assert [e.text for e in s.constraints] == ["F.x1=1100", "F.x2=661"]

    def test_underspecified_instance_has_no_equalities(self):
        s = synthetic_session()
        s.declare_instance("CE", "1", minconf=F(8, 10))
        assert s.constraints == []
        assert s.instances["CE"].minconf == F(8, 10)

    def test_redeclare_rejected(self):
        s = synthetic_session()
        s.declare_instance("F", "0")
        with pytest.raises(SessionError):
            s.declare_instance("F", "1")

    def test_nominal_fixed_value_checked(self):
        s = Session(adult_schema())
        s.add_model(threshold_tree("DT1", 5))
        with pytest.raises(SessionError):
            s.declare_instance("F", "0", features={"sex": "Blue"})


class TestImplicitConstraints:
    def test_nominal_block(self):
        s = Session(adult_schema())
        s.add_model(threshold_tree("DT1", 5))
        s.declare_instance("I", "0")
        conj = s.implicit_constraints()
        male = VarId("I", "sex", "Male")
        female = VarId("I", "sex", "Female")
        assert prim({male: 1, female: 1}, Relation.EQ, -1) in conj.primitives
        assert prim({male: 1}, Relation.GE) in conj.primitives
        assert prim({female: 1}, Relation.LE, -1) in conj.primitives
        assert {male, female} <= s.integer_vars()

    def test_ordinal_bounds(self):
        s = Session(adult_schema())
        s.add_model(threshold_tree("DT1", 5))
        s.declare_instance("I", "0")
        conj = s.implicit_constraints()
        edu = VarId("I", "education")
        assert prim({edu: 1}, Relation.GE, -1) in conj.primitives
        assert prim({edu: 1}, Relation.LE, -16) in conj.primitives
        assert edu in s.integer_vars()

    def test_continuous_unconstrained(self):
        s = Session(adult_schema())
        s.add_model(threshold_tree("DT1", 5))
        s.declare_instance("I", "0")
        age = VarId("I", "age")
        assert all(age not in p.lhs.variables()
                   for p in s.implicit_constraints().primitives)
        assert age not in s.integer_vars()


class TestSolveopt:
    def test_minimal_contrastive_worked_example(self):
        s = synthetic_session()
        s.declare_instance("F", "0", minconf=MINCONF, features=[2, 2])
        s.declare_instance("CE", "1", minconf=MINCONF)
        s.constraint("CE.x1 = F.x1")
        bundle = s.solveopt(minimize="l1norm(F,CE)", project=["CE"])
        assert len(bundle.items) == 1
        item = bundle.items[0]
        assert item.constraints == ["CE.x1=2", "CE.x2=3"]
        assert item.min_value == 1

    def test_no_answer_on_infeasible_constraint(self):
        s = synthetic_session()
        s.declare_instance("F", "0", minconf=MINCONF, features=[2, 2])
        s.declare_instance("CE", "1", minconf=MINCONF)
        s.constraint("CE.x1 = F.x1, CE.x2 = F.x2")
        bundle = s.solveopt()
        assert bundle.no_answer
        assert transcript_lines(bundle) == ["No answer."]

    def test_single_instance_factual(self):
        s = synthetic_session()
        s.declare_instance("F", "0", minconf=MINCONF, features=[2, 2])
        bundle = s.solveopt()
        assert len(bundle.items) == 1
        item = bundle.items[0]
        assert item.constraints == ["F.x1=2", "F.x2=2"]
        (rule,) = item.rules
        assert rule.render() == "IF F.x1+F.x2<5 THEN class 0 [1.0]"

    def test_under_specified_factual(self):
        s = synthetic_session()
        s.declare_instance("F", "0", minconf=MINCONF)
        s.constraint("F.x1 = 2")
        bundle = s.solveopt()
        assert bundle.items[0].constraints == ["F.x1=2", "F.x2<3"]

    def test_global_optimum_filter(self):
        tree = tree_from_json({
            "tree_id": "T",
            "root": {"split": {"coeffs": {"x1": 1}, "op": "<=", "threshold": 0},
                     "left": {"leaf": {"counts": {"1": 5}}},
                     "right": {
                         "split": {"coeffs": {"x1": -1}, "op": "<=",
                                   "threshold": -10},
                         "left": {"leaf": {"counts": {"1": 5}}},
                         "right": {"leaf": {"counts": {"0": 5}}}}}})
        s = Session(continuous_schema(["x1", "x2"]))
        s.add_model(tree)
        s.declare_instance("F", "0", features=[2, 0])
        s.declare_instance("CE", "1")
        both = s.solveopt(minimize="l1norm(F,CE)", project=["CE"])
        assert sorted(i.min_value for i in both.items) == [F(2), F(8)]
        only_best = s.solveopt(minimize="l1norm(F,CE)", project=["CE"],
                               global_opt=True)
        assert [i.min_value for i in only_best.items] == [F(2)]

    def test_answer_feedback_reproduces_two_model_intersection(self):
        """Feed one model's contrastive answer back as user constraints and
        query the second model: the result must be the pairwise intersection."""
        first = synthetic_session()
        first.declare_instance("F", "0", minconf=MINCONF, features=[2, 2])
        first.declare_instance("CE", "1", minconf=MINCONF)
        first.constraint("CE.x1 = F.x1")
        answer = first.solveopt(project=["CE"])
        fed_back = ",".join(answer.items[0].constraints)

        second = Session(continuous_schema(["x1", "x2"]))
        second.add_model(threshold_tree("DT2", 6))
        second.declare_instance("F", "0", minconf=MINCONF, features=[2, 2])
        second.declare_instance("CE", "1", minconf=MINCONF)
        second.constraint("CE.x1 = F.x1")
        second.constraint(fed_back)
        bundle = second.solveopt(project=["CE"])
        assert bundle.items[0].constraints == ["CE.x1=2", "CE.x2>=4"]
        # each surviving answer is feasible under both models' path constraints
        from declex.polyhedra import feasible
        from declex.model import extract_paths, instantiate
        ce_path_dt1 = next(
            instantiate(pf, "CE")
            for pf in extract_paths(threshold_tree("DT1", 5)) if pf.label == "1")
        for item in bundle.items:
            joined = Conj(item.conj.primitives + ce_path_dt1.primitives)
            assert feasible(joined).feasible

    def test_nominal_answers_decode(self):
        tree = tree_from_json({
            "tree_id": "N",
            "root": {"split": {"coeffs": {"sex^Female": 1}, "op": "=",
                               "threshold": 1},
                     "left": {"leaf": {"counts": {"1": 4}}},
                     "right": {"leaf": {"counts": {"0": 4}}}}})
        s = Session(adult_schema())
        s.add_model(tree)
        s.declare_instance("F", "0", features={"age": 30, "education": 9,
                                               "sex": "Male"})
        s.declare_instance("CE", "1")
        bundle = s.solveopt(minimize="l1norm(F,CE)", project=["CE"])
        (item,) = bundle.items
        assert "CE.sex=Female" in item.constraints
        # one-hot: two indicator flips at weight 1/2 each
        assert item.min_value == 1

    def test_eps_margin_allows_boundary(self):
        s = synthetic_session()
        s.declare_instance("F", "0", minconf=MINCONF)
        s.constraint("F.x1 = 2")
        s.declare_instance("CE", "1", minconf=MINCONF)
        s.constraint("CE.x1 = F.x1")
        strict = s.solveopt(minimize="l1norm(F,CE)", project=["CE"], eps=0)
        wide = s.solveopt(minimize="l1norm(F,CE)", project=["CE"],
                          eps="0.01")
        assert strict.items[0].constraints == ["CE.x1=2", "CE.x2=3"]
        assert wide.items[0].min_value == 0  # margin lets F sit on the split


class TestDistance:
    def test_identical_fixed_instances_reach_zero(self):
        s = synthetic_session()
        s.declare_instance("F", "0", features=[2, 2])
        s.declare_instance("G", "0", features=[2, 2])
        bundle = s.solveopt(minimize="l1norm(F,G)")
        assert bundle.items[0].min_value == 0

    def test_weights_from_normalization_range(self):
        spec = DistanceSpec.build(adult_schema(), "l1", ("F", "CE"))
        assert spec.weight("age") == F(1, 73)
        assert spec.weight("education") == F(1, 15)
        assert spec.weight("sex") == F(1, 2)
        linf = DistanceSpec.build(adult_schema(), "linf", ("F", "CE"))
        assert linf.weight("sex") == 1

    def test_nominal_point_distances(self):
        s = Session(adult_schema())
        a = {"age": F(30), "education": F(9), "sex": "Male"}
        b = {"age": F(30), "education": F(9), "sex": "Female"}
        l1 = DistanceSpec.build(adult_schema(), "l1", ("F", "CE"))
        linf = DistanceSpec.build(adult_schema(), "linf", ("F", "CE"))
        assert s.point_distance(a, b, l1) == 1
        assert s.point_distance(a, b, linf) == 1
        assert s.point_distance(a, a, l1) == 0


class TestSelectDiverse:
    def setup_method(self):
        self.s = Session(continuous_schema(["x1", "x2"]))
        self.spec = DistanceSpec.build(self.s.schema, "l1", ("F", "CE"))

    def pool(self, rng, n):
        return [{"x1": F(rng.randint(-10, 10)), "x2": F(rng.randint(-10, 10))}
                for _ in range(n)]

    def test_whole_pool_when_size_matches(self):
        rng = random.Random(3)
        pool = self.pool(rng, 4)
        factual = {"x1": F(0), "x2": F(0)}
        assert self.s.select_diverse(factual, pool, 4, F(1, 2), self.spec) == [
            0, 1, 2, 3]

    def test_large_lambda_prefers_near_duplicate(self):
        factual = {"x1": F(0), "x2": F(0)}
        pool = [{"x1": F(9), "x2": F(9)}, {"x1": F(0), "x2": F(0)},
                {"x1": F(8), "x2": F(-8)}, {"x1": F(-7), "x2": F(7)}]
        chosen = self.s.select_diverse(factual, pool, 2, F(1000), self.spec)
        assert 1 in chosen

    def test_matches_exhaustive_oracle(self):
        """Acceptance: equals the brute-force subset minimum on 50 pools."""
        rng = random.Random(77)
        factual = {"x1": F(0), "x2": F(0)}
        for _ in range(50):
            pool = self.pool(rng, rng.randint(3, 8))
            size = min(3, len(pool))
            got = self.s.select_diverse(factual, pool, size, F(1, 2), self.spec)
            prox = [self.s.point_distance(factual, p, self.spec) for p in pool]
            pair = [[self.s.point_distance(a, b, self.spec) for b in pool]
                    for a in pool]
            assert got == diversity_oracle(prox, pair, size, F(1, 2))

    def test_pool_too_small(self):
        with pytest.raises(SessionError):
            self.s.select_diverse({"x1": F(0), "x2": F(0)},
                                  [{"x1": F(1), "x2": F(1)}], 2, F(1), self.spec)


class TestMetrics:
    def test_rule_length_and_dimension(self):
        s = synthetic_session()
        s.declare_instance("F", "0", minconf=MINCONF, features=[2, 2])
        s.declare_instance("CE", "1", minconf=MINCONF)
        s.constraint("CE.x1 = F.x1")
        plain = s.metrics(s.solveopt(project=["CE"]))
        assert plain["l_F"] == 1 and plain["l_C"] == 1 and plain["N_C"] == 1
        assert plain["dim_CE"] == ["higher-dimensional"]
        minimized = s.metrics(s.solveopt(minimize="l1norm(F,CE)", project=["CE"]))
        assert minimized["N_CE"] == 1
        assert minimized["d_CE"] == [F(1)]
        assert minimized["dim_CE"] == ["point"]

    def test_confidence_truncation(self):
        assert confidence_str(F(1)) == "1.0"
        assert confidence_str(F(8, 10)) == "0.8"
        assert confidence_str(F(9974, 10000)) == "0.9974"
        assert confidence_str(F(2999, 3000)) == "0.9996"  # truncated, not rounded


class TestRetractReset:
    def test_retract_last(self):
        s = synthetic_session()
        s.declare_instance("F", "0")
        s.constraint("F.x1 >= 1")
        s.constraint("F.x2 >= 2")
        s.retract(last=True)
        assert [e.text for e in s.constraints] == ["F.x1 >= 1"]

    def test_retract_by_text(self):
        s = synthetic_session()
        s.declare_instance("F", "0")
        s.declare_instance("CE", "1")
        s.constraint("CE.x2 = F.x2")
        s.retract("CE.x2 = F.x2")
        assert s.constraints == []

    def test_retract_unknown_text(self):
        s = synthetic_session()
        s.declare_instance("F", "0")
        with pytest.raises(SessionError):
            s.retract("F.x1 = 3")

    def test_reset_keeps_models(self):
        s = synthetic_session()
        s.declare_instance("F", "0", features=[1, 1])
        s.reset(keep_model=True)
        assert s.instances == {} and s.constraints == []
        assert "DT1" in s.trees

    def test_assert_retract_neutrality_property(self):
        """Acceptance: solveopt output after assert+retract equals never
        asserting, compared on the structured record."""
        rng = random.Random(83)
        relations = ["<=", ">=", "="]
        for _ in range(500):
            s = synthetic_session()
            s.declare_instance("F", "0", features=[rng.randint(-4, 4),
                                                   rng.randint(-4, 4)])
            s.declare_instance("CE", "1")
            baseline = structured_record(s.solveopt())
            text = (f"CE.x1 {rng.choice(relations)} "
                    f"{rng.randint(-3, 3)}*F.x{rng.randint(1, 2)}")
            s.constraint(text)
            s.retract(text)
            again = structured_record(s.solveopt())
            assert json.dumps(again) == json.dumps(baseline)
