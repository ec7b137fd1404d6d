"""User-facing session: instance registry, constraint language, query
builders, distance encodings, diversity selection, answer decoding and
metrics.

A session is single-writer (declare/assert/retract are serialized by the
caller); solveopt on a quiescent session is pure.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from math import comb, floor
from typing import Iterable, Mapping, Optional, Sequence

from . import algebra
from .algebra import Cross, EvalContext, Inf, Inst, Project, Relax, Sat
from .constraints import (USER_TAG, IMPLICIT_TAG, Conj, LinTerm, Primitive,
                          Relation, Tag, VarId, conjoin, evaluate, format_rat,
                          normalize, render_primitive)
from .model import (DecisionTreeModel, Feature, FeatureSchema, PathFact,
                    Value, extract_paths)
from .parser import ConstraintParser, NominalRef, ParseError, Resolver
from .polyhedra import minimal_form


class SessionError(Exception):
    pass


_NAME_OK = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass
class InstanceDecl:
    name: str
    tree_id: str
    label: str
    minconf: Fraction = Fraction(0)
    fixed: dict[str, Value] = field(default_factory=dict)


@dataclass
class ConstraintEntry:
    text: str
    conj: Conj


@dataclass(frozen=True)
class DistanceSpec:
    """Weighted L1 or L-infinity distance between two instances.

    Continuous/ordinal weights are 1/(max-min) from the schema normalization
    range (1 when no range is declared); one-hot components weigh 1/2 under
    L1 and 1 under L-infinity.
    """

    kind: str  # "l1" | "linf"
    pair: tuple[str, str]
    weights: tuple[tuple[str, Fraction], ...]  # per feature name

    @staticmethod
    def build(schema: FeatureSchema, kind: str, pair: tuple[str, str]) -> "DistanceSpec":
        kind = kind.lower()
        if kind not in ("l1", "linf"):
            raise SessionError(f"unknown norm {kind!r} (use l1 or linf)")
        weights = []
        for f in schema.features:
            if f.kind == "nominal":
                w = Fraction(1, 2) if kind == "l1" else Fraction(1)
            else:
                span = (f.norm_range[1] - f.norm_range[0]) if f.norm_range else None
                w = Fraction(1) if not span else Fraction(1) / span
            weights.append((f.name, w))
        return DistanceSpec(kind, pair, tuple(weights))

    def weight(self, feature: str) -> Fraction:
        for name, w in self.weights:
            if name == feature:
                return w
        raise SessionError(f"no weight for feature {feature!r}")


@dataclass
class Rule:
    instance: str
    antecedent: Conj
    label: str
    confidence: Fraction

    def premises(self) -> list[str]:
        return [render_primitive(p) for p in self.antecedent.primitives]

    def render(self) -> str:
        label = f"class {self.label}" if self.label.isdigit() else self.label
        body = ",".join(self.premises())
        return f"IF {body} THEN {label} [{confidence_str(self.confidence)}]"


@dataclass
class AnswerItem:
    conj: Conj
    constraints: list[str]
    rules: list[Rule]
    min_value: Optional[Fraction] = None


@dataclass
class AnswerBundle:
    items: list[AnswerItem]
    minimized: bool = False

    @property
    def no_answer(self) -> bool:
        return not self.items


def confidence_str(q: Fraction) -> str:
    """Four-decimal truncation of the exact rational, e.g. 1 -> "1.0"."""
    scaled = floor(q * 10_000)
    head, tail = divmod(scaled, 10_000)
    text = f"{head}.{tail:04d}".rstrip("0")
    if text.endswith("."):
        text += "0"
    return text


class _SessionResolver(Resolver):
    def __init__(self, session: "Session"):
        self.session = session

    def resolve(self, instance, feature, onehot, pos):
        s = self.session
        if instance not in s.instances:
            raise ParseError(f"unknown instance {instance!r}", pos)
        try:
            feat = s.schema.feature(feature)
        except Exception:
            raise ParseError(f"unknown feature {feature!r}", pos) from None
        if feat.kind == "nominal":
            if onehot is None:
                return NominalRef(instance, feature)
            if onehot not in feat.values:
                raise ParseError(
                    f"{onehot!r} is not a value of nominal feature {feature!r}", pos)
            return VarId(instance, feature, onehot)
        if onehot is not None:
            raise ParseError(
                f"feature {feature!r} is not nominal; '^' is not applicable", pos)
        return VarId(instance, feature)

    def nominal_values(self, instance, feature):
        return self.session.schema.feature(feature).values


class Session:
    def __init__(self, schema: FeatureSchema):
        self.schema = schema
        self.trees: dict[str, DecisionTreeModel] = {}
        self.paths: dict[str, list[PathFact]] = {}
        self.instances: dict[str, InstanceDecl] = {}
        self.constraints: list[ConstraintEntry] = []
        self.eps: Fraction = Fraction(0)
        self._parser = ConstraintParser(_SessionResolver(self))

    # -- registry -------------------------------------------------------------

    def add_model(self, tree: DecisionTreeModel, tree_id: Optional[str] = None) -> str:
        tid = tree_id or tree.tree_id or f"DT{len(self.trees) + 1}"
        if tid in self.trees:
            raise SessionError(f"model {tid!r} already registered")
        if tid != tree.tree_id:
            tree = DecisionTreeModel(tid, tree.root)
        self.trees[tid] = tree
        self.paths[tid] = extract_paths(tree)
        return tid

    def declare_instance(self, name: str, label, tree_id: Optional[str] = None,
                         minconf=0, features=None) -> InstanceDecl:
        if not _NAME_OK.match(name):
            raise SessionError(f"invalid instance name {name!r}")
        if name in self.instances:
            raise SessionError(f"instance {name!r} already declared")
        if tree_id is None:
            if len(self.trees) != 1:
                raise SessionError("tree_id is required when several models are loaded")
            tree_id = next(iter(self.trees))
        if tree_id not in self.trees:
            raise SessionError(f"unknown model {tree_id!r}")
        minconf = Fraction(minconf) if not isinstance(minconf, str) else Fraction(minconf)
        if not 0 <= minconf <= 1:
            raise SessionError("minconf must lie in [0, 1]")
        fixed = self._coerce_features(features)
        decl = InstanceDecl(name, tree_id, str(label), minconf, fixed)
        self.instances[name] = decl
        for feat_name, value in fixed.items():
            feat = self.schema.feature(feat_name)
            if feat.kind == "nominal":
                text = f"{name}.{feat_name}={value}"
                prim = normalize(Primitive(
                    LinTerm.of_var(VarId(name, feat_name, value)) - LinTerm.const(1),
                    Relation.EQ))
            else:
                text = f"{name}.{feat_name}={format_rat(Fraction(value))}"
                prim = normalize(Primitive(
                    LinTerm.of_var(VarId(name, feat_name)) - LinTerm.const(value),
                    Relation.EQ))
            self.constraints.append(ConstraintEntry(text, Conj((prim,), (USER_TAG,))))
        return decl

    def _coerce_features(self, features) -> dict[str, Value]:
        if features is None:
            return {}
        if isinstance(features, Mapping):
            named = dict(features)
        else:
            values = list(features)
            if len(values) > len(self.schema.features):
                raise SessionError("more feature values than schema features")
            named = {f.name: v for f, v in zip(self.schema.features, values)}
        fixed: dict[str, Value] = {}
        for feat_name, value in named.items():
            feat = self.schema.feature(feat_name)
            if feat.kind == "nominal":
                if value not in feat.values:
                    raise SessionError(
                        f"{value!r} is not a value of nominal feature {feat_name!r}")
                fixed[feat_name] = value
            else:
                q = value if isinstance(value, Fraction) else Fraction(str(value))
                if feat.kind == "ordinal" and q.denominator != 1:
                    raise SessionError(
                        f"ordinal feature {feat_name!r} takes integer values")
                fixed[feat_name] = q
        return fixed

    # -- constraints ----------------------------------------------------------

    def parse_constraint(self, text: str) -> Conj:
        prims = self._parser.parse(text)
        return Conj(tuple(prims), (USER_TAG,))

    def constraint(self, text: str) -> ConstraintEntry:
        entry = ConstraintEntry(text, self.parse_constraint(text))
        self.constraints.append(entry)
        return entry

    def retract(self, text: Optional[str] = None, last: bool = False) -> None:
        if last:
            if not self.constraints:
                raise SessionError("no constraint to retract")
            self.constraints.pop()
            return
        if text is None:
            raise SessionError("retract needs a constraint text or last=True")
        wanted = _squeeze(text)
        for i in range(len(self.constraints) - 1, -1, -1):
            if _squeeze(self.constraints[i].text) == wanted:
                self.constraints.pop(i)
                return
        raise SessionError(f"no such constraint: {text!r}")

    def reset(self, keep_model: bool = True) -> None:
        self.instances.clear()
        self.constraints.clear()
        if not keep_model:
            self.trees.clear()
            self.paths.clear()

    # -- variable space ---------------------------------------------------------

    def instance_vars(self, name: str) -> list[VarId]:
        if name not in self.instances:
            raise SessionError(f"unknown instance {name!r}")
        out: list[VarId] = []
        for f in self.schema.features:
            if f.kind == "nominal":
                out.extend(VarId(name, f.name, v) for v in f.values)
            else:
                out.append(VarId(name, f.name))
        return out

    def integer_vars(self) -> frozenset[VarId]:
        ints = set()
        for name in self.instances:
            for f in self.schema.features:
                if f.kind == "ordinal":
                    ints.add(VarId(name, f.name))
                elif f.kind == "nominal":
                    ints.update(VarId(name, f.name, v) for v in f.values)
        return frozenset(ints)

    def implicit_constraints(self) -> Conj:
        prims: list[Primitive] = []
        for name in self.instances:
            for f in self.schema.features:
                if f.kind == "ordinal":
                    var = LinTerm.of_var(VarId(name, f.name))
                    prims.append(Primitive(LinTerm.const(f.bounds[0]) - var,
                                           Relation.LE))
                    prims.append(Primitive(var - LinTerm.const(f.bounds[1]),
                                           Relation.LE))
                elif f.kind == "nominal":
                    total = LinTerm.const(0)
                    for v in f.values:
                        ind = LinTerm.of_var(VarId(name, f.name, v))
                        prims.append(Primitive(-ind, Relation.LE))
                        prims.append(Primitive(ind - LinTerm.const(1), Relation.LE))
                        total = total + ind
                    prims.append(Primitive(total - LinTerm.const(1), Relation.EQ))
        return Conj.of(prims, (IMPLICIT_TAG,))

    def user_conj(self) -> Conj:
        acc = Conj((), (USER_TAG,))
        for entry in self.constraints:
            acc = conjoin(acc, entry.conj)
        return acc

    def context(self) -> EvalContext:
        return EvalContext(
            trees=self.paths,
            instances=list(self.instances),
            user_constraints=self.user_conj(),
            implicit_constraints=self.implicit_constraints(),
            integer_vars=self.integer_vars(),
        )

    # -- distance encoding -------------------------------------------------------

    def distance_spec(self, kind: str, pair: tuple[str, str]) -> DistanceSpec:
        for name in pair:
            if name not in self.instances:
                raise SessionError(f"unknown instance {name!r}")
        return DistanceSpec.build(self.schema, kind, pair)

    def encode_distance(self, spec: DistanceSpec
                        ) -> tuple[LinTerm, list[Primitive], list[VarId]]:
        a, b = spec.pair
        slots: list[tuple[VarId, VarId, Fraction]] = []
        for f in self.schema.features:
            w = spec.weight(f.name)
            if f.kind == "nominal":
                slots.extend((VarId(a, f.name, v), VarId(b, f.name, v), w)
                             for v in f.values)
            else:
                slots.append((VarId(a, f.name), VarId(b, f.name), w))
        aux: list[Primitive] = []
        slacks: list[VarId] = []
        if spec.kind == "l1":
            objective = LinTerm.const(0)
            for i, (xa, xb, w) in enumerate(slots):
                t = VarId("~dist", f"t{i}")
                slacks.append(t)
                diff = LinTerm.of_var(xb) - LinTerm.of_var(xa)
                aux.append(Primitive(diff - LinTerm.of_var(t), Relation.LE))
                aux.append(Primitive(-diff - LinTerm.of_var(t), Relation.LE))
                objective = objective + LinTerm.of_var(t, w)
            return objective, aux, slacks
        s = VarId("~dist", "s")
        slacks.append(s)
        for xa, xb, w in slots:
            diff = (LinTerm.of_var(xb) - LinTerm.of_var(xa)).scale(w)
            aux.append(Primitive(diff - LinTerm.of_var(s), Relation.LE))
            aux.append(Primitive(-diff - LinTerm.of_var(s), Relation.LE))
        return LinTerm.of_var(s), aux, slacks

    # -- solving -----------------------------------------------------------------

    def _keep_vars(self, project_list: Optional[Sequence[str]]) -> frozenset[VarId]:
        if not project_list:
            keep: list[VarId] = []
            for name in self.instances:
                keep.extend(self.instance_vars(name))
            return frozenset(keep)
        keep = []
        for item in project_list:
            item = item.strip()
            if "." in item:
                inst, _, feat_name = item.partition(".")
                if inst not in self.instances:
                    raise SessionError(f"unknown instance {inst!r}")
                feat = self.schema.feature(feat_name)
                if feat.kind == "nominal":
                    keep.extend(VarId(inst, feat_name, v) for v in feat.values)
                else:
                    keep.append(VarId(inst, feat_name))
            else:
                keep.extend(self.instance_vars(item))
        return frozenset(keep)

    def solveopt(self, minimize: DistanceSpec | str | None = None,
                 project: Optional[Sequence[str]] = None,
                 eps: Fraction | int | str | None = None,
                 global_opt: bool = False) -> AnswerBundle:
        if not self.instances:
            raise SessionError("declare at least one instance before solving")
        spec = self._minimize_spec(minimize)
        parts: list[algebra.Expr] = [
            Inst(d.name, d.tree_id, d.label, d.minconf)
            for d in self.instances.values()
        ]
        parts.append(algebra.UserC())
        parts.append(algebra.TypeC())
        expr: algebra.Expr = Sat(Cross(tuple(parts)))
        if spec is not None:
            margin = Fraction(str(eps)) if eps is not None else self.eps
            objective, aux, _ = self.encode_distance(spec)
            expr = Inf(Relax(expr, margin), objective, tuple(aux))
        expr = Project(expr, self._keep_vars(project))
        disjuncts = algebra.solve(expr, self.context())
        if spec is not None and global_opt and disjuncts:
            best = min(d.min_value for d in disjuncts if d.min_value is not None)
            disjuncts = [d for d in disjuncts if d.min_value == best]
        items = [AnswerItem(d.conj, self._decode(d.conj), self._rules(d.conj),
                            d.min_value)
                 for d in disjuncts]
        return AnswerBundle(items, minimized=spec is not None)

    def _minimize_spec(self, minimize) -> Optional[DistanceSpec]:
        if minimize is None:
            return None
        if isinstance(minimize, DistanceSpec):
            return minimize
        m = re.match(r"^\s*(l1norm|linfnorm)\s*\(\s*([^\s,()]+)\s*,\s*([^\s,()]+)\s*\)\s*$",
                     str(minimize))
        if not m:
            raise SessionError(
                f"cannot parse minimize spec {minimize!r}; "
                "expected l1norm(A,B) or linfnorm(A,B)")
        kind = "l1" if m.group(1) == "l1norm" else "linf"
        return self.distance_spec(kind, (m.group(2), m.group(3)))

    # -- decoding and rules --------------------------------------------------------

    def _decode(self, conj: Conj) -> list[str]:
        """Render a disjunct, folding fully fixed one-hot blocks back to
        `I.feature=Value` and ordering atoms by instance then feature."""
        decl_index = {name: i for i, name in enumerate(self.instances)}
        feat_index = {f.name: i for i, f in enumerate(self.schema.features)}

        fixed: dict[tuple[str, str], dict[str, Fraction]] = {}
        for p in conj.primitives:
            if p.rel is Relation.EQ and len(p.lhs.coeffs) == 1:
                var, coef = p.lhs.coeffs[0]
                if var.onehot_value is not None:
                    value = -p.lhs.constant / coef
                    fixed.setdefault((var.instance, var.feature), {})[
                        var.onehot_value] = value

        decoded: dict[tuple[str, str], str] = {}
        for (inst, feat_name), values in fixed.items():
            feat = self.schema.feature(feat_name)
            if set(values) == set(feat.values):
                ones = [v for v, q in values.items() if q == 1]
                if len(ones) == 1 and all(q in (0, 1) for q in values.values()):
                    decoded[(inst, feat_name)] = ones[0]

        def var_key(v: VarId):
            return (decl_index.get(v.instance, len(decl_index)),
                    feat_index.get(v.feature, len(feat_index)),
                    v.onehot_value or "")

        atoms: list[tuple[tuple, str]] = []
        emitted: set[tuple[str, str]] = set()
        for pos, p in enumerate(conj.primitives):
            variables = p.lhs.variables()
            onehot_parent = None
            if (p.rel is Relation.EQ and len(variables) == 1
                    and variables[0].onehot_value is not None):
                parent = (variables[0].instance, variables[0].feature)
                if parent in decoded:
                    onehot_parent = parent
            if onehot_parent is not None:
                if onehot_parent not in emitted:
                    emitted.add(onehot_parent)
                    inst, feat_name = onehot_parent
                    key = (decl_index.get(inst, len(decl_index)),
                           feat_index.get(feat_name, len(feat_index)), "")
                    atoms.append(((key,), f"{inst}.{feat_name}={decoded[onehot_parent]}"))
                continue
            key = tuple(sorted(var_key(v) for v in variables))
            atoms.append((key or ((len(decl_index), len(feat_index), ""),),
                          render_primitive(p)))
        atoms.sort(key=lambda kv: kv[0])
        return [text for _, text in atoms]

    def _rules(self, conj: Conj) -> list[Rule]:
        rules: list[Rule] = []
        seen: set[tuple] = set()
        for tag in conj.provenance:
            if tag.kind != "path":
                continue
            key = (tag.instance, tag.tree_id, tag.leaf_id)
            if key in seen:
                continue
            seen.add(key)
            pf = self.paths[tag.tree_id][tag.leaf_id]
            from .model import instantiate
            antecedent = minimal_form(instantiate(pf, tag.instance))
            rules.append(Rule(tag.instance, antecedent, tag.label, tag.confidence))
        order = {name: i for i, name in enumerate(self.instances)}
        rules.sort(key=lambda r: order.get(r.instance, len(order)))
        return rules

    # -- metrics ---------------------------------------------------------------

    def metrics(self, bundle: AnswerBundle) -> dict:
        """Rule lengths, contrastive counts, per-answer distances and the
        point / higher-dimensional classification of decoded answers."""
        if not self.instances:
            raise SessionError("metrics need a session with instances")
        ref_label = next(iter(self.instances.values())).label
        contrastive_names = {n for n, d in self.instances.items()
                             if d.label != ref_label}
        factual_lengths: list[int] = []
        contrastive_lengths: list[int] = []
        contrastive_rules: set[tuple] = set()
        dims: list[str] = []
        distances: list[Fraction] = []
        for item in bundle.items:
            for rule in item.rules:
                length = len(rule.antecedent.primitives)
                if rule.instance in contrastive_names:
                    contrastive_lengths.append(length)
                    contrastive_rules.add((rule.instance,
                                           tuple(rule.antecedent.primitives)))
                else:
                    factual_lengths.append(length)
            if item.min_value is not None:
                distances.append(item.min_value)
            dims.append(self._dimension(item, contrastive_names))
        n_ce = len(bundle.items) if bundle.minimized else 0
        return {
            "n_answers": len(bundle.items),
            "l_F": _avg(factual_lengths),
            "l_C": _avg(contrastive_lengths),
            "N_C": len(contrastive_rules),
            "N_CE": n_ce,
            "d_CE": distances,
            "dim_CE": dims,
        }

    def _dimension(self, item: AnswerItem, contrastive: set[str]) -> str:
        for p in item.conj.primitives:
            if p.rel is Relation.EQ:
                continue
            if any(v.instance in contrastive for v in p.lhs.variables()):
                return "higher-dimensional"
        return "point"

    # -- diversity ----------------------------------------------------------------

    def point_distance(self, a: Mapping[str, Value], b: Mapping[str, Value],
                       spec: DistanceSpec) -> Fraction:
        per_feature: list[Fraction] = []
        for f in self.schema.features:
            if f.kind == "nominal":
                per_feature.append(Fraction(0 if a[f.name] == b[f.name] else 1))
            else:
                w = spec.weight(f.name)
                per_feature.append(w * abs(Fraction(a[f.name]) - Fraction(b[f.name])))
        if spec.kind == "l1":
            return sum(per_feature, Fraction(0))
        return max(per_feature) if per_feature else Fraction(0)

    def select_diverse(self, factual: Mapping[str, Value],
                       pool: Sequence[Mapping[str, Value]], size: int,
                       lam: Fraction, spec: DistanceSpec) -> list[int]:
        """Subset of pool indices minimizing the proximity/diversity trade-off
        (exhaustive up to 1e5 subsets, greedy forward selection beyond)."""
        if not 1 <= size <= len(pool):
            raise SessionError("pool too small for the requested subset size")
        lam = Fraction(lam)
        prox = [self.point_distance(factual, p, spec) for p in pool]
        pair = [[self.point_distance(a, b, spec) for b in pool] for a in pool]

        def score(idx: Sequence[int]) -> Fraction:
            k = len(idx)
            proximity = sum((prox[i] for i in idx), Fraction(0))
            spread = sum((pair[i][j] for i in idx for j in idx), Fraction(0))
            return lam / k * proximity - Fraction(1, k * k) * spread

        if comb(len(pool), size) <= 100_000:
            best: Optional[tuple[Fraction, tuple[int, ...]]] = None
            for subset in combinations(range(len(pool)), size):
                s = score(subset)
                if best is None or s < best[0]:
                    best = (s, subset)
            return list(best[1])

        chosen: list[int] = []
        while len(chosen) < size:
            candidates = [i for i in range(len(pool)) if i not in chosen]
            pick = min(candidates, key=lambda i: (score(chosen + [i]), i))
            chosen.append(pick)
        return sorted(chosen)


def _avg(values: Sequence[int]) -> Optional[Fraction]:
    if not values:
        return None
    return Fraction(sum(values), len(values))


def _squeeze(text: str) -> str:
    return re.sub(r"\s+", "", text)


# -- transcript / structured output ------------------------------------------------
#
# The same records back the CLI's structured mode and the HTTP service, so the
# two surfaces stay byte-identical for identical command sequences.

def transcript_lines(bundle: AnswerBundle) -> list[str]:
    if bundle.no_answer:
        return ["No answer."]
    lines: list[str] = []
    for i, item in enumerate(bundle.items):
        if i:
            lines.append("--")
        lines.append("Answer constraint:")
        lines.append(",".join(item.constraints))
        for rule in item.rules:
            lines.append(f"Rule satisfied by {rule.instance}:")
            lines.append(rule.render())
        if item.min_value is not None:
            lines.append(f"Min value: {format_rat(item.min_value)}")
    return lines


def structured_record(bundle: AnswerBundle) -> dict:
    if bundle.no_answer:
        return {"event": "no_answer"}
    disjuncts = []
    for item in bundle.items:
        disjuncts.append({
            "constraints": list(item.constraints),
            "rules": [{
                "instance": r.instance,
                "antecedent": r.premises(),
                "label": r.label,
                "confidence": confidence_str(r.confidence),
            } for r in item.rules],
            "min_value": (format_rat(item.min_value)
                          if item.min_value is not None else None),
        })
    return {"event": "answer", "disjuncts": disjuncts}
