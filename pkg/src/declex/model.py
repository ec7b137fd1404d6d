"""Feature schemas, decision trees with linear splits, and path extraction.

Trees are ingested from (or dumped to) a small JSON format and may also be
learned with a minimal CART-style learner for surrogate workflows. A split
condition is satisfied by the left child; the right child is its complement,
which fixes boundary behavior for prediction.
"""
from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass
from fractions import Fraction
from math import floor
from typing import Iterable, Mapping, Optional, Sequence

from .constraints import (Conj, LinTerm, Primitive, Relation, Tag, VarId,
                          format_rat, normalize, rat)

Value = Fraction | str  # continuous/ordinal values vs nominal labels
FeatureKey = tuple[str, Optional[str]]  # (feature, one-hot value or None)


class ModelError(Exception):
    pass


class MalformedTreeError(ModelError):
    pass


class MissingFeatureError(ModelError):
    pass


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str  # "continuous" | "ordinal" | "nominal"
    bounds: Optional[tuple[int, int]] = None        # ordinal domain [m, M]
    values: Optional[tuple[str, ...]] = None        # nominal domain
    norm_range: Optional[tuple[Fraction, Fraction]] = None

    def __post_init__(self):
        if self.kind not in ("continuous", "ordinal", "nominal"):
            raise ModelError(f"unknown feature kind {self.kind!r}")
        if self.kind == "ordinal":
            if self.bounds is None or self.bounds[0] > self.bounds[1]:
                raise ModelError(f"ordinal feature {self.name} needs bounds m <= M")
        if self.kind == "nominal":
            if not self.values or len(set(self.values)) != len(self.values):
                raise ModelError(
                    f"nominal feature {self.name} needs a duplicate-free value list")
        if self.norm_range is not None and self.norm_range[1] < self.norm_range[0]:
            raise ModelError(f"feature {self.name}: normalization max < min")


class FeatureSchema:
    def __init__(self, features: Sequence[Feature], target: str = "class"):
        self.features = tuple(features)
        self.target = target
        self.by_name = {f.name: f for f in self.features}
        if len(self.by_name) != len(self.features):
            raise ModelError("duplicate feature names in schema")

    def feature(self, name: str) -> Feature:
        try:
            return self.by_name[name]
        except KeyError:
            raise ModelError(f"unknown feature {name!r}") from None

    @staticmethod
    def from_json(obj: Mapping) -> "FeatureSchema":
        feats = []
        for item in obj["features"]:
            bounds = item.get("bounds")
            norm = item.get("norm_range")
            feats.append(Feature(
                name=item["name"],
                kind=item["kind"],
                bounds=tuple(int(b) for b in bounds) if bounds else None,
                values=tuple(item["values"]) if item.get("values") else None,
                norm_range=tuple(rat(x) for x in norm) if norm else None,
            ))
        return FeatureSchema(feats, obj.get("target", "class"))

    def to_json(self) -> dict:
        feats = []
        for f in self.features:
            item: dict = {"name": f.name, "kind": f.kind}
            if f.bounds:
                item["bounds"] = list(f.bounds)
            if f.values:
                item["values"] = list(f.values)
            if f.norm_range:
                item["norm_range"] = [_num(q) for q in f.norm_range]
            feats.append(item)
        return {"target": self.target, "features": feats}

    @staticmethod
    def load(path: str) -> "FeatureSchema":
        with open(path) as fh:
            return FeatureSchema.from_json(json.load(fh, parse_float=rat))


def _num(q: Fraction):
    return int(q) if q.denominator == 1 else format_rat(q)


# --- splits and nodes --------------------------------------------------------

_COMPLEMENT = {"<=": ">", ">": "<=", "=": "!=", "!=": "="}


@dataclass(frozen=True)
class Split:
    """Linear split `sum coeffs * slot OP threshold` over abstract feature slots."""

    coeffs: tuple[tuple[FeatureKey, Fraction], ...]
    op: str
    threshold: Fraction

    def __post_init__(self):
        if self.op not in _COMPLEMENT:
            raise MalformedTreeError(f"unsupported split operator {self.op!r}")
        if not self.coeffs:
            raise MalformedTreeError("split without coefficients")

    def complement(self) -> "Split":
        return Split(self.coeffs, _COMPLEMENT[self.op], self.threshold)

    def satisfied_by(self, point: Mapping[str, Value]) -> bool:
        total = Fraction(0)
        for (feat, onehot), coef in self.coeffs:
            if feat not in point:
                raise MissingFeatureError(f"point does not assign feature {feat!r}")
            raw = point[feat]
            if onehot is not None:
                val = Fraction(1) if raw == onehot else Fraction(0)
            else:
                val = Fraction(raw)
            total += coef * val
        if self.op == "<=":
            return total <= self.threshold
        if self.op == ">":
            return total > self.threshold
        if self.op == "=":
            return total == self.threshold
        return total != self.threshold

    def primitive(self, instance: str) -> Primitive:
        """Bind feature slots to instance variables; the right-branch forms
        "!=" are only meaningful for 0/1 one-hot indicators."""
        term = LinTerm.build(
            {VarId(instance, feat, onehot): coef
             for (feat, onehot), coef in self.coeffs},
            -self.threshold)
        if self.op == "<=":
            return normalize(Primitive(term, Relation.LE))
        if self.op == ">":
            return normalize(Primitive(term, Relation.GT))
        if self.op == "=":
            return normalize(Primitive(term, Relation.EQ))
        if (len(self.coeffs) != 1 or self.coeffs[0][0][1] is None
                or self.coeffs[0][1] != 1 or self.threshold not in (0, 1)):
            raise MalformedTreeError(
                "'!=' splits are only supported on one-hot indicators with a "
                "0/1 threshold")
        flipped = Fraction(1) - self.threshold
        (key, _), = self.coeffs
        return normalize(Primitive(
            LinTerm.build({VarId(instance, key[0], key[1]): Fraction(1)}, -flipped),
            Relation.EQ))


@dataclass(frozen=True)
class Leaf:
    counts: tuple[tuple[str, int], ...]  # label -> count, sorted by label

    @property
    def total(self) -> int:
        return sum(n for _, n in self.counts)

    @property
    def label(self) -> str:
        best = max(n for _, n in self.counts)
        return min(lbl for lbl, n in self.counts if n == best)

    @property
    def confidence(self) -> Fraction:
        return Fraction(max(n for _, n in self.counts), self.total)


@dataclass(frozen=True)
class Node:
    split: Optional[Split] = None
    left: Optional["Node"] = None
    right: Optional["Node"] = None
    leaf: Optional[Leaf] = None

    @property
    def is_leaf(self) -> bool:
        return self.leaf is not None


@dataclass(frozen=True)
class DecisionTreeModel:
    tree_id: str
    root: Node


@dataclass(frozen=True)
class PathFact:
    """One root-to-leaf path: its split constraints, class label and confidence."""

    tree_id: str
    leaf_id: int
    primitives: tuple[Primitive, ...]  # over abstract slots (empty instance name)
    label: str
    confidence: Fraction


def _validate_leaf(leaf: Leaf) -> None:
    if not leaf.counts or any(n < 0 for _, n in leaf.counts) or leaf.total <= 0:
        raise MalformedTreeError("leaf needs nonnegative counts with positive total")


def extract_paths(tree: DecisionTreeModel) -> list[PathFact]:
    """One PathFact per leaf, primitives in root-to-leaf order (left first)."""
    out: list[PathFact] = []

    def walk(node: Node, splits: list[Split]) -> None:
        if node.is_leaf:
            _validate_leaf(node.leaf)
            prims = tuple(s.primitive("") for s in splits)
            out.append(PathFact(tree.tree_id, len(out), prims,
                                node.leaf.label, node.leaf.confidence))
            return
        if node.split is None or node.left is None or node.right is None:
            raise MalformedTreeError("internal node needs a split and two children")
        walk(node.left, splits + [node.split])
        walk(node.right, splits + [node.split.complement()])

    walk(tree.root, [])
    return out


def instantiate(pf: PathFact, instance: str) -> Conj:
    """Rename the path's feature slots to the given instance's variables."""
    prims = tuple(
        normalize(Primitive(
            LinTerm.build({VarId(instance, v.feature, v.onehot_value): k
                           for v, k in p.lhs.coeffs},
                          p.lhs.constant),
            p.rel))
        for p in pf.primitives)
    tag = Tag("path", instance=instance, tree_id=pf.tree_id, leaf_id=pf.leaf_id,
              label=pf.label, confidence=pf.confidence)
    return Conj(prims, (tag,))


def predict(tree: DecisionTreeModel, point: Mapping[str, Value]) -> tuple[str, Fraction]:
    """Label and confidence of the unique leaf whose path the point satisfies."""
    node = tree.root
    while not node.is_leaf:
        node = node.left if node.split.satisfied_by(point) else node.right
    _validate_leaf(node.leaf)
    return node.leaf.label, node.leaf.confidence


# --- JSON interchange --------------------------------------------------------

def _split_to_json(s: Split) -> dict:
    coeffs = {}
    for (feat, onehot), coef in s.coeffs:
        key = feat if onehot is None else f"{feat}^{onehot}"
        coeffs[key] = _num(coef)
    return {"coeffs": coeffs, "op": s.op, "threshold": _num(s.threshold)}


def _split_from_json(obj: Mapping) -> Split:
    coeffs = []
    for key, coef in obj["coeffs"].items():
        feat, sep, onehot = key.partition("^")
        coeffs.append(((feat, onehot if sep else None), rat(coef)))
    return Split(tuple(coeffs), obj["op"], rat(obj["threshold"]))


def _node_to_json(node: Node) -> dict:
    if node.is_leaf:
        return {"leaf": {"counts": {lbl: n for lbl, n in node.leaf.counts}}}
    return {"split": _split_to_json(node.split),
            "left": _node_to_json(node.left),
            "right": _node_to_json(node.right)}


def _node_from_json(obj: Mapping) -> Node:
    if "leaf" in obj:
        counts = tuple(sorted((str(lbl), int(n))
                              for lbl, n in obj["leaf"]["counts"].items()))
        return Node(leaf=Leaf(counts))
    if "split" not in obj:
        raise MalformedTreeError("node is neither a split nor a leaf")
    return Node(split=_split_from_json(obj["split"]),
                left=_node_from_json(obj["left"]),
                right=_node_from_json(obj["right"]))


def tree_to_json(tree: DecisionTreeModel) -> dict:
    return {"tree_id": tree.tree_id, "root": _node_to_json(tree.root)}


def tree_from_json(obj: Mapping) -> DecisionTreeModel:
    return DecisionTreeModel(str(obj["tree_id"]), _node_from_json(obj["root"]))


def load_tree(path: str) -> DecisionTreeModel:
    with open(path) as fh:
        return tree_from_json(json.load(fh, parse_float=rat))


def save_tree(tree: DecisionTreeModel, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(tree_to_json(tree), fh, indent=2)
        fh.write("\n")


# --- learning ---------------------------------------------------------------

Row = tuple[Mapping[str, Value], str]


def _gini(counts: Mapping[str, int]) -> Fraction:
    total = sum(counts.values())
    return Fraction(1) - sum((Fraction(n, total) ** 2 for n in counts.values()),
                             Fraction(0))


def _leaf_of(rows: Sequence[Row]) -> Node:
    counts: dict[str, int] = {}
    for _, label in rows:
        counts[label] = counts.get(label, 0) + 1
    return Node(leaf=Leaf(tuple(sorted(counts.items()))))


def learn_tree(data: Sequence[Row], schema: FeatureSchema, max_depth: int,
               tree_id: str = "DT") -> DecisionTreeModel:
    """Greedy axis-parallel CART: Gini impurity, midpoint thresholds,
    deterministic tie-break by lowest feature index then lowest threshold."""
    if not data:
        raise ModelError("cannot learn a tree from empty data")

    def build(rows: Sequence[Row], depth: int) -> Node:
        labels = {label for _, label in rows}
        if depth <= 0 or len(labels) == 1 or len(rows) < 2:
            return _leaf_of(rows)
        parent_counts: dict[str, int] = {}
        for _, label in rows:
            parent_counts[label] = parent_counts.get(label, 0) + 1
        parent_gini = _gini(parent_counts)
        best = None  # (gini, feat_idx, thr_key, split, left_rows, right_rows)
        for fi, feat in enumerate(schema.features):
            if feat.kind == "nominal":
                candidates = [
                    (Fraction(vi), Split((((feat.name, v), Fraction(1)),), "=",
                                         Fraction(1)))
                    for vi, v in enumerate(feat.values)]
            else:
                seen = sorted({Fraction(r[0][feat.name]) for r in rows})
                candidates = [
                    ((a + b) / 2,
                     Split((((feat.name, None), Fraction(1)),), "<=", (a + b) / 2))
                    for a, b in zip(seen, seen[1:])]
            for thr_key, split in candidates:
                left = [r for r in rows if split.satisfied_by(r[0])]
                right = [r for r in rows if not split.satisfied_by(r[0])]
                if not left or not right:
                    continue
                lc: dict[str, int] = {}
                rc: dict[str, int] = {}
                for _, label in left:
                    lc[label] = lc.get(label, 0) + 1
                for _, label in right:
                    rc[label] = rc.get(label, 0) + 1
                weighted = (Fraction(len(left)) * _gini(lc)
                            + Fraction(len(right)) * _gini(rc)) / len(rows)
                key = (weighted, fi, thr_key)
                if best is None or key < best[0]:
                    best = (key, split, left, right)
        if best is None or best[0][0] >= parent_gini:
            return _leaf_of(rows)
        _, split, left, right = best
        return Node(split=split,
                    left=build(left, depth - 1),
                    right=build(right, depth - 1))

    return DecisionTreeModel(tree_id, build(list(data), max_depth))


def training_accuracy(tree: DecisionTreeModel, data: Sequence[Row]) -> Fraction:
    hits = sum(1 for feats, label in data if predict(tree, feats)[0] == label)
    return Fraction(hits, len(data))


# --- neighborhood sampling ----------------------------------------------------

def sample_neighborhood(center: Mapping[str, Value], schema: FeatureSchema,
                        n: int, radius: Fraction | int | str,
                        seed: int = 0) -> list[dict[str, Value]]:
    """Uniform box sampling around a point, deterministic under the seed.

    Continuous/ordinal features move within +-radius * feature range (ordinal
    values are rounded and clamped); nominal values are resampled with
    probability radius.
    """
    if n < 1:
        raise ModelError("need n >= 1 samples")
    radius = rat(radius)
    rng = random.Random(seed)
    grain = 10 ** 6

    def uniform01() -> Fraction:
        return Fraction(rng.randrange(grain + 1), grain)

    rows: list[dict[str, Value]] = []
    for _ in range(n):
        row: dict[str, Value] = {}
        for feat in schema.features:
            val = center[feat.name]
            if feat.kind == "nominal":
                if uniform01() < radius:
                    row[feat.name] = feat.values[rng.randrange(len(feat.values))]
                else:
                    row[feat.name] = val
                continue
            if feat.norm_range is not None:
                span = feat.norm_range[1] - feat.norm_range[0]
            elif feat.bounds is not None:
                span = Fraction(feat.bounds[1] - feat.bounds[0])
            else:
                span = Fraction(1)
            lo = Fraction(val) - radius * span
            hi = Fraction(val) + radius * span
            sample = lo + uniform01() * (hi - lo)
            if feat.kind == "ordinal":
                snapped = floor(sample + Fraction(1, 2))
                snapped = max(feat.bounds[0], min(feat.bounds[1], snapped))
                sample = Fraction(snapped)
            row[feat.name] = sample
        rows.append(row)
    return rows


# --- labeled data I/O ---------------------------------------------------------

def read_data(path: str, schema: FeatureSchema) -> list[Row]:
    """Delimiter-separated text with a header row; values parsed exactly."""
    rows: list[Row] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or schema.target not in reader.fieldnames:
            raise ModelError(f"data file lacks target column {schema.target!r}")
        for record in reader:
            feats: dict[str, Value] = {}
            for feat in schema.features:
                raw = record[feat.name]
                feats[feat.name] = raw if feat.kind == "nominal" else rat(raw)
            rows.append((feats, record[schema.target]))
    return rows


def write_data(path: str, schema: FeatureSchema, rows: Sequence[Row]) -> None:
    names = [f.name for f in schema.features] + [schema.target]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for feats, label in rows:
            out = []
            for f in schema.features:
                v = feats[f.name]
                out.append(v if isinstance(v, str) else format_rat(Fraction(v)))
            writer.writerow(out + [label])
