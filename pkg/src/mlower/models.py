"""Trained-model descriptions: JSON schema, parsing, validation, serialization.

One schema covers every supported family, discriminated by ``model_type``:

    decision_tree_classifier | decision_tree_regressor |
    random_forest_classifier | random_forest_regressor |
    gbdt_regressor | gbdt_binary_classifier |
    linear_regression | logistic_regression | linear_svc | linear_svr |
    sgd_classifier | ridge_classifier | perceptron |
    binarizer | normalizer | minmax_scaler | robust_scaler |
    standard_scaler | maxabs_scaler

Trees are node arrays with root at index 0; internal nodes carry
``feature/threshold/left/right``, leaves carry a ``leaf`` value vector.
Forests make their aggregation explicit (``mean_probability`` for random
forests, ``sum`` with learning_rate/base_score for gradient boosting).
All floats are float32-faithful decimals so serialization never costs
accuracy.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .dtypes import format_f32
from .errors import SchemaError, ValidationError

FORMAT_VERSION = 1

TREE_TYPES = ("decision_tree_classifier", "decision_tree_regressor")
FOREST_TYPES = (
    "random_forest_classifier",
    "random_forest_regressor",
    "gbdt_regressor",
    "gbdt_binary_classifier",
)
LINEAR_TYPES = (
    "linear_regression",
    "logistic_regression",
    "linear_svc",
    "linear_svr",
    "sgd_classifier",
    "ridge_classifier",
    "perceptron",
)
SCALER_TYPES = (
    "binarizer",
    "normalizer",
    "minmax_scaler",
    "robust_scaler",
    "standard_scaler",
    "maxabs_scaler",
)
MODEL_TYPES = TREE_TYPES + FOREST_TYPES + LINEAR_TYPES + SCALER_TYPES

# Scaler parameter vectors, per kind. "norm" is a string, "threshold" a scalar.
_SCALER_VECTOR_PARAMS = {
    "binarizer": (),
    "normalizer": (),
    "minmax_scaler": ("scale", "min"),
    "robust_scaler": ("center", "scale"),
    "standard_scaler": ("mean", "scale"),
    "maxabs_scaler": ("scale",),
}


def _f32(x: float) -> float:
    return float(np.float32(x))


@dataclass(frozen=True)
class InternalNode:
    feature: int
    threshold: float
    left: int
    right: int


@dataclass(frozen=True)
class LeafNode:
    value: tuple[float, ...]


TreeNode = InternalNode | LeafNode


@dataclass(frozen=True)
class TreeModel:
    model_type: str
    n_features: int
    nodes: tuple[TreeNode, ...]
    classes: tuple[float, ...] | None  # None for regressors

    @property
    def is_classifier(self) -> bool:
        return self.classes is not None

    @property
    def n_outputs(self) -> int:
        for n in self.nodes:
            if isinstance(n, LeafNode):
                return len(n.value)
        return 0

    def internal_count(self) -> int:
        return sum(isinstance(n, InternalNode) for n in self.nodes)

    def thresholds(self) -> list[tuple[int, float]]:
        return [(n.feature, n.threshold) for n in self.nodes if isinstance(n, InternalNode)]


@dataclass(frozen=True)
class ForestModel:
    model_type: str
    n_features: int
    trees: tuple[TreeModel, ...]
    aggregation: str  # "mean_probability" | "sum"
    learning_rate: float
    base_score: float
    classes: tuple[float, ...] | None

    @property
    def is_classifier(self) -> bool:
        return self.classes is not None

    def thresholds(self) -> list[tuple[int, float]]:
        return [t for tree in self.trees for t in tree.thresholds()]


@dataclass(frozen=True)
class LinearModel:
    model_type: str
    n_features: int
    coef: tuple[tuple[float, ...], ...]  # n_outputs x n_features
    intercept: tuple[float, ...]
    classes: tuple[float, ...] | None

    @property
    def is_classifier(self) -> bool:
        return self.classes is not None

    @property
    def is_binary(self) -> bool:
        return self.is_classifier and len(self.coef) == 1

    @property
    def link(self) -> str | None:
        """Probability link implied by the family; None for margin classifiers."""
        if self.model_type != "logistic_regression":
            return None
        return "sigmoid" if self.is_binary else "softmax"

    def thresholds(self) -> list[tuple[int, float]]:
        return []


@dataclass(frozen=True)
class ScalerModel:
    model_type: str
    n_features: int
    threshold: float = 0.0  # binarizer
    norm: str = "l2"  # normalizer
    vectors: tuple[tuple[str, tuple[float, ...]], ...] = ()  # per-feature params

    is_classifier = False

    def vector(self, name: str) -> tuple[float, ...]:
        for k, v in self.vectors:
            if k == name:
                return v
        raise KeyError(name)

    def thresholds(self) -> list[tuple[int, float]]:
        if self.model_type == "binarizer":
            return [(f, self.threshold) for f in range(self.n_features)]
        return []


TrainedModel = TreeModel | ForestModel | LinearModel | ScalerModel


# -- parsing -----------------------------------------------------------------


def _need(obj: dict, key: str, path: str):
    if key not in obj:
        raise SchemaError(f"{path}: missing field {key!r}")
    return obj[key]


def _as_int(v, path: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise SchemaError(f"{path}: expected integer, got {type(v).__name__}")
    return v


def _as_float(v, path: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"{path}: expected number, got {type(v).__name__}")
    if not math.isfinite(v):
        raise ValidationError(f"{path}: value must be finite")
    return _f32(v)


def _as_float_list(v, path: str) -> tuple[float, ...]:
    if not isinstance(v, list):
        raise SchemaError(f"{path}: expected list of numbers")
    return tuple(_as_float(x, f"{path}[{i}]") for i, x in enumerate(v))


def _parse_tree_nodes(raw, n_features: int, path: str) -> tuple[TreeNode, ...]:
    if not isinstance(raw, list) or not raw:
        raise SchemaError(f"{path}: expected non-empty node list")
    nodes: list[TreeNode] = []
    for i, n in enumerate(raw):
        p = f"{path}[{i}]"
        if not isinstance(n, dict):
            raise SchemaError(f"{p}: expected object")
        if "leaf" in n:
            nodes.append(LeafNode(_as_float_list(n["leaf"], f"{p}.leaf")))
        else:
            nodes.append(
                InternalNode(
                    feature=_as_int(_need(n, "feature", p), f"{p}.feature"),
                    threshold=_as_float(_need(n, "threshold", p), f"{p}.threshold"),
                    left=_as_int(_need(n, "left", p), f"{p}.left"),
                    right=_as_int(_need(n, "right", p), f"{p}.right"),
                )
            )
    _validate_tree(nodes, n_features, path)
    return tuple(nodes)


def _validate_tree(nodes: list[TreeNode], n_features: int, path: str) -> None:
    n = len(nodes)
    seen_parent: dict[int, int] = {}
    leaf_len: int | None = None
    for i, node in enumerate(nodes):
        p = f"{path}[{i}]"
        if isinstance(node, InternalNode):
            if not 0 <= node.feature < n_features:
                raise ValidationError(f"{p}.feature: index {node.feature} not below n_features {n_features}")
            for child, which in ((node.left, "left"), (node.right, "right")):
                if not 0 <= child < n:
                    raise ValidationError(f"{p}.{which}: node index {child} out of range")
                if child == 0:
                    raise ValidationError(f"{p}.{which}: root cannot be a child")
                if child in seen_parent:
                    raise ValidationError(f"{p}.{which}: node {child} has two parents")
                seen_parent[child] = i
            if node.left == node.right:
                raise ValidationError(f"{p}: left and right children coincide")
        else:
            if leaf_len is None:
                leaf_len = len(node.value)
            elif len(node.value) != leaf_len:
                raise ValidationError(f"{p}.leaf: length {len(node.value)} != {leaf_len}")
            if not node.value:
                raise ValidationError(f"{p}.leaf: empty value vector")
    # Reachability from the root doubles as the cycle check: n-1 edges into
    # n-1 distinct non-root nodes with all nodes reachable forces a tree.
    reached = set()
    stack = [0]
    while stack:
        i = stack.pop()
        if i in reached:
            raise ValidationError(f"{path}: cycle through node {i}")
        reached.add(i)
        node = nodes[i]
        if isinstance(node, InternalNode):
            stack.extend((node.right, node.left))
    if len(reached) != n:
        orphan = min(set(range(n)) - reached)
        raise ValidationError(f"{path}[{orphan}]: node not reachable from root")


def _parse_classes(obj: dict, path: str, required: bool) -> tuple[float, ...] | None:
    if "classes" not in obj:
        if required:
            raise SchemaError(f"{path}: missing field 'classes'")
        return None
    classes = _as_float_list(obj["classes"], f"{path}.classes")
    if not classes:
        raise ValidationError(f"{path}.classes: must be non-empty")
    if len(set(classes)) != len(classes):
        raise ValidationError(f"{path}.classes: duplicate labels")
    return classes


def parse_model(text: str) -> TrainedModel:
    """Parse and validate model JSON; raises SchemaError/ValidationError."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"$: not valid JSON ({e.msg} at char {e.pos})") from None
    if not isinstance(obj, dict):
        raise SchemaError("$: expected a JSON object")
    version = _as_int(_need(obj, "format_version", "$"), "$.format_version")
    if version != FORMAT_VERSION:
        raise SchemaError(f"$.format_version: unsupported version {version}")
    mtype = _need(obj, "model_type", "$")
    if mtype not in MODEL_TYPES:
        raise SchemaError(f"$.model_type: unknown model type {mtype!r}")
    n_features = _as_int(_need(obj, "n_features", "$"), "$.n_features")
    if n_features <= 0:
        raise ValidationError("$.n_features: must be positive")

    if mtype in TREE_TYPES:
        nodes = _parse_tree_nodes(_need(obj, "nodes", "$"), n_features, "$.nodes")
        classes = _parse_classes(obj, "$", required=mtype == "decision_tree_classifier")
        if mtype == "decision_tree_regressor":
            classes = None
        model = TreeModel(mtype, n_features, nodes, classes)
        if model.is_classifier and model.n_outputs != len(model.classes):
            raise ValidationError(
                f"$.nodes: leaf vectors have length {model.n_outputs}, expected {len(model.classes)} classes"
            )
        return model

    if mtype in FOREST_TYPES:
        raw_trees = _need(obj, "trees", "$")
        if not isinstance(raw_trees, list) or not raw_trees:
            raise SchemaError("$.trees: expected non-empty list")
        trees = []
        for i, t in enumerate(raw_trees):
            if not isinstance(t, dict):
                raise SchemaError(f"$.trees[{i}]: expected object")
            nodes = _parse_tree_nodes(_need(t, "nodes", f"$.trees[{i}]"), n_features, f"$.trees[{i}].nodes")
            trees.append(TreeModel("decision_tree_regressor", n_features, nodes, None))
        aggregation = _need(obj, "aggregation", "$")
        if aggregation not in ("mean_probability", "sum"):
            raise SchemaError(f"$.aggregation: expected 'mean_probability' or 'sum', got {aggregation!r}")
        expected = "sum" if mtype.startswith("gbdt") else "mean_probability"
        if aggregation != expected:
            raise ValidationError(f"$.aggregation: {mtype} requires {expected!r}")
        learning_rate = _as_float(obj.get("learning_rate", 1.0), "$.learning_rate")
        base_score = _as_float(obj.get("base_score", 0.0), "$.base_score")
        classes = _parse_classes(
            obj, "$", required=mtype in ("random_forest_classifier", "gbdt_binary_classifier")
        )
        if mtype in ("random_forest_regressor", "gbdt_regressor"):
            classes = None
        if mtype == "gbdt_binary_classifier" and len(classes) != 2:
            raise ValidationError("$.classes: binary classifier requires exactly 2 classes")
        arity = trees[0].n_outputs
        for i, t in enumerate(trees):
            if t.n_outputs != arity:
                raise ValidationError(f"$.trees[{i}]: output arity {t.n_outputs} != {arity}")
        if mtype == "random_forest_classifier" and arity != len(classes):
            raise ValidationError(f"$.trees: leaf arity {arity} != {len(classes)} classes")
        if mtype.startswith("gbdt") and arity != 1:
            raise ValidationError("$.trees: gbdt trees must have scalar leaves")
        return ForestModel(mtype, n_features, tuple(trees), aggregation, learning_rate, base_score, classes)

    if mtype in LINEAR_TYPES:
        raw_coef = _need(obj, "coef", "$")
        if not isinstance(raw_coef, list) or not raw_coef:
            raise SchemaError("$.coef: expected non-empty list of rows")
        coef = tuple(_as_float_list(row, f"$.coef[{i}]") for i, row in enumerate(raw_coef))
        for i, row in enumerate(coef):
            if len(row) != n_features:
                raise ValidationError(f"$.coef[{i}]: length {len(row)} != n_features {n_features}")
        intercept = _as_float_list(_need(obj, "intercept", "$"), "$.intercept")
        if len(intercept) != len(coef):
            raise ValidationError(f"$.intercept: length {len(intercept)} != {len(coef)} outputs")
        classifier = mtype not in ("linear_regression", "linear_svr")
        classes = _parse_classes(obj, "$", required=classifier)
        if not classifier:
            classes = None
        if classes is not None:
            if len(classes) < 2:
                raise ValidationError("$.classes: classifiers need at least 2 classes")
            if len(coef) == 1 and len(classes) != 2:
                raise ValidationError("$.coef: single-row coef requires exactly 2 classes")
            if len(coef) > 1 and len(coef) != len(classes):
                raise ValidationError(f"$.coef: {len(coef)} rows != {len(classes)} classes")
        return LinearModel(mtype, n_features, coef, intercept, classes)

    # scalers
    if mtype == "binarizer":
        return ScalerModel(mtype, n_features, threshold=_as_float(obj.get("threshold", 0.0), "$.threshold"))
    if mtype == "normalizer":
        norm = obj.get("norm", "l2")
        if norm not in ("l1", "l2", "max"):
            raise SchemaError(f"$.norm: expected l1|l2|max, got {norm!r}")
        return ScalerModel(mtype, n_features, norm=norm)
    vectors = []
    for name in _SCALER_VECTOR_PARAMS[mtype]:
        vec = _as_float_list(_need(obj, name, "$"), f"$.{name}")
        if len(vec) != n_features:
            raise ValidationError(f"$.{name}: length {len(vec)} != n_features {n_features}")
        vectors.append((name, vec))
    return ScalerModel(mtype, n_features, vectors=tuple(vectors))


# -- serialization -----------------------------------------------------------


def _emit(value) -> str:
    """Canonical JSON text: sorted keys, float32-shortest number formatting."""
    if isinstance(value, dict):
        items = ", ".join(f"{json.dumps(k)}: {_emit(value[k])}" for k in sorted(value))
        return "{" + items + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_emit(v) for v in value) + "]"
    if isinstance(value, bool) or value is None:
        raise ValidationError(f"unsupported JSON scalar {value!r}")
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format_f32(value)
    if isinstance(value, str):
        return json.dumps(value)
    raise ValidationError(f"unsupported JSON value of type {type(value).__name__}")


def _tree_nodes_to_obj(nodes: tuple[TreeNode, ...]) -> list:
    out = []
    for n in nodes:
        if isinstance(n, InternalNode):
            out.append({"feature": n.feature, "threshold": float(n.threshold), "left": n.left, "right": n.right})
        else:
            out.append({"leaf": [float(v) for v in n.value]})
    return out


def model_to_obj(m: TrainedModel) -> dict:
    obj: dict = {"format_version": FORMAT_VERSION, "model_type": m.model_type, "n_features": m.n_features}
    if isinstance(m, TreeModel):
        obj["nodes"] = _tree_nodes_to_obj(m.nodes)
        if m.classes is not None:
            obj["classes"] = [float(c) for c in m.classes]
    elif isinstance(m, ForestModel):
        obj["trees"] = [{"nodes": _tree_nodes_to_obj(t.nodes)} for t in m.trees]
        obj["aggregation"] = m.aggregation
        obj["learning_rate"] = float(m.learning_rate)
        obj["base_score"] = float(m.base_score)
        if m.classes is not None:
            obj["classes"] = [float(c) for c in m.classes]
    elif isinstance(m, LinearModel):
        obj["coef"] = [[float(v) for v in row] for row in m.coef]
        obj["intercept"] = [float(v) for v in m.intercept]
        if m.classes is not None:
            obj["classes"] = [float(c) for c in m.classes]
    elif isinstance(m, ScalerModel):
        if m.model_type == "binarizer":
            obj["threshold"] = float(m.threshold)
        elif m.model_type == "normalizer":
            obj["norm"] = m.norm
        else:
            for name, vec in m.vectors:
                obj[name] = [float(v) for v in vec]
    else:
        raise ValidationError(f"not a model: {type(m).__name__}")
    return obj


def serialize_model(m: TrainedModel) -> str:
    """Canonical text: parse(serialize(m)) == m and equal models serialize identically."""
    return _emit(model_to_obj(m)) + "\n"
