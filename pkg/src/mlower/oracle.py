"""Direct scalar-semantics evaluator for every supported model family.

This is the ground truth the compiled tensor path is checked against, so it
deliberately shares no numerical code with the tensor modules: plain Python
floats, explicit loops, pointer-chasing tree traversal. Do not import tensor
or kernel code here.

Conventions that must match the compiled path exactly:
  * tree node test is strict: a sample goes right iff feature > threshold
    (equality goes left);
  * argmax ties resolve to the smallest index;
  * Normalizer rows with zero norm divide by 1.0.
"""

from __future__ import annotations

import math

from .errors import FeatureMismatch, ValidationError
from .models import (
    ForestModel,
    InternalNode,
    LinearModel,
    ScalerModel,
    TrainedModel,
    TreeModel,
)


def _first_argmax(values) -> int:
    best, best_i = values[0], 0
    for i in range(1, len(values)):
        if values[i] > best:
            best, best_i = values[i], i
    return best_i


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _softmax(scores: list[float]) -> list[float]:
    m = max(scores)
    exps = [math.exp(s - m) for s in scores]
    total = sum(exps)
    return [e / total for e in exps]


def _tree_leaf(tree: TreeModel, x: list[float]) -> tuple[float, ...]:
    node = tree.nodes[0]
    while isinstance(node, InternalNode):
        node = tree.nodes[node.right] if x[node.feature] > node.threshold else tree.nodes[node.left]
    return node.value


def _predict_tree(m: TreeModel, x: list[float]) -> list[float]:
    leaf = _tree_leaf(m, x)
    if m.is_classifier:
        return [m.classes[_first_argmax(leaf)]]
    return list(leaf)


def _predict_forest(m: ForestModel, x: list[float]) -> list[float]:
    if m.aggregation == "mean_probability":
        arity = m.trees[0].n_outputs
        acc = [0.0] * arity
        for tree in m.trees:
            leaf = _tree_leaf(tree, x)
            for i in range(arity):
                acc[i] += leaf[i]
        mean = [a / len(m.trees) for a in acc]
        if m.is_classifier:
            return [m.classes[_first_argmax(mean)]]
        return mean
    raw = m.base_score + m.learning_rate * sum(_tree_leaf(t, x)[0] for t in m.trees)
    if m.is_classifier:
        return [m.classes[1] if _sigmoid(raw) > 0.5 else m.classes[0]]
    return [raw]


def _predict_linear(m: LinearModel, x: list[float]) -> list[float]:
    scores = [
        sum(c * v for c, v in zip(row, x)) + b for row, b in zip(m.coef, m.intercept)
    ]
    if not m.is_classifier:
        return scores
    if m.is_binary:
        z = scores[0]
        if m.link == "sigmoid":
            return [m.classes[1] if _sigmoid(z) > 0.5 else m.classes[0]]
        return [m.classes[1] if z > 0.0 else m.classes[0]]
    if m.link == "softmax":
        scores = _softmax(scores)
    return [m.classes[_first_argmax(scores)]]


def _predict_scaler(m: ScalerModel, x: list[float]) -> list[float]:
    kind = m.model_type
    if kind == "binarizer":
        return [1.0 if v > m.threshold else 0.0 for v in x]
    if kind == "normalizer":
        if m.norm == "l1":
            n = sum(abs(v) for v in x)
        elif m.norm == "l2":
            n = math.sqrt(sum(v * v for v in x))
        else:
            n = max(abs(v) for v in x)
        if n == 0.0:
            n = 1.0
        return [v / n for v in x]
    if kind == "minmax_scaler":
        scale, offset = m.vector("scale"), m.vector("min")
        return [v * s + o for v, s, o in zip(x, scale, offset)]
    if kind == "robust_scaler":
        center, scale = m.vector("center"), m.vector("scale")
        return [(v - c) / s for v, c, s in zip(x, center, scale)]
    if kind == "standard_scaler":
        mean, scale = m.vector("mean"), m.vector("scale")
        return [(v - mu) / s for v, mu, s in zip(x, mean, scale)]
    if kind == "maxabs_scaler":
        scale = m.vector("scale")
        return [v / s for v, s in zip(x, scale)]
    raise ValidationError(f"unknown scaler kind {kind!r}")


def oracle_predict(model: TrainedModel, rows: list[list[float]]) -> list[list[float]]:
    """Evaluate a model sample by sample; returns one output vector per row."""
    out = []
    for i, x in enumerate(rows):
        if len(x) != model.n_features:
            raise FeatureMismatch(
                f"row {i} has {len(x)} features, model expects {model.n_features}"
            )
        if isinstance(model, TreeModel):
            out.append(_predict_tree(model, x))
        elif isinstance(model, ForestModel):
            out.append(_predict_forest(model, x))
        elif isinstance(model, LinearModel):
            out.append(_predict_linear(model, x))
        elif isinstance(model, ScalerModel):
            out.append(_predict_scaler(model, x))
        else:
            raise ValidationError(f"not a model: {type(model).__name__}")
    return out
