"""Lower trained models to chains of tensor operator representations.

The tree lowering turns nested comparisons into pure tensor algebra:

    select = matmul(X, selector)      # pick the feature each internal node tests
    went_right = greater(select, thresholds)
    scores = matmul(went_right, routes)
    leaf = argmax(scores, axis=1)     # smallest-index tie-break is load-bearing
    out = gather_rows(leaf_table, leaf)

``selector`` has one 1 per column (feature -> internal node), ``routes`` marks
a leaf with 0 when it lies in the left subtree of an internal node and 1
otherwise. Internal nodes are numbered in level order, leaves in in-order,
and then the row of ``routes`` scores selects exactly the traversal leaf for
every possible comparison-outcome vector (verified exhaustively in the test
suite before anything builds on it).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dtypes import DType, smallest_dtype_of
from .errors import ValidationError
from .models import (
    ForestModel,
    InternalNode,
    LeafNode,
    LinearModel,
    ScalerModel,
    TrainedModel,
    TreeModel,
)
from .tensor import Tensor

GRAPH_INPUT = -1

CATEGORY_COMPARISON = "comparison"
CATEGORY_INDICES = "indices"
CATEGORY_MONOTONIC = "monotonic"
CATEGORY_REDUCTION = "reduction"
CATEGORY_ARITHMETIC = "arithmetic"

KERNEL_CATEGORY = {
    "matmul": CATEGORY_ARITHMETIC,
    "sparse_dense_matmul": CATEGORY_ARITHMETIC,
    "add": CATEGORY_ARITHMETIC,
    "sub": CATEGORY_ARITHMETIC,
    "mul": CATEGORY_ARITHMETIC,
    "div": CATEGORY_ARITHMETIC,
    "greater": CATEGORY_COMPARISON,
    "less": CATEGORY_COMPARISON,
    "greater_equal": CATEGORY_COMPARISON,
    "less_equal": CATEGORY_COMPARISON,
    "equal": CATEGORY_COMPARISON,
    "argmax": CATEGORY_INDICES,
    "sigmoid": CATEGORY_MONOTONIC,
    "softmax": CATEGORY_MONOTONIC,
    "relu": CATEGORY_MONOTONIC,
    "tanh": CATEGORY_MONOTONIC,
    "exp": CATEGORY_MONOTONIC,
    "monotonic_chain": CATEGORY_MONOTONIC,
    "reduce_sum": CATEGORY_REDUCTION,
    "reduce_mean": CATEGORY_REDUCTION,
    "reduce_max": CATEGORY_REDUCTION,
    "reduce_min": CATEGORY_REDUCTION,
    "row_norm": CATEGORY_REDUCTION,
    "cast": CATEGORY_ARITHMETIC,
    "reshape": CATEGORY_ARITHMETIC,
    "gather_rows": CATEGORY_ARITHMETIC,
    "broadcast_const": CATEGORY_ARITHMETIC,
    "stack": CATEGORY_ARITHMETIC,
}

# Inputs that carry positions rather than data; they stay out of dtype joins.
INDEX_INPUT_SLOTS = {"gather_rows": (0,)}


@dataclass(frozen=True)
class OperatorRep:
    """One tensor operator with bound weights and references to earlier reps."""

    kernel: str
    inputs: tuple[int, ...]  # indices of earlier reps, or GRAPH_INPUT
    weights: dict[str, Tensor] = field(default_factory=dict)
    attrs: dict = field(default_factory=dict)

    @property
    def category(self) -> str:
        return KERNEL_CATEGORY[self.kernel]


def _weight(values, dtype: DType | None = None) -> Tensor:
    arr = np.asarray(values, dtype=np.float64)
    return Tensor.from_dense(arr, dtype or smallest_dtype_of(arr))


@dataclass(frozen=True)
class TreeTensors:
    """The three tree-encoding weights plus per-leaf payload rows."""

    selector: Tensor  # n_features x n_internal, one 1 per column
    thresholds: Tensor  # n_internal
    routes: Tensor  # n_internal x n_leaves, 0 marks "in left subtree"
    leaf_table: Tensor  # n_leaves x n_outputs


def level_order_internal(tree: TreeModel) -> list[int]:
    """Indices of internal nodes in level (breadth-first) order."""
    order, queue = [], [0]
    while queue:
        i = queue.pop(0)
        node = tree.nodes[i]
        if isinstance(node, InternalNode):
            order.append(i)
            queue.extend((node.left, node.right))
    return order


def in_order_leaves(tree: TreeModel) -> list[int]:
    """Indices of leaf nodes in in-order traversal order."""
    order: list[int] = []

    def visit(i: int) -> None:
        node = tree.nodes[i]
        if isinstance(node, LeafNode):
            order.append(i)
        else:
            visit(node.left)
            visit(node.right)

    visit(0)
    return order


def _leaves_under(tree: TreeModel, root: int) -> set[int]:
    found, stack = set(), [root]
    while stack:
        i = stack.pop()
        node = tree.nodes[i]
        if isinstance(node, LeafNode):
            found.add(i)
        else:
            stack.extend((node.left, node.right))
    return found


def tree_tensors(tree: TreeModel, leaf_rows: list[list[float]]) -> TreeTensors:
    """Build the encoding weights for a tree with at least one internal node."""
    internals = level_order_internal(tree)
    leaves = in_order_leaves(tree)
    if not internals:
        raise ValidationError("single-leaf tree has no tensor encoding; use a constant")
    leaf_pos = {idx: j for j, idx in enumerate(leaves)}
    n_i, n_l = len(internals), len(leaves)

    selector = np.zeros((tree.n_features, n_i), dtype=np.float64)
    thresholds = np.zeros(n_i, dtype=np.float64)
    routes = np.ones((n_i, n_l), dtype=np.float64)
    for col, idx in enumerate(internals):
        node = tree.nodes[idx]
        selector[node.feature, col] = 1.0
        thresholds[col] = node.threshold
        for leaf_idx in _leaves_under(tree, node.left):
            routes[col, leaf_pos[leaf_idx]] = 0.0

    return TreeTensors(
        selector=_weight(selector),
        thresholds=_weight(thresholds, DType.FLOAT32),
        routes=_weight(routes),
        leaf_table=_weight(np.asarray(leaf_rows, dtype=np.float64)),
    )


def _leaf_payload(tree: TreeModel, mode: str, classes) -> list[list[float]]:
    """Per-leaf table rows in in-order: prediction, raw vector, or scalar."""
    rows = []
    for idx in in_order_leaves(tree):
        value = tree.nodes[idx].value
        if mode == "prediction":
            best = max(range(len(value)), key=lambda i: (value[i], -i))
            rows.append([float(classes[best])] if classes is not None else list(value))
        elif mode == "vector":
            rows.append(list(value))
        else:
            raise ValidationError(f"unknown leaf payload mode {mode!r}")
    return rows


def _tree_chain(tree: TreeModel, leaf_rows: list[list[float]], base: int, input_ref: int) -> list[OperatorRep]:
    """Emit the five-op tree chain (or one constant for a single-leaf tree)."""
    if tree.internal_count() == 0:
        row = [list(leaf_rows[0])]
        return [OperatorRep("broadcast_const", (input_ref,), {"row": _weight(row)})]
    tt = tree_tensors(tree, leaf_rows)
    return [
        OperatorRep("matmul", (input_ref,), {"w": tt.selector}, {"out_dtype": DType.FLOAT32}),
        OperatorRep("greater", (base + 0,), {"rhs": tt.thresholds}),
        OperatorRep("matmul", (base + 1,), {"w": tt.routes}, {"out_dtype": DType.INT32}),
        OperatorRep("argmax", (base + 2,), {}, {"axis": 1}),
        OperatorRep("gather_rows", (base + 3,), {"table": tt.leaf_table}),
    ]


def _class_table(classes) -> Tensor:
    return _weight([[float(c)] for c in classes])


def _classifier_tail(reps: list[OperatorRep], score_ref: int, classes) -> None:
    """argmax over class scores, then turn indices into class labels."""
    reps.append(OperatorRep("argmax", (score_ref,), {}, {"axis": 1}))
    reps.append(OperatorRep("gather_rows", (len(reps) - 1,), {"table": _class_table(classes)}))


def _binary_tail(reps: list[OperatorRep], score_ref: int, decision: float, classes) -> None:
    """Threshold a single score column and gather the two-row class table."""
    reps.append(OperatorRep("greater", (score_ref,), {"rhs": _weight([[decision]], DType.FLOAT32)}))
    reps.append(OperatorRep("reshape", (len(reps) - 1,), {}, {"shape": ("batch",)}))
    reps.append(OperatorRep("cast", (len(reps) - 1,), {}, {"target": DType.INT32}))
    reps.append(OperatorRep("gather_rows", (len(reps) - 1,), {"table": _class_table(classes)}))


def convert_tree(tree: TreeModel) -> list[OperatorRep]:
    rows = _leaf_payload(tree, "prediction", tree.classes)
    return _tree_chain(tree, rows, 0, GRAPH_INPUT)


def convert_linear(m: LinearModel) -> list[OperatorRep]:
    coef_t = np.asarray(m.coef, dtype=np.float64).T  # n_features x n_outputs
    reps = [
        OperatorRep("matmul", (GRAPH_INPUT,), {"w": _weight(coef_t)}, {"out_dtype": DType.FLOAT32}),
        OperatorRep("add", (0,), {"rhs": _weight(list(m.intercept))}),
    ]
    if not m.is_classifier:
        return reps
    if m.is_binary:
        score = 1
        if m.link == "sigmoid":
            reps.append(OperatorRep("sigmoid", (score,)))
            score, decision = 2, 0.5
        else:
            decision = 0.0
        _binary_tail(reps, score, decision, m.classes)
        return reps
    score = 1
    if m.link == "softmax":
        reps.append(OperatorRep("softmax", (score,), {}, {"axis": 1}))
        score = 2
    _classifier_tail(reps, score, m.classes)
    return reps


def convert_scaler(m: ScalerModel) -> list[OperatorRep]:
    kind = m.model_type
    if kind == "binarizer":
        return [
            OperatorRep("greater", (GRAPH_INPUT,), {"rhs": _weight([[m.threshold]], DType.FLOAT32)}),
            OperatorRep("cast", (0,), {}, {"target": DType.FLOAT32}),
        ]
    if kind == "normalizer":
        return [
            OperatorRep("row_norm", (GRAPH_INPUT,), {}, {"kind": m.norm}),
            OperatorRep("div", (GRAPH_INPUT, 0)),
        ]
    if kind == "minmax_scaler":
        return [
            OperatorRep("mul", (GRAPH_INPUT,), {"rhs": _weight(list(m.vector("scale")))}),
            OperatorRep("add", (0,), {"rhs": _weight(list(m.vector("min")))}),
        ]
    if kind == "robust_scaler":
        return [
            OperatorRep("sub", (GRAPH_INPUT,), {"rhs": _weight(list(m.vector("center")))}),
            OperatorRep("div", (0,), {"rhs": _weight(list(m.vector("scale")))}),
        ]
    if kind == "standard_scaler":
        return [
            OperatorRep("sub", (GRAPH_INPUT,), {"rhs": _weight(list(m.vector("mean")))}),
            OperatorRep("div", (0,), {"rhs": _weight(list(m.vector("scale")))}),
        ]
    if kind == "maxabs_scaler":
        return [OperatorRep("div", (GRAPH_INPUT,), {"rhs": _weight(list(m.vector("scale")))})]
    raise ValidationError(f"unknown scaler kind {kind!r}")


def convert_ensemble(m: ForestModel) -> list[OperatorRep]:
    reps: list[OperatorRep] = []
    tree_outputs = []
    for tree in m.trees:
        rows = _leaf_payload(tree, "vector", None)
        chain = _tree_chain(tree, rows, len(reps), GRAPH_INPUT)
        reps.extend(chain)
        tree_outputs.append(len(reps) - 1)
    reps.append(OperatorRep("stack", tuple(tree_outputs), {}, {"axis": 1}))
    stacked = len(reps) - 1
    if m.aggregation == "mean_probability":
        # leaf payloads may scan as integer dtypes (count vectors); the mean
        # kernel is float-only, so widen first
        reps.append(OperatorRep("cast", (stacked,), {}, {"target": DType.FLOAT32}))
        reps.append(OperatorRep("reduce_mean", (len(reps) - 1,), {}, {"axis": 1, "out_dtype": DType.FLOAT32}))
        if m.is_classifier:
            _classifier_tail(reps, len(reps) - 1, m.classes)
        return reps
    reps.append(OperatorRep("reduce_sum", (stacked,), {}, {"axis": 1, "out_dtype": DType.FLOAT32}))
    reps.append(OperatorRep("mul", (len(reps) - 1,), {"rhs": _weight([[m.learning_rate]], DType.FLOAT32)}))
    reps.append(OperatorRep("add", (len(reps) - 1,), {"rhs": _weight([[m.base_score]], DType.FLOAT32)}))
    if m.is_classifier:
        reps.append(OperatorRep("sigmoid", (len(reps) - 1,)))
        _binary_tail(reps, len(reps) - 1, 0.5, m.classes)
    return reps


def convert_model(m: TrainedModel) -> list[OperatorRep]:
    """Dispatch to the family-specific lowering; output is reference-closed."""
    if isinstance(m, TreeModel):
        return convert_tree(m)
    if isinstance(m, ForestModel):
        return convert_ensemble(m)
    if isinstance(m, LinearModel):
        return convert_linear(m)
    if isinstance(m, ScalerModel):
        return convert_scaler(m)
    raise ValidationError(f"not a model: {type(m).__name__}")
