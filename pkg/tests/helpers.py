"""Shared fixtures-in-code: hand-built models, random model generators, and
the compiled-vs-oracle comparison harness used across the suite."""

from __future__ import annotations

import numpy as np

from mlower.dtypes import DType
from mlower.models import (
    ForestModel,
    InternalNode,
    LeafNode,
    LinearModel,
    ScalerModel,
    TreeModel,
)
from mlower.oracle import oracle_predict
from mlower.pipeline import compile_model
from mlower.runtime import execute
from mlower.tensor import Tensor

TOLERANCE = 1e-5


def ff(*values) -> tuple[float, ...]:
    """Coerce literals to float32-faithful floats (the model-format contract)."""
    return tuple(float(np.float32(v)) for v in values)


# -- hand-built fixtures -------------------------------------------------------


def tree_a() -> TreeModel:
    """Root tests f0, its right child tests f1; leaves in-order L0, L1, L2."""
    return TreeModel(
        "decision_tree_classifier",
        n_features=2,
        nodes=(
            InternalNode(0, 0.5, 1, 2),
            LeafNode((1.0, 0.0, 0.0)),
            InternalNode(1, 1.5, 3, 4),
            LeafNode((0.0, 1.0, 0.0)),
            LeafNode((0.0, 0.0, 1.0)),
        ),
        classes=(0.0, 1.0, 2.0),
    )


def tree_b() -> TreeModel:
    """Root's left child is internal, right child is a leaf."""
    return TreeModel(
        "decision_tree_classifier",
        n_features=2,
        nodes=(
            InternalNode(0, 0.5, 1, 2),
            InternalNode(1, -0.25, 3, 4),
            LeafNode((0.0, 0.0, 1.0)),
            LeafNode((1.0, 0.0, 0.0)),
            LeafNode((0.0, 1.0, 0.0)),
        ),
        classes=(0.0, 1.0, 2.0),
    )


def structural_tree(n_features: int = 90) -> TreeModel:
    """Complete depth-3 tree over many features; selector density 1/n_features."""
    nodes: list = []
    # internal nodes 0..6 in level order, leaves 7..14
    thresholds = [0.5, -1.25, 2.75, 0.125, -3.5, 1.0625, -0.75]
    features = [3, 10, 47, 21, 60, 72, 89]
    for i in range(7):
        nodes.append(InternalNode(features[i], thresholds[i], 2 * i + 1, 2 * i + 2))
    for j in range(8):
        nodes.append(LeafNode((float(j) + 0.5,)))
    return TreeModel("decision_tree_regressor", n_features, tuple(nodes), None)


def comb_tree(n_internal: int, n_features: int = 4) -> TreeModel:
    """Right-leaning comb with the requested number of internal nodes."""
    nodes: list = []

    def grow(remaining: int) -> int:
        idx = len(nodes)
        if remaining == 0:
            nodes.append(LeafNode((float(idx % 5) + 0.25,)))
            return idx
        nodes.append(None)
        nodes[idx] = InternalNode(idx % n_features, float(idx) + 0.5, 0, 0)
        left = len(nodes)
        nodes.append(LeafNode((float(idx % 7),)))
        right = grow(remaining - 1)
        nodes[idx] = InternalNode(idx % n_features, float(idx) + 0.5, left, right)
        return idx

    grow(n_internal)
    return TreeModel("decision_tree_regressor", n_features, tuple(nodes), None)


def logistic_multi() -> LinearModel:
    return LinearModel(
        "logistic_regression",
        n_features=4,
        coef=((0.5, -1.25, 2.0, 0.75), (-0.5, 1.5, -0.25, 0.125), (1.0, 0.25, -1.75, -0.5)),
        intercept=ff(0.1, -0.2, 0.3),
        classes=(0.0, 1.0, 2.0),
    )


def logistic_binary() -> LinearModel:
    return LinearModel(
        "logistic_regression",
        n_features=3,
        coef=((0.75, -1.5, 0.25),),
        intercept=(0.375,),
        classes=(4.0, 7.0),
    )


def linear_regression() -> LinearModel:
    return LinearModel(
        "linear_regression",
        n_features=3,
        coef=((1.5, -0.25, 0.75), (0.0, 2.0, -1.0)),
        intercept=(0.5, -0.125),
        classes=None,
    )


def normalizer(norm: str = "l2") -> ScalerModel:
    return ScalerModel("normalizer", n_features=4, norm=norm)


def binarizer(threshold: float = 0.0) -> ScalerModel:
    return ScalerModel("binarizer", n_features=4, threshold=threshold)


def minmax_scaler() -> ScalerModel:
    return ScalerModel(
        "minmax_scaler",
        n_features=4,
        vectors=(("scale", (0.5, 1.25, 2.0, 0.75)), ("min", (-0.5, 0.25, 0.0, 1.5))),
    )


def forest_fixture() -> ForestModel:
    t1 = TreeModel(
        "decision_tree_regressor", 2,
        (InternalNode(0, 0.5, 1, 2), LeafNode(ff(0.2, 0.8)), LeafNode(ff(0.9, 0.1))), None,
    )
    t2 = TreeModel(
        "decision_tree_regressor", 2,
        (InternalNode(1, -1.5, 1, 2), LeafNode(ff(0.6, 0.4)), LeafNode(ff(0.3, 0.7))), None,
    )
    return ForestModel(
        "random_forest_classifier", 2, (t1, t2), "mean_probability", 1.0, 0.0, (0.0, 1.0)
    )


def gbdt_binary_fixture() -> ForestModel:
    t1 = TreeModel(
        "decision_tree_regressor", 2,
        (InternalNode(0, 0.0, 1, 2), LeafNode((-1.5,)), LeafNode((2.25,))), None,
    )
    t2 = TreeModel(
        "decision_tree_regressor", 2,
        (InternalNode(1, 1.0, 1, 2), LeafNode((0.75,)), LeafNode((-0.5,))), None,
    )
    return ForestModel("gbdt_binary_classifier", 2, (t1, t2), "sum", ff(0.3)[0], 0.125, (0.0, 1.0))


FIXTURE_MODELS = {
    "tree_a": tree_a,
    "tree_b": tree_b,
    "structural_tree": structural_tree,
    "deep_tree_200": lambda: comb_tree(200),
    "logistic_multi": logistic_multi,
    "logistic_binary": logistic_binary,
    "linear_regression": linear_regression,
    "normalizer": normalizer,
    "binarizer": binarizer,
    "minmax_scaler": minmax_scaler,
    "forest": forest_fixture,
    "gbdt_binary": gbdt_binary_fixture,
}


# -- random model generators ----------------------------------------------------


def _f32r(rng, lo, hi, size=None):
    v = np.asarray(rng.uniform(lo, hi, size=size))
    return v.astype(np.float32).astype(np.float64)


def random_tree_nodes(rng, n_features, max_depth, n_outputs, leaf_fn):
    nodes: list = []

    def grow(depth: int) -> int:
        idx = len(nodes)
        if depth >= max_depth or (depth > 0 and rng.random() < 0.3):
            nodes.append(LeafNode(tuple(leaf_fn())))
            return idx
        nodes.append(None)
        feature = int(rng.integers(n_features))
        threshold = float(_f32r(rng, -8, 8))
        left = grow(depth + 1)
        right = grow(depth + 1)
        nodes[idx] = InternalNode(feature, threshold, left, right)
        return idx

    grow(0)
    return tuple(nodes)


def random_tree_model(rng, classifier: bool, max_depth: int = 12) -> TreeModel:
    n_features = int(rng.integers(2, 12))
    if classifier:
        n_classes = int(rng.integers(2, 6))
        classes = tuple(float(c) for c in sorted(rng.choice(50, size=n_classes, replace=False)))
        leaf_fn = lambda: [float(v) for v in rng.integers(0, 40, size=n_classes)]
        return TreeModel(
            "decision_tree_classifier", n_features,
            random_tree_nodes(rng, n_features, max_depth, n_classes, leaf_fn), classes,
        )
    leaf_fn = lambda: [float(_f32r(rng, -20, 20))]
    return TreeModel(
        "decision_tree_regressor", n_features,
        random_tree_nodes(rng, n_features, max_depth, 1, leaf_fn), None,
    )


def random_forest_model(rng, classifier: bool, max_trees: int = 20) -> ForestModel:
    n_features = int(rng.integers(2, 10))
    n_trees = int(rng.integers(1, max_trees + 1))
    if classifier:
        n_classes = int(rng.integers(2, 5))
        classes = tuple(float(c) for c in range(n_classes))

        def leaf_fn():
            v = rng.uniform(0.0, 1.0, size=n_classes) + 1e-3
            return [float(np.float32(x)) for x in v / v.sum()]

        arity = n_classes
    else:
        classes = None
        leaf_fn = lambda: [float(_f32r(rng, -10, 10))]
        arity = 1
    trees = tuple(
        TreeModel(
            "decision_tree_regressor", n_features,
            random_tree_nodes(rng, n_features, int(rng.integers(1, 7)), arity, leaf_fn), None,
        )
        for _ in range(n_trees)
    )
    mtype = "random_forest_classifier" if classifier else "random_forest_regressor"
    return ForestModel(mtype, n_features, trees, "mean_probability", 1.0, 0.0, classes)


def random_gbdt_model(rng, classifier: bool, max_trees: int = 20) -> ForestModel:
    n_features = int(rng.integers(2, 10))
    n_trees = int(rng.integers(1, max_trees + 1))
    leaf_fn = lambda: [float(_f32r(rng, -4, 4))]
    trees = tuple(
        TreeModel(
            "decision_tree_regressor", n_features,
            random_tree_nodes(rng, n_features, int(rng.integers(1, 6)), 1, leaf_fn), None,
        )
        for _ in range(n_trees)
    )
    mtype = "gbdt_binary_classifier" if classifier else "gbdt_regressor"
    classes = (0.0, 1.0) if classifier else None
    return ForestModel(
        mtype, n_features, trees, "sum",
        float(_f32r(rng, 0.02, 0.6)), float(_f32r(rng, -2, 2)), classes,
    )


def random_linear_model(rng, model_type: str) -> LinearModel:
    n_features = int(rng.integers(2, 12))
    if model_type in ("linear_regression", "linear_svr"):
        n_outputs = int(rng.integers(1, 4)) if model_type == "linear_regression" else 1
        classes = None
    else:
        n_classes = int(rng.integers(2, 11))
        classes = tuple(float(c) for c in range(n_classes))
        n_outputs = 1 if n_classes == 2 else n_classes
    coef = tuple(tuple(float(v) for v in _f32r(rng, -3, 3, n_features)) for _ in range(n_outputs))
    intercept = tuple(float(v) for v in _f32r(rng, -2, 2, n_outputs))
    return LinearModel(model_type, n_features, coef, intercept, classes)


def random_scaler_model(rng, kind: str) -> ScalerModel:
    n_features = int(rng.integers(2, 12))
    if kind == "binarizer":
        return ScalerModel(kind, n_features, threshold=float(_f32r(rng, -2, 2)))
    if kind == "normalizer":
        return ScalerModel(kind, n_features, norm=("l1", "l2", "max")[int(rng.integers(3))])
    pos = lambda: tuple(float(v) for v in _f32r(rng, 0.25, 4, n_features))
    any_ = lambda: tuple(float(v) for v in _f32r(rng, -5, 5, n_features))
    vectors = {
        "minmax_scaler": (("scale", pos()), ("min", any_())),
        "robust_scaler": (("center", any_()), ("scale", pos())),
        "standard_scaler": (("mean", any_()), ("scale", pos())),
        "maxabs_scaler": (("scale", pos()),),
    }[kind]
    return ScalerModel(kind, n_features, vectors=vectors)


# -- comparison harness ----------------------------------------------------------


def random_inputs(rng, n_rows: int, n_features: int) -> Tensor:
    rows = rng.uniform(-10.0, 10.0, size=(n_rows, n_features)).astype(np.float32)
    return Tensor.from_dense(rows, DType.FLOAT32)


def boundary_inputs(model) -> Tensor:
    rows = [[0.0] * model.n_features]
    for feature, threshold in model.thresholds():
        row = [0.0] * model.n_features
        row[feature] = threshold
        rows.append(row)
    return Tensor.from_dense(np.asarray(rows, dtype=np.float32), DType.FLOAT32)


def compiled_vs_oracle(model, x: Tensor, profile=None, passes=("re", "dr", "sor")):
    kwargs = {"passes": tuple(passes)}
    if profile is not None:
        kwargs["profile"] = profile
    compiled = compile_model(model, **kwargs)
    got = execute(compiled.plan, x).to_numpy().astype(np.float64)
    want = np.asarray(oracle_predict(model, x.rows()), dtype=np.float64)
    return got, want


def agrees(model, got: np.ndarray, want: np.ndarray, tol: float = TOLERANCE) -> bool:
    if model.is_classifier:
        return bool(np.array_equal(got, want))
    return bool(np.all(np.abs(got - want) <= tol * np.maximum(np.abs(want), 1.0)))
