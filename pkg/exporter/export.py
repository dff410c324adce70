"""Export fitted scikit-learn estimators to the mlower model JSON format.

The exporter copies fitted attributes verbatim (as float32-faithful decimals)
and performs no math of its own; all inference semantics live in the compiler.
The one exception is RandomForest/ExtraTrees classifier leaves, which are
normalized to per-class probability rows to match mean-probability
aggregation.

Usage:
    python export.py --estimator-pickle model.pkl --out model.json

or as a library:
    from export import export
    export(fitted_estimator, "model.json")
"""

from __future__ import annotations

import argparse
import json
import pickle
import sys

import numpy as np
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

FORMAT_VERSION = 1


class UnsupportedEstimator(Exception):
    """Estimator family is outside the supported export surface."""


class NotFitted(Exception):
    """Estimator must be fitted before export."""


def _f32(x) -> float:
    return float(np.float32(x))


def _f32_list(values) -> list:
    return [_f32(v) for v in np.asarray(values).ravel()]


def _classes(estimator) -> list:
    values = np.asarray(estimator.classes_)
    if not np.issubdtype(values.dtype, np.number):
        raise UnsupportedEstimator(
            f"{type(estimator).__name__}: non-numeric class labels are not supported"
        )
    return _f32_list(values)


def _tree_nodes(tree, leaf_row) -> list:
    """Flatten a fitted sklearn tree into the node-array schema.

    Node indices are preserved verbatim (sklearn's root is index 0), so the
    emitted graph has the same shape as the fitted tree.
    """
    nodes = []
    for i in range(tree.node_count):
        if tree.children_left[i] == -1:
            nodes.append({"leaf": leaf_row(i)})
        else:
            nodes.append(
                {
                    "feature": int(tree.feature[i]),
                    "threshold": _f32(tree.threshold[i]),
                    "left": int(tree.children_left[i]),
                    "right": int(tree.children_right[i]),
                }
            )
    return nodes


def _export_tree(est, classifier: bool) -> dict:
    tree = est.tree_
    if classifier:
        leaf_row = lambda i: _f32_list(tree.value[i][0])
    else:
        leaf_row = lambda i: [_f32(tree.value[i][0][0])]
    obj = {
        "model_type": "decision_tree_classifier" if classifier else "decision_tree_regressor",
        "n_features": int(est.n_features_in_),
        "nodes": _tree_nodes(tree, leaf_row),
    }
    if classifier:
        obj["classes"] = _classes(est)
    return obj


def _export_forest(est, classifier: bool) -> dict:
    def prob_row(tree):
        def row(i):
            counts = np.asarray(tree.value[i][0], dtype=np.float64)
            total = counts.sum()
            return _f32_list(counts / total if total else counts)

        return row

    trees = []
    for sub in est.estimators_:
        tree = sub.tree_
        row = prob_row(tree) if classifier else (lambda t: (lambda i: [_f32(t.value[i][0][0])]))(tree)
        trees.append({"nodes": _tree_nodes(tree, row)})
    obj = {
        "model_type": "random_forest_classifier" if classifier else "random_forest_regressor",
        "n_features": int(est.n_features_in_),
        "trees": trees,
        "aggregation": "mean_probability",
    }
    if classifier:
        obj["classes"] = _classes(est)
    return obj


def _export_gbdt(est, classifier: bool) -> dict:
    if classifier and est.n_classes_ != 2:
        raise UnsupportedEstimator("multi-class GradientBoosting is not supported")
    base = float(est._raw_predict_init(np.zeros((1, est.n_features_in_)))[0][0])
    trees = []
    for stage in est.estimators_:
        tree = stage[0].tree_
        trees.append({"nodes": _tree_nodes(tree, lambda i, t=tree: [_f32(t.value[i][0][0])])})
    obj = {
        "model_type": "gbdt_binary_classifier" if classifier else "gbdt_regressor",
        "n_features": int(est.n_features_in_),
        "trees": trees,
        "aggregation": "sum",
        "learning_rate": _f32(est.learning_rate),
        "base_score": _f32(base),
    }
    if classifier:
        obj["classes"] = _classes(est)
    return obj


def _export_linear(est, model_type: str, classifier: bool) -> dict:
    coef = np.atleast_2d(np.asarray(est.coef_, dtype=np.float64))
    intercept = np.atleast_1d(np.asarray(est.intercept_, dtype=np.float64))
    if intercept.shape[0] != coef.shape[0]:
        intercept = np.full(coef.shape[0], float(intercept[0]))
    obj = {
        "model_type": model_type,
        "n_features": int(est.n_features_in_),
        "coef": [_f32_list(row) for row in coef],
        "intercept": _f32_list(intercept),
    }
    if classifier:
        obj["classes"] = _classes(est)
    return obj


def _identity_if_none(values, n_features: int, fill: float):
    if values is None:
        return [fill] * n_features
    return _f32_list(values)


def _export_scaler(est, kind: str) -> dict:
    n = int(est.n_features_in_)
    obj = {"model_type": kind, "n_features": n}
    if kind == "binarizer":
        obj["threshold"] = _f32(est.threshold)
    elif kind == "normalizer":
        obj["norm"] = str(est.norm)
    elif kind == "minmax_scaler":
        obj["scale"] = _f32_list(est.scale_)
        obj["min"] = _f32_list(est.min_)
    elif kind == "robust_scaler":
        obj["center"] = _identity_if_none(getattr(est, "center_", None), n, 0.0)
        obj["scale"] = _identity_if_none(getattr(est, "scale_", None), n, 1.0)
    elif kind == "standard_scaler":
        obj["mean"] = _identity_if_none(getattr(est, "mean_", None), n, 0.0)
        obj["scale"] = _identity_if_none(getattr(est, "scale_", None), n, 1.0)
    elif kind == "maxabs_scaler":
        obj["scale"] = _f32_list(est.scale_)
    return obj


# estimator class name -> builder
_TREE_KINDS = {
    "DecisionTreeClassifier": True,
    "ExtraTreeClassifier": True,
    "DecisionTreeRegressor": False,
    "ExtraTreeRegressor": False,
}
_FOREST_KINDS = {
    "RandomForestClassifier": True,
    "ExtraTreesClassifier": True,
    "RandomForestRegressor": False,
    "ExtraTreesRegressor": False,
}
_GBDT_KINDS = {
    "GradientBoostingClassifier": True,
    "GradientBoostingRegressor": False,
}
_LINEAR_KINDS = {
    # class name -> (model_type, classifier)
    "LinearRegression": ("linear_regression", False),
    "Ridge": ("linear_regression", False),
    "SGDRegressor": ("linear_regression", False),
    "LinearSVR": ("linear_svr", False),
    "LogisticRegression": ("logistic_regression", True),
    "SGDClassifier": ("sgd_classifier", True),
    "RidgeClassifier": ("ridge_classifier", True),
    "Perceptron": ("perceptron", True),
    "LinearSVC": ("linear_svc", True),
}
_SCALER_KINDS = {
    "Binarizer": "binarizer",
    "Normalizer": "normalizer",
    "MinMaxScaler": "minmax_scaler",
    "RobustScaler": "robust_scaler",
    "StandardScaler": "standard_scaler",
    "MaxAbsScaler": "maxabs_scaler",
}


def to_model_object(estimator) -> dict:
    """Build the model JSON object for a fitted estimator."""
    name = type(estimator).__name__
    if name in ("Binarizer", "Normalizer"):
        pass  # stateless transformers are fitted trivially
    else:
        try:
            check_is_fitted(estimator)
        except NotFittedError as e:
            raise NotFitted(str(e)) from None
    if name in _TREE_KINDS:
        obj = _export_tree(estimator, _TREE_KINDS[name])
    elif name in _FOREST_KINDS:
        obj = _export_forest(estimator, _FOREST_KINDS[name])
    elif name in _GBDT_KINDS:
        obj = _export_gbdt(estimator, _GBDT_KINDS[name])
    elif name in _LINEAR_KINDS:
        model_type, classifier = _LINEAR_KINDS[name]
        obj = _export_linear(estimator, model_type, classifier)
    elif name in _SCALER_KINDS:
        if not hasattr(estimator, "n_features_in_"):
            raise NotFitted(f"{name} has no n_features_in_; fit it first")
        obj = _export_scaler(estimator, _SCALER_KINDS[name])
    else:
        raise UnsupportedEstimator(f"no exporter for estimator kind {name!r}")
    obj["format_version"] = FORMAT_VERSION
    return obj


def export(estimator, out_path: str) -> dict:
    """Write the estimator as model JSON; returns the emitted object."""
    obj = to_model_object(estimator)
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True)
        fh.write("\n")
    return obj


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--estimator-pickle", required=True, help="pickled fitted estimator")
    parser.add_argument("--out", required=True, help="output model JSON path")
    args = parser.parse_args(argv)
    with open(args.estimator_pickle, "rb") as fh:
        estimator = pickle.load(fh)
    try:
        export(estimator, args.out)
    except (UnsupportedEstimator, NotFitted) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
