import json

import numpy as np
import pytest

import helpers
from mlower.convert import GRAPH_INPUT, OperatorRep, convert_model
from mlower.dtypes import DType
from mlower.errors import DanglingReference, CyclicGraph, ProfileError
from mlower.graph import (
    BUILTIN_PROFILES,
    Ecg,
    EcgNode,
    build_ecg,
    dump_ecg,
    infer_shapes,
    intermediate_specs,
    load_profile,
    output_dtypes,
    topo_order,
    validate_ecg,
)
from mlower.tensor import Tensor


def build_fixture(model):
    return build_ecg(convert_model(model), (model.n_features, DType.FLOAT32))


def test_tree_a_graph_metadata():
    g = build_fixture(helpers.tree_a())
    assert len(g.nodes) == 5
    kernels = [g.nodes[i].kernel for i in topo_order(g)]
    assert kernels == ["matmul", "greater", "matmul", "argmax", "gather_rows"]
    selector = g.nodes[0].weights["w"]
    routes = g.nodes[2].weights["w"]
    thresholds = g.nodes[1].weights["rhs"]
    assert selector.smallest_dtype == DType.BOOL
    assert routes.smallest_dtype == DType.BOOL
    assert thresholds.smallest_dtype == DType.FLOAT32
    for node in g.nodes.values():
        assert node.use_sparse is False
        assert node.op_dtype is None
        for w in node.weights.values():
            assert w.actual_dtype == w.smallest_dtype


def test_selector_sparsity_is_one_over_features():
    g = build_fixture(helpers.structural_tree(90))
    selector = g.nodes[0].weights["w"]
    assert selector.sparsity == pytest.approx(1.0 / 90.0)


def test_empty_reps_rejected():
    with pytest.raises(DanglingReference):
        build_ecg([], (4, DType.FLOAT32))


def test_forward_reference_rejected():
    reps = [OperatorRep("sigmoid", (1,)), OperatorRep("sigmoid", (0,))]
    with pytest.raises(DanglingReference):
        build_ecg(reps, (4, DType.FLOAT32))


def test_topo_chain_and_diamond():
    g = build_fixture(helpers.tree_a())
    assert topo_order(g) == [0, 1, 2, 3, 4]
    # diamond: normalizer divides the input by its own row norm
    g2 = build_fixture(helpers.normalizer())
    assert topo_order(g2) == [0, 1]


def test_topo_deterministic_on_shuffled_ids():
    def weight(v):
        from mlower.graph import Weight

        return Weight.from_tensor(Tensor.from_dense(np.asarray(v, np.float32), DType.FLOAT32))

    # hand-built graph with non-contiguous, shuffled ids
    nodes = {
        7: EcgNode(7, "sigmoid", (GRAPH_INPUT,), category="monotonic"),
        3: EcgNode(3, "exp", (GRAPH_INPUT,), category="monotonic"),
        5: EcgNode(5, "add", (3, 7), category="arithmetic"),
    }
    g = Ecg(nodes=nodes, input_shape=(None, 2), input_dtype=DType.FLOAT32, output=5)
    orders = {tuple(topo_order(g)) for _ in range(5)}
    assert orders == {(3, 7, 5)}


def test_cycle_detected():
    nodes = {
        0: EcgNode(0, "sigmoid", (1,), category="monotonic"),
        1: EcgNode(1, "exp", (0,), category="monotonic"),
    }
    g = Ecg(nodes=nodes, input_shape=(None, 2), input_dtype=DType.FLOAT32, output=1)
    with pytest.raises(CyclicGraph):
        topo_order(g)


def test_validate_ok_on_all_fixtures():
    for name, build in helpers.FIXTURE_MODELS.items():
        g = build_fixture(build())
        assert validate_ecg(g) == [], name


def test_validate_flags_dtype_lowering_breach():
    g = build_fixture(helpers.tree_a())
    g.nodes[1].attrs["out_dtype"] = DType.FLOAT32  # comparison claiming float output
    problems = validate_ecg(g)
    assert any("dtype-lowering breached" in p for p in problems)


def test_validate_flags_orphan():
    g = build_fixture(helpers.tree_a())
    g.nodes[99] = EcgNode(99, "sigmoid", (GRAPH_INPUT,), category="monotonic")
    problems = validate_ecg(g)
    assert any("not connected" in p for p in problems)


def test_weight_sparsity_recomputation_detects_drift():
    g = build_fixture(helpers.tree_a())
    g.nodes[0].weights["w"].sparsity = 0.123
    assert any("sparsity" in p for p in validate_ecg(g))


# immediate lattice predecessors of each dtype, for the minimality probe
_ONE_STEP_DOWN = {
    DType.INT4: (DType.BOOL,),
    DType.INT8: (DType.INT4,),
    DType.INT16: (DType.INT8,),
    DType.INT32: (DType.INT16,),
    DType.FLOAT32: (DType.INT32, DType.FLOAT16),
}


def test_smallest_dtype_is_minimal_on_random_weights():
    from mlower.dtypes import values_representable
    from mlower.graph import Weight

    rng = np.random.default_rng(41)
    samples = [
        rng.uniform(-3, 3, size=(4, 5)).astype(np.float32),  # continuous -> float32
        rng.integers(-100, 100, size=(3, 3)).astype(np.float64),  # int8 range
        rng.integers(-3000, 3000, size=(3, 3)).astype(np.float64),  # int16 range
        np.asarray([[2.0, -5.0]]),  # int4
    ]
    for values in samples:
        w = Weight.from_tensor(Tensor.from_dense(values, DType.FLOAT32))
        for below in _ONE_STEP_DOWN.get(w.smallest_dtype, ()):
            assert not values_representable(values.astype(np.float64), below), (
                w.smallest_dtype, below,
            )


def test_shapes_and_intermediates():
    g = build_fixture(helpers.tree_a())
    shapes = infer_shapes(g)
    assert shapes[0] == (None, 2)
    assert shapes[2] == (None, 3)
    assert shapes[3] == (None,)
    assert shapes[4] == (None, 1)
    specs = intermediate_specs(g)
    assert specs[1].dtype == DType.BOOL
    assert specs[3].dtype == DType.INT32
    assert all(s.sparsity is None for s in specs.values())  # unknown until runtime


def test_output_dtypes_tree():
    g = build_fixture(helpers.tree_a())
    dts = output_dtypes(g)
    assert dts[1] == DType.BOOL
    assert dts[2] == DType.INT32  # default integer accumulator
    assert dts[3] == DType.INT32


def test_dump_format():
    g = build_fixture(helpers.tree_a())
    dump = dump_ecg(g)
    lines = dump.strip().splitlines()
    assert len(lines) == 5
    assert lines[0].startswith("0: matmul[?](in) {w: bool/0.5000}")
    assert dump == dump_ecg(g)  # deterministic


def test_builtin_profiles():
    avx = BUILTIN_PROFILES["cpu-avx2"]
    assert avx.preferred_int_dtype == DType.INT8 and avx.sparse_threshold == 0.3
    plain = BUILTIN_PROFILES["plain"]
    assert plain.preferred_int_dtype == DType.INT32 and plain.sparse_threshold == 0.0


def test_profile_file_round_trip(tmp_path):
    path = tmp_path / "target.json"
    path.write_text(json.dumps({
        "name": "widevec", "preferred_int_dtype": "int16", "sparse_threshold": 0.25,
    }))
    p = load_profile(str(path))
    assert p.name == "widevec"
    assert p.preferred_int_dtype == DType.INT16
    assert p.sparse_threshold == 0.25


@pytest.mark.parametrize(
    "content",
    [
        "not json",
        json.dumps({"name": "x"}),
        json.dumps({"name": "x", "preferred_int_dtype": "float32", "sparse_threshold": 0.1}),
        json.dumps({"name": "x", "preferred_int_dtype": "int8", "sparse_threshold": 1.5}),
    ],
)
def test_profile_rejects_bad_files(tmp_path, content):
    path = tmp_path / "bad.json"
    path.write_text(content)
    with pytest.raises(ProfileError):
        load_profile(str(path))
