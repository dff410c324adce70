"""The operator-graph IR and the parser that builds it from converted reps.

Nodes are tensor operators annotated with everything the optimizer needs:
operator category, compute dtype (unknown until the dtype pass runs), a
use_sparse flag, and per-weight records carrying sparsity plus the smallest
and the actually-materialized dtype. Edges are data dependencies; the graph
input is the batch of samples with a symbolic batch extent.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field, replace

from .convert import (
    CATEGORY_COMPARISON,
    CATEGORY_INDICES,
    GRAPH_INPUT,
    INDEX_INPUT_SLOTS,
    KERNEL_CATEGORY,
    OperatorRep,
)
from .dtypes import (
    DType,
    INT_CAP,
    dtype_join,
    dtype_le,
    is_integer,
    parse_dtype,
    smallest_dtype_of,
)
from .errors import (
    CyclicGraph,
    DanglingReference,
    ProfileError,
    ShapeInferenceFailure,
)
from .kernels import cast as cast_kernel
from .tensor import Tensor

# Symbolic batch extent used in shapes during compilation.
BATCH = None


@dataclass
class Weight:
    """A compile-time-known operand with its dtype and sparsity records."""

    tensor: Tensor
    smallest_dtype: DType
    actual_dtype: DType
    sparsity: float

    @staticmethod
    def from_tensor(t: Tensor) -> "Weight":
        values = t.to_numpy()
        smallest = smallest_dtype_of(values.astype("float64"))
        if smallest != t.dtype:
            t = Tensor.from_dense(values, smallest)
        return Weight(tensor=t, smallest_dtype=smallest, actual_dtype=smallest,
                      sparsity=t.nonzero_fraction())

    def retyped(self, target: DType) -> "Weight":
        """Re-materialize the tensor at a wider dtype (compile-time cast)."""
        if target == self.actual_dtype:
            return self
        return Weight(tensor=cast_kernel(self.tensor, target), smallest_dtype=self.smallest_dtype,
                      actual_dtype=target, sparsity=self.sparsity)

    def as_csr(self) -> "Weight":
        return Weight(tensor=Tensor.to_csr(self.tensor), smallest_dtype=self.smallest_dtype,
                      actual_dtype=self.actual_dtype, sparsity=self.sparsity)


@dataclass(frozen=True)
class IntermediateSpec:
    """What is statically known about a runtime-only value: dtype and shape.

    Sparsity of intermediates is unknown until runtime, so it is always None
    here; optimizer passes must not read it.
    """

    dtype: DType
    shape: tuple
    sparsity: float | None = None


@dataclass
class EcgNode:
    id: int
    kernel: str
    inputs: tuple[int, ...]
    weights: dict[str, Weight] = field(default_factory=dict)
    attrs: dict = field(default_factory=dict)
    category: str = ""
    use_sparse: bool = False
    op_dtype: DType | None = None

    def value_inputs(self) -> tuple[int, ...]:
        """Data-bearing inputs; index operands stay out of dtype decisions."""
        skip = INDEX_INPUT_SLOTS.get(self.kernel, ())
        return tuple(r for i, r in enumerate(self.inputs) if i not in skip)


@dataclass
class Ecg:
    nodes: dict[int, EcgNode]
    input_shape: tuple  # (BATCH, n_features)
    input_dtype: DType
    output: int


def copy_graph(g: Ecg) -> Ecg:
    nodes = {
        nid: replace(
            n,
            inputs=tuple(n.inputs),
            weights={k: replace(w) for k, w in n.weights.items()},
            attrs=dict(n.attrs),
        )
        for nid, n in g.nodes.items()
    }
    return Ecg(nodes=nodes, input_shape=g.input_shape, input_dtype=g.input_dtype, output=g.output)


@dataclass(frozen=True)
class HardwareProfile:
    """Declarative target knobs consumed by the optimizer passes."""

    name: str
    preferred_int_dtype: DType
    sparse_threshold: float
    notes: str = ""


BUILTIN_PROFILES = {
    # AVX-class CPUs run int8 GEMMs well; weights below 30% density go CSR.
    "cpu-avx2": HardwareProfile("cpu-avx2", DType.INT8, 0.3),
    # Baseline target: plain int32 accumulation, sparse replacement disabled.
    "plain": HardwareProfile("plain", DType.INT32, 0.0),
}


def load_profile(name_or_path: str) -> HardwareProfile:
    if name_or_path in BUILTIN_PROFILES:
        return BUILTIN_PROFILES[name_or_path]
    try:
        with open(name_or_path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as e:
        raise ProfileError(f"cannot read profile {name_or_path!r}: {e}") from None
    except json.JSONDecodeError as e:
        raise ProfileError(f"profile {name_or_path!r}: invalid JSON ({e.msg})") from None
    if not isinstance(obj, dict):
        raise ProfileError("profile must be a JSON object")
    try:
        name = obj["name"]
        pref = parse_dtype(obj["preferred_int_dtype"])
        threshold = float(obj["sparse_threshold"])
    except KeyError as e:
        raise ProfileError(f"profile missing field {e.args[0]!r}") from None
    if pref not in (DType.INT8, DType.INT16, DType.INT32):
        raise ProfileError("preferred_int_dtype must be int8, int16 or int32")
    if not 0.0 <= threshold <= 1.0:
        raise ProfileError("sparse_threshold must lie in [0, 1]")
    return HardwareProfile(str(name), pref, threshold, str(obj.get("notes", "")))


# -- construction ------------------------------------------------------------


def build_ecg(reps: list[OperatorRep], input_spec: tuple[int, DType]) -> Ecg:
    """Wrap converter output into graph nodes with initialized metadata.

    use_sparse starts False and the compute dtype unknown; weight sparsity is
    measured from tensor contents and smallest/actual dtypes both start at the
    value-range scan result.
    """
    n_features, input_dtype = input_spec
    if not reps:
        raise DanglingReference("empty operator list has no output")
    nodes: dict[int, EcgNode] = {}
    for i, rep in enumerate(reps):
        for r in rep.inputs:
            if r != GRAPH_INPUT and not 0 <= r < i:
                raise DanglingReference(f"op {i} references {r}, which is not an earlier op")
        if rep.kernel not in KERNEL_CATEGORY:
            raise DanglingReference(f"op {i} uses unknown kernel {rep.kernel!r}")
        nodes[i] = EcgNode(
            id=i,
            kernel=rep.kernel,
            inputs=tuple(rep.inputs),
            weights={k: Weight.from_tensor(t) for k, t in sorted(rep.weights.items())},
            attrs=dict(rep.attrs),
            category=KERNEL_CATEGORY[rep.kernel],
        )
    return Ecg(nodes=nodes, input_shape=(BATCH, n_features), input_dtype=input_dtype,
               output=len(reps) - 1)


def topo_order(g: Ecg) -> list[int]:
    """Deterministic topological order, smallest id first among independents."""
    indegree = {nid: 0 for nid in g.nodes}
    consumers: dict[int, list[int]] = {nid: [] for nid in g.nodes}
    for nid, node in g.nodes.items():
        for r in node.inputs:
            if r == GRAPH_INPUT:
                continue
            if r not in g.nodes:
                raise DanglingReference(f"node {nid} references missing node {r}")
            indegree[nid] += 1
            consumers[r].append(nid)
    ready = [nid for nid, d in indegree.items() if d == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        nid = heapq.heappop(ready)
        order.append(nid)
        for c in consumers[nid]:
            indegree[c] -= 1
            if indegree[c] == 0:
                heapq.heappush(ready, c)
    if len(order) != len(g.nodes):
        raise CyclicGraph("graph contains a cycle")
    return order


def consumers_of(g: Ecg) -> dict[int, list[int]]:
    out: dict[int, list[int]] = {nid: [] for nid in g.nodes}
    for nid, node in g.nodes.items():
        for r in node.inputs:
            if r != GRAPH_INPUT:
                out[r].append(nid)
    return out


# -- dtype and shape inference ------------------------------------------------

_MONOTONIC_OUT = ("sigmoid", "softmax", "relu", "tanh", "exp", "monotonic_chain")


def _node_out_dtype(node: EcgNode, input_dtypes: list[DType]) -> DType:
    k = node.kernel
    if node.category == CATEGORY_COMPARISON:
        return DType.BOOL
    if node.category == CATEGORY_INDICES:
        return DType.INT32
    if k == "cast":
        return node.attrs["target"]
    if k in ("matmul", "sparse_dense_matmul"):
        if "out_dtype" in node.attrs:
            return node.attrs["out_dtype"]
        joined = _joined_input_dtype(node, input_dtypes)
        return DType.INT32 if is_integer(joined) else DType.FLOAT32
    if k in _MONOTONIC_OUT or k == "row_norm":
        return DType.FLOAT32
    if k == "reduce_mean":
        return DType.FLOAT32
    if k == "reduce_sum":
        if "out_dtype" in node.attrs:
            return node.attrs["out_dtype"]
        joined = _joined_input_dtype(node, input_dtypes)
        return DType.INT32 if is_integer(joined) else DType.FLOAT32
    if k == "gather_rows":
        return node.weights["table"].actual_dtype
    if k == "broadcast_const":
        return node.weights["row"].actual_dtype
    # arithmetic/reorganization/reductions that keep their input dtype
    return _joined_input_dtype(node, input_dtypes)


def _joined_input_dtype(node: EcgNode, input_dtypes: list[DType]) -> DType:
    skip = INDEX_INPUT_SLOTS.get(node.kernel, ())
    dts = [d for i, d in enumerate(input_dtypes) if i not in skip]
    dts += [w.actual_dtype for w in node.weights.values()]
    if not dts:
        return DType.FLOAT32
    out = dts[0]
    for d in dts[1:]:
        out = dtype_join(out, d)
    return out


def output_dtypes(g: Ecg) -> dict[int, DType]:
    """Statically known output dtype of every node."""
    out: dict[int, DType] = {}
    for nid in topo_order(g):
        node = g.nodes[nid]
        ins = [g.input_dtype if r == GRAPH_INPUT else out[r] for r in node.inputs]
        out[nid] = _node_out_dtype(node, ins)
    return out


def effective_op_dtype(g: Ecg, node: EcgNode, out_dtypes: dict[int, DType]) -> DType:
    """Compute dtype: the recorded op_dtype, or the join of the inputs."""
    if node.kernel == "cast":
        return node.attrs["target"]
    if node.op_dtype is not None:
        return node.op_dtype
    ins = [g.input_dtype if r == GRAPH_INPUT else out_dtypes[r] for r in node.inputs]
    return _joined_input_dtype(node, ins)


def _broadcast_dim(a, b, where: str):
    if a == b:
        return a
    if a == 1:
        return b
    if b == 1:
        return a
    raise ShapeInferenceFailure(f"{where}: cannot broadcast extents {a} and {b}")


def _broadcast_shape(a: tuple, b: tuple, where: str) -> tuple:
    out = []
    for i in range(max(len(a), len(b))):
        da = a[len(a) - 1 - i] if i < len(a) else 1
        db = b[len(b) - 1 - i] if i < len(b) else 1
        out.append(_broadcast_dim(da, db, where))
    return tuple(reversed(out))


def infer_shapes(g: Ecg) -> dict[int, tuple]:
    """Static shape of every node output; the batch extent stays symbolic."""
    shapes: dict[int, tuple] = {}
    for nid in topo_order(g):
        node = g.nodes[nid]
        where = f"node {nid} ({node.kernel})"
        ins = [g.input_shape if r == GRAPH_INPUT else shapes[r] for r in node.inputs]
        k = node.kernel
        if k in ("matmul", "sparse_dense_matmul"):
            (a,) = ins
            w = node.weights["w"].tensor.shape
            if len(a) != 2:
                raise ShapeInferenceFailure(f"{where}: data operand must be rank 2, got {a}")
            if a[1] != w[0]:
                raise ShapeInferenceFailure(f"{where}: inner extents differ, {a} x {w}")
            shapes[nid] = (a[0], w[1])
        elif k in ("add", "sub", "mul", "div", "greater", "less", "greater_equal",
                   "less_equal", "equal"):
            operands = list(ins) + [w.tensor.shape for w in node.weights.values()]
            if len(operands) != 2:
                raise ShapeInferenceFailure(f"{where}: needs exactly 2 operands")
            shapes[nid] = _broadcast_shape(operands[0], operands[1], where)
        elif k in ("cast",) or k in _MONOTONIC_OUT:
            (a,) = ins
            axis = node.attrs.get("axis")
            if k == "softmax" and (axis is None or not 0 <= axis < len(a)):
                raise ShapeInferenceFailure(f"{where}: bad softmax axis {axis} for {a}")
            shapes[nid] = a
        elif k in ("argmax", "reduce_sum", "reduce_mean", "reduce_max", "reduce_min"):
            (a,) = ins
            axis = node.attrs.get("axis")
            if axis is None or not 0 <= axis < len(a):
                raise ShapeInferenceFailure(f"{where}: bad axis {axis} for shape {a}")
            shapes[nid] = a[:axis] + a[axis + 1 :]
        elif k == "row_norm":
            (a,) = ins
            if len(a) != 2:
                raise ShapeInferenceFailure(f"{where}: requires rank 2, got {a}")
            shapes[nid] = (a[0], 1)
        elif k == "gather_rows":
            (idx,) = ins
            if len(idx) != 1:
                raise ShapeInferenceFailure(f"{where}: index operand must be rank 1, got {idx}")
            table = node.weights["table"].tensor.shape
            shapes[nid] = (idx[0], table[1])
        elif k == "reshape":
            template = node.attrs.get("shape", ())
            shapes[nid] = tuple(BATCH if s == "batch" else s for s in template)
        elif k == "broadcast_const":
            row = node.weights["row"].tensor.shape
            (a,) = ins
            shapes[nid] = (a[0], row[1])
        elif k == "stack":
            if any(s != ins[0] for s in ins):
                raise ShapeInferenceFailure(f"{where}: mismatched stack inputs {ins}")
            axis = node.attrs.get("axis", 0)
            base = ins[0]
            if not 0 <= axis <= len(base):
                raise ShapeInferenceFailure(f"{where}: bad stack axis {axis}")
            shapes[nid] = base[:axis] + (len(ins),) + base[axis:]
        else:
            raise ShapeInferenceFailure(f"{where}: no shape rule for kernel {k!r}")
    return shapes


def intermediate_specs(g: Ecg) -> dict[int, IntermediateSpec]:
    dts, shapes = output_dtypes(g), infer_shapes(g)
    return {nid: IntermediateSpec(dtype=dts[nid], shape=shapes[nid]) for nid in g.nodes}


# -- static value-bound analysis ------------------------------------------------


def _node_value_bound(node: EcgNode, ins: list[float], shapes: dict, g: Ecg) -> float:
    k = node.kernel
    if node.category == CATEGORY_COMPARISON:
        return 1.0
    if k in ("cast", "reshape"):
        return ins[0]
    if k in ("matmul", "sparse_dense_matmul"):
        w = node.weights["w"].tensor
        return w.shape[0] * ins[0] * w.max_abs()
    if k == "gather_rows":
        return node.weights["table"].tensor.max_abs()
    if k == "broadcast_const":
        return node.weights["row"].tensor.max_abs()
    if k in ("sigmoid", "softmax", "tanh"):
        return 1.0
    if k == "monotonic_chain":
        last = node.attrs["components"][-1][0]
        return 1.0 if last in ("sigmoid", "softmax", "tanh") else math.inf
    if k in ("reduce_mean", "reduce_max", "reduce_min"):
        return ins[0]
    if k == "reduce_sum":
        ref = node.inputs[0]
        shape = g.input_shape if ref == GRAPH_INPUT else shapes[ref]
        extent = shape[node.attrs["axis"]]
        return math.inf if extent is None else extent * ins[0]
    if k == "stack":
        return max(ins)
    operands = list(ins) + [w.tensor.max_abs() for w in node.weights.values()]
    if k in ("add", "sub") and len(operands) == 2:
        return operands[0] + operands[1]
    if k == "mul" and len(operands) == 2:
        return operands[0] * operands[1]
    return math.inf  # div, relu, exp, row_norm, argmax, ...


def value_bounds(g: Ecg) -> dict[int, float]:
    """Sound static bound on |value| per node output.

    Integer storage caps unknown values; comparison outputs are 0/1; matmul
    and reduce propagate the accumulation bound. This is what makes overflow
    checks conservative without tracking provenance at runtime.
    """
    shapes = infer_shapes(g)
    bounds: dict[int, float] = {}
    input_bound = float(INT_CAP.get(g.input_dtype, math.inf))
    for nid in topo_order(g):
        node = g.nodes[nid]
        ins = [input_bound if r == GRAPH_INPUT else bounds[r] for r in node.inputs]
        bounds[nid] = _node_value_bound(node, ins, shapes, g)
    return bounds


# -- validation ---------------------------------------------------------------


def validate_ecg(g: Ecg) -> list[str]:
    """Check every structural invariant; violations come back as data."""
    problems: list[str] = []
    for nid, node in g.nodes.items():
        if node.id != nid:
            problems.append(f"node {nid}: id field says {node.id}")
        if node.kernel not in KERNEL_CATEGORY:
            problems.append(f"node {nid}: unknown kernel {node.kernel!r}")
            continue
        if node.category != KERNEL_CATEGORY[node.kernel]:
            problems.append(
                f"node {nid}: category {node.category!r} does not match kernel {node.kernel!r}"
            )
        declared = node.attrs.get("out_dtype")
        if node.category == CATEGORY_COMPARISON and declared not in (None, DType.BOOL):
            problems.append(f"node {nid}: dtype-lowering breached, comparison must output bool")
        if node.category == CATEGORY_INDICES and declared not in (None, DType.INT32):
            problems.append(f"node {nid}: dtype-lowering breached, indices must output int32")
        if node.use_sparse != (node.kernel == "sparse_dense_matmul"):
            problems.append(f"node {nid}: use_sparse flag inconsistent with kernel")
        if node.kernel == "sparse_dense_matmul" and not node.weights["w"].tensor.is_csr:
            problems.append(f"node {nid}: sparse kernel with dense weight")
        for name, w in node.weights.items():
            if w.tensor.dtype != w.actual_dtype:
                problems.append(f"node {nid}: weight {name} stored at {w.tensor.dtype}, not {w.actual_dtype}")
            if not dtype_le(w.smallest_dtype, w.actual_dtype):
                problems.append(f"node {nid}: weight {name} actual_dtype below smallest_dtype")
            measured = w.tensor.nonzero_fraction()
            if measured != w.sparsity:
                problems.append(
                    f"node {nid}: weight {name} sparsity {w.sparsity} != measured {measured}"
                )
    if g.output not in g.nodes:
        problems.append(f"output node {g.output} does not exist")
        return problems
    try:
        order = topo_order(g)
    except (CyclicGraph, DanglingReference) as e:
        problems.append(str(e))
        return problems
    # every node must feed the single output
    live = {g.output}
    for nid in reversed(order):
        if nid in live:
            for r in g.nodes[nid].inputs:
                if r != GRAPH_INPUT:
                    live.add(r)
    for nid in g.nodes:
        if nid not in live:
            problems.append(f"node {nid}: not connected to the output")
    try:
        dts = output_dtypes(g)
        for nid, node in g.nodes.items():
            if node.op_dtype is not None and node.kernel != "cast":
                ins = [g.input_dtype if r == GRAPH_INPUT else dts[r] for r in node.inputs]
                joined = _joined_input_dtype(node, ins)
                if not dtype_le(joined, node.op_dtype):
                    problems.append(
                        f"node {nid}: op_dtype {node.op_dtype} below join of inputs {joined}"
                    )
        infer_shapes(g)
    except (ShapeInferenceFailure, CyclicGraph, DanglingReference) as e:
        problems.append(str(e))
    return problems


# -- debug dump ---------------------------------------------------------------


def dump_ecg(g: Ecg) -> str:
    """Deterministic one-node-per-line rendering used by structural tests."""
    lines = []
    for nid in topo_order(g):
        node = g.nodes[nid]
        dt = str(node.op_dtype) if node.op_dtype is not None else "?"
        sparse = ", sparse" if node.use_sparse else ""
        ins = ", ".join("in" if r == GRAPH_INPUT else f"n{r}" for r in node.inputs)
        line = f"{nid}: {node.kernel}[{dt}{sparse}]({ins})"
        if node.weights:
            ws = ", ".join(
                f"{name}: {w.actual_dtype}/{w.sparsity:.4f}"
                for name, w in sorted(node.weights.items())
            )
            line += " {" + ws + "}"
        lines.append(line)
    return "\n".join(lines) + "\n"
