"""Lower a graph to an executable kernel plan and run batched inference.

The plan is an SSA program over a slot table: every slot is written exactly
once and read only after its write. Kernel variants are resolved statically
from each node's use_sparse flag, category, compute dtype and kernel name;
the batch extent stays symbolic so one plan serves every batch size. The
plan is interpreted, not compiled; weights are bound by reference.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import kernels
from .convert import GRAPH_INPUT, INDEX_INPUT_SLOTS, KERNEL_CATEGORY
from .dtypes import DType, INT_CAP, dispatch_dtype, dtype_lt, is_integer
from .errors import (
    AccumulatorOverflowRisk,
    InputMismatch,
    UnresolvedKernel,
)
from .graph import (
    Ecg,
    effective_op_dtype,
    infer_shapes,
    output_dtypes,
    topo_order,
    value_bounds,
)
from .tensor import Tensor

_EW_OPS = ("add", "sub", "mul", "div", "greater", "less", "greater_equal",
           "less_equal", "equal")
_MONOTONIC = ("sigmoid", "softmax", "relu", "tanh", "exp")
_REDUCES = {"reduce_sum": "sum", "reduce_mean": "mean", "reduce_max": "max",
            "reduce_min": "min"}


@dataclass(frozen=True)
class WeightBinding:
    name: str
    tensor: Tensor  # bound by reference, never copied at translate time
    cast_to: DType | None  # widened at execution when the stored dtype is lower


@dataclass(frozen=True)
class Invocation:
    node_id: int
    kernel: str
    variant: DType
    use_sparse: bool
    weights: tuple[WeightBinding, ...]
    inputs: tuple[int, ...]  # slot ids
    output: int
    attrs: tuple[tuple[str, object], ...]

    def attr(self, name: str, default=None):
        for k, v in self.attrs:
            if k == name:
                return v
        return default


@dataclass(frozen=True)
class KernelPlan:
    invocations: tuple[Invocation, ...]
    slot_shapes: tuple[tuple, ...]  # None marks the symbolic batch extent
    slot_dtypes: tuple[DType, ...]
    input_slot: int
    output_slot: int
    n_features: int
    input_dtype: DType


def _check_accumulator(node, bound: float) -> None:
    """Conservative static overflow check for integer accumulators."""
    if node.kernel not in ("matmul", "sparse_dense_matmul", "reduce_sum"):
        return
    out_dtype = node.attrs.get("out_dtype")
    if out_dtype is None or not is_integer(out_dtype):
        return
    if bound > INT_CAP[out_dtype]:
        raise AccumulatorOverflowRisk(
            f"node {node.id}: accumulation bound {bound:.0f} exceeds {out_dtype}"
        )


def translate(g: Ecg) -> KernelPlan:
    """Resolve kernel variants and emit the plan in topological order."""
    order = topo_order(g)
    for nid in order:
        node = g.nodes[nid]
        if node.kernel not in KERNEL_CATEGORY:
            raise UnresolvedKernel(f"node {nid}: no implementation for {node.kernel!r}")
        if node.kernel == "sparse_dense_matmul" and not node.weights["w"].tensor.is_csr:
            raise UnresolvedKernel(f"node {nid}: sparse variant needs a CSR weight")
    dts = output_dtypes(g)
    shapes = infer_shapes(g)
    bounds = value_bounds(g)

    slot_of = {GRAPH_INPUT: 0}
    slot_shapes: list[tuple] = [g.input_shape]
    slot_dtypes: list[DType] = [g.input_dtype]
    invocations: list[Invocation] = []

    for nid in order:
        node = g.nodes[nid]
        variant = dispatch_dtype(effective_op_dtype(g, node, dts))
        _check_accumulator(node, bounds[nid])
        bindings = tuple(
            WeightBinding(
                name=name,
                tensor=w.tensor,
                cast_to=variant if w.tensor.dtype != variant else None,
            )
            for name, w in sorted(node.weights.items())
        )
        out_dtype = dts[nid] if node.kernel == "cast" else dispatch_dtype(dts[nid])
        slot = len(slot_shapes)
        slot_of[nid] = slot
        slot_shapes.append(shapes[nid])
        slot_dtypes.append(out_dtype)
        invocations.append(
            Invocation(
                node_id=nid,
                kernel=node.kernel,
                variant=variant,
                use_sparse=node.use_sparse,
                weights=bindings,
                inputs=tuple(slot_of[r] for r in node.inputs),
                output=slot,
                attrs=tuple(sorted(node.attrs.items(), key=lambda kv: kv[0])),
            )
        )

    return KernelPlan(
        invocations=tuple(invocations),
        slot_shapes=tuple(slot_shapes),
        slot_dtypes=tuple(slot_dtypes),
        input_slot=0,
        output_slot=slot_of[g.output],
        n_features=g.input_shape[1],
        input_dtype=g.input_dtype,
    )


def _run_invocation(inv: Invocation, ins: list[Tensor], batch: int) -> Tensor:
    index_slots = INDEX_INPUT_SLOTS.get(inv.kernel, ())
    aligned = [
        kernels.cast(t, inv.variant)
        if i not in index_slots and dtype_lt(t.dtype, inv.variant)
        else t
        for i, t in enumerate(ins)
    ]
    w = {}
    for b in inv.weights:
        w[b.name] = kernels.cast(b.tensor, b.cast_to) if b.cast_to else b.tensor

    k = inv.kernel
    if k == "matmul":
        return kernels.matmul(aligned[0], w["w"], dispatch_dtype(inv.attr("out_dtype")))
    if k == "sparse_dense_matmul":
        return kernels.sparse_dense_matmul(aligned[0], w["w"], dispatch_dtype(inv.attr("out_dtype")))
    if k in _EW_OPS:
        rhs = aligned[1] if len(aligned) > 1 else w["rhs"]
        return kernels.ew_binary(k, aligned[0], rhs)
    if k == "cast":
        return kernels.cast(aligned[0], inv.attr("target"))
    if k == "argmax":
        return kernels.argmax(aligned[0], inv.attr("axis"))
    if k in _REDUCES:
        out_dtype = inv.attr("out_dtype")
        return kernels.reduce(
            _REDUCES[k], aligned[0], inv.attr("axis"),
            dispatch_dtype(out_dtype) if out_dtype else None,
        )
    if k in _MONOTONIC:
        return kernels.monotonic_apply(k, aligned[0], inv.attr("axis"))
    if k == "monotonic_chain":
        t = aligned[0]
        for op, axis in inv.attr("components"):
            t = kernels.monotonic_apply(op, t, axis)
        return t
    if k == "row_norm":
        return kernels.row_norm(aligned[0], inv.attr("kind"))
    if k == "gather_rows":
        return kernels.gather_rows(w["table"], aligned[0])
    if k == "reshape":
        shape = tuple(batch if s == "batch" else s for s in inv.attr("shape"))
        return kernels.reshape(aligned[0], shape)
    if k == "broadcast_const":
        return kernels.broadcast_const(w["row"], aligned[0].shape[0])
    if k == "stack":
        return kernels.stack(aligned, inv.attr("axis"))
    raise UnresolvedKernel(f"no interpreter for kernel {k!r}")


def execute(plan: KernelPlan, x: Tensor) -> Tensor:
    """Run the plan on a batch; deterministic, pure, thread-safe."""
    if x.rank != 2 or x.shape[1] != plan.n_features:
        raise InputMismatch(
            f"input shape {x.shape} does not match (batch, {plan.n_features})"
        )
    if x.dtype != plan.input_dtype:
        raise InputMismatch(f"input dtype {x.dtype} != {plan.input_dtype}")
    batch = x.shape[0]
    slots: list[Tensor | None] = [None] * len(plan.slot_shapes)
    slots[plan.input_slot] = x
    for inv in plan.invocations:
        ins = [slots[s] for s in inv.inputs]
        slots[inv.output] = _run_invocation(inv, ins, batch)
    return slots[plan.output_slot]


def _shape_str(shape: tuple) -> str:
    return "(" + ", ".join("B" if s is None else str(s) for s in shape) + ")"


def dump_plan(plan: KernelPlan) -> str:
    """Deterministic one-invocation-per-line rendering for structural tests."""
    lines = [f"input: s0 {_shape_str(plan.slot_shapes[0])} {plan.input_dtype}"]
    for inv in plan.invocations:
        sparse = ", sparse" if inv.use_sparse else ""
        ins = ", ".join(f"s{s}" for s in inv.inputs)
        line = f"s{inv.output} = {inv.kernel}[{inv.variant}{sparse}]({ins})"
        if inv.weights:
            ws = ", ".join(
                f"{b.name}: {'csr' if b.tensor.is_csr else 'dense'} "
                f"{b.tensor.dtype}{'->' + str(b.cast_to) if b.cast_to else ''}"
                for b in inv.weights
            )
            line += " {" + ws + "}"
        shown = [
            f"{k}={v}" for k, v in inv.attrs
            if k in ("axis", "out_dtype", "target", "kind")
        ]
        if shown:
            line += " [" + ", ".join(shown) + "]"
        line += f" # {_shape_str(plan.slot_shapes[inv.output])} {plan.slot_dtypes[inv.output]}"
        lines.append(line)
    lines.append(f"output: s{plan.output_slot}")
    return "\n".join(lines) + "\n"
