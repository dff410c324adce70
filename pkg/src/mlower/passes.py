"""Accuracy-preserving graph rewriting passes.

Three rewrites, applied in a fixed order when combined:

  redundant elimination (re)    fuse chained monotonic ops; drop a monotonic
                                op whose only consumer is an indices op
  dtype rewriting (dr)          settle every node's compute dtype from the
                                join of its inputs, modulate integer
                                accumulators to the hardware's preferred
                                width (never narrower, widening further when
                                the static overflow bound demands it),
                                re-materialize weights at the final dtype and
                                insert casts in front of narrower intermediates
  sparse operator replacing (sor)  store low-density matmul weights as CSR
                                   and select the sparse kernel

Every pass is a pure graph-to-graph function returning a fresh graph plus a
count report; none of them may change what the graph computes.
"""

from __future__ import annotations

from dataclasses import dataclass

from .convert import (
    CATEGORY_ARITHMETIC,
    CATEGORY_INDICES,
    CATEGORY_MONOTONIC,
    GRAPH_INPUT,
    INDEX_INPUT_SLOTS,
)
from .dtypes import DType, INT_CAP, dtype_join, dtype_lt, is_integer
from .errors import ValidationError
from .graph import (
    Ecg,
    EcgNode,
    HardwareProfile,
    _joined_input_dtype,
    _node_out_dtype,
    copy_graph,
    topo_order,
    validate_ecg,
    value_bounds,
)

PASS_ORDER = ("re", "dr", "sor")

# Nodes that sum many products; these get the hardware's preferred integer
# width and the overflow widening treatment.
_ACCUMULATING = ("matmul", "sparse_dense_matmul", "reduce_sum", "reduce_mean",
                 "reduce_max", "reduce_min")


@dataclass
class PassReport:
    name: str
    nodes_rewritten: int = 0
    casts_inserted: int = 0
    nodes_eliminated: int = 0
    weights_retyped: int = 0
    weights_reformatted: int = 0

    def __str__(self) -> str:
        return (
            f"{self.name}: nodes_rewritten={self.nodes_rewritten} "
            f"casts_inserted={self.casts_inserted} nodes_eliminated={self.nodes_eliminated} "
            f"weights_retyped={self.weights_retyped} weights_reformatted={self.weights_reformatted}"
        )


# -- redundant elimination -----------------------------------------------------


def _components(node: EcgNode) -> tuple:
    if node.kernel == "monotonic_chain":
        return tuple(node.attrs["components"])
    return ((node.kernel, node.attrs.get("axis")),)


def _edge_count(g: Ecg, nid: int) -> int:
    return sum(r == nid for n in g.nodes.values() for r in n.inputs)


def _sole_consumer(g: Ecg, nid: int) -> EcgNode | None:
    """The unique consumer node, or None if the value is observed elsewhere."""
    if nid == g.output:
        return None
    consumers = [n for n in g.nodes.values() if nid in n.inputs]
    if len(consumers) != 1 or _edge_count(g, nid) != 1:
        return None
    return consumers[0]


def redundant_elimination(g: Ecg) -> tuple[Ecg, PassReport]:
    g = copy_graph(g)
    report = PassReport("redundant_elimination")
    # fuse monotonic -> monotonic chains into one composite node
    for nid in topo_order(g):
        if nid not in g.nodes:
            continue
        node = g.nodes[nid]
        if node.category != CATEGORY_MONOTONIC:
            continue
        succ = _sole_consumer(g, nid)
        if succ is None or succ.category != CATEGORY_MONOTONIC:
            continue
        succ.attrs = {"components": _components(node) + _components(succ)}
        succ.kernel = "monotonic_chain"
        succ.inputs = tuple(node.inputs[0] if r == nid else r for r in succ.inputs)
        del g.nodes[nid]
        report.nodes_rewritten += 1
    # drop a monotonic op consumed only by an indices op (argmax is invariant
    # under order-preserving maps); softmax must act along the argmax axis
    for nid in topo_order(g):
        node = g.nodes[nid]
        if node.category != CATEGORY_MONOTONIC:
            continue
        succ = _sole_consumer(g, nid)
        if succ is None or succ.category != CATEGORY_INDICES:
            continue
        if any(k == "softmax" and ax != succ.attrs.get("axis") for k, ax in _components(node)):
            continue
        succ.inputs = tuple(node.inputs[0] if r == nid else r for r in succ.inputs)
        del g.nodes[nid]
        report.nodes_eliminated += 1
    return g, report


# -- dtype rewriting -----------------------------------------------------------


_INT_WIDENING = (DType.INT8, DType.INT16, DType.INT32)


def _widen_for_bound(dt: DType, bound: float) -> DType:
    for cand in _INT_WIDENING:
        if not dtype_lt(cand, dt) and INT_CAP[cand] >= bound:
            return dtype_join(dt, cand)
    return DType.INT32


def dtype_rewriting(g: Ecg, profile: HardwareProfile) -> tuple[Ecg, PassReport]:
    g = copy_graph(g)
    report = PassReport("dtype_rewriting")
    bounds = value_bounds(g)  # accumulation magnitudes, e.g. n_internal * 1 * 1
    out_dt: dict[int, DType] = {}
    next_id = max(g.nodes) + 1

    for nid in topo_order(g):
        node = g.nodes[nid]
        if node.kernel == "cast":
            node.op_dtype = node.attrs["target"]
            out_dt[nid] = node.attrs["target"]
            continue
        in_dts = [g.input_dtype if r == GRAPH_INPUT else out_dt[r] for r in node.inputs]
        joined = _joined_input_dtype(node, in_dts)
        dt = joined
        if node.kernel in _ACCUMULATING and is_integer(dt):
            dt = dtype_join(dt, profile.preferred_int_dtype)
            if INT_CAP[dt] < bounds[nid]:
                dt = _widen_for_bound(dt, bounds[nid])
        if dt != joined:
            report.nodes_rewritten += 1
        node.op_dtype = dt
        # re-select the kernel variant: accumulator output follows the
        # compute dtype from here on
        if node.kernel in ("matmul", "sparse_dense_matmul", "reduce_sum"):
            node.attrs["out_dtype"] = dt
        for name, w in list(node.weights.items()):
            if w.actual_dtype != dt:
                node.weights[name] = w.retyped(dt)
                report.weights_retyped += 1
        index_slots = INDEX_INPUT_SLOTS.get(node.kernel, ())
        new_inputs = list(node.inputs)
        for i, r in enumerate(node.inputs):
            if i in index_slots:
                continue
            have = g.input_dtype if r == GRAPH_INPUT else out_dt[r]
            if dtype_lt(have, dt):
                cast_id = next_id
                next_id += 1
                g.nodes[cast_id] = EcgNode(
                    id=cast_id,
                    kernel="cast",
                    inputs=(r,),
                    attrs={"target": dt},
                    category=CATEGORY_ARITHMETIC,
                    op_dtype=dt,
                )
                out_dt[cast_id] = dt
                new_inputs[i] = cast_id
                report.casts_inserted += 1
        node.inputs = tuple(new_inputs)
        out_dt[nid] = _node_out_dtype(node, [dt] * len(node.inputs))
    return g, report


# -- sparse operator replacing ---------------------------------------------------


def sparse_operator_replacing(g: Ecg, profile: HardwareProfile) -> tuple[Ecg, PassReport]:
    g = copy_graph(g)
    report = PassReport("sparse_operator_replacing")
    for nid in topo_order(g):
        node = g.nodes[nid]
        if node.kernel != "matmul":
            continue
        w = node.weights["w"]
        if w.tensor.rank == 2 and w.sparsity < profile.sparse_threshold:
            node.weights["w"] = w.as_csr()
            node.kernel = "sparse_dense_matmul"
            node.use_sparse = True
            report.nodes_rewritten += 1
            report.weights_reformatted += 1
    return g, report


# -- pipeline -------------------------------------------------------------------


def run_pipeline(
    g: Ecg, profile: HardwareProfile, passes: tuple[str, ...] = PASS_ORDER
) -> tuple[Ecg, list[PassReport]]:
    """Apply the enabled passes in fixed order; the result must still validate."""
    unknown = set(passes) - set(PASS_ORDER)
    if unknown:
        raise ValidationError(f"unknown pass flags: {sorted(unknown)}")
    reports: list[PassReport] = []
    for name in PASS_ORDER:
        if name not in passes:
            continue
        if name == "re":
            g, rep = redundant_elimination(g)
        elif name == "dr":
            g, rep = dtype_rewriting(g, profile)
        else:
            g, rep = sparse_operator_replacing(g, profile)
        reports.append(rep)
    problems = validate_ecg(g)
    if problems:
        raise ValidationError("pass pipeline produced an invalid graph: " + "; ".join(problems))
    return g, reports
