"""Reference kernels every compiled graph executes on.

Correctness-first: no fused or vectorized codegen, no threads. Two properties
are load-bearing and shape the implementations:

* Dense and sparse matmul must be bit-identical. Both therefore accumulate
  in float64 walking the inner dimension in ascending order, so skipping the
  zero terms (sparse) cannot perturb rounding. Integer matmuls accumulate in
  int64 and are exact in any order.
* argmax resolves ties to the smallest index. The tree encoding's
  correctness depends on this; do not change it.
"""

from __future__ import annotations

import numpy as np

from .dtypes import (
    DType,
    INT_CAP,
    dispatch_dtype,
    dtype_le,
    is_float,
    is_integer,
    numpy_dtype,
)
from .errors import (
    AccumulatorOverflowRisk,
    BroadcastError,
    DivisionByZero,
    DTypeMismatch,
    EmptyAxis,
    IndexOutOfBounds,
    InvalidAxis,
    NarrowingCast,
    ShapeMismatch,
    ValidationError,
)
from .tensor import Tensor

COMPARISON_OPS = ("greater", "less", "greater_equal", "less_equal", "equal")
ARITHMETIC_OPS = ("add", "sub", "mul", "div")
REDUCE_OPS = ("sum", "mean", "max", "min")
MONOTONIC_OPS = ("sigmoid", "softmax", "relu", "tanh", "exp")


def cast(t: Tensor, target: DType) -> Tensor:
    """Widen a tensor up the lattice; narrowing is rejected."""
    if not dtype_le(t.dtype, target):
        raise NarrowingCast(f"cannot cast {t.dtype} to {target}")
    if target == t.dtype:
        return t
    if t.is_csr:
        return Tensor.from_csr(
            t.shape,
            t.csr.row_offsets,
            t.csr.col_indices,
            t.csr.values.astype(np.float64).astype(numpy_dtype(target)),
            target,
        )
    return Tensor.from_dense(t.dense.astype(np.float64).astype(numpy_dtype(target)), target)


def _check_matmul_operands(a: Tensor, b: Tensor, out_dtype: DType) -> None:
    if a.rank != 2 or b.rank != 2:
        raise ShapeMismatch(f"matmul requires rank-2 operands, got {a.shape} x {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"inner dimensions differ: {a.shape} x {b.shape}")
    if a.dtype != b.dtype:
        raise DTypeMismatch(f"matmul operands must share a dtype: {a.dtype} vs {b.dtype}")
    if is_integer(a.dtype) and not is_integer(out_dtype):
        raise DTypeMismatch("integer matmul needs an integer out_dtype")
    if is_float(a.dtype) and not is_float(out_dtype):
        raise DTypeMismatch("float matmul needs a float out_dtype")


def _finish_int_matmul(acc: np.ndarray, out_dtype: DType) -> Tensor:
    cap = INT_CAP[out_dtype]
    if acc.size and (acc.max() > cap or acc.min() < -cap - 1):
        raise AccumulatorOverflowRisk(
            f"accumulated value {acc.max()} does not fit {out_dtype}"
        )
    return Tensor.from_dense(acc.astype(numpy_dtype(out_dtype)), out_dtype)


def matmul(a: Tensor, b: Tensor, out_dtype: DType) -> Tensor:
    """Dense matrix product accumulated exactly (int64) or in float64."""
    _check_matmul_operands(a, b, out_dtype)
    if a.is_csr or b.is_csr:
        raise ShapeMismatch("dense matmul got a CSR operand; use sparse_dense_matmul")
    a_np, b_np = a.to_numpy(), b.to_numpy()
    if is_integer(a.dtype):
        acc = a_np.astype(np.int64) @ b_np.astype(np.int64)
        return _finish_int_matmul(acc, out_dtype)
    a64 = a_np.astype(np.float64)
    b64 = b_np.astype(np.float64)
    acc = np.zeros((a.shape[0], b.shape[1]), dtype=np.float64)
    for k in range(a.shape[1]):
        acc += a64[:, k : k + 1] * b64[k : k + 1, :]
    return Tensor.from_dense(acc.astype(numpy_dtype(dispatch_dtype(out_dtype))), dispatch_dtype(out_dtype))


def sparse_dense_matmul(a: Tensor, b_csr: Tensor, out_dtype: DType) -> Tensor:
    """matmul(a, densify(b_csr)) computed from CSR; bit-identical to the dense path."""
    if not b_csr.is_csr:
        raise ShapeMismatch("sparse_dense_matmul requires a CSR right-hand side")
    _check_matmul_operands(a, b_csr, out_dtype)
    a_np = a.to_numpy()
    off, idx, val = b_csr.csr.row_offsets, b_csr.csr.col_indices, b_csr.csr.values
    if is_integer(a.dtype):
        acc = np.zeros((a.shape[0], b_csr.shape[1]), dtype=np.int64)
        a64 = a_np.astype(np.int64)
        v64 = val.astype(np.int64)
    else:
        acc = np.zeros((a.shape[0], b_csr.shape[1]), dtype=np.float64)
        a64 = a_np.astype(np.float64)
        v64 = val.astype(np.float64)
    # Walk k ascending so per-element addition order matches the dense loop.
    for k in range(b_csr.shape[0]):
        lo, hi = int(off[k]), int(off[k + 1])
        if lo == hi:
            continue
        acc[:, idx[lo:hi]] += a64[:, k : k + 1] * v64[lo:hi]
    if is_integer(a.dtype):
        return _finish_int_matmul(acc, out_dtype)
    return Tensor.from_dense(acc.astype(numpy_dtype(dispatch_dtype(out_dtype))), dispatch_dtype(out_dtype))


def _broadcast(a_np: np.ndarray, b_np: np.ndarray):
    try:
        return np.broadcast_arrays(a_np, b_np)
    except ValueError:
        raise BroadcastError(f"shapes {a_np.shape} and {b_np.shape} do not broadcast") from None


def ew_binary(op: str, a: Tensor, b: Tensor) -> Tensor:
    """Element-wise arithmetic (input dtype) or comparison (bool output)."""
    if a.dtype != b.dtype:
        raise DTypeMismatch(f"ew {op!r} operands must share a dtype: {a.dtype} vs {b.dtype}")
    a_np, b_np = _broadcast(a.to_numpy(), b.to_numpy())
    if op in COMPARISON_OPS:
        fn = {
            "greater": np.greater,
            "less": np.less,
            "greater_equal": np.greater_equal,
            "less_equal": np.less_equal,
            "equal": np.equal,
        }[op]
        return Tensor.from_dense(fn(a_np, b_np).astype(np.uint8), DType.BOOL)
    if op not in ARITHMETIC_OPS:
        raise ValidationError(f"unknown elementwise op {op!r}")
    if is_integer(a.dtype):
        x = a_np.astype(np.int64)
        y = b_np.astype(np.int64)
        if op == "div":
            if np.any(y == 0):
                raise DivisionByZero("integer division by zero")
            out = x // y
        else:
            out = {"add": np.add, "sub": np.subtract, "mul": np.multiply}[op](x, y)
        return Tensor.from_dense(out, a.dtype)  # representability re-checked on construction
    with np.errstate(divide="ignore", invalid="ignore"):
        out = {"add": np.add, "sub": np.subtract, "mul": np.multiply, "div": np.divide}[op](
            a_np, b_np
        )
    return Tensor.from_dense(out, dispatch_dtype(a.dtype))


def _check_axis(t: Tensor, axis: int) -> None:
    if not 0 <= axis < t.rank:
        raise InvalidAxis(f"axis {axis} out of range for rank {t.rank}")


def reduce(op: str, t: Tensor, axis: int, out_dtype: DType | None = None) -> Tensor:
    """Reduction along one axis. Integer sums accumulate in int32 by default."""
    _check_axis(t, axis)
    if op not in REDUCE_OPS:
        raise ValidationError(f"unknown reduce op {op!r}")
    arr = t.to_numpy()
    if op == "mean":
        if not is_float(t.dtype):
            raise DTypeMismatch("mean requires a float dtype")
        out = arr.astype(np.float64).mean(axis=axis)
        return Tensor.from_dense(out.astype(np.float32), DType.FLOAT32)
    if op == "sum":
        if is_integer(t.dtype):
            acc = arr.astype(np.int64).sum(axis=axis)
            return _finish_int_matmul(acc, out_dtype or DType.INT32)
        out = arr.astype(np.float64).sum(axis=axis)
        return Tensor.from_dense(out.astype(np.float32), DType.FLOAT32)
    fn = np.max if op == "max" else np.min
    if t.shape[axis] == 0:
        raise EmptyAxis(f"{op} over empty axis {axis}")
    return Tensor.from_dense(fn(arr, axis=axis), dispatch_dtype(t.dtype))


def argmax(t: Tensor, axis: int) -> Tensor:
    """Index of the maximum along ``axis``; ties go to the SMALLEST index."""
    _check_axis(t, axis)
    if t.shape[axis] == 0:
        raise EmptyAxis(f"argmax over empty axis {axis}")
    out = np.argmax(t.to_numpy(), axis=axis).astype(np.int32)
    return Tensor.from_dense(out, DType.INT32)


def gather_rows(table: Tensor, indices: Tensor) -> Tensor:
    """Row lookup: output row i is table[indices[i]]."""
    if table.rank != 2:
        raise ShapeMismatch(f"gather table must be rank 2, got {table.shape}")
    if indices.rank != 1:
        raise ShapeMismatch(f"gather indices must be rank 1, got {indices.shape}")
    idx = indices.to_numpy().astype(np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexOutOfBounds(
            f"gather index out of range [0, {table.shape[0]})"
        )
    return Tensor.from_dense(table.to_numpy()[idx], dispatch_dtype(table.dtype))


def monotonic_apply(op: str, t: Tensor, axis: int | None = None) -> Tensor:
    """Order-preserving elementwise functions; softmax normalizes along ``axis``."""
    if op not in MONOTONIC_OPS:
        raise ValidationError(f"unknown monotonic op {op!r}")
    if not is_float(t.dtype):
        raise DTypeMismatch(f"{op} requires a float input, got {t.dtype}")
    x = t.to_numpy().astype(np.float64)
    if op == "softmax":
        if axis is None:
            raise InvalidAxis("softmax requires an axis")
        _check_axis(t, axis)
        shifted = x - x.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        out = e / e.sum(axis=axis, keepdims=True)
    elif op == "sigmoid":
        out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    elif op == "relu":
        out = np.maximum(x, 0.0)
    elif op == "tanh":
        out = np.tanh(x)
    else:  # exp
        out = np.exp(x)
    return Tensor.from_dense(out.astype(np.float32), DType.FLOAT32)


def row_norm(t: Tensor, kind: str) -> Tensor:
    """Per-row norm of a rank-2 float tensor; zero rows yield 1.0 (div guard)."""
    if t.rank != 2:
        raise ShapeMismatch(f"row_norm requires rank 2, got {t.shape}")
    if not is_float(t.dtype):
        raise DTypeMismatch("row_norm requires a float input")
    x = t.to_numpy().astype(np.float64)
    if kind == "l1":
        n = np.abs(x).sum(axis=1)
    elif kind == "l2":
        n = np.sqrt((x * x).sum(axis=1))
    elif kind == "max":
        n = np.abs(x).max(axis=1) if t.shape[1] else np.zeros(t.shape[0])
    else:
        raise ValidationError(f"unknown norm kind {kind!r}")
    n = np.where(n == 0.0, 1.0, n)
    return Tensor.from_dense(n.reshape(-1, 1).astype(np.float32), DType.FLOAT32)


def reshape(t: Tensor, shape: tuple[int, ...]) -> Tensor:
    size = 1
    for s in shape:
        size *= s
    if size != t.size:
        raise ShapeMismatch(f"cannot reshape {t.shape} to {shape}")
    return Tensor.from_dense(t.to_numpy().reshape(shape), t.dtype)


def stack(parts: list[Tensor], axis: int) -> Tensor:
    if not parts:
        raise ValidationError("stack of zero tensors")
    if any(p.shape != parts[0].shape or p.dtype != parts[0].dtype for p in parts):
        raise ShapeMismatch("stack requires identical shapes and dtypes")
    out = np.stack([p.to_numpy() for p in parts], axis=axis)
    return Tensor.from_dense(out, dispatch_dtype(parts[0].dtype))


def broadcast_const(row: Tensor, batch: int) -> Tensor:
    """Repeat a (1, n) constant row for every sample in the batch."""
    if row.rank != 2 or row.shape[0] != 1:
        raise ShapeMismatch(f"constant row must have shape (1, n), got {row.shape}")
    out = np.broadcast_to(row.to_numpy(), (batch, row.shape[1])).copy()
    return Tensor.from_dense(out, dispatch_dtype(row.dtype))
