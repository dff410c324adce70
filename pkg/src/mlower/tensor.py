"""The universal value type: n-dimensional tensors with dense or CSR storage.

Tensors are immutable after construction (buffers are frozen), carry an
explicit element dtype, and validate on construction that every element is
representable in that dtype. CSR storage is restricted to rank-2 tensors and
is the on-ramp for the sparse matmul kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dtypes import DType, numpy_dtype, values_representable, format_f32
from .errors import ValidationError


def _freeze(arr: np.ndarray) -> np.ndarray:
    # ascontiguousarray promotes 0-d to 1-d, which would corrupt scalar ranks
    arr = np.ascontiguousarray(arr) if arr.ndim else arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class CsrStorage:
    """Compressed sparse row triplet for a rank-2 tensor."""

    row_offsets: np.ndarray  # int64, len rows+1
    col_indices: np.ndarray  # int64, len nnz
    values: np.ndarray  # canonical numpy dtype, len nnz


@dataclass(frozen=True)
class Tensor:
    shape: tuple[int, ...]
    dtype: DType
    dense: np.ndarray | None = None
    csr: CsrStorage | None = None
    # Kept out of comparisons; Tensor equality is tested via tensors_equal.
    _token: object = field(default=None, compare=False, repr=False)

    # -- construction ------------------------------------------------------

    @staticmethod
    def from_dense(values, dtype: DType) -> "Tensor":
        arr = np.asarray(values)
        np_dt = numpy_dtype(dtype)
        if not values_representable(arr.astype(np.float64, copy=False), dtype):
            raise ValidationError(
                f"values not representable in {dtype}: range "
                f"[{arr.min() if arr.size else 0}, {arr.max() if arr.size else 0}]"
            )
        arr = _freeze(arr.astype(np_dt))
        return Tensor(shape=tuple(int(s) for s in arr.shape), dtype=dtype, dense=arr)

    @staticmethod
    def from_csr(shape, row_offsets, col_indices, values, dtype: DType) -> "Tensor":
        shape = tuple(int(s) for s in shape)
        if len(shape) != 2:
            raise ValidationError(f"CSR storage requires rank 2, got shape {shape}")
        rows, cols = shape
        off = np.asarray(row_offsets, dtype=np.int64)
        idx = np.asarray(col_indices, dtype=np.int64)
        val = np.asarray(values)
        if off.ndim != 1 or off.shape[0] != rows + 1:
            raise ValidationError(f"row_offsets must have length rows+1 ({rows + 1})")
        if off[0] != 0 or np.any(np.diff(off) < 0):
            raise ValidationError("row_offsets must start at 0 and be non-decreasing")
        if int(off[-1]) != idx.shape[0] or idx.shape[0] != val.shape[0]:
            raise ValidationError("last row offset must equal len(col_indices) == len(values)")
        if idx.size and (idx.min() < 0 or idx.max() >= cols):
            raise ValidationError(f"col_indices out of range [0, {cols})")
        for r in range(rows):
            seg = idx[off[r] : off[r + 1]]
            if seg.size > 1 and np.any(np.diff(seg) <= 0):
                raise ValidationError(f"col_indices within row {r} must be strictly increasing")
        if not values_representable(val.astype(np.float64, copy=False), dtype):
            raise ValidationError(f"CSR values not representable in {dtype}")
        store = CsrStorage(_freeze(off), _freeze(idx), _freeze(val.astype(numpy_dtype(dtype))))
        return Tensor(shape=shape, dtype=dtype, csr=store)

    @staticmethod
    def to_csr(t: "Tensor") -> "Tensor":
        """Re-store a dense rank-2 tensor as CSR, dropping explicit zeros."""
        if t.is_csr:
            return t
        if len(t.shape) != 2:
            raise ValidationError("only rank-2 tensors have a CSR form")
        arr = t.dense
        mask = arr != 0
        offsets = np.concatenate(([0], np.cumsum(mask.sum(axis=1), dtype=np.int64)))
        cols = np.nonzero(mask)[1].astype(np.int64)
        vals = arr[mask]
        return Tensor.from_csr(t.shape, offsets, cols, vals, t.dtype)

    # -- views -------------------------------------------------------------

    @property
    def is_csr(self) -> bool:
        return self.csr is not None

    @property
    def rank(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        n = 1
        for s in self.shape:
            n *= s
        return n

    def to_numpy(self) -> np.ndarray:
        """Dense ndarray in the canonical numpy dtype (CSR is densified)."""
        if not self.is_csr:
            return self.dense
        rows, cols = self.shape
        out = np.zeros((rows, cols), dtype=numpy_dtype(self.dtype))
        off, idx, val = self.csr.row_offsets, self.csr.col_indices, self.csr.values
        for r in range(rows):
            out[r, idx[off[r] : off[r + 1]]] = val[off[r] : off[r + 1]]
        return out

    def densify(self) -> "Tensor":
        if not self.is_csr:
            return self
        return Tensor.from_dense(self.to_numpy(), self.dtype)

    def rows(self) -> list[list[float]]:
        """Rank-2 contents as plain Python floats (oracle/CSV boundary)."""
        if self.rank != 2:
            raise ValidationError(f"rows() requires rank 2, got {self.shape}")
        return [[float(v) for v in row] for row in self.to_numpy()]

    def nonzero_fraction(self) -> float:
        """Ratio of non-zero elements to all elements."""
        if self.size == 0:
            return 0.0
        if self.is_csr:
            nnz = int(np.count_nonzero(self.csr.values))
        else:
            nnz = int(np.count_nonzero(self.dense))
        return nnz / self.size

    def max_abs(self) -> float:
        if self.size == 0:
            return 0.0
        arr = self.csr.values if self.is_csr else self.dense
        if arr.size == 0:
            return 0.0
        return float(np.max(np.abs(arr.astype(np.float64))))


def tensors_equal(a: Tensor, b: Tensor) -> bool:
    """Exact value equality (storage format and dtype metadata ignored)."""
    if a.shape != b.shape:
        return False
    return bool(np.array_equal(a.to_numpy().astype(np.float64), b.to_numpy().astype(np.float64)))


# -- CSV text I/O (CLI interchange format for rank-2 float32 tensors) -------


def read_csv_text(text: str, n_cols: int | None = None) -> Tensor:
    rows = []
    for ln, line in enumerate(text.splitlines()):
        line = line.strip()
        if not line:
            continue
        try:
            rows.append([float(f) for f in line.split(",")])
        except ValueError as e:
            raise ValidationError(f"CSV line {ln + 1}: {e}") from None
    if not rows:
        return Tensor.from_dense(np.zeros((0, n_cols or 0), dtype=np.float32), DType.FLOAT32)
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValidationError("CSV rows have inconsistent column counts")
    return Tensor.from_dense(np.asarray(rows, dtype=np.float32), DType.FLOAT32)


def write_csv_text(t: Tensor) -> str:
    if t.rank != 2:
        raise ValidationError(f"CSV output requires rank 2, got {t.shape}")
    arr = t.to_numpy().astype(np.float32)
    lines = [",".join(format_f32(v) for v in row) for row in arr]
    return "\n".join(lines) + ("\n" if lines else "")
