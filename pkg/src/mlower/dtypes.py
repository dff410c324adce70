"""Element types and the widening lattice that drives compilation.

The partial order is

    float32 > {int32, float16} > int16 > int8 > int4 > bool

where int32 and float16 sit side by side and are mutually incomparable;
their least upper bound is float32. Converting a value up the lattice is
lossless, converting down is forbidden. int4 and float16 take part in the
lattice but have no native kernels: the interpreter promotes them to
int8/float32 at dispatch time.
"""

from __future__ import annotations

import enum

import numpy as np

from .errors import ValidationError


class DType(enum.Enum):
    BOOL = "bool"
    INT4 = "int4"
    INT8 = "int8"
    INT16 = "int16"
    INT32 = "int32"
    FLOAT16 = "float16"
    FLOAT32 = "float32"

    def __repr__(self) -> str:
        return f"DType.{self.name}"

    def __str__(self) -> str:
        return self.value


# Lattice height per dtype. int32/float16 share a level and are the only
# incomparable pair, so `a <= b iff a == b or level[a] < level[b]`.
_LEVEL = {
    DType.BOOL: 0,
    DType.INT4: 1,
    DType.INT8: 2,
    DType.INT16: 3,
    DType.INT32: 4,
    DType.FLOAT16: 4,
    DType.FLOAT32: 5,
}

_NUMPY = {
    DType.BOOL: np.uint8,
    DType.INT4: np.int8,
    DType.INT8: np.int8,
    DType.INT16: np.int16,
    DType.INT32: np.int32,
    DType.FLOAT16: np.float16,
    DType.FLOAT32: np.float32,
}

INTEGER_DTYPES = (DType.BOOL, DType.INT4, DType.INT8, DType.INT16, DType.INT32)
FLOAT_DTYPES = (DType.FLOAT16, DType.FLOAT32)

# Largest magnitude each integer-family dtype can hold (bool holds 0/1).
INT_CAP = {
    DType.BOOL: 1,
    DType.INT4: 7,
    DType.INT8: 127,
    DType.INT16: 32767,
    DType.INT32: 2**31 - 1,
}

_INT_RANGE = {
    DType.BOOL: (0, 1),
    DType.INT4: (-8, 7),
    DType.INT8: (-128, 127),
    DType.INT16: (-32768, 32767),
    DType.INT32: (-(2**31), 2**31 - 1),
}


def dtype_le(a: DType, b: DType) -> bool:
    """True when a value of dtype ``a`` widens losslessly to ``b``."""
    return a == b or _LEVEL[a] < _LEVEL[b]


def dtype_lt(a: DType, b: DType) -> bool:
    return a != b and _LEVEL[a] < _LEVEL[b]


def dtype_join(a: DType, b: DType) -> DType:
    """Least upper bound; the incomparable int32/float16 pair joins to float32."""
    if dtype_le(a, b):
        return b
    if dtype_le(b, a):
        return a
    return DType.FLOAT32


def is_integer(d: DType) -> bool:
    return d in _INT_RANGE


def is_float(d: DType) -> bool:
    return d in FLOAT_DTYPES


def numpy_dtype(d: DType):
    return _NUMPY[d]


def dispatch_dtype(d: DType) -> DType:
    """The dtype kernels actually run at; int4/float16 have no native kernels."""
    if d == DType.INT4:
        return DType.INT8
    if d == DType.FLOAT16:
        return DType.FLOAT32
    return d


def parse_dtype(name: str) -> DType:
    try:
        return DType(name)
    except ValueError:
        raise ValidationError(f"unknown dtype name {name!r}") from None


def values_representable(values: np.ndarray, d: DType) -> bool:
    """Check every element survives a round-trip through ``d`` unchanged."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return True
    if is_integer(d):
        if not np.all(np.isfinite(v)) or not np.all(v == np.floor(v)):
            return False
        lo, hi = _INT_RANGE[d]
        return bool(np.all(v >= lo) & np.all(v <= hi))
    back = v.astype(_NUMPY[d]).astype(np.float64)
    return bool(np.array_equal(back, v, equal_nan=True))


def smallest_dtype_of(values: np.ndarray) -> DType:
    """Smallest dtype that represents every element exactly (value-range scan)."""
    for d in (DType.BOOL, DType.INT4, DType.INT8, DType.INT16, DType.INT32):
        if values_representable(values, d):
            return d
    return DType.FLOAT32


def format_f32(x: float) -> str:
    """Shortest decimal that round-trips through float32; used by CSV and JSON."""
    v = np.float32(x)
    if np.isnan(v):
        return "nan"
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return np.format_float_positional(v, unique=True, trim="0")
