import numpy as np
import pytest
from hypothesis import given, strategies as st

from mlower.dtypes import (
    DType,
    dtype_join,
    dtype_le,
    format_f32,
    smallest_dtype_of,
    values_representable,
)

ALL = list(DType)

# The partial order as explicit covering edges, used as an independent oracle:
# join(a, b) must be the unique minimal common upper bound reachable by these.
HASSE_EDGES = [
    (DType.BOOL, DType.INT4),
    (DType.INT4, DType.INT8),
    (DType.INT8, DType.INT16),
    (DType.INT16, DType.INT32),
    (DType.INT16, DType.FLOAT16),
    (DType.INT32, DType.FLOAT32),
    (DType.FLOAT16, DType.FLOAT32),
]


def _upper_set(d):
    ups = {d}
    changed = True
    while changed:
        changed = False
        for lo, hi in HASSE_EDGES:
            if lo in ups and hi not in ups:
                ups.add(hi)
                changed = True
    return ups


def _oracle_join(a, b):
    common = _upper_set(a) & _upper_set(b)
    minimal = [d for d in common if not any(x != d and d in _upper_set(x) for x in common)]
    assert len(minimal) == 1
    return minimal[0]


def test_join_matches_hasse_oracle_on_all_pairs():
    for a in ALL:
        for b in ALL:
            assert dtype_join(a, b) == _oracle_join(a, b)


def test_join_examples():
    assert dtype_join(DType.BOOL, DType.FLOAT32) == DType.FLOAT32
    assert dtype_join(DType.INT8, DType.INT8) == DType.INT8
    assert dtype_join(DType.INT32, DType.FLOAT16) == DType.FLOAT32


def test_lattice_laws_all_pairs():
    for a in ALL:
        assert dtype_join(a, a) == a
        assert dtype_join(DType.BOOL, a) == a  # bottom
        assert dtype_join(DType.FLOAT32, a) == DType.FLOAT32  # top
        for b in ALL:
            assert dtype_join(a, b) == dtype_join(b, a)


def test_join_associative_all_triples():
    for a in ALL:
        for b in ALL:
            for c in ALL:
                assert dtype_join(dtype_join(a, b), c) == dtype_join(a, dtype_join(b, c))


def test_int32_float16_incomparable():
    assert not dtype_le(DType.INT32, DType.FLOAT16)
    assert not dtype_le(DType.FLOAT16, DType.INT32)


def test_le_follows_chain():
    chain = [DType.BOOL, DType.INT4, DType.INT8, DType.INT16, DType.INT32, DType.FLOAT32]
    for i, lo in enumerate(chain):
        for hi in chain[i:]:
            assert dtype_le(lo, hi)
    assert dtype_le(DType.INT16, DType.FLOAT16)
    assert dtype_le(DType.FLOAT16, DType.FLOAT32)


@pytest.mark.parametrize(
    "values,expected",
    [
        ([0.0, 1.0, 1.0], DType.BOOL),
        ([0.0, -3.0, 7.0], DType.INT4),
        ([100.0, -5.0], DType.INT8),
        ([1000.0], DType.INT16),
        ([100000.0], DType.INT32),
        ([0.5], DType.FLOAT32),
        ([1.0, 2.5], DType.FLOAT32),
        ([3e12], DType.FLOAT32),
    ],
)
def test_smallest_dtype_ladder(values, expected):
    assert smallest_dtype_of(np.asarray(values)) == expected


def test_representability_bounds():
    assert values_representable(np.asarray([127.0, -128.0]), DType.INT8)
    assert not values_representable(np.asarray([128.0]), DType.INT8)
    assert not values_representable(np.asarray([0.5]), DType.INT32)
    assert values_representable(np.asarray([0.5]), DType.FLOAT16)
    assert not values_representable(np.asarray([1e-8]), DType.FLOAT16)


@given(st.floats(width=32, allow_nan=False, allow_infinity=False))
def test_format_f32_round_trips(x):
    assert np.float32(float(format_f32(x))) == np.float32(x)
