import numpy as np
import pytest

from mlower.dtypes import DType
from mlower.errors import (
    BroadcastError,
    DivisionByZero,
    DTypeMismatch,
    EmptyAxis,
    IndexOutOfBounds,
    InvalidAxis,
    ShapeMismatch,
)
from mlower.kernels import (
    argmax,
    ew_binary,
    gather_rows,
    matmul,
    monotonic_apply,
    reduce,
    row_norm,
    sparse_dense_matmul,
)
from mlower.tensor import Tensor, tensors_equal


def f32(values):
    return Tensor.from_dense(np.asarray(values, dtype=np.float32), DType.FLOAT32)


def boolean(values):
    return Tensor.from_dense(values, DType.BOOL)


# -- matmul ---------------------------------------------------------------------


def test_matmul_identity():
    eye = f32([[1, 0], [0, 1]])
    m = f32([[2.5, -1.0], [0.25, 4.0]])
    assert tensors_equal(matmul(eye, m, DType.FLOAT32), m)


def test_matmul_bool_hand_case():
    a = boolean([[1, 0], [1, 1]])
    b = boolean([[0, 1], [1, 1]])
    out = matmul(a, b, DType.INT32)
    assert out.dtype == DType.INT32
    assert out.to_numpy().tolist() == [[0, 1], [1, 2]]


def test_matmul_bool_counts_common_ones():
    # scalar-loop oracle: element (i, j) counts coordinates where both are 1
    rng = np.random.default_rng(0)
    a = (rng.random((5, 9)) < 0.5).astype(np.uint8)
    b = (rng.random((9, 4)) < 0.5).astype(np.uint8)
    want = [
        [sum(int(a[i, k]) and int(b[k, j]) for k in range(9)) for j in range(4)]
        for i in range(5)
    ]
    out = matmul(boolean(a), boolean(b), DType.INT32)
    assert out.to_numpy().tolist() == want


def test_matmul_shape_and_dtype_errors():
    with pytest.raises(ShapeMismatch):
        matmul(f32([[1, 2]]), f32([[1, 2]]), DType.FLOAT32)
    with pytest.raises(DTypeMismatch):
        matmul(f32([[1, 2]]), boolean([[1], [0]]), DType.FLOAT32)


def test_matmul_batch_row_shape():
    x = f32(np.zeros((1, 90)))
    w = f32(np.zeros((90, 13)))
    assert matmul(x, w, DType.FLOAT32).shape == (1, 13)


# -- sparse vs dense -------------------------------------------------------------


def test_sparse_all_zero():
    a = f32(np.ones((3, 4)))
    z = Tensor.from_csr((4, 2), [0, 0, 0, 0, 0], [], [], DType.FLOAT32)
    out = sparse_dense_matmul(a, z, DType.FLOAT32)
    assert out.to_numpy().tolist() == [[0.0, 0.0]] * 3


def test_sparse_equals_dense_8x8():
    rng = np.random.default_rng(42)
    a = rng.uniform(-2, 2, size=(8, 8)).astype(np.float32)
    b = rng.uniform(-2, 2, size=(8, 8)).astype(np.float32)
    b[rng.random(b.shape) >= 0.1] = 0.0
    bt = Tensor.from_dense(b, DType.FLOAT32)
    dense = matmul(f32(a), bt, DType.FLOAT32)
    sparse = sparse_dense_matmul(f32(a), Tensor.to_csr(bt), DType.FLOAT32)
    assert np.array_equal(dense.to_numpy(), sparse.to_numpy())


def test_sparse_equals_dense_selector_matrix():
    # one 1 per column, density 1/n_features: the shape the tree lowering emits
    rng = np.random.default_rng(1)
    n_f, n_i = 24, 7
    w = np.zeros((n_f, n_i), dtype=np.float32)
    for j in range(n_i):
        w[rng.integers(n_f), j] = 1.0
    x = rng.uniform(-5, 5, size=(50, n_f)).astype(np.float32)
    wt = Tensor.from_dense(w, DType.FLOAT32)
    dense = matmul(f32(x), wt, DType.FLOAT32)
    sparse = sparse_dense_matmul(f32(x), Tensor.to_csr(wt), DType.FLOAT32)
    assert np.array_equal(dense.to_numpy(), sparse.to_numpy())


# -- elementwise -----------------------------------------------------------------


def test_greater_returns_bool():
    out = ew_binary("greater", f32([[1.0, 3.0]]), f32([[2.0, 2.0]]))
    assert out.dtype == DType.BOOL
    assert out.to_numpy().tolist() == [[0, 1]]


def test_add_identity():
    x = f32([[1.5, -2.0], [0.0, 3.25]])
    zero = f32([[0.0]])
    assert tensors_equal(ew_binary("add", x, zero), x)


def test_strict_greater_on_threshold_row():
    row = f32([[5.1, 0.2, 7.7]])
    thr = f32([5.0, 1.0, 7.7])
    assert ew_binary("greater", row, thr).to_numpy().tolist() == [[1, 0, 0]]


def test_broadcast_matches_scalar_loop_oracle():
    rng = np.random.default_rng(3)
    shapes = [((2, 3), (2, 3)), ((2, 3), (1, 3)), ((2, 3), (3,)), ((4, 1), (1, 5)), ((2, 2, 3), (3,))]
    for sa, sb in shapes:
        a = rng.uniform(-4, 4, size=sa).astype(np.float32)
        b = rng.uniform(1, 4, size=sb).astype(np.float32)
        for op, py in [("add", lambda u, v: u + v), ("mul", lambda u, v: u * v),
                       ("greater", lambda u, v: float(u > v))]:
            got = ew_binary(op, f32(a), f32(b)).to_numpy().astype(np.float64)
            ba, bb = np.broadcast_arrays(a, b)
            want = np.asarray(
                [py(float(u), float(v)) for u, v in zip(ba.ravel().tolist(), bb.ravel().tolist())]
            ).reshape(ba.shape)
            assert np.allclose(got, want, rtol=1e-6, atol=1e-6)


def test_broadcast_error():
    with pytest.raises(BroadcastError):
        ew_binary("add", f32([[1, 2, 3]]), f32([[1, 2]]))


def test_division_by_zero_semantics():
    with pytest.raises(DivisionByZero):
        ew_binary("div", Tensor.from_dense([4], DType.INT8), Tensor.from_dense([0], DType.INT8))
    out = ew_binary("div", f32([1.0, -1.0, 0.0]), f32([0.0, 0.0, 0.0]))
    vals = out.to_numpy()
    assert np.isposinf(vals[0]) and np.isneginf(vals[1]) and np.isnan(vals[2])


# -- reductions, argmax, gather ----------------------------------------------------


def test_reduce_examples():
    assert reduce("sum", f32([[7.5]]), 1).to_numpy().tolist() == [7.5]
    assert reduce("sum", f32([1, 2, 3]), 0).to_numpy().tolist() == 6.0
    means = reduce("mean", f32([[0.2, 0.8], [0.6, 0.4]]), 0)
    assert np.allclose(means.to_numpy(), [0.4, 0.6], atol=1e-7)


def test_reduce_int_sum_accumulates_int32():
    t = Tensor.from_dense([[100, 100, 100]], DType.INT8)
    out = reduce("sum", t, 1)
    assert out.dtype == DType.INT32
    assert out.to_numpy().tolist() == [300]


def test_reduce_errors():
    with pytest.raises(InvalidAxis):
        reduce("sum", f32([1, 2]), 1)
    with pytest.raises(DTypeMismatch):
        reduce("mean", Tensor.from_dense([1, 2], DType.INT8), 0)


def test_argmax_tie_breaks():
    assert argmax(f32([1, 2, 1, 2]), 0).to_numpy().tolist() == 1
    assert argmax(f32([0, 0, 0]), 0).to_numpy().tolist() == 0
    out = argmax(f32([[3, 1], [1, 3]]), 1)
    assert out.dtype == DType.INT32
    assert out.to_numpy().tolist() == [0, 1]


def test_argmax_empty_axis():
    with pytest.raises(EmptyAxis):
        argmax(f32(np.zeros((0,))), 0)


def test_argmax_invariant_under_monotonic():
    rng = np.random.default_rng(9)
    z = f32(rng.normal(size=(40, 6)))
    base = argmax(z, 1).to_numpy()
    assert np.array_equal(argmax(monotonic_apply("softmax", z, 1), 1).to_numpy(), base)
    assert np.array_equal(argmax(monotonic_apply("sigmoid", z), 1).to_numpy(), base)


def test_gather_rows():
    table = f32([[7], [9]])
    idx = Tensor.from_dense([0, 0], DType.INT32)
    assert gather_rows(table, idx).to_numpy().tolist() == [[7.0], [7.0]]
    ident = Tensor.from_dense([0, 1], DType.INT32)
    assert tensors_equal(gather_rows(table, ident), table)
    with pytest.raises(IndexOutOfBounds):
        gather_rows(table, Tensor.from_dense([2], DType.INT32))


# -- monotonic, norms ---------------------------------------------------------------


def test_sigmoid_at_zero():
    assert monotonic_apply("sigmoid", f32([0.0])).to_numpy().tolist() == [0.5]


def test_softmax_uniform_rows():
    out = monotonic_apply("softmax", f32([[3.7, 3.7, 3.7]]), 1).to_numpy()
    assert np.allclose(out, [[1 / 3] * 3], atol=1e-7)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(13)
    out = monotonic_apply("softmax", f32(rng.normal(size=(30, 5)) * 4), 1).to_numpy()
    assert np.all(np.abs(out.sum(axis=1) - 1.0) < 1e-6)


def test_row_norm_examples():
    assert row_norm(f32([[3, 4]]), "l2").to_numpy().tolist() == [[5.0]]
    assert row_norm(f32([[-7, 2]]), "max").to_numpy().tolist() == [[7.0]]
    assert row_norm(f32([[0, 0]]), "l1").to_numpy().tolist() == [[1.0]]  # zero-row guard
