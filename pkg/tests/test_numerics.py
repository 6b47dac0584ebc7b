import math

import numpy as np
import pytest

from dyntask.errors import InvalidArgumentError, ShapeError
from dyntask.numerics import Rng, add, l2_normalize, matmul, scale, softmax, transpose


def test_softmax_equal_logits():
    assert np.array_equal(softmax([0.0, 0.0]), [0.5, 0.5])


def test_softmax_closed_form():
    w = softmax([1.0, 2.0])
    expected = 1.0 / (1.0 + math.e)
    assert abs(w[0] - expected) < 1e-5
    assert abs(w[1] - (1.0 - expected)) < 1e-5


def test_softmax_saturation_no_overflow():
    w = softmax([1000.0, 0.0])
    assert np.all(np.isfinite(w))
    assert w[0] == pytest.approx(1.0)
    assert w[1] == pytest.approx(0.0, abs=1e-300)


def test_softmax_rejects_bad_input():
    with pytest.raises(InvalidArgumentError):
        softmax([1.0, float("nan")])
    with pytest.raises(InvalidArgumentError):
        softmax([1.0, float("inf")])
    with pytest.raises(InvalidArgumentError):
        softmax([])


def test_softmax_simplex_property():
    rng = Rng(123)
    for _ in range(1000):
        n = int(rng.integers(2, 12))
        x = rng.normal(size=n, scale=10.0)
        w = softmax(x)
        assert np.all(w > 0.0)
        assert abs(float(w.sum()) - 1.0) <= 1e-12


def test_softmax_shift_invariance():
    rng = Rng(7)
    for _ in range(100):
        x = rng.normal(size=5, scale=3.0)
        c = float(rng.normal())
        assert np.abs(softmax(x) - softmax(x + c)).max() <= 1e-12


def test_softmax_rows():
    m = softmax(np.array([[0.0, 0.0], [1.0, 2.0]]))
    assert np.allclose(m.sum(axis=1), 1.0)


def test_l2_normalize_345():
    assert np.allclose(l2_normalize([3.0, 4.0]), [0.6, 0.8])


def test_l2_normalize_zero_passthrough():
    assert np.array_equal(l2_normalize([0.0, 0.0]), [0.0, 0.0])


def test_l2_normalize_axis_vector():
    assert np.array_equal(l2_normalize([5.0, 0.0, 0.0]), [1.0, 0.0, 0.0])


def test_l2_normalize_unit_norm_and_idempotent():
    rng = Rng(9)
    for _ in range(200):
        v = rng.normal(size=int(rng.integers(1, 9)), scale=5.0)
        u = l2_normalize(v)
        assert abs(float(np.sqrt((u * u).sum())) - 1.0) <= 1e-12
        assert np.abs(l2_normalize(u) - u).max() <= 1e-14


def test_matmul_identity():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(np.eye(2), a), a)


def test_matmul_inner_product():
    out = matmul(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]]))
    assert out.shape == (1, 1)
    assert out[0, 0] == 11.0


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        matmul(np.zeros((2, 3)), np.zeros((2, 3)))


def test_add_and_scale_and_transpose():
    with pytest.raises(ShapeError):
        add(np.zeros(2), np.zeros(3))
    assert np.array_equal(add(np.ones(3), np.ones(3)), 2 * np.ones(3))
    assert np.array_equal(scale(np.ones(2), 3.0), [3.0, 3.0])
    assert np.array_equal(transpose(np.array([[1.0, 2.0]])), [[1.0], [2.0]])
    with pytest.raises(ShapeError):
        transpose(np.zeros(3))


def test_rng_equal_seeds_bitwise_equal():
    a = Rng(42).normal(size=100)
    b = Rng(42).normal(size=100)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, Rng(43).normal(size=100))


def test_rng_split_deterministic_and_independent():
    a = Rng(42).split("x").normal(size=10)
    b = Rng(42).split("x").normal(size=10)
    c = Rng(42).split("y").normal(size=10)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    # splitting does not disturb the parent stream
    r = Rng(5)
    r.split("child")
    assert np.array_equal(r.normal(size=4), Rng(5).normal(size=4))
