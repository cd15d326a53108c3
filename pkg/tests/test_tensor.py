import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from leafnet.errors import NumericError, ShapeError
from leafnet.rng import Pcg32
from leafnet.tensor import (approx_equal, check_shape, ensure_finite, glorot_limit, glorot_uniform_init,
                            tensor_create)


def test_create_zeros():
    t = tensor_create([2, 2], 0.0)
    assert t.shape == (2, 2) and t.dtype == np.float32
    assert np.all(t == 0)


def test_create_image_sized():
    t = tensor_create([1, 180, 180, 3], 0.5)
    assert t.size == 97_200
    assert np.all(t == 0.5)


@pytest.mark.parametrize("shape", [[0, 1], [3, -1], [], [1, 1, 1, 1, 1]])
def test_create_rejects_bad_shapes(shape):
    with pytest.raises(ShapeError):
        tensor_create(shape, 0.0)


def test_check_shape_overflow():
    with pytest.raises(ShapeError):
        check_shape([2**32, 2**32])


def test_float64_mode():
    assert tensor_create([3], 1.0, np.float64).dtype == np.float64


def test_glorot_limit_values():
    assert glorot_limit(3, 3) == 1.0
    assert glorot_limit(27, 144) == pytest.approx(0.18732, abs=1e-5)
    with pytest.raises(ValueError):
        glorot_limit(0, 3)


def test_glorot_samples_inside_bounds():
    w = glorot_uniform_init(3, 3, [1000], Pcg32(1))
    assert np.all(np.abs(w) < 1.0)
    lim = math.sqrt(6 / 171)
    w = glorot_uniform_init(27, 144, [3, 3, 3, 16], Pcg32(2))
    assert w.shape == (3, 3, 3, 16)
    assert np.all(np.abs(w) <= lim)


def test_glorot_mean_near_zero():
    w = glorot_uniform_init(27, 144, [10_000], Pcg32(42))
    # std of the mean is L / sqrt(3 * 10000) ~ 0.0011; 0.02 is far outside that
    assert abs(float(w.mean())) < 0.02


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 5000), st.integers(1, 5000), st.integers(0, 2**32))
def test_glorot_strict_bound(fan_in, fan_out, seed):
    lim = math.sqrt(6 / (fan_in + fan_out))
    for dtype in (np.float32, np.float64):
        w = glorot_uniform_init(fan_in, fan_out, [100_000], Pcg32(seed), dtype)
        assert float(np.abs(w).max()) < lim


def test_glorot_deterministic():
    a = glorot_uniform_init(10, 20, [10, 20], Pcg32(7))
    b = glorot_uniform_init(10, 20, [10, 20], Pcg32(7))
    assert np.array_equal(a, b)


def test_approx_equal_examples():
    x = np.arange(6.0).reshape(2, 3)
    assert approx_equal(x, x, 0, 0)
    assert approx_equal(np.array([1.0]), np.array([1.0001]), rtol=1e-3, atol=0)
    assert not approx_equal(np.array([1.0]), np.array([1.01]), rtol=1e-3, atol=0)
    assert not approx_equal(np.zeros(3), np.zeros((3, 1)), 1, 1)


floats = hnp.arrays(np.float64, st.integers(1, 20), elements=st.floats(-1e6, 1e6))


@given(floats)
def test_approx_equal_reflexive(a):
    assert approx_equal(a, a, 0, 0)


@given(floats, st.floats(0, 10))
def test_approx_equal_symmetric_without_rtol(a, atol):
    b = a + 0.5
    assert approx_equal(a, b, 0, atol) == approx_equal(b, a, 0, atol)


@given(hnp.array_shapes(min_dims=1, max_dims=4, max_side=6))
def test_reshape_conserves_count(shape):
    t = tensor_create(shape, 1.0)
    assert t.reshape(-1).size == math.prod(shape)
    assert t.reshape(-1).reshape(shape).shape == tuple(shape)


def test_ensure_finite():
    ensure_finite(np.ones(3))
    with pytest.raises(NumericError):
        ensure_finite(np.array([1.0, np.nan]))
