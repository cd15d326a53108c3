"""Dense NHWC tensors, shape validation and initializers.

Tensors are plain numpy arrays. Training runs in float32; float64 is used by
the gradient-check harness.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import NumericError, ShapeError
from .rng import Pcg32

DEFAULT_DTYPE = np.float32
_INT64_MAX = (1 << 63) - 1


def check_shape(shape: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in shape)
    if not 1 <= len(dims) <= 4:
        raise ShapeError(f"rank must be 1..4, got {len(dims)}")
    if any(d < 1 for d in dims):
        raise ShapeError(f"every dimension must be >= 1, got {dims}")
    if math.prod(dims) > _INT64_MAX:
        raise ShapeError(f"element count of {dims} overflows int64")
    return dims


def tensor_create(shape: Sequence[int], fill: float = 0.0, dtype=DEFAULT_DTYPE) -> np.ndarray:
    return np.full(check_shape(shape), fill, dtype=dtype)


def approx_equal(a: np.ndarray, b: np.ndarray, rtol: float = 1e-5, atol: float = 0.0) -> bool:
    """True iff shapes match and |a - b| <= atol + rtol * |b| elementwise."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        return False
    a64 = a.astype(np.float64)
    b64 = b.astype(np.float64)
    return bool(np.all(np.abs(a64 - b64) <= atol + rtol * np.abs(b64)))


def ensure_finite(x: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite values in {what}")
    return x


def glorot_limit(fan_in: int, fan_out: int) -> float:
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"fan_in and fan_out must be >= 1, got {fan_in}, {fan_out}")
    return math.sqrt(6.0 / (fan_in + fan_out))


def glorot_uniform_init(fan_in: int, fan_out: int, shape: Sequence[int], rng: Pcg32,
                        dtype=DEFAULT_DTYPE) -> np.ndarray:
    """Uniform(-L, L) samples with L = sqrt(6 / (fan_in + fan_out)); advances ``rng``."""
    dims = check_shape(shape)
    limit = glorot_limit(fan_in, fan_out)
    values = rng.uniform_array(math.prod(dims), -limit, limit).astype(dtype)
    # rounding to float32 must not land on the open bound
    inner = dtype(limit)
    if inner >= limit:
        inner = np.nextafter(inner, dtype(0))
    np.clip(values, -inner, inner, out=values)
    return values.reshape(dims)
