"""Layer specifications and their forward/backward operations.

All activations are NHWC. Convolutions are 3x3, stride 1, zero "same"
padding; pooling is 2x2 with stride 2 and drops an odd trailing row/column.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from . import kernels
from .errors import NumericError, ShapeError


@dataclass(frozen=True)
class Rescale:
    """Multiplies pixels by ``factor``, held at float32 precision so model files store it exactly."""

    factor: float = 1.0 / 255.0

    def __post_init__(self):
        f = float(np.float32(self.factor))
        if not np.isfinite(f):
            raise ValueError(f"Rescale factor must be finite, got {self.factor}")
        object.__setattr__(self, "factor", f)


@dataclass(frozen=True)
class Conv2D:
    """3x3 same-padded convolution followed by ReLU."""

    filters: int

    def __post_init__(self):
        if self.filters < 1:
            raise ShapeError(f"Conv2D filters must be >= 1, got {self.filters}")


@dataclass(frozen=True)
class MaxPool:
    pass


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dense:
    units: int
    activation: str = "relu"

    def __post_init__(self):
        if self.units < 1:
            raise ShapeError(f"Dense units must be >= 1, got {self.units}")
        if self.activation not in ("relu", "linear"):
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class SoftmaxOutput:
    """Fully connected layer producing logits, read out through softmax."""

    classes: int

    def __post_init__(self):
        if self.classes < 1:
            raise ShapeError(f"SoftmaxOutput classes must be >= 1, got {self.classes}")


LayerSpec = Union[Rescale, Conv2D, MaxPool, Flatten, Dense, SoftmaxOutput]


@dataclass(frozen=True)
class ArgmaxMask:
    """Winning position (0..3, row-major in the 2x2 window) per pooled output."""

    index: np.ndarray
    input_shape: tuple[int, int, int, int]


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeError(msg)


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    _require(x.ndim == 4, f"conv2d expects NHWC input, got shape {x.shape}")
    _require(w.ndim == 4 and w.shape[:3] == (3, 3, x.shape[3]),
             f"conv2d weights {w.shape} do not match input channels {x.shape[3]}")
    _require(b.shape == (w.shape[3],), f"conv2d bias {b.shape} does not match {w.shape[3]} filters")
    return kernels.conv2d_forward(np.ascontiguousarray(x), w, b)


def conv2d_backward(x: np.ndarray, w: np.ndarray, grad_out: np.ndarray, need_input_grad: bool = True):
    """Returns (grad_input, grad_weights, grad_bias); grad_input is None when not requested."""
    _require(x.ndim == 4 and w.ndim == 4 and w.shape[:3] == (3, 3, x.shape[3]),
             f"conv2d_backward shapes x={x.shape} w={w.shape}")
    _require(grad_out.shape == x.shape[:3] + (w.shape[3],),
             f"conv2d_backward grad_out {grad_out.shape} does not match output shape")
    return kernels.conv2d_backward(np.ascontiguousarray(x), w, np.ascontiguousarray(grad_out),
                                   need_input_grad)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0).astype(x.dtype, copy=False)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    # subgradient at exactly zero is taken as 0
    _require(x.shape == grad_out.shape, f"relu_backward shapes {x.shape} vs {grad_out.shape}")
    return np.where(x > 0, grad_out, 0).astype(grad_out.dtype, copy=False)


def maxpool_forward(x: np.ndarray) -> tuple[np.ndarray, ArgmaxMask]:
    _require(x.ndim == 4, f"maxpool expects NHWC input, got shape {x.shape}")
    _require(x.shape[1] >= 2 and x.shape[2] >= 2, f"maxpool needs H, W >= 2, got {x.shape}")
    out, index = kernels.maxpool_forward(np.ascontiguousarray(x))
    return out, ArgmaxMask(index, tuple(x.shape))


def maxpool_backward(mask: ArgmaxMask, grad_out: np.ndarray) -> np.ndarray:
    _require(mask.index.shape == grad_out.shape,
             f"maxpool_backward mask {mask.index.shape} vs grad {grad_out.shape}")
    _, h, w, _ = mask.input_shape
    return kernels.maxpool_backward(mask.index, np.ascontiguousarray(grad_out), h, w)


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    _require(x.ndim == 2 and w.ndim == 2 and x.shape[1] == w.shape[0],
             f"dense shapes x={x.shape} w={w.shape}")
    _require(b.shape == (w.shape[1],), f"dense bias {b.shape} does not match {w.shape[1]} units")
    # row-by-row product: BLAS picks different kernels for different batch sizes,
    # and a sample's output must not depend on its batch mates
    return (x[:, None, :] @ w)[:, 0, :] + b


def dense_backward(x: np.ndarray, w: np.ndarray, grad_out: np.ndarray):
    _require(x.ndim == 2 and w.ndim == 2 and x.shape[1] == w.shape[0]
             and grad_out.shape == (x.shape[0], w.shape[1]),
             f"dense_backward shapes x={x.shape} w={w.shape} grad={grad_out.shape}")
    return grad_out @ w.T, x.T @ grad_out, grad_out.sum(axis=0)


def softmax(logits: np.ndarray) -> np.ndarray:
    _require(logits.ndim == 2 and logits.shape[1] >= 1, f"softmax expects (N, K), got {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise NumericError("softmax received non-finite logits")
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(logits)):
        raise NumericError("log_softmax received non-finite logits")
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))
