"""Sequential model container: shape inference, parameters, forward and backward."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import layers as L
from .errors import ShapeError
from .layers import Conv2D, Dense, Flatten, LayerSpec, MaxPool, Rescale, SoftmaxOutput
from .rng import STREAM_INIT, Pcg32
from .tensor import DEFAULT_DTYPE, glorot_uniform_init


def default_layers(num_classes: int = 8) -> list[LayerSpec]:
    """Rescale, three conv/pool stages (16, 32, 64 filters), dense 128, softmax output."""
    return [
        Rescale(),
        Conv2D(16), MaxPool(),
        Conv2D(32), MaxPool(),
        Conv2D(64), MaxPool(),
        Flatten(),
        Dense(128, "relu"),
        SoftmaxOutput(num_classes),
    ]


def _layer_output_shape(layer: LayerSpec, shape: tuple[int, ...]) -> tuple[int, ...]:
    if isinstance(layer, Rescale):
        return shape
    if isinstance(layer, Conv2D):
        if len(shape) != 3:
            raise ShapeError(f"Conv2D needs (H, W, C) input, got {shape}")
        return (shape[0], shape[1], layer.filters)
    if isinstance(layer, MaxPool):
        if len(shape) != 3:
            raise ShapeError(f"MaxPool needs (H, W, C) input, got {shape}")
        if shape[0] < 2 or shape[1] < 2:
            raise ShapeError(f"MaxPool needs H, W >= 2, got {shape}")
        return (shape[0] // 2, shape[1] // 2, shape[2])
    if isinstance(layer, Flatten):
        return (int(np.prod(shape)),)
    if isinstance(layer, (Dense, SoftmaxOutput)):
        if len(shape) != 1:
            raise ShapeError(f"{type(layer).__name__} needs a flat input, got {shape}; add Flatten")
        return (layer.units if isinstance(layer, Dense) else layer.classes,)
    raise TypeError(f"unknown layer spec {layer!r}")


def infer_shapes(layers: Sequence[LayerSpec], input_shape: Sequence[int]) -> list[tuple[int, ...]]:
    shape = tuple(int(d) for d in input_shape)
    if len(shape) != 3 or min(shape) < 1:
        raise ShapeError(f"input shape must be (H, W, C) with positive dims, got {shape}")
    out = []
    for layer in layers:
        shape = _layer_output_shape(layer, shape)
        out.append(shape)
    return out


def param_shapes(layers: Sequence[LayerSpec], input_shape: Sequence[int]) -> list[dict[str, tuple]]:
    shapes = []
    prev = tuple(input_shape)
    for layer, out in zip(layers, infer_shapes(layers, input_shape)):
        if isinstance(layer, Conv2D):
            shapes.append({"w": (3, 3, prev[2], layer.filters), "b": (layer.filters,)})
        elif isinstance(layer, (Dense, SoftmaxOutput)):
            shapes.append({"w": (prev[0], out[0]), "b": (out[0],)})
        else:
            shapes.append({})
        prev = out
    return shapes


@dataclass
class ForwardTrace:
    inputs: list[np.ndarray]
    outputs: list[np.ndarray]
    masks: dict[int, L.ArgmaxMask]
    logits: np.ndarray
    probabilities: np.ndarray | None
    features: np.ndarray | None = None


@dataclass
class Model:
    layers: list[LayerSpec]
    input_shape: tuple[int, int, int]
    params: list[dict[str, np.ndarray]] = field(default_factory=list)

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        expected = param_shapes(self.layers, self.input_shape)
        if not self.params:
            self.params = [{k: np.zeros(s, DEFAULT_DTYPE) for k, s in p.items()} for p in expected]
        if len(self.params) != len(self.layers):
            raise ShapeError("one parameter dict per layer required")
        for i, (have, want) in enumerate(zip(self.params, expected)):
            if set(have) != set(want) or any(have[k].shape != want[k] for k in want):
                raise ShapeError(f"layer {i} parameters do not match spec {want}")

    @property
    def dtype(self):
        for p in self.params:
            if p:
                return p["w"].dtype
        return np.dtype(DEFAULT_DTYPE)

    @property
    def num_classes(self) -> int:
        if not isinstance(self.layers[-1], SoftmaxOutput):
            raise ShapeError("model does not end in a SoftmaxOutput layer")
        return self.layers[-1].classes

    def parameters(self) -> list[np.ndarray]:
        """Flat list of parameter tensors, layer order, weights before bias."""
        return [p[k] for p in self.params for k in ("w", "b") if k in p]

    def param_keys(self) -> list[tuple[int, str]]:
        return [(i, k) for i, p in enumerate(self.params) for k in ("w", "b") if k in p]

    def astype(self, dtype) -> "Model":
        return Model(list(self.layers), self.input_shape,
                     [{k: v.astype(dtype) for k, v in p.items()} for p in self.params])

    def copy(self) -> "Model":
        return self.astype(self.dtype)


def build_model(layers: Sequence[LayerSpec], input_shape: Sequence[int], seed: int | None = 0,
                dtype=DEFAULT_DTYPE) -> Model:
    """Glorot-uniform weights and zero biases; ``seed=None`` gives all-zero parameters."""
    layers = list(layers)
    shapes = param_shapes(layers, input_shape)
    rng = Pcg32(seed, STREAM_INIT) if seed is not None else None
    params = []
    for layer, ps in zip(layers, shapes):
        if not ps:
            params.append({})
            continue
        wshape = ps["w"]
        if isinstance(layer, Conv2D):
            fan_in, fan_out = 9 * wshape[2], 9 * wshape[3]
        else:
            fan_in, fan_out = wshape
        if rng is None:
            w = np.zeros(wshape, dtype)
        else:
            w = glorot_uniform_init(fan_in, fan_out, wshape, rng, dtype)
        params.append({"w": w, "b": np.zeros(ps["b"], dtype)})
    return Model(layers, tuple(input_shape), params)


def default_model(image_size: int = 180, num_classes: int = 8, seed: int | None = 0,
                dtype=DEFAULT_DTYPE) -> Model:
    return build_model(default_layers(num_classes), (image_size, image_size, 3), seed, dtype)


def shape_infer(model: Model) -> list[tuple[int, ...]]:
    """Per-layer output shapes, batch dimension omitted."""
    return infer_shapes(model.layers, model.input_shape)


def layer_param_counts(layers: Sequence[LayerSpec], input_shape: Sequence[int]) -> list[int]:
    return [sum(int(np.prod(s)) for s in p.values()) for p in param_shapes(layers, input_shape)]


def param_count(model: Model) -> int:
    return sum(layer_param_counts(model.layers, model.input_shape))


def model_forward(model: Model, batch: np.ndarray, mode: str = "eval") -> ForwardTrace:
    """Runs every layer and keeps all intermediates.

    ``mode`` is accepted for symmetry with training code; no layer behaves
    differently between train and eval.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if batch.ndim != 4 or tuple(batch.shape[1:]) != model.input_shape:
        raise ShapeError(f"batch shape {batch.shape} does not match model input {model.input_shape}")
    x = np.asarray(batch, dtype=model.dtype)
    inputs, outputs, masks = [], [], {}
    features = None
    for i, (layer, p) in enumerate(zip(model.layers, model.params)):
        inputs.append(x)
        if isinstance(layer, Rescale):
            x = x * x.dtype.type(layer.factor)
        elif isinstance(layer, Conv2D):
            x = L.relu(L.conv2d_forward(x, p["w"], p["b"]))
        elif isinstance(layer, MaxPool):
            x, masks[i] = L.maxpool_forward(x)
        elif isinstance(layer, Flatten):
            x = x.reshape(x.shape[0], -1)
        elif isinstance(layer, Dense):
            x = L.dense_forward(x, p["w"], p["b"])
            if layer.activation == "relu":
                x = L.relu(x)
        elif isinstance(layer, SoftmaxOutput):
            features = inputs[-1]
            x = L.dense_forward(x, p["w"], p["b"])
        outputs.append(x)
    logits = x
    probs = L.softmax(logits) if isinstance(model.layers[-1], SoftmaxOutput) else None
    return ForwardTrace(inputs, outputs, masks, logits, probs, features)


def model_backward(model: Model, trace: ForwardTrace, grad_logits: np.ndarray) -> list[dict[str, np.ndarray]]:
    """Gradients for every parameter, same structure as ``model.params``."""
    if len(trace.inputs) != len(model.layers) or grad_logits.shape != trace.logits.shape:
        raise ShapeError("trace does not belong to this model or gradient shape is wrong")
    grads: list[dict[str, np.ndarray]] = [{} for _ in model.layers]
    first_param = next((i for i, p in enumerate(model.params) if p), len(model.layers))
    g = grad_logits.astype(model.dtype, copy=False)
    for i in range(len(model.layers) - 1, -1, -1):
        layer, p = model.layers[i], model.params[i]
        x, y = trace.inputs[i], trace.outputs[i]
        need_input = i > first_param
        if isinstance(layer, Rescale):
            g = g * g.dtype.type(layer.factor)
        elif isinstance(layer, Conv2D):
            g = L.relu_backward(y, g)
            gx, gw, gb = L.conv2d_backward(x, p["w"], g, need_input)
            grads[i] = {"w": gw, "b": gb}
            g = gx
        elif isinstance(layer, MaxPool):
            g = L.maxpool_backward(trace.masks[i], g)
        elif isinstance(layer, Flatten):
            g = g.reshape(x.shape)
        elif isinstance(layer, (Dense, SoftmaxOutput)):
            if isinstance(layer, Dense) and layer.activation == "relu":
                g = L.relu_backward(y, g)
            gx, gw, gb = L.dense_backward(x, p["w"], g)
            grads[i] = {"w": gw, "b": gb}
            g = gx
        if g is None:
            break
    return grads
