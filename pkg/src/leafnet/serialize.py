"""Binary model files.

Layout (all integers little-endian)::

    b"LEAFNET1"                      magic
    u16 version                      (= 1)
    u32 H, u32 W, u32 C              model input shape
    u16 class count, then per class: u16 byte length + UTF-8 name
    u16 layer count, then per layer: u8 tag + tag-specific u32 hyperparameters
    float32 parameters, layer order, weights then bias
    u32 CRC32 (IEEE) of every preceding byte
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (BadMagicError, ChecksumError, ModelFileError, TruncatedFileError,
                     UnsupportedVersionError)
from .layers import Conv2D, Dense, Flatten, LayerSpec, MaxPool, Rescale, SoftmaxOutput
from .model import Model, param_shapes

MAGIC = b"LEAFNET1"
VERSION = 1

TAG_RESCALE, TAG_CONV2D, TAG_MAXPOOL, TAG_FLATTEN, TAG_DENSE, TAG_SOFTMAX = 1, 2, 3, 4, 5, 6
_N_HYPER = {TAG_RESCALE: 1, TAG_CONV2D: 1, TAG_MAXPOOL: 0, TAG_FLATTEN: 0, TAG_DENSE: 2, TAG_SOFTMAX: 1}
_ACTIVATIONS = ["linear", "relu"]


def _encode_layer(layer: LayerSpec) -> bytes:
    if isinstance(layer, Rescale):
        bits = struct.unpack("<I", struct.pack("<f", layer.factor))[0]
        return struct.pack("<BI", TAG_RESCALE, bits)
    if isinstance(layer, Conv2D):
        return struct.pack("<BI", TAG_CONV2D, layer.filters)
    if isinstance(layer, MaxPool):
        return struct.pack("<B", TAG_MAXPOOL)
    if isinstance(layer, Flatten):
        return struct.pack("<B", TAG_FLATTEN)
    if isinstance(layer, Dense):
        return struct.pack("<BII", TAG_DENSE, layer.units, _ACTIVATIONS.index(layer.activation))
    if isinstance(layer, SoftmaxOutput):
        return struct.pack("<BI", TAG_SOFTMAX, layer.classes)
    raise TypeError(f"cannot serialize layer {layer!r}")


def _decode_layer(tag: int, hyper: tuple[int, ...]) -> LayerSpec:
    if tag == TAG_RESCALE:
        return Rescale(struct.unpack("<f", struct.pack("<I", hyper[0]))[0])
    if tag == TAG_CONV2D:
        return Conv2D(hyper[0])
    if tag == TAG_MAXPOOL:
        return MaxPool()
    if tag == TAG_FLATTEN:
        return Flatten()
    if tag == TAG_DENSE:
        return Dense(hyper[0], _ACTIVATIONS[hyper[1]])
    if tag == TAG_SOFTMAX:
        return SoftmaxOutput(hyper[0])
    raise ModelFileError(f"unknown layer tag {tag}")


def model_to_bytes(model: Model, class_names: Sequence[str]) -> bytes:
    if len(class_names) != model.num_classes:
        raise ValueError(f"{len(class_names)} class names for a {model.num_classes}-class model")
    out = bytearray(MAGIC)
    out += struct.pack("<H", VERSION)
    out += struct.pack("<III", *model.input_shape)
    out += struct.pack("<H", len(class_names))
    for name in class_names:
        raw = name.encode("utf-8")
        out += struct.pack("<H", len(raw)) + raw
    out += struct.pack("<H", len(model.layers))
    for layer in model.layers:
        out += _encode_layer(layer)
    for p in model.parameters():
        out += np.ascontiguousarray(p, dtype="<f4").tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise TruncatedFileError("model file ends inside the header")
        vals = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return vals

    def raw(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError("model file ends inside the header")
        b = self.data[self.pos:self.pos + n]
        self.pos += n
        return b


def _parse_header(body: bytes):
    r = _Reader(body)
    r.raw(len(MAGIC))
    (version,) = r.take("<H")
    if version != VERSION:
        raise UnsupportedVersionError(f"model file version {version}, expected {VERSION}")
    input_shape = r.take("<III")
    (n_classes,) = r.take("<H")
    names = []
    for _ in range(n_classes):
        (n,) = r.take("<H")
        try:
            names.append(r.raw(n).decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise ModelFileError("class name is not valid UTF-8") from exc
    (n_layers,) = r.take("<H")
    layers = []
    for _ in range(n_layers):
        (tag,) = r.take("<B")
        if tag not in _N_HYPER:
            raise ModelFileError(f"unknown layer tag {tag}")
        layers.append(_decode_layer(tag, r.take("<" + "I" * _N_HYPER[tag])))
    return input_shape, names, layers, r.pos


def model_from_bytes(data: bytes) -> tuple[Model, list[str]]:
    if len(data) < len(MAGIC) or data[:len(MAGIC)] != MAGIC:
        if len(data) < len(MAGIC) and MAGIC.startswith(data) and data:
            raise TruncatedFileError("model file shorter than its magic number")
        raise BadMagicError("not a leafnet model file (bad magic)")
    if len(data) < len(MAGIC) + 2:
        raise TruncatedFileError("model file ends before the version field")
    (version,) = struct.unpack_from("<H", data, len(MAGIC))
    if version != VERSION:
        raise UnsupportedVersionError(f"model file version {version}, expected {VERSION}")
    if len(data) < len(MAGIC) + 6:
        raise TruncatedFileError("model file too short")
    body, stored = data[:-4], struct.unpack("<I", data[-4:])[0]
    crc_ok = (zlib.crc32(body) & 0xFFFFFFFF) == stored

    try:
        input_shape, names, layers, offset = _parse_header(data)
        shapes = param_shapes(layers, input_shape)
    except TruncatedFileError:
        raise
    except ModelFileError:
        if not crc_ok:
            raise ChecksumError("CRC mismatch: model file is corrupted")
        raise
    except Exception as exc:  # noqa: BLE001 - invalid architecture in a file
        if not crc_ok:
            raise ChecksumError("CRC mismatch: model file is corrupted") from exc
        raise ModelFileError(f"invalid architecture in model file: {exc}") from exc
    n_floats = sum(int(np.prod(s)) for p in shapes for s in p.values())
    expected_len = offset + 4 * n_floats + 4
    if len(data) < expected_len:
        raise TruncatedFileError(f"model file has {len(data)} bytes, expected {expected_len}")
    if not crc_ok:
        raise ChecksumError("CRC mismatch: model file is corrupted")
    if len(data) != expected_len:
        raise ModelFileError(f"model file has {len(data) - expected_len} unexpected trailing bytes")

    flat = np.frombuffer(data, dtype="<f4", count=n_floats, offset=offset).astype(np.float32)
    params, pos = [], 0
    for p in shapes:
        d = {}
        for key in ("w", "b"):
            if key in p:
                size = int(np.prod(p[key]))
                d[key] = flat[pos:pos + size].reshape(p[key]).copy()
                pos += size
        params.append(d)
    model = Model(layers, tuple(input_shape), params)
    if len(names) != model.num_classes:
        raise ModelFileError(f"{len(names)} class names for a {model.num_classes}-class model")
    return model, names


def save_model(model: Model, class_names: Sequence[str], path: str | Path) -> str:
    """Write the model file; returns its model id (CRC32 as 8 hex digits)."""
    data = model_to_bytes(model, class_names)
    Path(path).write_bytes(data)
    return data[-4:][::-1].hex()


def load_model(path: str | Path) -> tuple[Model, list[str]]:
    return model_from_bytes(Path(path).read_bytes())


def model_id(path: str | Path) -> str:
    data = Path(path).read_bytes()
    return f"{struct.unpack('<I', data[-4:])[0]:08x}"
