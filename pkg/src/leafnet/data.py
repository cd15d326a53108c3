"""Directory-per-class image datasets: scanning, decoding, resizing, splitting,
batching and augmentation.

Images are handled as (H, W, 3) float32 arrays with values in [0, 255]; the
model's Rescale layer maps them to [0, 1].
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DatasetError, DecodeError
from .rng import STREAM_SHUFFLE, STREAM_SPLIT, Pcg32, mix_seed

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = frozenset({".png", ".jpg", ".jpeg"})


# --------------------------------------------------------------------------- discovery

@dataclass(frozen=True)
class ScanResult:
    class_names: list[str]
    items: list[tuple[Path, int]]
    skipped: int


def scan_directory(root: str | Path) -> ScanResult:
    """Class names are the sorted subdirectory names; labels index into them."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} does not exist or is not a directory")
    class_dirs = sorted((p for p in root.iterdir() if p.is_dir()), key=lambda p: p.name)
    if len(class_dirs) < 2:
        raise DatasetError(f"{root} must contain at least 2 class directories, found {len(class_dirs)}")
    items, skipped = [], 0
    for label, d in enumerate(class_dirs):
        files = sorted(p for p in d.iterdir() if p.is_file())
        images = [p for p in files if p.suffix.lower() in IMAGE_EXTENSIONS]
        skipped += len(files) - len(images)
        if not images:
            raise DatasetError(f"class directory {d} contains no images")
        items.extend((p, label) for p in images)
    if skipped:
        log.warning("skipped %d non-image files under %s", skipped, root)
    return ScanResult([d.name for d in class_dirs], items, skipped)


# --------------------------------------------------------------------------- decoding / resizing

def decode_image(data: bytes, name: str = "<bytes>") -> np.ndarray:
    """PNG or JPEG bytes to an (H, W, 3) float32 array in [0, 255]."""
    try:
        with Image.open(io.BytesIO(data)) as img:
            if img.format not in ("PNG", "JPEG"):
                raise DecodeError(f"{name}: unsupported image format {img.format}")
            img.load()
            if img.mode in ("I;16", "I;16B", "I"):
                arr = np.asarray(img, dtype=np.float64) / 257.0
                arr = np.clip(arr, 0, 255)[..., None].repeat(3, axis=2)
            elif img.mode in ("L", "LA"):
                arr = np.asarray(img.getchannel(0), dtype=np.float32)[..., None].repeat(3, axis=2)
            else:
                arr = np.asarray(img.convert("RGB"), dtype=np.float32)
    except DecodeError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"{name}: cannot decode image ({exc})") from exc
    return np.ascontiguousarray(arr, dtype=np.float32)


def read_image(path: str | Path) -> np.ndarray:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise DecodeError(f"{path}: cannot read file ({exc})") from exc
    return decode_image(data, str(path))


def _axis_weights(n_in: int, n_out: int):
    d = np.arange(n_out, dtype=np.float64)
    s = np.clip((d + 0.5) * (n_in / n_out) - 0.5, 0.0, n_in - 1)
    i0 = np.floor(s).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, s - i0


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-centre bilinear resize, no antialiasing, per channel."""
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output size must be >= 1, got {out_h}x{out_w}")
    img = np.asarray(img)
    squeeze = img.ndim == 2
    src = img[..., None] if squeeze else img
    h, w = src.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.astype(np.float32, copy=True)
    src = src.astype(np.float64)
    y0, y1, fy = _axis_weights(h, out_h)
    x0, x1, fx = _axis_weights(w, out_w)
    fy = fy[:, None, None]
    rows = src[y0] * (1 - fy) + src[y1] * fy
    fx = fx[None, :, None]
    out = rows[:, x0] * (1 - fx) + rows[:, x1] * fx
    out = out.astype(np.float32)
    return out[..., 0] if squeeze else out


def load_image(path: str | Path, size: int | None) -> np.ndarray:
    img = read_image(path)
    if size is not None:
        img = resize_bilinear(img, size, size)
    return img


# --------------------------------------------------------------------------- splitting

@dataclass(frozen=True)
class DatasetSplit:
    class_names: list[str]
    train: list[tuple[Path, int]]
    val: list[tuple[Path, int]]


def split_train_val(items: Sequence[tuple[Path, int]], val_split: float, seed: int,
                    class_names: Sequence[str] = ()) -> DatasetSplit:
    """Global Fisher-Yates shuffle; the first round(val_split * n) items become validation."""
    if not 0.0 < val_split < 1.0:
        raise ValueError(f"val_split must be in (0, 1), got {val_split}")
    n = len(items)
    if n < 2:
        raise DatasetError(f"need at least 2 files to split, got {n}")
    order = Pcg32(seed, STREAM_SPLIT).shuffle(list(items))
    n_val = min(max(int(math.floor(val_split * n + 0.5)), 1), n - 1)
    return DatasetSplit(list(class_names), order[n_val:], order[:n_val])


# --------------------------------------------------------------------------- datasets / batching

class ArrayDataset:
    """Images already in memory: (N, H, W, 3) in [0, 255] plus integer labels."""

    def __init__(self, images: np.ndarray, labels: Sequence[int]):
        self._images = np.asarray(images, dtype=np.float32)
        self.labels = np.asarray(labels, dtype=np.int64)
        if len(self._images) != len(self.labels):
            raise ValueError("images and labels differ in length")

    def __len__(self) -> int:
        return len(self.labels)

    def images(self, indices) -> np.ndarray:
        return self._images[np.asarray(indices, dtype=np.intp)]


class FileDataset:
    """Images decoded from disk on demand and resized to ``size`` x ``size``."""

    def __init__(self, items: Sequence[tuple[Path, int]], size: int):
        self.paths = [Path(p) for p, _ in items]
        self.labels = np.asarray([lab for _, lab in items], dtype=np.int64)
        self.size = size

    def __len__(self) -> int:
        return len(self.paths)

    def images(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.intp)
        out = np.empty((len(idx), self.size, self.size, 3), dtype=np.float32)
        for row, i in enumerate(idx):
            out[row] = load_image(self.paths[i], self.size)
        return out

    def materialize(self) -> ArrayDataset:
        return ArrayDataset(self.images(np.arange(len(self))), self.labels)


def epoch_order(n: int, epoch: int, base_seed: int) -> np.ndarray:
    return Pcg32(mix_seed(base_seed, epoch), STREAM_SHUFFLE).permutation(n)


def make_batches(dataset, batch_size: int, epoch: int, base_seed: int,
                 shuffle: bool = True) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield (images, labels) batches; the last batch may be short."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = len(dataset)
    order = epoch_order(n, epoch, base_seed) if shuffle else np.arange(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        yield dataset.images(idx), dataset.labels[idx]


def batch_sizes(n: int, batch_size: int) -> list[int]:
    return [min(batch_size, n - s) for s in range(0, n, batch_size)]


# --------------------------------------------------------------------------- augmentation

@dataclass(frozen=True)
class AugmentConfig:
    """Random horizontal flip, rotation of up to +-rotation_factor * 2pi, zoom of +-zoom_factor."""

    horizontal_flip: bool = True
    rotation_factor: float = 0.1
    zoom_factor: float = 0.1

    def __post_init__(self):
        for name in ("rotation_factor", "zoom_factor"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {v}")

    @property
    def is_identity(self) -> bool:
        return not self.horizontal_flip and self.rotation_factor == 0 and self.zoom_factor == 0


def _reflect(idx: np.ndarray, n: int) -> np.ndarray:
    # d c b a | a b c d | d c b a
    k = np.mod(idx, 2 * n)
    return np.where(k >= n, 2 * n - 1 - k, k)


def rotate_zoom(img: np.ndarray, angle: float, scale: float = 1.0) -> np.ndarray:
    """Rotate counter-clockwise by ``angle`` radians and zoom about the centre.

    ``scale`` > 1 zooms out (samples a larger source area). Bilinear sampling,
    reflect fill outside the source.
    """
    h, w = img.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64) - cy, np.arange(w, dtype=np.float64) - cx,
                         indexing="ij")
    cos, sin = math.cos(angle), math.sin(angle)
    sx = scale * (cos * xx - sin * yy) + cx
    sy = scale * (sin * xx + cos * yy) + cy
    x0 = np.floor(sx)
    y0 = np.floor(sy)
    fx = (sx - x0)[..., None]
    fy = (sy - y0)[..., None]
    x0 = x0.astype(np.intp)
    y0 = y0.astype(np.intp)
    xa, xb = _reflect(x0, w), _reflect(x0 + 1, w)
    ya, yb = _reflect(y0, h), _reflect(y0 + 1, h)
    src = img.astype(np.float64)
    top = src[ya, xa] * (1 - fx) + src[ya, xb] * fx
    bot = src[yb, xa] * (1 - fx) + src[yb, xb] * fx
    out = top * (1 - fy) + bot * fy
    return np.clip(out, 0.0, 255.0).astype(img.dtype)


def augment(batch: np.ndarray, config: AugmentConfig, rng: Pcg32) -> np.ndarray:
    """Independent random flip/rotation/zoom per image; shape and [0, 255] range preserved."""
    if config.is_identity:
        return batch.copy()
    out = np.empty_like(batch)
    for i, img in enumerate(batch):
        if config.horizontal_flip and rng.random() < 0.5:
            img = img[:, ::-1]
        # affine maps of u in [0, 1) stay valid even for subnormal factors
        angle = (2 * rng.random() - 1) * config.rotation_factor * 2 * math.pi \
            if config.rotation_factor > 0 else 0.0
        scale = 1 + (2 * rng.random() - 1) * config.zoom_factor if config.zoom_factor > 0 else 1.0
        if angle != 0.0 or scale != 1.0:
            img = rotate_zoom(img, angle, scale)
        out[i] = img
    return out


def flip_horizontal(img: np.ndarray) -> np.ndarray:
    return img[:, ::-1].copy()
