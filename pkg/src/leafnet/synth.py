"""Procedural stand-in dataset: eight leaf-disease classes rendered as PNGs.

Each class has its own base hue band and lesion motif (spots, stripes or
blotches). Motif placement, colour jitter and pixel noise are drawn per image,
so images within a class are never identical.
"""

from __future__ import annotations

import colorsys
import io
import math
from pathlib import Path

import numpy as np
from PIL import Image

from .rng import STREAM_SYNTH, Pcg32, mix_seed

CLASS_NAMES = [
    "Corn_Grey_Leaf_Spot",
    "Potato_Early_Blight",
    "Potato_Late_Blight",
    "Rice_Bacterial_Blight",
    "Rice_Brown_Spot",
    "Tomato_Early_Blight",
    "Wheat_Brown_Rust",
    "Wheat_Yellow_Rust",
]

# (base hue in degrees, motif, lesion rgb)
_STYLE = [
    (20, "spots", (70, 70, 70)),
    (65, "blotches", (60, 35, 10)),
    (110, "stripes", (40, 40, 30)),
    (155, "stripes", (230, 220, 150)),
    (200, "spots", (120, 60, 20)),
    (245, "blotches", (30, 20, 10)),
    (290, "spots", (150, 70, 20)),
    (335, "stripes", (230, 210, 40)),
]


def _render(label: int, size: int, rng: Pcg32) -> np.ndarray:
    hue, motif, lesion = _STYLE[label]
    h = ((hue + rng.uniform(-10, 10)) % 360) / 360.0
    s = rng.uniform(0.45, 0.75)
    v = rng.uniform(0.55, 0.8)
    base = np.array(colorsys.hsv_to_rgb(h, s, v)) * 255.0

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    tilt = rng.uniform(-0.25, 0.25)
    shade = 1.0 + tilt * (xx - 0.5) + 0.15 * (0.5 - yy)
    img = base[None, None, :] * shade[..., None]

    lesion = np.array(lesion, dtype=np.float64)
    mask = np.zeros((size, size))
    if motif == "spots":
        for _ in range(3 + rng.bounded(5)):
            cy, cx = rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)
            r = rng.uniform(0.04, 0.08)
            mask = np.maximum(mask, ((yy - cy) ** 2 + (xx - cx) ** 2 < r * r).astype(float))
    elif motif == "stripes":
        angle = rng.uniform(-0.4, 0.4)
        period = rng.uniform(0.15, 0.25)
        phase = rng.uniform(0, 1)
        t = (xx * math.cos(angle) + yy * math.sin(angle)) / period + phase
        mask = (np.mod(t, 1.0) < 0.3).astype(float)
    else:
        for _ in range(1 + rng.bounded(2)):
            cy, cx = rng.uniform(0.25, 0.75), rng.uniform(0.25, 0.75)
            ry, rx = rng.uniform(0.12, 0.22), rng.uniform(0.12, 0.22)
            mask = np.maximum(mask, (((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 < 1).astype(float))
    img = img * (1 - 0.8 * mask[..., None]) + lesion * (0.8 * mask[..., None])

    noise = rng.normal_array(size * size * 3).reshape(size, size, 3) * 10.0
    return np.clip(np.rint(img + noise), 0, 255).astype(np.uint8)


def render_image(label: int, size: int, seed: int, index: int) -> np.ndarray:
    """Deterministic uint8 image for (class, seed, index)."""
    rng = Pcg32(mix_seed(seed, label * 1_000_003 + index), STREAM_SYNTH)
    return _render(label, size, rng)


def gen_synthetic(out_dir: str | Path, per_class: int = 100, size: int = 64, seed: int = 7) -> list[Path]:
    """Write ``per_class`` PNGs for each of the eight classes under ``out_dir``."""
    if per_class < 1:
        raise ValueError(f"per_class must be >= 1, got {per_class}")
    if size < 16:
        raise ValueError(f"size must be >= 16, got {size}")
    out_dir = Path(out_dir)
    written = []
    for label, name in enumerate(CLASS_NAMES):
        d = out_dir / name
        d.mkdir(parents=True, exist_ok=True)
        for i in range(per_class):
            buf = io.BytesIO()
            Image.fromarray(render_image(label, size, seed, i), "RGB").save(buf, format="PNG")
            path = d / f"{name.lower()}_{i:04d}.png"
            path.write_bytes(buf.getvalue())
            written.append(path)
    return written
