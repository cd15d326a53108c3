import io
import logging
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from leafnet.data import (ArrayDataset, AugmentConfig, FileDataset, augment, batch_sizes, decode_image,
                          epoch_order, flip_horizontal, make_batches, resize_bilinear, rotate_zoom,
                          scan_directory, split_train_val)
from leafnet.errors import DatasetError, DecodeError
from leafnet.rng import Pcg32
from leafnet.synth import CLASS_NAMES, gen_synthetic


def png_bytes(arr, mode=None):
    buf = io.BytesIO()
    Image.fromarray(arr, mode).save(buf, format="PNG")
    return buf.getvalue()


def write_png(path, value=0):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(png_bytes(np.full((4, 4, 3), value, np.uint8)))


# ---------------------------------------------------------------- scan

def test_scan_sorts_and_labels(tmp_path):
    write_png(tmp_path / "b" / "1.png")
    write_png(tmp_path / "a" / "1.PNG")
    write_png(tmp_path / "a" / "2.jpg")
    res = scan_directory(tmp_path)
    assert res.class_names == ["a", "b"]
    assert sorted(lab for _, lab in res.items) == [0, 0, 1]
    assert all((p.parent.name == "a") == (lab == 0) for p, lab in res.items)


def test_scan_skips_non_images_with_warning(tmp_path, caplog):
    write_png(tmp_path / "a" / "1.png")
    write_png(tmp_path / "b" / "1.png")
    (tmp_path / "b" / "notes.txt").write_text("x")
    (tmp_path / "b" / "img.gif").write_bytes(b"GIF89a")
    with caplog.at_level(logging.WARNING):
        res = scan_directory(tmp_path)
    assert res.skipped == 2 and len(res.items) == 2
    assert "skipped 2" in caplog.text


def test_scan_default_class_names(synth_tree):
    res = scan_directory(synth_tree)
    assert len(res.class_names) == 8
    assert res.class_names == sorted(CLASS_NAMES)
    assert res.class_names.index("Corn_Grey_Leaf_Spot") == 0


def test_scan_errors(tmp_path):
    with pytest.raises(DatasetError):
        scan_directory(tmp_path / "missing")
    write_png(tmp_path / "only" / "1.png")
    with pytest.raises(DatasetError):
        scan_directory(tmp_path)
    (tmp_path / "empty").mkdir()
    with pytest.raises(DatasetError):
        scan_directory(tmp_path)


# ---------------------------------------------------------------- decode

def test_decode_red_pixel():
    img = decode_image(png_bytes(np.array([[[255, 0, 0]]], np.uint8)))
    assert img.shape == (1, 1, 3) and img.dtype == np.float32
    assert img[0, 0].tolist() == [255, 0, 0]


def test_decode_grayscale_replicates():
    img = decode_image(png_bytes(np.full((2, 2), 128, np.uint8), "L"))
    assert img.shape == (2, 2, 3) and np.all(img == 128)


def test_decode_drops_alpha():
    rgba = np.zeros((2, 3, 4), np.uint8)
    rgba[..., 1] = 200
    rgba[..., 3] = 10
    img = decode_image(png_bytes(rgba, "RGBA"))
    assert img.shape == (2, 3, 3) and np.all(img[..., 1] == 200) and np.all(img[..., 0] == 0)


def test_decode_jpeg_roundtrip():
    buf = io.BytesIO()
    Image.fromarray(np.full((8, 8, 3), 90, np.uint8)).save(buf, format="JPEG", quality=95)
    img = decode_image(buf.getvalue())
    assert img.shape == (8, 8, 3) and np.all(np.abs(img - 90) <= 3)


def test_decode_errors_name_the_file():
    buf = io.BytesIO()
    Image.fromarray(np.zeros((32, 32, 3), np.uint8)).save(buf, format="JPEG")
    with pytest.raises(DecodeError, match="leaf.jpg"):
        decode_image(buf.getvalue()[:200], "leaf.jpg")
    with pytest.raises(DecodeError):
        decode_image(b"not an image at all", "x.png")
    gif = io.BytesIO()
    Image.fromarray(np.zeros((2, 2), np.uint8), "L").save(gif, format="GIF")
    with pytest.raises(DecodeError, match="unsupported"):
        decode_image(gif.getvalue(), "x.gif")


# ---------------------------------------------------------------- resize

def test_resize_identity(rng):
    img = rng.uniform(0, 255, size=(5, 7, 3)).astype(np.float32)
    assert np.array_equal(resize_bilinear(img, 5, 7), img)


def test_resize_2x2_to_1x1():
    img = np.array([[0.0, 100.0], [200.0, 300.0]])
    assert resize_bilinear(img, 1, 1).item() == 150.0


def test_resize_matches_formula(rng):
    img = rng.uniform(0, 255, size=(6, 4, 3))
    out = resize_bilinear(img, 4, 9)

    def src(d, n_in, n_out):
        return min(max((d + 0.5) * n_in / n_out - 0.5, 0.0), n_in - 1)

    for y in range(4):
        for x in range(9):
            sy, sx = src(y, 6, 4), src(x, 4, 9)
            y0, x0 = int(math.floor(sy)), int(math.floor(sx))
            y1, x1 = min(y0 + 1, 5), min(x0 + 1, 3)
            fy, fx = sy - y0, sx - x0
            v = ((1 - fy) * ((1 - fx) * img[y0, x0] + fx * img[y0, x1])
                 + fy * ((1 - fx) * img[y1, x0] + fx * img[y1, x1]))
            np.testing.assert_allclose(out[y, x], v, rtol=1e-5)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20), st.integers(1, 20), st.integers(1, 40), st.integers(1, 40), st.floats(0, 255))
def test_resize_constant_stays_constant(h, w, oh, ow, c):
    out = resize_bilinear(np.full((h, w, 3), c), oh, ow)
    assert out.shape == (oh, ow, 3)
    np.testing.assert_allclose(out, np.float32(c), rtol=1e-6)


def test_resize_rejects_zero():
    with pytest.raises(ValueError):
        resize_bilinear(np.zeros((2, 2, 3)), 0, 1)


# ---------------------------------------------------------------- split

def items(n):
    return [(f"f{i}.png", i % 3) for i in range(n)]


def test_split_ten():
    s = split_train_val(items(10), 0.2, 42)
    assert len(s.val) == 2 and len(s.train) == 8
    assert not set(s.val) & set(s.train)


def test_split_deterministic():
    assert split_train_val(items(50), 0.3, 1) == split_train_val(items(50), 0.3, 1)
    assert split_train_val(items(50), 0.3, 1) != split_train_val(items(50), 0.3, 2)


def test_split_full_scale():
    s = split_train_val(items(5640), 0.2, 42)
    assert len(s.train) == 4512 and math.ceil(len(s.train) / 32) == 141


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([2, 10, 1000]), st.floats(0.01, 0.99), st.integers(0, 2**63))
def test_split_partition(n, v, seed):
    s = split_train_val(items(n), v, seed)
    assert Counter(s.train + s.val) == Counter(items(n))
    assert len(s.train) >= 1 and len(s.val) >= 1
    assert abs(len(s.val) - round(v * n)) <= 1


def test_split_errors():
    with pytest.raises(DatasetError):
        split_train_val(items(1), 0.2, 0)
    with pytest.raises(ValueError):
        split_train_val(items(5), 1.0, 0)


# ---------------------------------------------------------------- batching

def test_batch_sizes():
    assert batch_sizes(100, 32) == [32, 32, 32, 4]
    ds = ArrayDataset(np.zeros((100, 1, 1, 3)), np.arange(100))
    assert [len(lab) for _, lab in make_batches(ds, 32, 0, 42)] == [32, 32, 32, 4]


def test_epoch_orders_differ():
    assert not np.array_equal(epoch_order(50, 0, 42), epoch_order(50, 1, 42))
    assert np.array_equal(epoch_order(50, 3, 42), epoch_order(50, 3, 42))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 200), st.integers(1, 64), st.integers(0, 50), st.integers(0, 2**32))
def test_epoch_is_permutation(n, bs, epoch, seed):
    ds = ArrayDataset(np.zeros((n, 1, 1, 1)), np.arange(n))
    seen = np.concatenate([lab for _, lab in make_batches(ds, bs, epoch, seed)])
    assert sorted(seen.tolist()) == list(range(n))


def test_unshuffled_order_is_fixed():
    ds = ArrayDataset(np.zeros((5, 1, 1, 1)), np.arange(5))
    assert np.concatenate([lab for _, lab in make_batches(ds, 2, 7, 1, shuffle=False)]).tolist() == [0, 1, 2, 3, 4]


def test_file_dataset_pipeline_is_deterministic(synth_tree):
    def run():
        res = scan_directory(synth_tree)
        s = split_train_val(res.items, 0.2, 42, res.class_names)
        ds = FileDataset(s.train, 16)
        return [(x.tobytes(), y.tolist()) for x, y in make_batches(ds, 8, 1, 42)]

    assert run() == run()


# ---------------------------------------------------------------- augmentation

def test_identity_config_is_bitwise_identity(rng):
    batch = rng.uniform(0, 255, size=(3, 10, 10, 3)).astype(np.float32)
    cfg = AugmentConfig(horizontal_flip=False, rotation_factor=0.0, zoom_factor=0.0)
    assert cfg.is_identity
    out = augment(batch, cfg, Pcg32(1))
    assert out.tobytes() == batch.tobytes() and out is not batch


def test_double_flip(rng):
    img = rng.uniform(0, 255, size=(6, 9, 3))
    assert np.array_equal(flip_horizontal(flip_horizontal(img)), img)
    assert np.array_equal(flip_horizontal(img)[:, 0], img[:, -1])


def test_flip_only_config_flips_about_half():
    batch = np.arange(2 * 3 * 1, dtype=np.float32).reshape(1, 2, 3, 1).repeat(400, axis=0)
    out = augment(batch, AugmentConfig(True, 0.0, 0.0), Pcg32(3))
    flipped = sum(np.array_equal(o, b[:, ::-1]) for o, b in zip(out, batch))
    assert all(np.array_equal(o, b) or np.array_equal(o, b[:, ::-1]) for o, b in zip(out, batch))
    assert 150 < flipped < 250


def nn_rotate_point(r, c, n, angle):
    """Where a pixel lands under counter-clockwise rotation about the image centre (array display)."""
    cy = cx = (n - 1) / 2
    y, x = r - cy, c - cx
    # output (Y, X) samples source (sin X + cos Y, cos X - sin Y); invert for the source point
    cos, sin = math.cos(angle), math.sin(angle)
    X = cos * x + sin * y
    Y = -sin * x + cos * y
    return int(round(Y + cy)), int(round(X + cx))


@pytest.mark.parametrize("r,c", [(2, 7), (0, 0), (5, 1), (8, 3)])
def test_quarter_turn_moves_pixel(r, c):
    n = 11
    img = np.zeros((n, n, 3), np.float32)
    img[r, c] = 255
    out = rotate_zoom(img, math.pi / 2, 1.0)
    er, ec = nn_rotate_point(r, c, n, math.pi / 2)
    assert (er, ec) == (n - 1 - c, r)
    gr, gc = np.unravel_index(np.argmax(out[..., 0]), (n, n))
    assert abs(gr - er) <= 1 and abs(gc - ec) <= 1
    np.testing.assert_allclose(out, np.rot90(img), atol=1e-3)


def test_rotation_zero_and_unit_zoom_identity(rng):
    img = rng.uniform(0, 255, size=(7, 7, 3))
    np.testing.assert_allclose(rotate_zoom(img, 0.0, 1.0), img, atol=1e-9)


def test_zoom_out_reflects_border():
    img = np.zeros((8, 8, 1))
    img[:, :4] = 200.0
    out = rotate_zoom(img, 0.0, 1.1)
    assert np.all(out[:, 0] == 200.0) and np.all(out[:, -1] == 0.0)


@settings(max_examples=100, deadline=None)
@given(st.booleans(), st.floats(0, 0.99), st.floats(0, 0.99), st.integers(0, 2**32), st.integers(4, 12))
def test_augment_preserves_shape_and_range(flip, rot, zoom, seed, size):
    batch = np.random.default_rng(seed).uniform(0, 255, size=(2, size, size + 1, 3)).astype(np.float32)
    batch[0, 0, 0] = [0, 255, 255]
    out = augment(batch, AugmentConfig(flip, rot, zoom), Pcg32(seed))
    assert out.shape == batch.shape and out.dtype == batch.dtype
    assert np.all(out >= 0) and np.all(out <= 255)


def test_augment_deterministic(rng):
    batch = rng.uniform(0, 255, size=(4, 9, 9, 3)).astype(np.float32)
    a = augment(batch, AugmentConfig(), Pcg32(8))
    b = augment(batch, AugmentConfig(), Pcg32(8))
    assert a.tobytes() == b.tobytes()


def test_augment_config_validation():
    with pytest.raises(ValueError):
        AugmentConfig(rotation_factor=1.0)
    with pytest.raises(ValueError):
        AugmentConfig(zoom_factor=-0.1)


# ---------------------------------------------------------------- synthetic generator

def test_gen_counts_and_sizes(tmp_path):
    files = gen_synthetic(tmp_path / "t", per_class=3, size=16, seed=1)
    assert len(files) == 24
    dirs = sorted(p.name for p in (tmp_path / "t").iterdir())
    assert dirs == sorted(CLASS_NAMES)
    with Image.open(files[0]) as im:
        assert im.size == (16, 16) and im.format == "PNG"


def test_gen_byte_identical(tmp_path):
    a = gen_synthetic(tmp_path / "a", per_class=2, size=20, seed=9)
    b = gen_synthetic(tmp_path / "b", per_class=2, size=20, seed=9)
    assert [p.relative_to(tmp_path / "a") for p in a] == [p.relative_to(tmp_path / "b") for p in b]
    assert all(x.read_bytes() == y.read_bytes() for x, y in zip(a, b))
    c = gen_synthetic(tmp_path / "c", per_class=2, size=20, seed=10)
    assert a[0].read_bytes() != c[0].read_bytes()


def test_gen_argument_errors(tmp_path):
    with pytest.raises(ValueError):
        gen_synthetic(tmp_path, per_class=0)
    with pytest.raises(ValueError):
        gen_synthetic(tmp_path, size=15)


def test_gen_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        gen_synthetic(blocker / "sub", per_class=1, size=16)


def test_gen_images_differ_within_class(synth_tree):
    res = scan_directory(synth_tree)
    paths = [p for p, lab in res.items if lab == 0]
    assert len({p.read_bytes() for p in paths}) == len(paths)


@pytest.mark.slow
def test_classes_learnable_by_knn(tmp_path):
    gen_synthetic(tmp_path / "k", per_class=100, size=64, seed=7)
    res = scan_directory(tmp_path / "k")
    x = FileDataset(res.items, 64).materialize()
    feats = x.images(np.arange(len(x))).reshape(len(x), -1).astype(np.float64)
    labels = x.labels
    order = Pcg32(0).permutation(len(x))
    test, train = order[:200], order[200:]
    sq = (feats[test] ** 2).sum(1)[:, None] + (feats[train] ** 2).sum(1)[None] - 2 * feats[test] @ feats[train].T
    nearest = np.argsort(sq, axis=1)[:, :10]
    votes = labels[train][nearest]
    pred = np.array([np.bincount(v, minlength=8).argmax() for v in votes])
    assert (pred == labels[test]).mean() >= 0.70
