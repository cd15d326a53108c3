import numpy as np
import pytest

from leafnet.errors import ShapeError
from leafnet.layers import Conv2D, Dense, Flatten, MaxPool, Rescale, SoftmaxOutput
from leafnet.model import (Model, build_model, infer_shapes, layer_param_counts, model_backward, model_forward,
                           default_layers, default_model, param_count, shape_infer)
from leafnet.train import gradient_check, sparse_ce_grad

DEFAULT_SHAPES = [(180, 180, 3), (180, 180, 16), (90, 90, 16), (90, 90, 32), (45, 45, 32), (45, 45, 64),
                (22, 22, 64), (30976,), (128,), (8,)]


def tiny_layers():
    return [Rescale(), Conv2D(4), MaxPool(), Flatten(), Dense(8, "relu"), SoftmaxOutput(8)]


def test_default_shapes():
    assert shape_infer(default_model(seed=None)) == DEFAULT_SHAPES


def test_default_param_counts():
    counts = layer_param_counts(default_layers(), (180, 180, 3))
    assert [c for c in counts if c] == [448, 4640, 18496, 3965056, 1032]
    assert param_count(default_model(seed=None)) == 3_989_672


def test_single_transitions():
    assert infer_shapes([MaxPool()], (45, 45, 32)) == [(22, 22, 32)]
    assert infer_shapes([Flatten()], (22, 22, 64)) == [(30976,)]
    assert layer_param_counts([Rescale(), Conv2D(16)], (180, 180, 3))[1] == 448
    assert layer_param_counts([Flatten(), Dense(128)], (22, 22, 64))[1] == 3_965_056


def test_parameterless_model():
    m = Model([Rescale(), Flatten()], (4, 4, 3))
    assert param_count(m) == 0
    tr = model_forward(m, np.zeros((2, 4, 4, 3)))
    assert tr.logits.shape == (2, 48) and tr.probabilities is None


def test_incompatible_shapes():
    with pytest.raises(ShapeError):
        infer_shapes([Dense(4)], (8, 8, 3))
    with pytest.raises(ShapeError):
        infer_shapes([Flatten(), Conv2D(4)], (8, 8, 3))
    with pytest.raises(ShapeError):
        infer_shapes([MaxPool(), MaxPool(), MaxPool()], (4, 4, 1))


def test_param_shapes_follow_layers():
    m = default_model(seed=0)
    assert m.params[1]["w"].shape == (3, 3, 3, 16) and m.params[1]["b"].shape == (16,)
    assert m.params[8]["w"].shape == (30976, 128)
    assert all(not np.any(p["b"]) for p in m.params if p)
    with pytest.raises(ShapeError):
        Model(tiny_layers(), (8, 8, 3), [{} for _ in range(6)])


def test_forward_output_width_and_rows():
    m = build_model(tiny_layers(), (8, 8, 3), seed=3)
    x = np.random.default_rng(0).uniform(0, 255, size=(5, 8, 8, 3))
    tr = model_forward(m, x)
    assert tr.probabilities.shape == (5, 8)
    np.testing.assert_allclose(tr.probabilities.sum(axis=1), 1.0, atol=1e-6)
    assert tr.features.shape == (5, 8)
    assert len(tr.inputs) == len(tr.outputs) == 6


def test_default_model_forward_shape():
    m = default_model(image_size=180, seed=1)
    tr = model_forward(m, np.full((1, 180, 180, 3), 127.0, np.float32))
    assert tr.probabilities.shape == (1, 8)
    assert tr.features.shape == (1, 128)
    np.testing.assert_allclose(tr.probabilities.sum(), 1.0, atol=1e-6)


def test_zero_params_give_uniform():
    m = default_model(image_size=32, seed=None)
    tr = model_forward(m, np.zeros((2, 32, 32, 3), np.float32))
    np.testing.assert_allclose(tr.probabilities, 0.125, atol=1e-7)


def test_eval_forward_is_bitwise_pure():
    m = default_model(image_size=32, seed=5)
    x = np.random.default_rng(1).uniform(0, 255, size=(3, 32, 32, 3)).astype(np.float32)
    a = model_forward(m, x, "eval").probabilities
    b = model_forward(m, x.copy(), "eval").probabilities
    assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize("size", [16, 40])
def test_forward_is_batch_invariant(size):
    m = default_model(image_size=size, seed=5)
    x = np.random.default_rng(2).uniform(0, 255, size=(9, size, size, 3)).astype(np.float32)
    whole = model_forward(m, x).logits
    singles = np.concatenate([model_forward(m, x[i:i + 1]).logits for i in range(9)])
    split = np.concatenate([model_forward(m, x[:4]).logits, model_forward(m, x[4:]).logits])
    assert whole.tobytes() == singles.tobytes() == split.tobytes()


def test_forward_rejects_wrong_batch():
    m = build_model(tiny_layers(), (8, 8, 3))
    with pytest.raises(ShapeError):
        model_forward(m, np.zeros((1, 9, 8, 3)))
    with pytest.raises(ValueError):
        model_forward(m, np.zeros((1, 8, 8, 3)), "predict")


def test_backward_zero_and_structure():
    m = build_model(tiny_layers(), (8, 8, 3), seed=2)
    tr = model_forward(m, np.random.default_rng(0).uniform(0, 255, size=(2, 8, 8, 3)))
    grads = model_backward(m, tr, np.zeros((2, 8)))
    assert [sorted(g) for g in grads] == [sorted(p) for p in m.params]
    for g, p in zip(grads, m.params):
        for k in p:
            assert g[k].shape == p[k].shape and not g[k].any()


def test_backward_rejects_foreign_trace():
    m = build_model(tiny_layers(), (8, 8, 3), seed=2)
    tr = model_forward(m, np.zeros((2, 8, 8, 3)))
    with pytest.raises(ShapeError):
        model_backward(m, tr, np.zeros((3, 8)))


def test_tiny_model_finite_differences():
    m = build_model(tiny_layers(), (8, 8, 3), seed=11, dtype=np.float64)
    x = np.random.default_rng(4).uniform(0, 255, size=(2, 8, 8, 3))
    rep = gradient_check(m, x, [3, 6], tol=1e-5, max_coords=10_000)
    assert rep.checked == sum(p.size for p in m.parameters()) - rep.skipped
    assert rep.passed, rep.per_param


def test_backward_matches_manual_chain():
    # one dense softmax layer: dW = x^T g
    m = build_model([Flatten(), SoftmaxOutput(3)], (1, 1, 4), seed=0, dtype=np.float64)
    x = np.random.default_rng(0).normal(size=(2, 1, 1, 4))
    tr = model_forward(m, x)
    g = sparse_ce_grad(tr.logits, [0, 2])
    grads = model_backward(m, tr, g)
    np.testing.assert_allclose(grads[1]["w"], x.reshape(2, 4).T @ g)
    np.testing.assert_allclose(grads[1]["b"], g.sum(axis=0))


def test_seeded_build_is_deterministic():
    a, b = default_model(image_size=32, seed=9), default_model(image_size=32, seed=9)
    assert all(np.array_equal(p, q) for p, q in zip(a.parameters(), b.parameters()))
    c = default_model(image_size=32, seed=10)
    assert not np.array_equal(a.parameters()[0], c.parameters()[0])
