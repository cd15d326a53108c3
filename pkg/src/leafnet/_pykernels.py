"""Pure numpy fallback for the compiled kernels.

Convolution is restructured as a patch matrix times the flattened kernel, so
results agree with the direct-loop kernels to rounding, not bitwise.
"""

from __future__ import annotations

import numpy as np

BACKEND = "numpy"


def _patches(x: np.ndarray) -> np.ndarray:
    # (N, H, W, 9*C), last axis ordered (dy, dx, c) to match w.reshape(9*C, F)
    n, h, w, c = x.shape
    xp = np.zeros((n, h + 2, w + 2, c), dtype=x.dtype)
    xp[:, 1:-1, 1:-1, :] = x
    return np.concatenate(
        [xp[:, dy:dy + h, dx:dx + w, :] for dy in range(3) for dx in range(3)], axis=-1
    )


def _check_conv(x, w):
    if x.ndim != 4 or w.shape[:3] != (3, 3, x.shape[3]):
        raise ValueError("conv2d: shape mismatch")


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_conv(x, w)
    if b.shape != (w.shape[3],):
        raise ValueError("conv2d_forward: bias shape mismatch")
    f = w.shape[3]
    # stacked matmul: one GEMM per image row, so samples never share a BLAS call
    out = _patches(x) @ w.reshape(-1, f)
    out += b
    return out


def conv2d_backward(x: np.ndarray, w: np.ndarray, gout: np.ndarray, need_input_grad: bool = True):
    _check_conv(x, w)
    n, h, wd, c = x.shape
    f = w.shape[3]
    if gout.shape != (n, h, wd, f):
        raise ValueError("conv2d_backward: gradient shape mismatch")
    g2 = gout.reshape(-1, f)
    gw = (_patches(x).reshape(-1, 9 * c).T @ g2).reshape(3, 3, c, f)
    gb = g2.sum(axis=0)
    gx = None
    if need_input_grad:
        gcols = (g2 @ w.reshape(-1, f).T).reshape(n, h, wd, 9 * c)
        gxp = np.zeros((n, h + 2, wd + 2, c), dtype=x.dtype)
        k = 0
        for dy in range(3):
            for dx in range(3):
                gxp[:, dy:dy + h, dx:dx + wd, :] += gcols[..., k * c:(k + 1) * c]
                k += 1
        gx = np.ascontiguousarray(gxp[:, 1:-1, 1:-1, :])
    return gx, gw, gb


def _windows(x: np.ndarray) -> np.ndarray:
    n, h, w, c = x.shape
    ho, wo = h // 2, w // 2
    t = x[:, :2 * ho, :2 * wo, :].reshape(n, ho, 2, wo, 2, c)
    return t.transpose(0, 1, 3, 5, 2, 4).reshape(n, ho, wo, c, 4)


def maxpool_forward(x: np.ndarray):
    if x.ndim != 4 or x.shape[1] < 2 or x.shape[2] < 2:
        raise ValueError("maxpool_forward: H and W must be >= 2")
    win = _windows(x)
    mask = np.argmax(win, axis=-1).astype(np.uint8)  # first maximum wins ties
    out = np.take_along_axis(win, mask[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), mask


def maxpool_backward(mask: np.ndarray, gout: np.ndarray, h: int, w: int) -> np.ndarray:
    n, ho, wo, c = gout.shape
    if mask.shape != gout.shape or h // 2 != ho or w // 2 != wo:
        raise ValueError("maxpool_backward: mask/gradient shape mismatch")
    routed = np.zeros((n, ho, wo, c, 4), dtype=gout.dtype)
    np.put_along_axis(routed, mask[..., None].astype(np.intp), gout[..., None], axis=-1)
    routed = routed.reshape(n, ho, wo, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, 2 * ho, 2 * wo, c)
    gx = np.zeros((n, h, w, c), dtype=gout.dtype)
    gx[:, :2 * ho, :2 * wo, :] = routed
    return gx


def conv2d_forward_direct(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Tap-by-tap accumulation over the nine kernel offsets."""
    _check_conv(x, w)
    n, h, wd, c = x.shape
    xp = np.zeros((n, h + 2, wd + 2, c), dtype=x.dtype)
    xp[:, 1:-1, 1:-1, :] = x
    out = np.broadcast_to(b, (n, h, wd, w.shape[3])).copy()
    for dy in range(3):
        for dx in range(3):
            out += xp[:, dy:dy + h, dx:dx + wd, :] @ w[dy, dx]
    return out
