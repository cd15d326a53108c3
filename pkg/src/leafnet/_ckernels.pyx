# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for 3x3 same-padded convolution and 2x2 max pooling.

Layouts are NHWC with HWIO weights, so the innermost loop always runs over a
contiguous channel axis. Accumulation order is fixed, which keeps results
bitwise reproducible run to run.

Two convolution routes live here: ``*_direct`` are plain nested loops (the
reference), and ``im2col``/``col2im`` feed the patch-matrix route whose GEMM
runs through numpy.
"""

import numpy as np
cimport numpy as cnp
from cython cimport floating

cnp.import_array()

BACKEND = "cython"


def conv2d_forward_direct(floating[:, :, :, ::1] x, floating[:, :, :, ::1] w, floating[::1] b):
    cdef Py_ssize_t N = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3]
    cdef Py_ssize_t F = w.shape[3]
    if w.shape[0] != 3 or w.shape[1] != 3 or w.shape[2] != C or b.shape[0] != F:
        raise ValueError("conv2d_forward: shape mismatch")
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((N, H, W, F), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t n, y, xx, dy, dx, yy, xs, c, f
    cdef floating v
    cdef floating* orow
    cdef const floating* wrow
    with nogil:
        for n in range(N):
            for y in range(H):
                for xx in range(W):
                    orow = &out[n, y, xx, 0]
                    for f in range(F):
                        orow[f] = b[f]
                    for dy in range(3):
                        yy = y + dy - 1
                        if yy < 0 or yy >= H:
                            continue
                        for dx in range(3):
                            xs = xx + dx - 1
                            if xs < 0 or xs >= W:
                                continue
                            for c in range(C):
                                v = x[n, yy, xs, c]
                                if v == 0:
                                    continue
                                wrow = &w[dy, dx, c, 0]
                                for f in range(F):
                                    orow[f] += v * wrow[f]
    return out_arr


def conv2d_backward_direct(floating[:, :, :, ::1] x, floating[:, :, :, ::1] w,
                    floating[:, :, :, ::1] gout, bint need_input_grad=True):
    cdef Py_ssize_t N = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3]
    cdef Py_ssize_t F = w.shape[3]
    if (w.shape[0] != 3 or w.shape[1] != 3 or w.shape[2] != C or gout.shape[0] != N
            or gout.shape[1] != H or gout.shape[2] != W or gout.shape[3] != F):
        raise ValueError("conv2d_backward: shape mismatch")
    dtype = np.float32 if floating is float else np.float64
    gw_arr = np.zeros((3, 3, C, F), dtype=dtype)
    gb_arr = np.zeros(F, dtype=dtype)
    # weights transposed to (dy, dx, F, C) so the input-gradient loop is contiguous in C
    wt_arr = np.ascontiguousarray(np.transpose(np.asarray(w), (0, 1, 3, 2)))
    gx_arr = np.zeros((N, H, W, C), dtype=dtype) if need_input_grad else None
    cdef floating[:, :, :, ::1] gw = gw_arr
    cdef floating[::1] gb = gb_arr
    cdef floating[:, :, :, ::1] wt = wt_arr
    cdef floating[:, :, :, ::1] gx
    if need_input_grad:
        gx = gx_arr
    cdef Py_ssize_t n, y, xx, dy, dx, yy, xs, c, f
    cdef floating g, v
    cdef const floating* grow
    cdef const floating* wtrow
    cdef floating* gwrow
    cdef floating* gxrow
    with nogil:
        for n in range(N):
            for y in range(H):
                for xx in range(W):
                    grow = &gout[n, y, xx, 0]
                    for f in range(F):
                        gb[f] += grow[f]
                    for dy in range(3):
                        yy = y + dy - 1
                        if yy < 0 or yy >= H:
                            continue
                        for dx in range(3):
                            xs = xx + dx - 1
                            if xs < 0 or xs >= W:
                                continue
                            for c in range(C):
                                v = x[n, yy, xs, c]
                                if v == 0:
                                    continue
                                gwrow = &gw[dy, dx, c, 0]
                                for f in range(F):
                                    gwrow[f] += v * grow[f]
                            if need_input_grad:
                                gxrow = &gx[n, yy, xs, 0]
                                for f in range(F):
                                    g = grow[f]
                                    if g == 0:
                                        continue
                                    wtrow = &wt[dy, dx, f, 0]
                                    for c in range(C):
                                        gxrow[c] += g * wtrow[c]
    return gx_arr, gw_arr, gb_arr


def maxpool_forward(floating[:, :, :, ::1] x):
    """2x2/stride-2 max pooling; returns (output, window-index mask in 0..3, row-major)."""
    cdef Py_ssize_t N = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3]
    cdef Py_ssize_t Ho = H // 2, Wo = W // 2
    if Ho < 1 or Wo < 1:
        raise ValueError("maxpool_forward: H and W must be >= 2")
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((N, Ho, Wo, C), dtype=dtype)
    mask_arr = np.empty((N, Ho, Wo, C), dtype=np.uint8)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef cnp.uint8_t[:, :, :, ::1] mask = mask_arr
    cdef Py_ssize_t n, i, j, c
    cdef floating best, v
    cdef cnp.uint8_t k
    with nogil:
        for n in range(N):
            for i in range(Ho):
                for j in range(Wo):
                    for c in range(C):
                        best = x[n, 2 * i, 2 * j, c]
                        k = 0
                        v = x[n, 2 * i, 2 * j + 1, c]
                        if v > best:
                            best = v
                            k = 1
                        v = x[n, 2 * i + 1, 2 * j, c]
                        if v > best:
                            best = v
                            k = 2
                        v = x[n, 2 * i + 1, 2 * j + 1, c]
                        if v > best:
                            best = v
                            k = 3
                        out[n, i, j, c] = best
                        mask[n, i, j, c] = k
    return out_arr, mask_arr


def maxpool_backward(const cnp.uint8_t[:, :, :, ::1] mask, floating[:, :, :, ::1] gout,
                     Py_ssize_t H, Py_ssize_t W):
    cdef Py_ssize_t N = gout.shape[0], Ho = gout.shape[1], Wo = gout.shape[2], C = gout.shape[3]
    if (mask.shape[0] != N or mask.shape[1] != Ho or mask.shape[2] != Wo or mask.shape[3] != C
            or H // 2 != Ho or W // 2 != Wo):
        raise ValueError("maxpool_backward: mask/gradient shape mismatch")
    dtype = np.float32 if floating is float else np.float64
    gx_arr = np.zeros((N, H, W, C), dtype=dtype)
    cdef floating[:, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t n, i, j, c
    cdef cnp.uint8_t k
    with nogil:
        for n in range(N):
            for i in range(Ho):
                for j in range(Wo):
                    for c in range(C):
                        k = mask[n, i, j, c]
                        gx[n, 2 * i + (k >> 1), 2 * j + (k & 1), c] = gout[n, i, j, c]
    return gx_arr


def im2col(floating[:, :, :, ::1] x):
    """Zero-padded 3x3 patches, shape (N*H*W, 9*C), columns ordered (dy, dx, c)."""
    cdef Py_ssize_t N = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3]
    dtype = np.float32 if floating is float else np.float64
    cols_arr = np.empty((N * H * W, 9 * C), dtype=dtype)
    cdef floating[:, ::1] cols = cols_arr
    cdef Py_ssize_t n, y, xx, dy, dx, yy, xs, c, row
    cdef floating* dst
    cdef const floating* src
    with nogil:
        row = 0
        for n in range(N):
            for y in range(H):
                for xx in range(W):
                    dst = &cols[row, 0]
                    for dy in range(3):
                        yy = y + dy - 1
                        for dx in range(3):
                            xs = xx + dx - 1
                            if yy < 0 or yy >= H or xs < 0 or xs >= W:
                                for c in range(C):
                                    dst[c] = 0
                            else:
                                src = &x[n, yy, xs, 0]
                                for c in range(C):
                                    dst[c] = src[c]
                            dst += C
                    row += 1
    return cols_arr


def col2im(floating[:, ::1] cols, Py_ssize_t N, Py_ssize_t H, Py_ssize_t W):
    """Adjoint of im2col: scatter-add patch gradients back to (N, H, W, C)."""
    cdef Py_ssize_t C = cols.shape[1] // 9
    if cols.shape[0] != N * H * W or cols.shape[1] != 9 * C:
        raise ValueError("col2im: shape mismatch")
    dtype = np.float32 if floating is float else np.float64
    gx_arr = np.zeros((N, H, W, C), dtype=dtype)
    cdef floating[:, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t n, y, xx, dy, dx, yy, xs, c, row
    cdef const floating* src
    cdef floating* dst
    with nogil:
        row = 0
        for n in range(N):
            for y in range(H):
                for xx in range(W):
                    src = &cols[row, 0]
                    for dy in range(3):
                        yy = y + dy - 1
                        for dx in range(3):
                            xs = xx + dx - 1
                            if yy >= 0 and yy < H and xs >= 0 and xs < W:
                                dst = &gx[n, yy, xs, 0]
                                for c in range(C):
                                    dst[c] += src[c]
                            src += C
                    row += 1
    return gx_arr


def conv2d_forward(x, w, b):
    if x.ndim != 4 or w.shape[:3] != (3, 3, x.shape[3]) or b.shape != (w.shape[3],):
        raise ValueError("conv2d_forward: shape mismatch")
    n, h, wd, _ = x.shape
    f = w.shape[3]
    # one GEMM per sample keeps each sample's result independent of the batch it is in
    out = im2col(np.ascontiguousarray(x)).reshape(n, h * wd, -1) @ w.reshape(-1, f)
    out += b
    return out.reshape(n, h, wd, f)


def conv2d_backward(x, w, gout, need_input_grad=True):
    if x.ndim != 4 or w.shape[:3] != (3, 3, x.shape[3]):
        raise ValueError("conv2d_backward: shape mismatch")
    n, h, wd, c = x.shape
    f = w.shape[3]
    if gout.shape != (n, h, wd, f):
        raise ValueError("conv2d_backward: gradient shape mismatch")
    g2 = gout.reshape(-1, f)
    gw = (im2col(np.ascontiguousarray(x)).T @ g2).reshape(3, 3, c, f)
    gb = g2.sum(axis=0)
    gx = None
    if need_input_grad:
        gx = col2im(np.ascontiguousarray(g2 @ w.reshape(-1, f).T), n, h, wd)
    return gx, gw, gb
