# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled patch-extraction kernels for the convolution layers.

im2col / col2im dominate the non-BLAS cost of training; everything else
stays in numpy. Both float32 and float64 are supported so the same code
path serves training and 64-bit gradient checking.
"""

import numpy as np

ctypedef fused real:
    float
    double


def im2col(real[:, :, :, ::1] x, int k, int stride):
    """Extract valid k*k patches of x [N,C,H,W] into [N*Ho*Wo, C*k*k]."""
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ho = (h - k) // stride + 1
    cdef Py_ssize_t wo = (w - k) // stride + 1
    cols_arr = np.empty((n * ho * wo, c * k * k), dtype=np.float32 if real is float else np.float64)
    cdef real[:, ::1] cols = cols_arr
    cdef Py_ssize_t i, ci, hi, wi, ki, kj, row, col, ybase, xbase
    for i in range(n):
        for hi in range(ho):
            ybase = hi * stride
            for wi in range(wo):
                xbase = wi * stride
                row = (i * ho + hi) * wo + wi
                col = 0
                for ci in range(c):
                    for ki in range(k):
                        for kj in range(k):
                            cols[row, col] = x[i, ci, ybase + ki, xbase + kj]
                            col += 1
    return cols_arr


def col2im_add(real[:, ::1] cols, Py_ssize_t n, Py_ssize_t c, Py_ssize_t h,
               Py_ssize_t w, int k, int stride):
    """Adjoint of im2col: scatter-add patch gradients back to [N,C,H,W]."""
    dx_arr = np.zeros((n, c, h, w), dtype=np.float32 if real is float else np.float64)
    cdef real[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t ho = (h - k) // stride + 1
    cdef Py_ssize_t wo = (w - k) // stride + 1
    cdef Py_ssize_t i, ci, hi, wi, ki, kj, row, col, ybase, xbase
    for i in range(n):
        for hi in range(ho):
            ybase = hi * stride
            for wi in range(wo):
                xbase = wi * stride
                row = (i * ho + hi) * wo + wi
                col = 0
                for ci in range(c):
                    for ki in range(k):
                        for kj in range(k):
                            dx[i, ci, ybase + ki, xbase + kj] += cols[row, col]
                            col += 1
    return dx_arr
