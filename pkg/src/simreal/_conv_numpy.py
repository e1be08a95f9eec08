"""Vectorized numpy implementation of the batched convolution kernels.

This is the fallback used when the compiled extension is unavailable.
Layout is NCHW, valid (unpadded) cross-correlation. The input-gradient
path uses the standard dilate-pad-flip trick so everything stays inside
BLAS matmuls instead of scatter-adds.
"""

from __future__ import annotations

import numpy as np


def _windows(x: np.ndarray, k: int, stride: int) -> np.ndarray:
    # [N,C,H,W] -> view [N,C,Ho,Wo,k,k]
    w = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    return w[:, :, ::stride, ::stride]


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int) -> np.ndarray:
    n = x.shape[0]
    c_out, c_in, k, _ = w.shape
    win = _windows(x, k, stride)
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c_in * k * k)
    y = cols @ w.reshape(c_out, -1).T
    y += b
    return np.ascontiguousarray(y.reshape(n, ho, wo, c_out).transpose(0, 3, 1, 2))


def conv2d_backward(
    dout: np.ndarray,
    x: np.ndarray,
    w: np.ndarray,
    stride: int,
    need_dx: bool = True,
):
    n, c_in, h, wd = x.shape
    c_out, _, k, _ = w.shape
    ho, wo = dout.shape[2], dout.shape[3]

    db = dout.sum(axis=(0, 2, 3))

    win = _windows(x, k, stride)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c_in * k * k)
    dout_mat = dout.transpose(0, 2, 3, 1).reshape(n * ho * wo, c_out)
    dw = (dout_mat.T @ cols).reshape(c_out, c_in, k, k)

    dx = None
    if need_dx:
        # Full correlation of the stride-dilated dout with the flipped kernel.
        hd = (ho - 1) * stride + 1
        wdd = (wo - 1) * stride + 1
        pad = np.zeros((n, c_out, hd + 2 * (k - 1), wdd + 2 * (k - 1)), dtype=x.dtype)
        pad[:, :, k - 1 : k - 1 + hd : stride, k - 1 : k - 1 + wdd : stride] = dout
        win2 = np.lib.stride_tricks.sliding_window_view(pad, (k, k), axis=(2, 3))
        hx, wx = win2.shape[2], win2.shape[3]
        cols2 = win2.transpose(0, 2, 3, 1, 4, 5).reshape(n * hx * wx, c_out * k * k)
        wf = w[:, :, ::-1, ::-1].transpose(0, 2, 3, 1).reshape(c_out * k * k, c_in)
        dxm = (cols2 @ wf).reshape(n, hx, wx, c_in).transpose(0, 3, 1, 2)
        if hx == h and wx == wd:
            dx = np.ascontiguousarray(dxm)
        else:
            # Rows/cols never covered by any window get zero gradient.
            dx = np.zeros((n, c_in, h, wd), dtype=x.dtype)
            dx[:, :, :hx, :wx] = dxm
    return dx, dw, db
