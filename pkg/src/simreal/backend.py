"""Convolution kernel backend selection.

At import time we pick the compiled Cython kernels when the extension
built, falling back to the pure-numpy implementation otherwise. The
environment variable ``SIMREAL_BACKEND`` (``cython`` or ``numpy``) forces
a choice, which the benchmark and the cross-backend tests rely on.

Both backends implement the same two calls and agree to float rounding:

    conv2d_forward(x, w, b, stride)          -> y
    conv2d_backward(dout, x, w, stride, need_dx) -> (dx | None, dw, db)
"""

from __future__ import annotations

import os

import numpy as np

from simreal import _conv_numpy
from simreal.errors import ConfigError

try:
    from simreal import _convkernels

    _HAVE_COMPILED = True
except ImportError:  # extension not built; numpy path is fully equivalent
    _convkernels = None
    _HAVE_COMPILED = False


def _cython_forward(x, w, b, stride):
    c_out, c_in, k, _ = w.shape
    n, _, h, wd = x.shape
    ho = (h - k) // stride + 1
    wo = (wd - k) // stride + 1
    cols = _convkernels.im2col(x, k, stride)
    y = cols @ w.reshape(c_out, -1).T
    y += b
    return np.ascontiguousarray(y.reshape(n, ho, wo, c_out).transpose(0, 3, 1, 2))


def _cython_backward(dout, x, w, stride, need_dx=True):
    n, c_in, h, wd = x.shape
    c_out, _, k, _ = w.shape
    ho, wo = dout.shape[2], dout.shape[3]
    db = dout.sum(axis=(0, 2, 3))
    cols = _convkernels.im2col(x, k, stride)
    dout_mat = dout.transpose(0, 2, 3, 1).reshape(n * ho * wo, c_out)
    dw = (dout_mat.T @ cols).reshape(c_out, c_in, k, k)
    dx = None
    if need_dx:
        dcols = np.ascontiguousarray(dout_mat @ w.reshape(c_out, -1))
        dx = _convkernels.col2im_add(dcols, n, c_in, h, wd, k, stride)
    return dx, dw, db


_BACKENDS = {"numpy": (_conv_numpy.conv2d_forward, _conv_numpy.conv2d_backward)}
if _HAVE_COMPILED:
    _BACKENDS["cython"] = (_cython_forward, _cython_backward)


def _select() -> str:
    forced = os.environ.get("SIMREAL_BACKEND", "").strip().lower()
    if forced:
        if forced not in _BACKENDS:
            raise ConfigError(
                f"SIMREAL_BACKEND={forced!r} unavailable; choices: {sorted(_BACKENDS)}"
            )
        return forced
    return "cython" if _HAVE_COMPILED else "numpy"


ACTIVE = _select()
conv2d_forward, conv2d_backward = _BACKENDS[ACTIVE]


def active_backend() -> str:
    """Name of the kernel backend picked at import time."""
    return ACTIVE


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def get_backend(name: str):
    """Return (forward, backward) for an explicit backend, for benchmarks."""
    if name not in _BACKENDS:
        raise ConfigError(f"unknown backend {name!r}; choices: {sorted(_BACKENDS)}")
    return _BACKENDS[name]
