"""Differentiable layer primitives: convolution, ReLU, linear, spatial softmax.

Tensors are plain numpy arrays (row-major, float32 for training, float64
for gradient checking). Every layer has an explicit backward function; no
graph autodiff. Single-image entry points take [C,H,W] and delegate to the
batched [N,C,H,W] implementations, so batching never changes results.
"""

from __future__ import annotations

import numpy as np

from simreal import backend
from simreal.errors import DimensionError, ParameterError

# --------------------------------------------------------------------------
# convolution (valid, no padding, square kernels)


def _check_conv_args(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int) -> None:
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")
    if x.ndim != 4 or w.ndim != 4 or b.ndim != 1:
        raise DimensionError(
            f"expected x[N,C,H,W], w[O,C,k,k], b[O]; got {x.shape}, {w.shape}, {b.shape}"
        )
    c_out, c_in, kh, kw = w.shape
    if kh != kw:
        raise DimensionError(f"kernel must be square, got {kh}x{kw}")
    if c_in != x.shape[1]:
        raise DimensionError(f"input channels {x.shape[1]} != kernel channels {c_in}")
    if b.shape[0] != c_out:
        raise DimensionError(f"bias length {b.shape[0]} != output channels {c_out}")
    if kh > x.shape[2] or kh > x.shape[3]:
        raise DimensionError(f"kernel {kh} larger than input {x.shape[2]}x{x.shape[3]}")


def conv2d_batch(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1) -> np.ndarray:
    """Valid cross-correlation of x [N,C,H,W] with w [O,C,k,k] plus bias."""
    _check_conv_args(x, w, b, stride)
    return backend.conv2d_forward(
        np.ascontiguousarray(x), np.ascontiguousarray(w), b, stride
    )


def conv2d_batch_backward(
    dout: np.ndarray, x: np.ndarray, w: np.ndarray, stride: int = 1, need_dx: bool = True
):
    """Gradients of conv2d_batch: returns (dx | None, dw, db)."""
    return backend.conv2d_backward(
        np.ascontiguousarray(dout), np.ascontiguousarray(x), np.ascontiguousarray(w),
        stride, need_dx,
    )


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1) -> np.ndarray:
    """Single-image convolution: x [C,H,W] -> [O,H',W'] with H' = (H-k)//stride + 1."""
    if x.ndim != 3:
        raise DimensionError(f"expected image [C,H,W], got shape {x.shape}")
    return conv2d_batch(x[None], w, b, stride)[0]


def conv2d_backward(dout: np.ndarray, x: np.ndarray, w: np.ndarray, stride: int = 1):
    dx, dw, db = conv2d_batch_backward(dout[None], x[None], w, stride)
    return dx[0], dw, db


# --------------------------------------------------------------------------
# ReLU


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(dout: np.ndarray, out: np.ndarray) -> np.ndarray:
    """Mask dout where the activation was clamped; subgradient at 0 is 0."""
    return dout * (out > 0)


# --------------------------------------------------------------------------
# linear


def linear_batch(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """x [N,n] @ w[m,n]^T + b[m]."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1] or b.shape[0] != w.shape[0]:
        raise DimensionError(
            f"linear shapes do not chain: x{x.shape}, w{w.shape}, b{b.shape}"
        )
    return x @ w.T + b


def linear_batch_backward(dout: np.ndarray, x: np.ndarray, w: np.ndarray):
    dw = dout.T @ x
    db = dout.sum(axis=0)
    dx = dout @ w
    return dx, dw, db


def linear(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Single-vector affine map w @ x + b."""
    if x.ndim != 1:
        raise DimensionError(f"expected vector input, got shape {x.shape}")
    return linear_batch(x[None], w, b)[0]


# --------------------------------------------------------------------------
# spatial softmax feature points


def coordinate_grid(n: int, dtype=np.float64) -> np.ndarray:
    """n coordinates linearly spanning [-1, 1]; a single cell sits at 0."""
    if n == 1:
        return np.zeros(1, dtype=dtype)
    return np.linspace(-1.0, 1.0, n, dtype=dtype)


def spatial_softmax_probs(x: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Per-channel softmax over locations of x [N,C,H,W] (max-subtracted)."""
    if temperature <= 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    n, c, h, w = x.shape
    u = (x / x.dtype.type(temperature)).reshape(n, c, h * w)
    u = u - u.max(axis=2, keepdims=True)
    e = np.exp(u)
    return (e / e.sum(axis=2, keepdims=True)).reshape(n, c, h, w)


def spatial_softmax_batch(x: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Expected (x, y) grid coordinates per channel: [N,C,H,W] -> [N,2C].

    Output interleaves channels as (x_0, y_0, x_1, y_1, ...), each in [-1, 1].
    """
    if x.ndim != 4:
        raise DimensionError(f"expected [N,C,H,W], got shape {x.shape}")
    n, c, h, w = x.shape
    s = spatial_softmax_probs(x, temperature)
    gx = coordinate_grid(w, x.dtype)
    gy = coordinate_grid(h, x.dtype)
    fx = s.sum(axis=2) @ gx  # [N,C]
    fy = s.sum(axis=3) @ gy
    out = np.empty((n, 2 * c), dtype=x.dtype)
    out[:, 0::2] = fx
    out[:, 1::2] = fy
    return out


def spatial_softmax_batch_backward(
    dfp: np.ndarray, x: np.ndarray, temperature: float = 1.0
) -> np.ndarray:
    """Gradient of spatial_softmax_batch w.r.t. its input activations."""
    n, c, h, w = x.shape
    s = spatial_softmax_probs(x, temperature)
    gx = coordinate_grid(w, x.dtype)
    gy = coordinate_grid(h, x.dtype)
    fx = s.sum(axis=2) @ gx
    fy = s.sum(axis=3) @ gy
    dfx = dfp[:, 0::2]
    dfy = dfp[:, 1::2]
    # d(sum s*g)/du = s * (g - f); u = x / T
    zx = gx[None, None, None, :] - fx[:, :, None, None]
    zy = gy[None, None, :, None] - fy[:, :, None, None]
    du = s * (zx * dfx[:, :, None, None] + zy * dfy[:, :, None, None])
    return du / x.dtype.type(temperature)


def spatial_softmax(x: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Single image [C,H,W] -> feature-point vector [2C]."""
    if x.ndim != 3:
        raise DimensionError(f"expected [C,H,W], got shape {x.shape}")
    return spatial_softmax_batch(x[None], temperature)[0]
