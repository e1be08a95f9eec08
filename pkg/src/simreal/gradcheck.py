"""Finite-difference verification of analytic gradients.

Checks run in float64; central differences are too noisy in float32 to
say anything at the 1e-4 level the layer contracts promise.
"""

from __future__ import annotations

from typing import Callable, Tuple

import numpy as np

from simreal.errors import NumericError

ScalarWithGrad = Callable[[np.ndarray], Tuple[float, np.ndarray]]


def grad_check(f: ScalarWithGrad, params: np.ndarray, epsilon: float = 1e-5) -> float:
    """Max relative error between f's analytic gradient and central differences.

    `f` maps a float64 parameter array to ``(value, gradient)``, with the
    gradient shaped like the parameters. Relative error per coordinate is
    ``|analytic - numeric| / max(1e-8, |analytic| + |numeric|)``.
    """
    params = np.asarray(params, dtype=np.float64)
    value, grad = f(params)
    if not np.isfinite(value):
        raise NumericError(f"function value is not finite: {value}")
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.shape:
        grad = grad.reshape(params.shape)

    flat = params.ravel()
    gflat = grad.ravel()
    max_rel = 0.0
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + epsilon
        up, _ = f(params)
        flat[i] = saved - epsilon
        down, _ = f(params)
        flat[i] = saved
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NumericError(f"perturbed function value not finite at coordinate {i}")
        numeric = (up - down) / (2.0 * epsilon)
        denom = max(1e-8, abs(gflat[i]) + abs(numeric))
        max_rel = max(max_rel, abs(gflat[i] - numeric) / denom)
    return max_rel
