"""Central finite differences for checking reverse-mode gradients."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def numerical_gradient(f, tensors: list[Tensor], eps: float = 1e-5) -> list[np.ndarray]:
    """d f / d t for each tensor by central differences; ``f`` returns a scalar Tensor."""
    grads = []
    for t in tensors:
        t.data = np.ascontiguousarray(t.data)
        g = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            hi = float(f().data)
            flat[i] = old - eps
            lo = float(f().data)
            flat[i] = old
            gflat[i] = (hi - lo) / (2.0 * eps)
        grads.append(g)
    return grads


def analytic_gradient(f, tensors: list[Tensor]) -> list[np.ndarray]:
    for t in tensors:
        t.grad = None
    f().backward()
    return [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]


def max_relative_error(f, tensors: list[Tensor], eps: float = 1e-5) -> float:
    """Largest over tensors of ||analytic - numeric||_inf / ||numeric||_inf."""
    ana = analytic_gradient(f, tensors)
    num = numerical_gradient(f, tensors, eps)
    worst = 0.0
    for a, n in zip(ana, num):
        scale = max(np.max(np.abs(n)), np.max(np.abs(a)), 1e-12)
        worst = max(worst, float(np.max(np.abs(a - n)) / scale))
    return worst
