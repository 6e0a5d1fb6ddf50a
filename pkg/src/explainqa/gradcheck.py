"""Finite-difference verification of analytic gradients.

Central differences in float64 with dropout disabled; the loss callable must
rebuild its graph from the live parameter tensors on every invocation.
"""

from __future__ import annotations

import numpy as np

from .autograd import Tensor, no_grad
from .model import Parameters


def grad_check(
    params: Parameters,
    loss_fn,
    epsilon: float = 1e-5,
    coords_per_tensor: int = 32,
    seed: int = 0,
) -> float:
    """Max relative error between backprop and central finite differences.

    Samples up to coords_per_tensor coordinates in every tensor. The
    relative-error denominator is floored so that coordinates with near-zero
    gradients are compared absolutely at the finite-difference noise scale.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    rng = np.random.default_rng(seed)

    params.zero_grads()
    loss = loss_fn()
    if not isinstance(loss, Tensor):
        raise TypeError("loss_fn must return an autograd Tensor")
    loss.backward()
    analytic = {n: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for n, t in params.tensors.items()}

    worst = 0.0
    for name, t in params.tensors.items():
        size = t.data.size
        flat = t.data.reshape(-1)
        n_coords = min(coords_per_tensor, size)
        coords = rng.choice(size, size=n_coords, replace=False)
        for c in coords:
            orig = flat[c]
            with no_grad():
                flat[c] = orig + epsilon
                f_plus = float(loss_fn().data)
                flat[c] = orig - epsilon
                f_minus = float(loss_fn().data)
                flat[c] = orig
            fd = (f_plus - f_minus) / (2.0 * epsilon)
            ana = analytic[name].reshape(-1)[c]
            err = abs(ana - fd) / max(abs(ana) + abs(fd), 1e-2)
            worst = max(worst, err)
    return worst
