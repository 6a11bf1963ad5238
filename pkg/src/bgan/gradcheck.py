"""Central finite-difference gradient oracle."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .autograd import Tensor, backward, no_grad


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5, *,
               floor: float = 1e-6, kink_tol: float = 1e-3, max_coords: int | None = None,
               rng: np.random.Generator | None = None) -> float:
    """Max relative error between ``backward`` and central differences of ``f`` at ``x``.

    ``x`` is perturbed in place and restored. Coordinates where the one-sided
    differences disagree by more than ``kink_tol`` (a nondifferentiable point,
    e.g. ReLU at 0) are skipped. ``max_coords`` samples a random subset.
    """
    if x.dtype != np.float64:
        raise TypeError("grad_check requires double precision input")
    x.grad = None
    was = x.requires_grad
    x.requires_grad = True
    loss = f(x)
    backward(loss)
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    x.grad = None
    x.requires_grad = was

    flat = x.data.reshape(-1)
    coords = np.arange(flat.size)
    if max_coords is not None and flat.size > max_coords:
        rng = rng or np.random.default_rng(0)
        coords = rng.choice(flat.size, size=max_coords, replace=False)

    worst = 0.0
    with no_grad():
        f0 = float(f(x).data)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(f(x).data)
            flat[i] = orig - eps
            fm = float(f(x).data)
            flat[i] = orig
            if abs((fp - f0) - (f0 - fm)) / eps > kink_tol * max(1.0, abs(fp - fm) / (2 * eps)):
                continue
            numeric = (fp - fm) / (2 * eps)
            a = analytic.reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
    return worst
