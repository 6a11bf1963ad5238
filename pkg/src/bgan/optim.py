"""Named parameter storage and the Adam update."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autograd import Tensor


@dataclass
class ParamStore:
    """Path-addressed parameters plus optimizer state.

    ``buffers`` hold non-trainable state that must survive checkpointing
    (e.g. spectral-norm power-iteration vectors).
    """

    name: str = "params"
    params: dict[str, Tensor] = field(default_factory=dict)
    buffers: dict[str, np.ndarray] = field(default_factory=dict)
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def add(self, path: str, value: np.ndarray, requires_grad: bool = True) -> Tensor:
        if path in self.params:
            raise KeyError(f"duplicate parameter path {path!r}")
        t = Tensor(np.array(value), requires_grad=requires_grad, name=path)
        self.params[path] = t
        if requires_grad:
            self.m[path] = np.zeros_like(t.data)
            self.v[path] = np.zeros_like(t.data)
        return t

    def __getitem__(self, path: str) -> Tensor:
        return self.params[path]

    def __contains__(self, path: str) -> bool:
        return path in self.params

    def __iter__(self):
        return iter(self.params.items())

    def trainable(self) -> list[tuple[str, Tensor]]:
        return [(k, t) for k, t in self.params.items() if t.requires_grad]

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def count(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def grad_norm(self) -> float:
        total = 0.0
        for _, t in self.trainable():
            if t.grad is not None:
                total += float((t.grad.astype(np.float64) ** 2).sum())
        return float(np.sqrt(total))


def clip_grad_norm(store: ParamStore, max_norm: float) -> float:
    """Rescale all gradients in ``store`` so their global L2 norm is at most ``max_norm``."""
    norm = store.grad_norm()
    if norm > max_norm > 0:
        scale = max_norm / (norm + 1e-12)
        for _, t in store.trainable():
            if t.grad is not None:
                t.grad *= scale
    return norm


def adam_step(store: ParamStore, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """One bias-corrected Adam update over every trainable parameter; zeroes grads afterwards.

    Parameters with no gradient are treated as having a zero gradient.
    """
    store.step += 1
    t = store.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for path, p in store.trainable():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = store.m[path]
        v = store.v[path]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        update = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        p.data -= update.astype(p.dtype, copy=False)
        p.grad = None
