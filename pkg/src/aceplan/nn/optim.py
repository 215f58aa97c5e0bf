"""AdamW with decoupled weight decay, gradient clipping, and EMA target updates."""

from __future__ import annotations

import numpy as np

from .layers import Module
from .tensor import check_finite


class AdamW:
    """AdamW: weight decay is applied to parameters, not folded into the gradient."""

    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        if lr <= 0.0:
            raise ValueError("lr must be positive")
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = 0.0
            else:
                check_finite(g, "gradient")
            m = self._m[i]
            v = self._v[i]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            if isinstance(g, np.ndarray):
                v += (1.0 - self.beta2) * (g * g)
            if self.weight_decay:
                p.data = p.data * (1.0 - self.lr * self.weight_decay)
            p.data = p.data - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            check_finite(p.data, "parameter after AdamW step")


def clip_grad_norm(params, max_norm: float) -> float:
    """Scale gradients so their joint l2 norm is at most max_norm; returns the norm."""
    total = 0.0
    grads = [p.grad for p in params if p.grad is not None]
    for g in grads:
        total += float(np.sum(g.astype(np.float64) ** 2))
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return norm


def ema_update(target: Module, online: Module, momentum: float) -> None:
    """target <- momentum * target + (1 - momentum) * online, element-wise.

    momentum is the fraction of the target retained per update (paper table
    convention: momentum 0.99 means the target moves by 1% per call).
    """
    t_params = dict(target.named_parameters())
    o_params = dict(online.named_parameters())
    if set(t_params) != set(o_params):
        raise KeyError("target/online parameter names differ")
    for name, tp in t_params.items():
        op = o_params[name]
        if tp.data.shape != op.data.shape:
            raise ValueError(f"shape mismatch for {name}")
        tp.data = momentum * tp.data + (1.0 - momentum) * op.data
    t_buf = dict(target.named_buffers())
    o_buf = dict(online.named_buffers())
    if set(t_buf) != set(o_buf):
        raise KeyError("target/online buffer names differ")
    for name in t_buf:
        target._assign_buffer(name, momentum * t_buf[name] + (1.0 - momentum) * o_buf[name])
