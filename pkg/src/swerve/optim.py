"""Optimizers: classical-momentum SGD for training, Adam for the attack's
inner loop (which optimizes a raw array, not model parameters)."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


class MomentumSGD:
    """v <- momentum * v - lr * grad;  p <- p + v.

    With momentum 0 this is exactly vanilla SGD. Parameters with no gradient
    this step still coast on their velocity.
    """

    def __init__(self, params, learning_rate: float, momentum: float = 0.0):
        if learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {learning_rate}")
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {momentum}")
        self.params: list[Tensor] = list(params)
        self.learning_rate = float(learning_rate)
        self.momentum = float(momentum)
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        for p, v in zip(self.params, self.velocity):
            v *= self.momentum
            if p.grad is not None:
                v -= self.learning_rate * p.grad
            p.data = p.data + v


class Adam:
    """Adaptive-moment steps over a plain numpy array, bias-corrected."""

    def __init__(self, shape, dtype, step_size: float = 0.01, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if step_size <= 0:
            raise ValueError(f"step_size must be positive, got {step_size}")
        self.step_size = float(step_size)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.m = np.zeros(shape, dtype=dtype)
        self.v = np.zeros(shape, dtype=dtype)
        self.t = 0

    def step(self, w: np.ndarray, grad: np.ndarray) -> None:
        """Update w in place from its current gradient."""
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * (grad * grad)
        mhat = self.m / (1.0 - self.beta1**self.t)
        vhat = self.v / (1.0 - self.beta2**self.t)
        w -= (self.step_size * mhat / (np.sqrt(vhat) + self.eps)).astype(w.dtype, copy=False)
