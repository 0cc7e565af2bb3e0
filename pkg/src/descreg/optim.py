"""Minibatch SGD with classical momentum, shared by the trainers."""

from __future__ import annotations

import numpy as np

__all__ = ["MomentumSGD"]


class MomentumSGD:
    def __init__(
        self,
        params: dict[str, np.ndarray],
        lr: float,
        momentum: float = 0.9,
        weight_decay: float = 0.0,
        decay_keys: set[str] | None = None,
    ):
        if lr < 0:
            raise ValueError("learning rate must be non-negative")
        self.params = params
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.weight_decay = float(weight_decay)
        # L2 decay applies to weight-like blocks only; biases are exempt.
        self.decay_keys = set(params) if decay_keys is None else set(decay_keys)
        self.velocity = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for key, param in self.params.items():
            grad = grads.get(key)
            if grad is None:
                continue
            if self.weight_decay and key in self.decay_keys:
                grad = grad + self.weight_decay * param
            vel = self.velocity[key]
            vel *= self.momentum
            vel += grad
            param -= self.lr * vel
