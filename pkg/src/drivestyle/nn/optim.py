"""SGD with Nesterov momentum and RMSProp, both with inverse-time learning-rate decay."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizerState:
    kind: str
    learning_rate: float
    decay: float = 0.0
    momentum: float = 0.0
    rho: float = 0.9
    epsilon: float = 1e-6
    iterations: int = 0
    accumulators: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd_nesterov", "rmsprop"):
            raise ValueError(f"unknown optimizer {self.kind!r}")

    def current_lr(self) -> float:
        return self.learning_rate / (1.0 + self.decay * self.iterations)

    def step(self, params, grads):
        if self.kind == "sgd_nesterov":
            sgd_nesterov_step(self, params, grads)
        else:
            rmsprop_step(self, params, grads)


def sgd(learning_rate=0.05, decay=1e-6, momentum=0.9) -> OptimizerState:
    return OptimizerState("sgd_nesterov", learning_rate, decay=decay, momentum=momentum)


def rmsprop(learning_rate=1e-6, rho=0.9, epsilon=1e-6, decay=0.0) -> OptimizerState:
    return OptimizerState("rmsprop", learning_rate, decay=decay, rho=rho, epsilon=epsilon)


def _slot(state, name, like):
    acc = state.accumulators.get(name)
    if acc is None:
        acc = state.accumulators[name] = np.zeros_like(like)
    elif acc.shape != like.shape:
        raise ValueError(f"accumulator for {name} has shape {acc.shape}, parameter {like.shape}")
    return acc


def sgd_nesterov_step(state: OptimizerState, params: dict, grads: dict):
    """v <- m v - lr_t g;  p <- p + m v - lr_t g  (in place)."""
    lr = state.current_lr()
    m = state.momentum
    for name in sorted(grads):
        p, g = params[name], grads[name]
        v = _slot(state, name, p)
        v *= m
        v -= lr * g
        p += m * v - lr * g
    state.iterations += 1


def rmsprop_step(state: OptimizerState, params: dict, grads: dict):
    """a <- rho a + (1 - rho) g^2;  p <- p - lr_t g / (sqrt(a) + eps)  (in place)."""
    lr = state.current_lr()
    rho, eps = state.rho, state.epsilon
    for name in sorted(grads):
        p, g = params[name], grads[name]
        a = _slot(state, name, p)
        a *= rho
        a += (1.0 - rho) * g * g
        p -= lr * g / (np.sqrt(a) + eps)
    state.iterations += 1


def clip_by_global_norm(grads: dict, max_norm: float) -> float:
    """Scale gradients in place so their joint L2 norm is at most ``max_norm``; returns the original norm."""
    total = float(np.sqrt(sum(float(np.sum(g * g)) for _, g in sorted(grads.items()))))
    if total > max_norm > 0:
        s = max_norm / total
        for g in grads.values():
            g *= s
    return total
