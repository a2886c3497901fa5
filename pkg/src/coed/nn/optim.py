"""Adam with a separate learning rate for phase parameters."""

from __future__ import annotations

from typing import Dict, Optional

import numpy as np


class Adam:
    """Bias-corrected Adam over a dict of named arrays (updated in place).

    Args:
        lr: learning rate for every parameter not listed in ``lr_overrides``.
        lr_overrides: per-name learning rates, e.g. ``{"raw_phases": 1e-2}``.
    """

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, lr_overrides: Optional[Dict[str, float]] = None):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.lr_overrides = dict(lr_overrides or {})
        self.t = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
             frozen=()):
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for {name}")
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in params.items():
            if name in frozen or name not in grads:
                continue
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            lr = self.lr_overrides.get(name, self.lr)
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def adam_step(params, grads, state: Adam):
    """Functional spelling of :meth:`Adam.step`; returns ``(params, state)``."""
    state.step(params, grads)
    return params, state
