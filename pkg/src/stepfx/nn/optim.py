"""Adam with the standard bias-corrected update."""

from __future__ import annotations

import numpy as np


class TrainingError(RuntimeError):
    """Raised when training hits non-finite numbers."""


class Adam:
    def __init__(self, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, named_params) -> None:
        """Apply one update over [(name, layer, param_name)] triples in place."""
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, layer, pname in named_params:
            grad = layer.grads.get(pname)
            if grad is None:
                continue
            if not np.all(np.isfinite(grad)):
                raise TrainingError(f"non-finite gradient in {name}")
            param = layer.params[pname]
            grad = grad.astype(np.float32, copy=False)
            m = self._m.get(name)
            if m is None:
                m = np.zeros_like(param)
                self._m[name] = m
                self._v[name] = np.zeros_like(param)
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            m_hat = m / bc1
            v_hat = v / bc2
            layer.params[pname] = param - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_sizes(self) -> dict:
        return {name: m.shape for name, m in self._m.items()}
