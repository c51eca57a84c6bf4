"""Adam with bias correction over named parameter tensors.

Parameters are immutable tensors; a step returns fresh tensors and the
caller writes them back into its containers. State is keyed by parameter
name so save/restore and diagnostics stay readable.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .errors import ContractError, NumericError

Array = np.ndarray


class Adam:
    def __init__(self, lr: float = 0.01, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, Array] = {}
        self._v: dict[str, Array] = {}

    def step(self, params: dict[str, Tensor], grads: dict[str, Array]) -> dict[str, Tensor]:
        """One bias-corrected update; returns new tensors, state advances by one."""
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                raise ContractError(f"adam: missing gradient for parameter {name!r}")
            if np.asarray(g).shape != p.shape:
                raise ContractError(f"adam: gradient shape {np.asarray(g).shape} vs "
                                    f"parameter {name!r} shape {p.shape}")
            if not np.all(np.isfinite(g)):
                raise NumericError(f"adam: non-finite gradient for parameter {name!r}")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        out: dict[str, Tensor] = {}
        for name, p in params.items():
            g = np.asarray(grads[name], dtype=np.float64)
            m = self._m.get(name)
            v = self._v.get(name)
            if m is None:
                m = np.zeros_like(p.data)
                v = np.zeros_like(p.data)
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g * g
            self._m[name] = m
            self._v[name] = v
            update = self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            out[name] = Tensor(p.data - update, requires_grad=True)
        return out
