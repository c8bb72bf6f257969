"""Adam optimizer over named parameters."""

from __future__ import annotations

import numpy as np

from .errors import ContractError
from .params import ParamDict


class Adam:
    """Standard Adam with bias correction; moment state is kept per parameter
    name and persists across steps.  Only trainable parameters are touched."""

    def __init__(self, params: ParamDict, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = float(lr)
        self.beta1, self.beta2 = float(betas[0]), float(betas[1])
        self.eps = float(eps)
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            if not p.trainable:
                continue
            g = p.tensor.grad
            if g is None:
                raise ContractError(f"trainable parameter {name!r} has no gradient")
            m = self._m.get(name)
            if m is None:
                m = self._m[name] = np.zeros_like(p.tensor.data)
                self._v[name] = np.zeros_like(p.tensor.data)
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            mhat = m / np.float32(bc1)
            vhat = v / np.float32(bc2)
            p.tensor.data -= np.float32(self.lr) * mhat / (np.sqrt(vhat) + np.float32(self.eps))

    def zero_grad(self):
        for p in self.params.values():
            p.tensor.grad = None
