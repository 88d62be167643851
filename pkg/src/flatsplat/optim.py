"""Adaptive moment estimation over named parameter groups.

Plain numpy: first/second moment running averages with bias correction,
one learning rate per group. Rows can be remapped when the Gaussian set
changes (densify/prune), keeping optimizer state aligned with survivors.
"""

from __future__ import annotations

import numpy as np


class Adam:
    def __init__(self, learning_rates, beta1=0.9, beta2=0.999, eps=1e-15):
        self.lr = dict(learning_rates)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        """One update. params/grads: dicts name -> array, updated in place."""
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            p = params[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            lr = self.lr.get(name, 0.0)
            if lr == 0.0:
                continue
            p -= lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)

    def remap(self, keep_idx, n_extra=0):
        """Select surviving rows (axis 0) and append zeroed rows for newcomers."""
        for name in list(self.m):
            for store in (self.m, self.v):
                old = store[name]
                kept = old[keep_idx]
                if n_extra:
                    pad = np.zeros((n_extra,) + old.shape[1:], dtype=old.dtype)
                    kept = np.concatenate([kept, pad], axis=0)
                store[name] = kept
