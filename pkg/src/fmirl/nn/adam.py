"""Bias-corrected Adam over a ParamStore.

`adam_step` refuses to touch parameters when any gradient is non-finite:
it raises with per-parameter diagnostics so the caller can snapshot state.
Gradients are zeroed after a successful step.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericalError


class AdamState:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.m = {name: np.zeros_like(t.values) for name, t in params.items()}
        self.v = {name: np.zeros_like(t.values) for name, t in params.items()}


def adam_step(params, state):
    bad = []
    for name, t in params.items():
        if not np.all(np.isfinite(t.grad)):
            n_bad = int(np.size(t.grad) - np.isfinite(t.grad).sum())
            bad.append(f"{name} ({n_bad}/{t.grad.size} non-finite)")
    if bad:
        raise NumericalError(
            "non-finite gradients, parameters left untouched: " + ", ".join(bad)
        )
    state.step_count += 1
    t_step = state.step_count
    bc1 = 1.0 - state.beta1**t_step
    bc2 = 1.0 - state.beta2**t_step
    for name, p in params.items():
        g = p.grad
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.values -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    params.zero_grad()
