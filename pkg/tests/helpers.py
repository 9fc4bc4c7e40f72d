"""Shared oracles and stub velocity fields for the test suite."""

import math

import numpy as np

from fmirl import nn


class ZeroField:
    """v = 0 everywhere."""

    def __init__(self, cfg):
        self.cfg = cfg

    def forward(self, x_t, t, c):
        n = np.atleast_2d(x_t).shape[0]
        return nn.Tensor(np.zeros((n, self.cfg.joint_dim)))


class ConstField:
    """v = w, a fixed vector independent of state, time and class."""

    def __init__(self, cfg, w):
        self.cfg = cfg
        self.w = np.asarray(w, dtype=np.float64)

    def forward(self, x_t, t, c):
        n = np.atleast_2d(x_t).shape[0]
        return nn.Tensor(np.tile(self.w, (n, 1)))


class ContractionField:
    """v = -x, whose Euler iteration has the closed form (1 - 1/K)^K x0."""

    def __init__(self, cfg):
        self.cfg = cfg

    def forward(self, x_t, t, c):
        return nn.Tensor(-np.atleast_2d(np.asarray(x_t, dtype=np.float64)))


class ExactConditionalField:
    """v(x, t) = (x1 - x) / (1 - t): the exact straight-path velocity toward
    one fixed target, giving zero regression error for that target."""

    def __init__(self, cfg, x1):
        self.cfg = cfg
        self.x1 = np.asarray(x1, dtype=np.float64)

    def forward(self, x_t, t, c):
        x_t = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
        t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
        return nn.Tensor((self.x1 - x_t) / (1.0 - t))


class TwoParamField:
    """v_i = w_i * x_i with one weight per coordinate (joint_dim params)."""

    def __init__(self, cfg, w):
        self.cfg = cfg
        self.params = nn.ParamStore()
        self.w = self.params.add("w", np.asarray(w, dtype=np.float64))

    def forward(self, x_t, t, c):
        x_t = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
        return nn.mul(nn.Tensor(x_t), self.w)


def finite_difference(loss_fn, params, h=1e-4):
    """Central finite differences of a scalar loss over every parameter.

    `loss_fn` must be deterministic (freeze any random draws before calling).
    Returns {name: gradient array}.
    """
    grads = {}
    for name, tensor in params.items():
        flat = tensor.values.ravel()
        g = np.zeros_like(flat)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = loss_fn()
            flat[i] = old - h
            down = loss_fn()
            flat[i] = old
            g[i] = (up - down) / (2.0 * h)
        grads[name] = g.reshape(tensor.values.shape)
    return grads


def max_rel_error(analytic, numeric, floor=1e-6):
    """Worst-case relative error between gradient dictionaries."""
    worst = 0.0
    for name, num in numeric.items():
        ana = analytic[name]
        denom = np.maximum(np.abs(num), floor)
        worst = max(worst, float(np.max(np.abs(ana - num) / denom)))
    return worst


def collect_grads(params):
    return {name: t.grad.copy() for name, t in params.items()}


def squashed_gaussian_logp(u, mu, std, half):
    """Independent density oracle for a = center + half * tanh(u)."""
    u = np.asarray(u, dtype=np.float64)
    gauss = sum(
        -0.5 * ((ui - mi) / si) ** 2 - math.log(si) - 0.5 * math.log(2 * math.pi)
        for ui, mi, si in zip(u, mu, std)
    )
    jac = sum(
        math.log(hi) + math.log1p(-math.tanh(ui) ** 2) for ui, hi in zip(u, half)
    )
    return gauss - jac


def adam_scalar_reference(grads, lr, beta1=0.9, beta2=0.999, eps=1e-8, x0=0.0):
    """Hand recurrence for scalar Adam, used to pin expected update values."""
    m = v = 0.0
    x = x0
    xs = []
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1**t)
        vhat = v / (1 - beta2**t)
        x = x - lr * mhat / (math.sqrt(vhat) + eps)
        xs.append(x)
    return xs
