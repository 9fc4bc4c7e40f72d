"""Named parameter storage and plain MLP forward passes.

A ParamStore maps names to leaf tensors; every parameter owns exactly one
gradient slot of matching shape. MLP layers follow the naming convention
``{prefix}W{i}`` / ``{prefix}b{i}``; `mlp_forward` walks the indices in order,
applies the activation between layers and leaves the final layer linear.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from . import tensor as T

_ACTIVATIONS = {"tanh": T.tanh, "relu": T.relu, "silu": T.silu}


class ParamStore:
    def __init__(self):
        self._params: dict[str, T.Tensor] = {}

    def add(self, name, values):
        if name in self._params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        t = T.Tensor(np.array(values, dtype=np.float64, copy=True), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grad(self):
        for t in self._params.values():
            t.zero_grad()

    def n_params(self):
        return sum(t.values.size for t in self._params.values())

    def state(self):
        """Copy of all parameter arrays, keyed by name."""
        return {name: t.values.copy() for name, t in self._params.items()}

    def load_state(self, arrays):
        for name, values in arrays.items():
            if name not in self._params:
                raise ConfigError(f"unknown parameter {name!r} in state")
            current = self._params[name].values
            values = np.asarray(values, dtype=np.float64)
            if values.shape != current.shape:
                raise ConfigError(
                    f"parameter {name!r}: shape {values.shape} != expected {current.shape}"
                )
            current[...] = values


def _layer_indices(params, prefix):
    indices = []
    i = 0
    while f"{prefix}W{i}" in params:
        indices.append(i)
        i += 1
    if not indices:
        raise ConfigError(f"no layers found under prefix {prefix!r}")
    return indices


def mlp_forward(params, x, activation, prefix=""):
    """Run the MLP stored under `prefix` on `x` (batch-first, 2-D)."""
    if activation not in _ACTIVATIONS:
        raise ConfigError(f"unknown activation {activation!r}")
    act = _ACTIVATIONS[activation]
    h = T.as_tensor(x)
    if h.values.ndim != 2:
        raise ConfigError(f"mlp_forward expects a 2-D input, got shape {h.shape}")
    indices = _layer_indices(params, prefix)
    for i in indices:
        w = params[f"{prefix}W{i}"]
        b = params[f"{prefix}b{i}"]
        if h.values.shape[1] != w.values.shape[0]:
            raise ConfigError(
                f"layer {prefix}W{i}: input has {h.values.shape[1]} features, "
                f"weight expects {w.values.shape[0]}"
            )
        h = T.add(T.matmul(h, w), b)
        if i != indices[-1]:
            h = act(h)
    return h


def _tanh_inplace(h):
    return np.tanh(h, out=h)


def _relu_inplace(h):
    return np.maximum(h, 0.0, out=h)


def _silu_inplace(h):
    s = 0.5 * (1.0 + np.tanh(0.5 * h))
    s *= h
    return s


_NP_ACTIVATIONS = {"tanh": _tanh_inplace, "relu": _relu_inplace, "silu": _silu_inplace}


def mlp_forward_np(params, x, activation, prefix=""):
    """Graph-free forward pass; numerically identical to `mlp_forward`.

    Uses in-place bias/activation updates, so it allocates one buffer per
    layer instead of three. Hot loops (rollouts, reward evaluation,
    generation) go through here.
    """
    act = _NP_ACTIVATIONS[activation]
    h = np.atleast_2d(np.asarray(x, dtype=np.float64))
    indices = _layer_indices(params, prefix)
    for i in indices:
        w = params[f"{prefix}W{i}"].values
        b = params[f"{prefix}b{i}"].values
        if h.shape[1] != w.shape[0]:
            raise ConfigError(
                f"layer {prefix}W{i}: input has {h.shape[1]} features, "
                f"weight expects {w.shape[0]}"
            )
        h = h @ w
        h += b
        if i != indices[-1]:
            h = act(h)
    return h


def init_mlp(rng, sizes, activation, store=None, prefix="", final_scale=1.0):
    """Create MLP parameters for the given layer widths.

    Weights use 1/sqrt(fan_in) scaling for tanh and sqrt(2/fan_in) for
    relu/silu; biases start at zero. `final_scale` shrinks the output layer
    (useful for policy heads).
    """
    if store is None:
        store = ParamStore()
    if len(sizes) < 2:
        raise ConfigError("an MLP needs at least an input and an output width")
    n_layers = len(sizes) - 1
    for i in range(n_layers):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        std = np.sqrt(1.0 / fan_in) if activation == "tanh" else np.sqrt(2.0 / fan_in)
        if i == n_layers - 1:
            std *= final_scale
        store.add(f"{prefix}W{i}", rng.standard_normal((fan_in, fan_out)) * std)
        store.add(f"{prefix}b{i}", np.zeros(fan_out))
    return store
