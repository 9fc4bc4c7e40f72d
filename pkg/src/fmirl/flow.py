"""Conditional flow model over joint state-action vectors.

The model transports a Gaussian start distribution N(0, noise_scale^2 I) to
the data distribution along the straight-line path

    x_t = (1 - t) * x0 + t * x1,   target velocity u = x1 - x0,

with a velocity network v(x_t, t | c) conditioned on flow time t and a binary
class label c (1 = expert data, 0 = agent data). The same network serves
three duties: regression target for the training loss, per-point
distribution distance (`estimate_dist`, a Monte-Carlo average of the squared
regression error at a fixed target), and generator (`euler_generate`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ConfigError, DataError, GenerationError, UsageError

TIME_ENCODINGS = {"raw": 1, "fourier2": 5}
COND_ENCODINGS = {"onehot": 2, "embed4": 4}


@dataclass
class FlowConfig:
    joint_dim: int
    noise_scale: float = 0.5
    num_steps: int = 100
    time_encoding: str = "fourier2"
    condition_encoding: str = "embed4"
    hidden_width: int = 128
    hidden_depth: int = 4
    activation: str = "silu"

    def __post_init__(self):
        if self.joint_dim < 2:
            raise ConfigError(f"joint_dim must be >= 2, got {self.joint_dim}")
        if self.num_steps < 1:
            raise ConfigError(f"num_steps must be >= 1, got {self.num_steps}")
        if not self.noise_scale > 0:
            raise ConfigError(f"noise_scale must be > 0, got {self.noise_scale}")
        if self.time_encoding not in TIME_ENCODINGS:
            raise ConfigError(f"unknown time_encoding {self.time_encoding!r}")
        if self.condition_encoding not in COND_ENCODINGS:
            raise ConfigError(f"unknown condition_encoding {self.condition_encoding!r}")

    @property
    def time_dim(self):
        return TIME_ENCODINGS[self.time_encoding]

    @property
    def cond_dim(self):
        return COND_ENCODINGS[self.condition_encoding]


@dataclass
class PathSample:
    x0: np.ndarray
    x1: np.ndarray
    t: float
    x_t: np.ndarray
    u: np.ndarray


def time_features(t, encoding):
    """Encode flow times (N,) as network features (N, time_dim)."""
    t = np.asarray(t, dtype=np.float64)
    if encoding == "raw":
        return t[:, None]
    two_pi_t = 2.0 * np.pi * t
    return np.stack(
        [t, np.sin(two_pi_t), np.cos(two_pi_t), np.sin(2 * two_pi_t), np.cos(2 * two_pi_t)],
        axis=1,
    )


def _onehot(c, n):
    c = np.broadcast_to(np.asarray(c, dtype=np.int64), (n,))
    if not np.all((c == 0) | (c == 1)):
        raise UsageError("condition labels must be 0 or 1")
    out = np.zeros((n, 2))
    out[np.arange(n), c] = 1.0
    return out


class VectorFieldNet:
    """MLP velocity field v(x, t | c) with fixed time/condition encodings.

    The class embedding (when enabled) is realized as onehot(c) @ E with a
    learned (2, 4) matrix E, so it trains through the ordinary matmul op.
    """

    def __init__(self, cfg: FlowConfig, rng):
        self.cfg = cfg
        in_dim = cfg.joint_dim + cfg.time_dim + cfg.cond_dim
        sizes = [in_dim] + [cfg.hidden_width] * cfg.hidden_depth + [cfg.joint_dim]
        self.params = nn.init_mlp(rng, sizes, cfg.activation, prefix="v/")
        if cfg.condition_encoding == "embed4":
            self.params.add("embed", rng.standard_normal((2, 4)) * 0.1)

    def forward(self, x_t, t, c):
        """Velocity at (x_t, t) under condition c; returns a Tensor (N, joint_dim)."""
        x_t = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
        n = x_t.shape[0]
        base = np.concatenate([x_t, time_features(np.broadcast_to(t, (n,)), self.cfg.time_encoding)], axis=1)
        onehot = nn.Tensor(_onehot(c, n))
        if self.cfg.condition_encoding == "embed4":
            cond = nn.matmul(onehot, self.params["embed"])
        else:
            cond = onehot
        inp = nn.concat([nn.Tensor(base), cond], axis=1)
        return nn.mlp_forward(self.params, inp, self.cfg.activation, prefix="v/")

    def forward_np(self, x_t, t, c):
        """Graph-free twin of `forward` for inference-heavy paths."""
        x_t = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
        n = x_t.shape[0]
        onehot = _onehot(c, n)
        cond = onehot @ self.params["embed"].values \
            if self.cfg.condition_encoding == "embed4" else onehot
        inp = np.concatenate(
            [x_t, time_features(np.broadcast_to(t, (n,)), self.cfg.time_encoding), cond],
            axis=1,
        )
        return nn.mlp_forward_np(self.params, inp, self.cfg.activation, prefix="v/")


def _check_target(x1, cfg):
    x1 = np.asarray(x1, dtype=np.float64)
    if not np.all(np.isfinite(x1)):
        raise DataError("target vector contains non-finite values")
    if x1.shape[-1] != cfg.joint_dim:
        raise DataError(
            f"target dimension {x1.shape[-1]} != joint_dim {cfg.joint_dim}"
        )
    return x1


def sample_path(x1, rng, cfg: FlowConfig) -> PathSample:
    """Draw one (t, x0) pair and build the straight-line interpolant."""
    x1 = _check_target(x1, cfg)
    t = float(rng.random())
    x0 = rng.standard_normal(cfg.joint_dim) * cfg.noise_scale
    x_t = (1.0 - t) * x0 + t * x1
    return PathSample(x0=x0, x1=x1, t=t, x_t=x_t, u=x1 - x0)


def make_draws(rng, size, dim, cfg: FlowConfig, stratified=True):
    """Draw flow times and start points, shape (..., size) and (..., size, dim).

    Stratified times place one draw in each of `size` equal bins with a
    uniform jitter of one bin width, which lowers the variance of the
    Monte-Carlo distance estimate; `size` leading batch shapes are allowed by
    passing a tuple ``size=(batch, S)`` where stratification runs over the
    last axis.
    """
    shape = size if isinstance(size, tuple) else (size,)
    s = shape[-1]
    if stratified:
        t = (np.arange(s) + rng.random(shape)) / s
    else:
        t = rng.random(shape)
    x0 = rng.standard_normal(shape + (dim,)) * cfg.noise_scale
    return t, x0


def _field_error_sq(net, x1, t, x0, c):
    """Per-draw squared regression error ||v(x_t,t|c) - (x1-x0)||^2, flattened.

    `x1` is (B, d); `t` is (B, S); `x0` is (B, S, d). Returns a Tensor (B*S,).
    """
    b, s = t.shape
    x1e = x1[:, None, :]
    x_t = ((1.0 - t)[..., None] * x0 + t[..., None] * x1e).reshape(b * s, -1)
    u = (x1e - x0).reshape(b * s, -1)
    c_arr = np.asarray(c)
    c_rows = np.repeat(c_arr, s) if c_arr.ndim else np.broadcast_to(c_arr, (b * s,))
    v = net.forward(x_t, t.reshape(-1), c_rows)
    return nn.tsum(nn.square(nn.sub(v, nn.Tensor(u))), axis=1)


def split_batch(batch):
    """Normalize a batch of (joint vector, class) pairs into two arrays.

    Accepts a list of (vector, c) tuples or an already-split (X1, C) pair.
    """
    if isinstance(batch, tuple) and len(batch) == 2 and not isinstance(batch[0], tuple):
        x1, c = batch
    else:
        if len(batch) == 0:
            return np.zeros((0, 0)), np.zeros(0, dtype=np.int64)
        x1 = np.stack([np.asarray(v, dtype=np.float64) for v, _ in batch])
        c = np.array([ci for _, ci in batch], dtype=np.int64)
    return np.atleast_2d(np.asarray(x1, dtype=np.float64)), np.asarray(c)


def cfm_loss(net, batch, rng, cfg: FlowConfig, draws=None):
    """Training loss: mean over the batch of the squared velocity error.

    `batch` is a list of (joint vector, class) pairs or a pre-split (X1, C)
    array pair. One fresh (t, x0) draw per batch element (pass
    `draws=(t, x0)` with shapes (B,) and (B, d) to pin them, e.g. for
    finite-difference checks). Returns a scalar Tensor differentiable w.r.t.
    the field parameters.
    """
    x1, c = split_batch(batch)
    if x1.shape[0] == 0:
        raise UsageError("cfm_loss requires a non-empty batch")
    x1 = _check_target(x1, cfg)
    b = x1.shape[0]
    if draws is None:
        t = rng.random(b)
        x0 = rng.standard_normal((b, cfg.joint_dim)) * cfg.noise_scale
    else:
        t, x0 = draws
        t = np.asarray(t, dtype=np.float64)
        x0 = np.asarray(x0, dtype=np.float64)
    err = _field_error_sq(net, x1, t[:, None], x0[:, None, :], c)
    return nn.tmean(err)


_CHUNK_ROWS = 32768


def _forward_values(net, x_t, t, c):
    if hasattr(net, "forward_np"):
        return net.forward_np(x_t, t, c)
    with nn.no_grad():
        return np.array(net.forward(x_t, t, c).values, copy=True)


def _dist_values_np(net, x1, c, t, x0):
    """Per-draw squared errors without graph recording, chunked row-wise.

    Chunking keeps the (rows, width) activations cache-sized; reward batches
    can reach ~10^5 rows.
    """
    b, s = t.shape
    d = x1.shape[1]
    rows = b * s
    x1r = np.repeat(x1, s, axis=0)
    tt = t.reshape(rows)
    x0r = x0.reshape(rows, d)
    c_arr = np.asarray(c)
    c_rows = np.repeat(c_arr, s) if c_arr.ndim else np.broadcast_to(c_arr, (rows,))
    out = np.empty(rows)
    for start in range(0, rows, _CHUNK_ROWS):
        sl = slice(start, min(start + _CHUNK_ROWS, rows))
        ts = tt[sl]
        x_t = (1.0 - ts)[:, None] * x0r[sl] + ts[:, None] * x1r[sl]
        v = _forward_values(net, x_t, ts, c_rows[sl])
        v -= x1r[sl] - x0r[sl]
        v *= v
        out[sl] = v.sum(axis=1)
    return out.reshape(b, s)


def dist_draw_values(net, x1, c, t, x0):
    """Per-draw squared errors for one target (S,), computed without gradients."""
    return _dist_values_np(net, x1[None, :], c, t[None, :], x0[None, :, :])[0]


def estimate_dist(net, s, a, c, n_samples, rng, cfg: FlowConfig, record_grad=False, draws=None):
    """Monte-Carlo distance of the pair (s, a) to the class-c distribution.

    Averages ||v(x_t,t|c) - (x1-x0)||^2 over `n_samples` stratified (t, x0)
    draws with x1 = concat(s, a). Returns a float, or a scalar Tensor when
    `record_grad` is set.
    """
    if n_samples < 1:
        raise UsageError(f"n_samples must be >= 1, got {n_samples}")
    x1 = _check_target(np.concatenate([np.asarray(s, dtype=np.float64).ravel(),
                                       np.asarray(a, dtype=np.float64).ravel()]), cfg)
    if draws is None:
        t, x0 = make_draws(rng, n_samples, cfg.joint_dim, cfg)
    else:
        t, x0 = draws
    if record_grad:
        err = _field_error_sq(net, x1[None, :], t[None, :], x0[None, :, :], c)
        return nn.tmean(err)
    return float(np.mean(dist_draw_values(net, x1, c, t, x0)))


def dist_batch(net, x1, c, t, x0):
    """No-gradient distances for a batch of targets.

    `x1` is (B, d), `t` is (B, S), `x0` is (B, S, d); returns (B,).
    """
    return _dist_values_np(net, x1, c, t, x0).mean(axis=1)


def euler_generate(net, c, cfg: FlowConfig, rng):
    """Generate one joint vector by explicit Euler integration of the field."""
    return generate_batch(net, c, cfg, rng, 1)[0]


def generate_batch(net, c, cfg: FlowConfig, rng, n):
    """Integrate dx/dt = v(x, t | c) from x0 ~ N(0, noise_scale^2 I), (n, d)."""
    x = rng.standard_normal((n, cfg.joint_dim)) * cfg.noise_scale
    dt = 1.0 / cfg.num_steps
    for k in range(cfg.num_steps):
        v = _forward_values(net, x, np.full(n, k * dt), c)
        x = x + dt * v
        if not np.all(np.isfinite(x)):
            raise GenerationError(
                f"non-finite state during generation at step {k}", step=k
            )
    return x
