"""Gaussian MLP student policy and its regularized policy-gradient update.

The policy is a tanh-squashed Gaussian with a state-independent log-std and a
separate value head. Updates maximize the clipped surrogate plus an entropy
bonus, minus a value loss and minus beta times the squared gap between the
squashed policy mean at generated states and the generated actions (the
distillation term fed by the flow generator).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ConfigError, GenerationError, UsageError
from .flow import generate_batch

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class PolicyObjectiveConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 10
    minibatch: int = 256
    beta: float = 2.0
    reg_batch_size: int = 256
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    lr: float = 3e-4

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"gamma must be in [0, 1), got {self.gamma}")
        if not 0.0 < self.clip_eps < 1.0:
            raise ConfigError(f"clip_eps must be in (0, 1), got {self.clip_eps}")
        if self.beta < 0.0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")


def _log1m_tanh2(u):
    """log(1 - tanh(u)^2), numerically stable for large |u|."""
    return 2.0 * (np.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


class StudentPolicy:
    def __init__(self, state_dim, action_dim, action_low, action_high, rng,
                 hidden=(64, 64)):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.action_low = np.asarray(action_low, dtype=np.float64)
        self.action_high = np.asarray(action_high, dtype=np.float64)
        self.center = (self.action_low + self.action_high) / 2.0
        self.half = (self.action_high - self.action_low) / 2.0
        self.hidden = tuple(hidden)
        store = nn.ParamStore()
        nn.init_mlp(rng, [state_dim, *hidden, action_dim], "tanh",
                    store=store, prefix="pi/", final_scale=0.01)
        nn.init_mlp(rng, [state_dim, *hidden, 1], "tanh", store=store, prefix="vf/")
        store.add("log_std", np.full(action_dim, -0.5))
        self.params = store

    # --- numpy fast paths (no graph) -----------------------------------
    def _forward_np(self, states, prefix):
        return nn.mlp_forward_np(self.params, states, "tanh", prefix=prefix)

    def log_std_np(self):
        return np.clip(self.params["log_std"].values, LOG_STD_MIN, LOG_STD_MAX)

    def values_np(self, states):
        return self._forward_np(states, "vf/")[:, 0]

    def mean_action(self, states):
        """Deterministic squashed mean, used for evaluation."""
        mu = self._forward_np(states, "pi/")
        return self.center + self.half * np.tanh(mu)

    def logp_np(self, states, u):
        """Log-density of the squashed action a = center + half*tanh(u)."""
        mu = self._forward_np(states, "pi/")
        log_std = self.log_std_np()
        z = (u - mu) * np.exp(-log_std)
        gauss = (-0.5 * z * z - log_std - 0.5 * LOG_2PI).sum(axis=1)
        squash = (np.log(self.half) + _log1m_tanh2(u)).sum(axis=1)
        return gauss - squash

    def act(self, states, rng):
        """Sample actions; returns (action, pre-squash sample, logp, value)."""
        states = np.atleast_2d(states)
        mu = self._forward_np(states, "pi/")
        std = np.exp(self.log_std_np())
        u = mu + std * rng.standard_normal(mu.shape)
        a = self.center + self.half * np.tanh(u)
        return a, u, self.logp_np(states, u), self.values_np(states)

    # --- graph paths ----------------------------------------------------
    def _log_std_tensor(self):
        return nn.clip(self.params["log_std"], LOG_STD_MIN, LOG_STD_MAX)

    def evaluate(self, states, u):
        """Differentiable logp/entropy/value at stored pre-squash samples."""
        states = np.atleast_2d(states)
        mu = nn.mlp_forward(self.params, states, "tanh", prefix="pi/")
        log_std = self._log_std_tensor()
        inv_std = nn.exp(nn.mul(log_std, -1.0))
        z = nn.mul(nn.sub(nn.Tensor(u), mu), inv_std)
        gauss = nn.tsum(
            nn.sub(nn.mul(nn.square(z), -0.5), nn.add(log_std, 0.5 * LOG_2PI)), axis=1
        )
        squash = (np.log(self.half) + _log1m_tanh2(u)).sum(axis=1)
        logp = nn.sub(gauss, nn.Tensor(squash))
        entropy = nn.add(nn.tsum(log_std), 0.5 * self.action_dim * (1.0 + LOG_2PI))
        values = nn.reshape(nn.mlp_forward(self.params, states, "tanh", prefix="vf/"), (-1,))
        return logp, entropy, values

    def squashed_mean(self, states):
        """Differentiable squashed mean at the given (generated) states."""
        mu = nn.mlp_forward(self.params, np.atleast_2d(states), "tanh", prefix="pi/")
        return nn.add(nn.mul(nn.tanh(mu), self.half), self.center)


class RolloutBuffer:
    """Fixed-horizon on-policy storage, (T, N, ...) with N parallel envs."""

    def __init__(self, horizon, n_envs, state_dim, action_dim):
        self.horizon = horizon
        self.n_envs = n_envs
        self.states = np.zeros((horizon, n_envs, state_dim))
        self.actions = np.zeros((horizon, n_envs, action_dim))
        self.raw_u = np.zeros((horizon, n_envs, action_dim))
        self.logp = np.zeros((horizon, n_envs))
        self.values = np.zeros((horizon, n_envs))
        self.rewards = np.zeros((horizon, n_envs))
        self.dones = np.zeros((horizon, n_envs))
        self.last_values = np.zeros(n_envs)
        self.advantages = None
        self.returns = None

    def set_step(self, t, states, actions, raw_u, logp, values, dones):
        self.states[t] = states
        self.actions[t] = actions
        self.raw_u[t] = raw_u
        self.logp[t] = logp
        self.values[t] = values
        self.dones[t] = dones

    def size(self):
        return self.horizon * self.n_envs

    def flat(self):
        n = self.size()
        out = {
            "states": self.states.reshape(n, -1),
            "actions": self.actions.reshape(n, -1),
            "raw_u": self.raw_u.reshape(n, -1),
            "logp": self.logp.reshape(n),
        }
        if self.advantages is not None:
            out["advantages"] = self.advantages.reshape(n)
            out["returns"] = self.returns.reshape(n)
        return out


def compute_gae(buffer: RolloutBuffer, gamma, lam):
    """Standard GAE(lambda) over the buffer; returns (advantages, returns).

    Bootstraps with buffer.last_values and cuts traces at done flags (auto
    reset environments store the next episode's first state at t+1, so the
    mask also prevents bootstrapping across episode boundaries).
    """
    horizon = buffer.horizon
    adv = np.zeros_like(buffer.rewards)
    next_adv = np.zeros(buffer.n_envs)
    for t in range(horizon - 1, -1, -1):
        nonterminal = 1.0 - buffer.dones[t]
        next_values = buffer.values[t + 1] if t < horizon - 1 else buffer.last_values
        delta = buffer.rewards[t] + gamma * next_values * nonterminal - buffer.values[t]
        next_adv = delta + gamma * lam * nonterminal * next_adv
        adv[t] = next_adv
    returns = adv + buffer.values
    buffer.advantages = adv
    buffer.returns = returns
    return adv, returns


def regularization_batch(net, n, rng, norm_clip_bounds):
    """Generate n expert-conditioned pairs from the flow model.

    Returns (states, actions): states stay in the normalized space the flow
    was trained in; actions are clipped to the environment bounds. Retries
    failed generations up to 3 times before propagating the error.
    """
    action_low, action_high = norm_clip_bounds
    action_dim = len(np.atleast_1d(action_low))
    state_dim = net.cfg.joint_dim - action_dim
    if n == 0:
        return np.zeros((0, state_dim)), np.zeros((0, action_dim))
    last_err = None
    for _ in range(3):
        try:
            joints = generate_batch(net, 1, net.cfg, rng, n)
        except GenerationError as e:
            last_err = e
            continue
        states = joints[:, :state_dim]
        actions = np.clip(joints[:, state_dim:], action_low, action_high)
        return states, actions
    raise last_err


def minibatch_loss(policy, mb, reg_states, reg_actions, cfg: PolicyObjectiveConfig):
    """Build the scalar loss minimized per minibatch; returns (loss, stats).

    loss = -surrogate + value_coef * value_loss - entropy_coef * entropy
           + beta * mean ||squashed_mean(s_G) - a_G||^2
    """
    logp, entropy, values = policy.evaluate(mb["states"], mb["raw_u"])
    ratio = nn.exp(nn.sub(logp, nn.Tensor(mb["logp"])))
    adv = nn.Tensor(mb["advantages"])
    surr = nn.minimum(
        nn.mul(ratio, adv),
        nn.mul(nn.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps), adv),
    )
    policy_loss = nn.mul(nn.tmean(surr), -1.0)
    value_loss = nn.tmean(nn.square(nn.sub(values, nn.Tensor(mb["returns"]))))
    loss = nn.sub(
        nn.add(policy_loss, nn.mul(value_loss, cfg.value_coef)),
        nn.mul(entropy, cfg.entropy_coef),
    )
    reg_loss_val = 0.0
    if cfg.beta > 0.0 and reg_states is not None and len(reg_states) > 0:
        gap = nn.sub(policy.squashed_mean(reg_states), nn.Tensor(reg_actions))
        reg_loss = nn.tmean(nn.tsum(nn.square(gap), axis=1))
        loss = nn.add(loss, nn.mul(reg_loss, cfg.beta))
        reg_loss_val = reg_loss.item()
    ratio_np = ratio.values
    stats = {
        "policy_loss": policy_loss.item(),
        "value_loss": value_loss.item(),
        "entropy": entropy.item(),
        "reg_loss": reg_loss_val,
        "ratio_mean": float(ratio_np.mean()),
        "clip_fraction": float(np.mean(np.abs(ratio_np - 1.0) > cfg.clip_eps)),
    }
    return loss, stats


def normalize_advantages(buffer: RolloutBuffer):
    adv = buffer.advantages
    std = adv.std()
    if std > 1e-12:
        buffer.advantages = (adv - adv.mean()) / std
    else:
        buffer.advantages = adv - adv.mean()


def policy_update(policy, opt, buffer, reg_states, reg_actions,
                  cfg: PolicyObjectiveConfig, rng):
    """Multi-epoch minibatch update on one rollout; returns aggregate stats.

    Epochs stop early when the mean importance ratio of a minibatch leaves
    [0.5, 2], a coarse guard against runaway updates.
    """
    if buffer.advantages is None:
        raise UsageError("compute_gae must run before policy_update")
    normalize_advantages(buffer)
    flat = buffer.flat()
    n = buffer.size()
    agg = []
    stopped = False
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = order[start:start + cfg.minibatch]
            mb = {k: v[idx] for k, v in flat.items()}
            loss, stats = minibatch_loss(policy, mb, reg_states, reg_actions, cfg)
            if not 0.5 <= stats["ratio_mean"] <= 2.0:
                stopped = True
                break
            loss.backward()
            nn.adam_step(policy.params, opt)
            agg.append(stats)
        if stopped:
            break
    keys = ("policy_loss", "value_loss", "entropy", "reg_loss", "clip_fraction")
    out = {k: float(np.mean([s[k] for s in agg])) if agg else 0.0 for k in keys}
    out["updates"] = len(agg)
    out["early_stop"] = stopped
    return out
