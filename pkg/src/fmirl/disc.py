"""Adversarial discriminator built from class-conditioned flow distances.

For a pair (s, a) the discriminator value is a softmax over negative
temperature-scaled distances to the expert (c=1) and agent (c=0)
distributions:

    D(s,a) = exp(-tau * Dist_1) / (exp(-tau * Dist_1) + exp(-tau * Dist_0))
           = sigmoid(z),   z = tau * (Dist_0 - Dist_1),

so the logit z *is* the shaped reward log D - log(1 - D). All log terms are
computed through softplus in logit space; both condition branches of one pair
reuse the same (t, x0) draws, which removes most Monte-Carlo noise from the
difference that determines D.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ConfigError, NumericalError, UsageError
from .flow import _field_error_sq, dist_batch, make_draws

log = logging.getLogger(__name__)

# clamp on the logit, equivalent to clamping D into [1e-8, 1 - 1e-8]
LOGIT_CLIP = float(np.log((1.0 - 1e-8) / 1e-8))


@dataclass
class DiscConfig:
    temperature: float = 0.1
    s_train: int = 1
    s_reward: int = 100
    lr: float = 1e-4
    fit_lr: float = 1e-3  # class-conditional CFM fit of the teacher; 0 disables
    expert_weight: float = 1.0
    agent_weight: float = -1.0
    update_epochs: int = 1
    minibatch: int = 256

    def __post_init__(self):
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if self.s_train < 1 or self.s_reward < 1:
            raise ConfigError("sample counts must be >= 1")


@dataclass
class RewardOutput:
    d: float
    r: float
    dist_expert: float
    dist_agent: float


def _pair_draws(rng, n_pairs, n_samples, cfg_flow):
    """Stratified draws shared by the two condition branches of each pair."""
    return make_draws(rng, (n_pairs, n_samples), cfg_flow.joint_dim, cfg_flow)


def _joint(states, actions):
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    if states.shape[0] != actions.shape[0]:
        raise UsageError("state and action batches differ in length")
    return np.concatenate([states, actions], axis=1)


def _sigmoid_scalar(z):
    if z >= 0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


def disc_forward(net, s, a, n_samples, rng, cfg: DiscConfig) -> RewardOutput:
    """Evaluate the discriminator on one normalized pair (no gradients)."""
    x1 = _joint(s, a)
    t, x0 = _pair_draws(rng, 1, n_samples, net.cfg)
    dist_expert = float(dist_batch(net, x1, 1, t, x0)[0])
    dist_agent = float(dist_batch(net, x1, 0, t, x0)[0])
    z = cfg.temperature * (dist_agent - dist_expert)
    d = _sigmoid_scalar(np.clip(z, -LOGIT_CLIP, LOGIT_CLIP))
    d = float(np.clip(d, 1e-8, 1.0 - 1e-8))
    return RewardOutput(d=d, r=float(z), dist_expert=dist_expert, dist_agent=dist_agent)


def reward(net, states, actions, rng, cfg: DiscConfig, n_samples=None):
    """Shaped rewards for a batch of normalized pairs.

    Computed as tau * (Dist_0 - Dist_1), which equals log D - log(1 - D)
    algebraically but never overflows. Returns (rewards, dist_expert,
    dist_agent), each (B,).
    """
    x1 = _joint(states, actions)
    s = cfg.s_reward if n_samples is None else n_samples
    t, x0 = _pair_draws(rng, x1.shape[0], s, net.cfg)
    dist_expert = dist_batch(net, x1, 1, t, x0)
    dist_agent = dist_batch(net, x1, 0, t, x0)
    rewards = cfg.temperature * (dist_agent - dist_expert)
    if not np.all(np.isfinite(rewards)):
        bad = int(np.flatnonzero(~np.isfinite(rewards))[0])
        raise NumericalError(f"non-finite reward for pair {bad}")
    return rewards, dist_expert, dist_agent


def _logits_with_grad(net, x1, rng, cfg: DiscConfig, draws=None):
    """Batch logits z = tau * (Dist_0 - Dist_1) as a graph Tensor (B,)."""
    b = x1.shape[0]
    if draws is None:
        t, x0 = _pair_draws(rng, b, cfg.s_train, net.cfg)
    else:
        t, x0 = draws
    s = t.shape[1]

    def branch(c):
        err = _field_error_sq(net, x1, t, x0, c)
        return nn.tmean(nn.reshape(err, (b, s)), axis=1)

    return nn.mul(nn.sub(branch(0), branch(1)), cfg.temperature)


def _clip_logits(z):
    # the relu-composed clip would swallow NaN; leave non-finite logits
    # unclipped so the divergence guard in disc_update can see them
    if not np.all(np.isfinite(z.values)):
        return z
    return nn.clip(z, -LOGIT_CLIP, LOGIT_CLIP)


def disc_loss(net, expert_states, expert_actions, agent_states, agent_actions,
              rng, cfg: DiscConfig, draws=None):
    """Discriminator loss to minimize over the field parameters.

    loss = w_E * mean_expert[log(1 - D)] - w_A * mean_agent[log D]

    with log(1-D) = -softplus(z) and log D = -softplus(-z). The agent term
    enters negated so the defaults (w_E, w_A) = (+1, -1) recover the plain
    adversarial objective mean_E[log(1-D)] + mean_A[log D].
    """
    if len(np.atleast_1d(expert_states)) == 0 or len(np.atleast_1d(agent_states)) == 0:
        raise UsageError("disc_loss requires non-empty expert and agent batches")
    x1_e = _joint(expert_states, expert_actions)
    x1_a = _joint(agent_states, agent_actions)
    draws_e, draws_a = (None, None) if draws is None else draws
    z_e = _clip_logits(_logits_with_grad(net, x1_e, rng, cfg, draws_e))
    z_a = _clip_logits(_logits_with_grad(net, x1_a, rng, cfg, draws_a))
    term_e = nn.tmean(nn.mul(nn.softplus(z_e), -1.0))
    term_a = nn.tmean(nn.mul(nn.softplus(nn.mul(z_a, -1.0)), -1.0))
    return nn.add(nn.mul(term_e, cfg.expert_weight), nn.mul(term_a, -cfg.agent_weight))


def disc_update(net, opt, expert_states, expert_actions, agent_states, agent_actions,
                rng, cfg: DiscConfig):
    """One gradient step on the discriminator loss; returns the pre-step loss.

    A non-finite loss skips the step and logs a warning instead of raising.
    """
    loss = disc_loss(net, expert_states, expert_actions, agent_states, agent_actions,
                     rng, cfg)
    value = loss.item()
    if not np.isfinite(value):
        log.warning("discriminator loss is non-finite (%r); step skipped", value)
        net.params.zero_grad()
        return value
    loss.backward()
    nn.adam_step(net.params, opt)
    return value
