"""Comparison methods sharing the agent/env/harness infrastructure.

* ConditionalFlowPolicy: behavior-cloned flow policy over the action space,
  conditioned on the (normalized) state and flow time. Purely offline.
* MlpDiscriminator: classic adversarial-imitation discriminator, a small
  tanh MLP mapping (s, a) to a logit. Its objective uses the opposite label
  convention from the flow discriminator (expert high), so its logit is
  already the shaped reward log D - log(1-D).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import NumericalError, UsageError
from .flow import time_features

log = logging.getLogger(__name__)


@dataclass
class FlowPolicyNetConfig:
    state_dim: int
    action_dim: int
    noise_scale: float = 0.5
    num_steps: int = 100
    hidden_width: int = 128
    hidden_depth: int = 4
    activation: str = "silu"
    time_encoding: str = "fourier2"


class ConditionalFlowPolicy:
    """Velocity field over actions, v(a_t | s, t), with bound-based scaling.

    Actions are mapped to [-1, 1] via the environment bounds before training
    so the flow start noise and the targets share a scale; generation maps
    back and clips.
    """

    def __init__(self, cfg: FlowPolicyNetConfig, action_low, action_high, rng):
        self.cfg = cfg
        self.action_low = np.asarray(action_low, dtype=np.float64)
        self.action_high = np.asarray(action_high, dtype=np.float64)
        self.center = (self.action_low + self.action_high) / 2.0
        self.half = (self.action_high - self.action_low) / 2.0
        time_dim = time_features(np.zeros(1), cfg.time_encoding).shape[1]
        in_dim = cfg.action_dim + cfg.state_dim + time_dim
        sizes = [in_dim] + [cfg.hidden_width] * cfg.hidden_depth + [cfg.action_dim]
        self.params = nn.init_mlp(rng, sizes, cfg.activation, prefix="fp/")

    def scale_actions(self, actions):
        return (np.asarray(actions, dtype=np.float64) - self.center) / self.half

    def unscale_actions(self, scaled):
        return self.center + self.half * np.asarray(scaled, dtype=np.float64)

    def _features(self, a_t, states, t):
        a_t = np.atleast_2d(a_t)
        n = a_t.shape[0]
        return np.concatenate(
            [a_t, np.atleast_2d(states),
             time_features(np.broadcast_to(t, (n,)), self.cfg.time_encoding)],
            axis=1,
        )

    def forward(self, a_t, states, t):
        feats = self._features(a_t, states, t)
        return nn.mlp_forward(self.params, feats, self.cfg.activation, prefix="fp/")

    def forward_np(self, a_t, states, t):
        feats = self._features(a_t, states, t)
        return nn.mlp_forward_np(self.params, feats, self.cfg.activation, prefix="fp/")


def fp_bc_loss(policy: ConditionalFlowPolicy, states, actions_scaled, rng, draws=None):
    """Flow-matching regression loss over the action path, state as condition."""
    states = np.atleast_2d(states)
    x1 = np.atleast_2d(actions_scaled)
    b = x1.shape[0]
    if b == 0:
        raise UsageError("fp_bc_loss requires a non-empty batch")
    if draws is None:
        t = rng.random(b)
        x0 = rng.standard_normal(x1.shape) * policy.cfg.noise_scale
    else:
        t, x0 = draws
    x_t = (1.0 - t)[:, None] * x0 + t[:, None] * x1
    u = x1 - x0
    v = policy.forward(x_t, states, t)
    return nn.tmean(nn.tsum(nn.square(nn.sub(v, nn.Tensor(u))), axis=1))


def train_fp_bc(states, actions, cfg: FlowPolicyNetConfig, action_low, action_high,
                rng, train_steps, batch_size, lr, hook=None, log_every=100):
    """Fit the flow policy on expert pairs; returns (policy, loss history).

    `states` must already be normalized; actions are raw and get scaled by
    the bounds internally. `hook(step, policy, loss)` runs every `log_every`
    steps (the harness uses it for periodic evaluation).
    """
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    if states.shape[0] == 0:
        raise UsageError("train_fp_bc requires a non-empty dataset")
    policy = ConditionalFlowPolicy(cfg, action_low, action_high, rng)
    scaled = policy.scale_actions(actions)
    opt = nn.AdamState(policy.params, lr=lr)
    n = states.shape[0]
    losses = []
    for step_i in range(train_steps):
        idx = rng.integers(0, n, size=min(batch_size, n))
        loss = fp_bc_loss(policy, states[idx], scaled[idx], rng)
        loss.backward()
        nn.adam_step(policy.params, opt)
        if step_i % log_every == 0 or step_i == train_steps - 1:
            losses.append((step_i, loss.item()))
            if hook is not None:
                hook(step_i, policy, loss.item())
    return policy, losses


def fp_act(policy: ConditionalFlowPolicy, states, rng):
    """Generate actions by Euler integration of the action flow, clipped."""
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    n = states.shape[0]
    x = rng.standard_normal((n, policy.cfg.action_dim)) * policy.cfg.noise_scale
    dt = 1.0 / policy.cfg.num_steps
    for k in range(policy.cfg.num_steps):
        v = policy.forward_np(x, states, k * dt)
        x = x + dt * v
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite action from flow policy generation")
    return np.clip(policy.unscale_actions(x), policy.action_low, policy.action_high)


class MlpDiscriminator:
    """2x64 tanh network mapping a normalized (s, a) pair to a logit."""

    def __init__(self, state_dim, action_dim, rng, hidden=64):
        self.params = nn.init_mlp(
            rng, [state_dim + action_dim, hidden, hidden, 1], "tanh", prefix="d/"
        )

    def logits(self, states, actions):
        feats = np.concatenate([np.atleast_2d(states), np.atleast_2d(actions)], axis=1)
        out = nn.mlp_forward(self.params, feats, "tanh", prefix="d/")
        return nn.reshape(out, (-1,))

    def reward(self, states, actions):
        """Shaped reward log D - log(1-D) = the raw logit (expert-high)."""
        with nn.no_grad():
            return self.logits(states, actions).values


def gail_objective(disc: MlpDiscriminator, expert_states, expert_actions,
                   agent_states, agent_actions):
    """E_expert[log D] + E_agent[log(1-D)], to be ascended over the logits."""
    z_e = disc.logits(expert_states, expert_actions)
    z_a = disc.logits(agent_states, agent_actions)
    term_e = nn.tmean(nn.mul(nn.softplus(nn.mul(z_e, -1.0)), -1.0))
    term_a = nn.tmean(nn.mul(nn.softplus(z_a), -1.0))
    return nn.add(term_e, term_a)


def gail_round(disc: MlpDiscriminator, opt, expert_states, expert_actions,
               agent_states, agent_actions):
    """One ascent step on the discriminator objective; returns its pre-step
    value. Non-finite objectives skip the step with a warning."""
    if len(np.atleast_1d(expert_states)) == 0 or len(np.atleast_1d(agent_states)) == 0:
        raise UsageError("gail_round requires non-empty batches")
    objective = gail_objective(disc, expert_states, expert_actions,
                               agent_states, agent_actions)
    value = objective.item()
    if not np.isfinite(value):
        log.warning("discriminator objective is non-finite (%r); step skipped", value)
        disc.params.zero_grad()
        return value
    loss = nn.mul(objective, -1.0)
    loss.backward()
    nn.adam_step(disc.params, opt)
    return value
