"""Training loops for all four methods.

The online methods (fmirl, gail, ppo_true_reward) share one round structure
so env-step and update budgets stay identical across methods:

    roll out the student for rollout_horizon steps in n_envs parallel envs
    -> score the rollout (flow discriminator / MLP discriminator / true
       reward; rewards are recomputed for every fresh rollout)
    -> policy update (with the generator regularization term for fmirl)
    -> discriminator update (one pass over the rollout per round)

fmirl follows policy-update-before-discriminator-update ordering by default;
`update_order = disc_first` swaps the two for study. fp_bc trains offline and
never touches the environment (asserted).
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from . import nn
from .agent import (PolicyObjectiveConfig, RolloutBuffer, StudentPolicy, compute_gae,
                    policy_update, regularization_batch)
from .baselines import (FlowPolicyNetConfig, MlpDiscriminator, fp_act, gail_round,
                        train_fp_bc)
from .checkpoints import save_checkpoint
from .config import RunConfig
from .data import Trajectory, load_pairs, write_trajectories
from .disc import disc_update, reward
from .envs import reset, scripted_expert, step
from .errors import DataError, NumericalError
from .evaluate import evaluate_actor
from .flow import VectorFieldNet, cfm_loss
from .metrics import MetricsWriter
from .normalize import NormStats

log = logging.getLogger(__name__)

_STREAMS = ("init_policy", "init_model", "env", "act", "reward", "reg",
            "disc", "expert_mb", "policy_mb", "eval")


def rng_streams(seed):
    children = np.random.SeedSequence(int(seed)).spawn(len(_STREAMS))
    return {name: np.random.default_rng(child)
            for name, child in zip(_STREAMS, children)}


class VecRunner:
    """Lockstep batch of environment instances with auto-reset."""

    def __init__(self, spec, n_envs, rng):
        self.spec = spec
        self.n = n_envs
        self.rng = rng
        self.states = reset(spec, rng, n_envs)
        self.t = np.zeros(n_envs, dtype=np.int64)
        self.ep_return = np.zeros(n_envs)
        self.finished_returns = []
        self.finished_success = []
        self.env_steps = 0

    def step(self, actions):
        res = step(self.spec, self.states, actions, t=self.t)
        self.t += 1
        self.env_steps += self.n
        self.ep_return += res.true_reward
        done = res.done
        next_states = res.next_state
        if done.any():
            idx = np.flatnonzero(done)
            self.finished_returns.extend(self.ep_return[idx].tolist())
            self.finished_success.extend(res.success[idx].tolist())
            next_states = next_states.copy()
            next_states[idx] = reset(self.spec, self.rng, len(idx))
            self.t[idx] = 0
            self.ep_return[idx] = 0.0
        self.states = next_states
        return res

    def pop_episode_stats(self):
        if not self.finished_returns:
            return {"train_mean_return": None, "train_success_rate": None}
        stats = {
            "train_mean_return": float(np.mean(self.finished_returns)),
            "train_success_rate": float(np.mean(self.finished_success)),
        }
        self.finished_returns.clear()
        self.finished_success.clear()
        return stats


def collect_rollout(runner: VecRunner, policy: StudentPolicy, norm: NormStats,
                    horizon, act_rng, use_true_reward):
    spec = runner.spec
    buffer = RolloutBuffer(horizon, runner.n, spec.state_dim, spec.action_dim)
    for t in range(horizon):
        s_norm = norm.normalize(runner.states)
        actions, raw_u, logp, values = policy.act(s_norm, act_rng)
        res = runner.step(actions)
        buffer.set_step(t, s_norm, actions, raw_u, logp, values, res.done)
        if use_true_reward:
            buffer.rewards[t] = res.true_reward
    buffer.last_values = policy.values_np(norm.normalize(runner.states))
    return buffer


def _teacher_fit_step(flow_net, fit_opt, e_joint, a_joint, rng, flow_cfg):
    """Class-conditional flow regression on one mixed labelled batch."""
    x1 = np.concatenate([e_joint, a_joint])
    labels = np.concatenate([np.ones(len(e_joint), dtype=np.int64),
                             np.zeros(len(a_joint), dtype=np.int64)])
    loss = cfm_loss(flow_net, (x1, labels), rng, flow_cfg)
    loss.backward()
    nn.adam_step(flow_net.params, fit_opt)
    return loss.item()


def _disc_round(method, flow_net, disc_opt, fit_opt, mlp_disc, gail_opt, e_states,
                e_actions, buffer, cfg: RunConfig, streams):
    """One pass over the rollout in minibatches.

    The flow teacher takes two optimizer steps per minibatch: the conditional
    flow-matching fit over both classes (which keeps it a real generative
    model) and the adversarial separation step. Returns mean losses.
    """
    flat = buffer.flat()
    n = buffer.size()
    losses, fit_losses = [], []
    epochs = cfg.disc.update_epochs if method == "fmirl" else cfg.gail.update_epochs
    mb_size = cfg.disc.minibatch if method == "fmirl" else cfg.gail.minibatch
    if mb_size <= 0:
        mb_size = n
    flow_cfg = flow_net.cfg if flow_net is not None else None
    for _ in range(epochs):
        order = streams["disc"].permutation(n)
        for start in range(0, n, mb_size):
            a_idx = order[start:start + mb_size]
            e_idx = streams["expert_mb"].integers(0, len(e_states), size=len(a_idx))
            if method == "fmirl":
                if fit_opt is not None:
                    e_joint = np.concatenate([e_states[e_idx], e_actions[e_idx]], axis=1)
                    a_joint = np.concatenate([flat["states"][a_idx],
                                              flat["actions"][a_idx]], axis=1)
                    fit_losses.append(_teacher_fit_step(
                        flow_net, fit_opt, e_joint, a_joint, streams["disc"], flow_cfg))
                value = disc_update(flow_net, disc_opt,
                                    e_states[e_idx], e_actions[e_idx],
                                    flat["states"][a_idx], flat["actions"][a_idx],
                                    streams["disc"], cfg.disc)
            else:
                value = gail_round(mlp_disc, gail_opt,
                                   e_states[e_idx], e_actions[e_idx],
                                   flat["states"][a_idx], flat["actions"][a_idx])
            losses.append(value)
    out = {"disc_loss": float(np.mean(losses)) if losses else None}
    if fit_losses:
        out["fm_fit_loss"] = float(np.mean(fit_losses))
    return out


def _diagnostic_snapshot(run_dir, buffer, note):
    """Summarize the last batch so NaN aborts are debuggable."""
    def describe(x):
        x = np.asarray(x, dtype=np.float64)
        finite = np.isfinite(x)
        return {
            "shape": list(x.shape),
            "finite_fraction": float(finite.mean()) if x.size else 1.0,
            "min": float(x[finite].min()) if finite.any() else None,
            "max": float(x[finite].max()) if finite.any() else None,
        }

    snap = {"note": note}
    for name in ("states", "actions", "rewards", "values", "logp"):
        snap[name] = describe(getattr(buffer, name))
    path = Path(run_dir) / "diagnostic.json"
    path.write_text(json.dumps(snap, indent=2), encoding="ascii")
    return path


def train_run(cfg: RunConfig, seed: int):
    """Train one seed; writes metrics + checkpoint under out_dir/seed{seed}."""
    cfg.validate()
    run_dir = Path(cfg.out_dir) / f"seed{seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    if cfg.method == "fp_bc":
        return _train_fp_bc(cfg, seed, run_dir)
    return _train_online(cfg, seed, run_dir)


def _load_expert(cfg: RunConfig, spec):
    if not cfg.expert_dataset:
        raise DataError("expert_dataset path is required for this method")
    _, states_raw, actions = load_pairs(cfg.expert_dataset, spec)
    norm = NormStats.fit(states_raw)
    return norm.normalize(states_raw), actions, norm


def _train_online(cfg: RunConfig, seed, run_dir):
    spec = cfg.env_spec()
    method = cfg.method
    streams = rng_streams(seed)
    if method == "ppo_true_reward":
        norm = NormStats.identity(spec.state_dim)
        e_states = e_actions = None
    else:
        e_states, e_actions, norm = _load_expert(cfg, spec)
    policy = StudentPolicy(spec.state_dim, spec.action_dim, spec.action_low,
                           spec.action_high, streams["init_policy"])
    policy_opt = nn.AdamState(policy.params, lr=cfg.policy.lr)
    flow_net = disc_opt = fit_opt = mlp_disc = gail_opt = None
    if method == "fmirl":
        flow_net = VectorFieldNet(cfg.flow_config(), streams["init_model"])
        disc_opt = nn.AdamState(flow_net.params, lr=cfg.disc.lr)
        if cfg.disc.fit_lr > 0:
            fit_opt = nn.AdamState(flow_net.params, lr=cfg.disc.fit_lr)
        # one flow model serves both roles: reward discriminator + generator
        reward_model_net, generator_net = flow_net, flow_net
        assert reward_model_net is generator_net
    elif method == "gail":
        mlp_disc = MlpDiscriminator(spec.state_dim, spec.action_dim,
                                    streams["init_model"], hidden=cfg.gail.hidden)
        gail_opt = nn.AdamState(mlp_disc.params, lr=cfg.gail.lr)

    runner = VecRunner(spec, cfg.n_envs, streams["env"])
    steps_per_round = cfg.rollout_horizon * cfg.n_envs
    rounds = max(1, cfg.total_env_steps // steps_per_round)
    action_bounds = (np.asarray(spec.action_low), np.asarray(spec.action_high))
    last_eval = {"success_rate": None, "mean_return": None}

    def run_eval():
        rng = streams["eval"].spawn(1)[0]
        return evaluate_actor(
            spec, lambda s: policy.mean_action(norm.normalize(s)),
            cfg.eval_episodes, rng,
        )

    with MetricsWriter(run_dir / "metrics.jsonl") as writer:
        for rnd in range(rounds):
            buffer = collect_rollout(runner, policy, norm, cfg.rollout_horizon,
                                     streams["act"], method == "ppo_true_reward")
            try:
                row = _online_round(method, cfg, spec, streams, policy, policy_opt,
                                    flow_net, disc_opt, fit_opt, mlp_disc, gail_opt,
                                    e_states, e_actions, buffer, action_bounds)
            except NumericalError as e:
                path = _diagnostic_snapshot(run_dir, buffer, str(e))
                log.error("numerical failure at round %d; snapshot at %s", rnd, path)
                raise
            if (rnd + 1) % cfg.eval_every == 0 or rnd == rounds - 1:
                last_eval = run_eval()
            row.update({
                "method": method,
                "seed": int(seed),
                "round": rnd,
                "env_steps": int(runner.env_steps),
                "success_rate": last_eval["success_rate"],
                "mean_return": last_eval["mean_return"],
            })
            row.update(runner.pop_episode_stats())
            writer.write_row(row)
            if cfg.checkpoint_every > 0 and (rnd + 1) % cfg.checkpoint_every == 0:
                save_checkpoint(run_dir / f"checkpoint_{runner.env_steps}.txt",
                                method, spec, seed, runner.env_steps, norm,
                                policy=policy, flow_net=flow_net, mlp_disc=mlp_disc)
            if (cfg.stop_at_success > 0 and last_eval["success_rate"] is not None
                    and last_eval["success_rate"] >= cfg.stop_at_success):
                break
    ckpt = run_dir / "checkpoint.txt"
    save_checkpoint(ckpt, method, spec, seed, runner.env_steps, norm,
                    policy=policy, flow_net=flow_net, mlp_disc=mlp_disc)
    return {"checkpoint": str(ckpt), "env_steps": runner.env_steps,
            "final_eval": last_eval, "rounds": rounds}


def _online_round(method, cfg, spec, streams, policy, policy_opt, flow_net, disc_opt,
                  fit_opt, mlp_disc, gail_opt, e_states, e_actions, buffer,
                  action_bounds):
    row = {}
    flat = buffer.flat()
    if method == "fmirl":
        rewards, dist_e, dist_a = reward(flow_net, flat["states"], flat["actions"],
                                         streams["reward"], cfg.disc)
        buffer.rewards = rewards.reshape(buffer.horizon, buffer.n_envs)
        row["reward_mean"] = float(rewards.mean())
        row["dist_expert_mean"] = float(dist_e.mean())
        row["dist_agent_mean"] = float(dist_a.mean())
    elif method == "gail":
        rewards = mlp_disc.reward(flat["states"], flat["actions"])
        buffer.rewards = rewards.reshape(buffer.horizon, buffer.n_envs)
        row["reward_mean"] = float(rewards.mean())
    else:
        row["reward_mean"] = float(buffer.rewards.mean())
    compute_gae(buffer, cfg.policy.gamma, cfg.policy.lam)

    def do_policy():
        reg_s = reg_a = None
        if method == "fmirl" and cfg.policy.beta > 0 and cfg.policy.reg_batch_size > 0:
            reg_s, reg_a = regularization_batch(flow_net, cfg.policy.reg_batch_size,
                                                streams["reg"], action_bounds)
        stats = policy_update(policy, policy_opt, buffer, reg_s, reg_a,
                              cfg.policy, streams["policy_mb"])
        row.update({k: stats[k] for k in ("policy_loss", "value_loss", "entropy",
                                          "reg_loss", "clip_fraction")})

    def do_disc():
        if method in ("fmirl", "gail"):
            row.update(_disc_round(method, flow_net, disc_opt, fit_opt, mlp_disc,
                                   gail_opt, e_states, e_actions, buffer,
                                   cfg, streams))

    if cfg.update_order == "policy_first":
        do_policy()
        do_disc()
    else:
        do_disc()
        do_policy()
    return row


def _train_fp_bc(cfg: RunConfig, seed, run_dir):
    spec = cfg.env_spec()
    streams = rng_streams(seed)
    e_states, e_actions, norm = _load_expert(cfg, spec)
    env_steps_used = [0]  # fp_bc must never interact with the environment

    net_cfg = FlowPolicyNetConfig(
        state_dim=spec.state_dim, action_dim=spec.action_dim,
        noise_scale=cfg.fp.noise_scale, num_steps=cfg.fp.num_steps,
        hidden_width=cfg.fp.hidden_width, hidden_depth=cfg.fp.hidden_depth,
    )
    with MetricsWriter(run_dir / "metrics.jsonl") as writer:
        def hook(step_i, policy, loss_value):
            rng = streams["eval"].spawn(1)[0]
            act_rng = streams["eval"].spawn(1)[0]
            result = evaluate_actor(
                spec, lambda s: fp_act(policy, norm.normalize(s), act_rng),
                cfg.eval_episodes, rng,
            )
            writer.write_row({
                "method": "fp_bc", "seed": int(seed), "round": step_i,
                "env_steps": env_steps_used[0], "fp_loss": loss_value,
                "success_rate": result["success_rate"],
                "mean_return": result["mean_return"],
            })

        policy, _ = train_fp_bc(e_states, e_actions, net_cfg,
                                spec.action_low, spec.action_high,
                                streams["init_model"], cfg.fp.train_steps,
                                cfg.fp.batch_size, cfg.fp.lr,
                                hook=hook, log_every=cfg.fp.eval_every)
    assert env_steps_used[0] == 0, "fp_bc consumed environment steps"
    ckpt = run_dir / "checkpoint.txt"
    save_checkpoint(ckpt, "fp_bc", spec, seed, 0, norm, fp_policy=policy)
    final = evaluate_actor(
        spec, lambda s: fp_act(policy, norm.normalize(s), streams["eval"].spawn(1)[0]),
        cfg.eval_episodes, streams["eval"].spawn(1)[0],
    )
    return {"checkpoint": str(ckpt), "env_steps": 0, "final_eval": final,
            "rounds": cfg.fp.train_steps}


def generate_expert_dataset(cfg: RunConfig, seed, out_path):
    """Roll the scripted expert and persist trajectories; returns stats."""
    spec = cfg.env_spec()
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 424242)))
    trajectories = []
    n_success = 0
    returns = []
    for episode in range(cfg.expert_episodes):
        state = reset(spec, rng)
        traj = Trajectory(episode=episode)
        ep_return = 0.0
        for t in range(spec.horizon):
            action = scripted_expert(spec, state)
            res = step(spec, state, action, t=t)
            traj.append(state, action, res.next_state, res.done, res.true_reward,
                        res.success)
            ep_return += res.true_reward
            state = res.next_state
            if res.done:
                n_success += int(res.success)
                break
        returns.append(ep_return)
        trajectories.append(traj)
    write_trajectories(out_path, spec, trajectories)
    n = max(cfg.expert_episodes, 1)
    return {
        "episodes": cfg.expert_episodes,
        "success_rate": n_success / n,
        "mean_return": float(np.mean(returns)) if returns else 0.0,
        "path": str(out_path),
    }
