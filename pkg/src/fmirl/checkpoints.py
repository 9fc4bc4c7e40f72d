"""Run-level checkpoints: parameters + normalizer + metadata in one container.

Built on the nn text container; array names are namespaced per component
(policy/, flow/, gail/, fpnet/, norm/). The meta line records the method,
environment and enough architecture info to rebuild the networks.
"""

from __future__ import annotations

from dataclasses import asdict

import numpy as np

from . import nn
from .agent import StudentPolicy
from .baselines import ConditionalFlowPolicy, FlowPolicyNetConfig, MlpDiscriminator, fp_act
from .envs import EnvSpec, make_spec
from .errors import ConfigError
from .flow import FlowConfig, VectorFieldNet
from .normalize import NormStats

CKPT_FORMAT = "fmirl-ckpt-1"


def _prefixed(prefix, state):
    return {prefix + name: values for name, values in state.items()}


def save_checkpoint(path, method, spec: EnvSpec, seed, env_steps, norm: NormStats,
                    policy: StudentPolicy = None, flow_net: VectorFieldNet = None,
                    mlp_disc: MlpDiscriminator = None,
                    fp_policy: ConditionalFlowPolicy = None):
    arrays = {"norm/mean": norm.mean, "norm/std": norm.std}
    meta = {
        "format": CKPT_FORMAT,
        "method": method,
        "env": {"name": spec.name, "noise_mult": spec.noise_mult},
        "seed": int(seed),
        "env_steps": int(env_steps),
    }
    if policy is not None:
        arrays.update(_prefixed("policy/", policy.params.state()))
        meta["policy_hidden"] = list(policy.hidden)
    if flow_net is not None:
        arrays.update(_prefixed("flow/", flow_net.params.state()))
        meta["flow"] = asdict(flow_net.cfg)
    if mlp_disc is not None:
        arrays.update(_prefixed("gail/", mlp_disc.params.state()))
    if fp_policy is not None:
        arrays.update(_prefixed("fpnet/", fp_policy.params.state()))
        meta["fp"] = asdict(fp_policy.cfg)
    nn.save_params(path, arrays, meta)


def load_checkpoint(path):
    arrays, meta = nn.load_params(path)
    if meta.get("format") != CKPT_FORMAT:
        raise ConfigError(f"{path}: not a {CKPT_FORMAT} checkpoint")
    return meta, arrays


def _sub_state(arrays, prefix):
    return {name[len(prefix):]: values for name, values in arrays.items()
            if name.startswith(prefix)}


def restore_policy(meta, arrays, spec: EnvSpec) -> StudentPolicy:
    policy = StudentPolicy(spec.state_dim, spec.action_dim, spec.action_low,
                           spec.action_high, np.random.default_rng(0),
                           hidden=tuple(meta.get("policy_hidden", (64, 64))))
    policy.params.load_state(_sub_state(arrays, "policy/"))
    return policy


def restore_flow_net(meta, arrays) -> VectorFieldNet:
    cfg = FlowConfig(**meta["flow"])
    net = VectorFieldNet(cfg, np.random.default_rng(0))
    net.params.load_state(_sub_state(arrays, "flow/"))
    return net


def restore_fp_policy(meta, arrays, spec: EnvSpec) -> ConditionalFlowPolicy:
    cfg = FlowPolicyNetConfig(**meta["fp"])
    policy = ConditionalFlowPolicy(cfg, spec.action_low, spec.action_high,
                                   np.random.default_rng(0))
    policy.params.load_state(_sub_state(arrays, "fpnet/"))
    return policy


def restore_actor(path, eval_spec: EnvSpec, fp_rng=None):
    """Build an action function on raw states from a checkpoint.

    Raises ConfigError when the checkpoint was trained on a different
    environment (the noise multiplier may differ; dynamics must not).
    """
    meta, arrays = load_checkpoint(path)
    trained_env = meta.get("env", {}).get("name")
    if trained_env != eval_spec.name:
        raise ConfigError(
            f"{path}: checkpoint env {trained_env!r} does not match "
            f"evaluation env {eval_spec.name!r}"
        )
    norm = NormStats(arrays["norm/mean"], arrays["norm/std"])
    method = meta.get("method")
    if method == "fp_bc":
        fp_policy = restore_fp_policy(meta, arrays, eval_spec)
        rng = fp_rng if fp_rng is not None else np.random.default_rng(0)

        def act(states):
            return fp_act(fp_policy, norm.normalize(states), rng)

    else:
        policy = restore_policy(meta, arrays, eval_spec)

        def act(states):
            return policy.mean_action(norm.normalize(states))

    return meta, act


def training_spec_from_meta(meta) -> EnvSpec:
    env = meta.get("env", {})
    return make_spec(env.get("name"), env.get("noise_mult", 1.0))
