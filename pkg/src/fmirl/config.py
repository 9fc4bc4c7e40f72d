"""Run configuration: defaults, plain-text parsing, serialization.

Config files are plain text, one ``dotted.key = value`` per line, ``#``
comments allowed. Dotted prefixes select sections (env., flow., disc.,
policy., fp., gail.); bare keys configure the run itself. Unknown keys are
hard errors so sweep typos fail fast. Example:

    method = fmirl
    seeds = 0, 1, 2
    total_env_steps = 300000
    expert_dataset = data/point_goal_expert.jsonl
    out_dir = runs/demo
    env.name = point_goal
    env.noise_mult = 1.0
    policy.beta = 2.0
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .agent import PolicyObjectiveConfig
from .disc import DiscConfig
from .envs import make_spec
from .errors import ConfigError
from .flow import FlowConfig

METHODS = ("fmirl", "fp_bc", "gail", "ppo_true_reward")


@dataclass
class EnvConfig:
    name: str = "point_goal"
    noise_mult: float = 1.0


@dataclass
class FlowNetConfig:
    """File-facing subset of FlowConfig; joint_dim is derived from the env."""

    noise_scale: float = 0.5
    num_steps: int = 100
    time_encoding: str = "fourier2"
    condition_encoding: str = "embed4"
    hidden_width: int = 128
    hidden_depth: int = 4
    activation: str = "silu"


@dataclass
class FpConfig:
    train_steps: int = 5000
    batch_size: int = 256
    lr: float = 1e-3
    eval_every: int = 1000
    noise_scale: float = 0.5
    num_steps: int = 100
    hidden_width: int = 128
    hidden_depth: int = 4


@dataclass
class GailConfig:
    lr: float = 1e-3
    hidden: int = 64
    minibatch: int = 256
    update_epochs: int = 1


@dataclass
class RunConfig:
    method: str = "fmirl"
    seeds: tuple = (0,)
    total_env_steps: int = 300_000
    rollout_horizon: int = 128
    n_envs: int = 16
    eval_episodes: int = 20
    eval_every: int = 5
    expert_dataset: str = ""
    expert_episodes: int = 20
    out_dir: str = "runs/out"
    update_order: str = "policy_first"
    stop_at_success: float = -1.0
    checkpoint_every: int = 0
    env: EnvConfig = field(default_factory=EnvConfig)
    flow: FlowNetConfig = field(default_factory=FlowNetConfig)
    disc: DiscConfig = field(default_factory=DiscConfig)
    policy: PolicyObjectiveConfig = field(default_factory=PolicyObjectiveConfig)
    fp: FpConfig = field(default_factory=FpConfig)
    gail: GailConfig = field(default_factory=GailConfig)

    def validate(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not self.seeds:
            raise ConfigError("seed list must be non-empty")
        if self.update_order not in ("policy_first", "disc_first"):
            raise ConfigError(f"unknown update_order {self.update_order!r}")
        make_spec(self.env.name, self.env.noise_mult)
        return self

    def env_spec(self):
        return make_spec(self.env.name, self.env.noise_mult)

    def flow_config(self):
        spec = self.env_spec()
        return FlowConfig(
            joint_dim=spec.state_dim + spec.action_dim,
            noise_scale=self.flow.noise_scale,
            num_steps=self.flow.num_steps,
            time_encoding=self.flow.time_encoding,
            condition_encoding=self.flow.condition_encoding,
            hidden_width=self.flow.hidden_width,
            hidden_depth=self.flow.hidden_depth,
            activation=self.flow.activation,
        )


_SECTIONS = {
    "env": EnvConfig,
    "flow": FlowNetConfig,
    "disc": DiscConfig,
    "policy": PolicyObjectiveConfig,
    "fp": FpConfig,
    "gail": GailConfig,
}


def _parse_scalar(raw, kind, key):
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        if kind is tuple:  # seed lists
            return tuple(int(x) for x in raw.split(",") if x.strip())
    except ValueError as e:
        raise ConfigError(f"bad value for {key}: {e}") from e
    raise ConfigError(f"unsupported config type for {key}")


def _field_types(cls):
    return {f.name: (int if f.type == "int" else float if f.type == "float"
                     else bool if f.type == "bool" else tuple if f.type == "tuple"
                     else str)
            for f in fields(cls) if f.type in ("int", "float", "bool", "str", "tuple")}


def parse_config_text(text, base: RunConfig = None) -> RunConfig:
    cfg = base or RunConfig()
    run_types = _field_types(RunConfig)
    section_types = {name: _field_types(cls) for name, cls in _SECTIONS.items()}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw_line!r}")
        key, _, raw_value = line.partition("=")
        key = key.strip()
        if "." in key:
            section, _, name = key.partition(".")
            if section not in _SECTIONS:
                raise ConfigError(f"line {lineno}: unknown config section {section!r}")
            types = section_types[section]
            if name not in types:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            setattr(getattr(cfg, section), name, _parse_scalar(raw_value, types[name], key))
        else:
            if key not in run_types:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            setattr(cfg, key, _parse_scalar(raw_value, run_types[key], key))
    # re-run dataclass validation on sections that define it
    for section in ("disc", "policy"):
        obj = getattr(cfg, section)
        obj.__post_init__()
    return cfg.validate()


def load_config(path, base: RunConfig = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    return parse_config_text(text, base=base)


def config_to_text(cfg: RunConfig) -> str:
    """Serialize the resolved configuration (written next to run outputs)."""
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if f.name in _SECTIONS:
            for sf in fields(type(value)):
                lines.append(f"{f.name}.{sf.name} = {_fmt(getattr(value, sf.name))}")
        else:
            lines.append(f"{f.name} = {_fmt(value)}")
    return "\n".join(lines) + "\n"


def _fmt(value):
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    return str(value)
