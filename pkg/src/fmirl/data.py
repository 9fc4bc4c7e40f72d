"""Trajectory persistence: line-delimited self-describing records.

File layout:

    {"format": "fmirl-traj-1", "env_hash": ..., "env": {...}}   <- header
    {"episode": 0, "t": 0, "s": [...], "a": [...], "s_next": [...],
     "done": false, "reward": -0.7, "success": false}
    ...

One JSON object per line; floats use Python repr so identical inputs produce
byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .envs import EnvSpec, make_spec, spec_hash
from .errors import DataError

TRAJ_FORMAT = "fmirl-traj-1"


@dataclass
class Trajectory:
    episode: int
    states: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    next_states: list = field(default_factory=list)
    dones: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    successes: list = field(default_factory=list)

    def append(self, s, a, s_next, done, reward, success):
        self.states.append(np.asarray(s, dtype=np.float64))
        self.actions.append(np.asarray(a, dtype=np.float64))
        self.next_states.append(np.asarray(s_next, dtype=np.float64))
        self.dones.append(bool(done))
        self.rewards.append(float(reward))
        self.successes.append(bool(success))

    def __len__(self):
        return len(self.states)


def _dump(obj):
    return json.dumps(obj, separators=(",", ":"))


def _header(spec: EnvSpec):
    return {
        "format": TRAJ_FORMAT,
        "env_hash": spec_hash(spec),
        "env": {"name": spec.name, "noise_mult": spec.noise_mult},
    }


def write_trajectories(path, spec: EnvSpec, trajectories):
    try:
        with open(path, "w", encoding="ascii") as f:
            f.write(_dump(_header(spec)) + "\n")
            for traj in trajectories:
                for t in range(len(traj)):
                    row = {
                        "episode": traj.episode,
                        "t": t,
                        "s": [float(x) for x in traj.states[t]],
                        "a": [float(x) for x in traj.actions[t]],
                        "s_next": [float(x) for x in traj.next_states[t]],
                        "done": traj.dones[t],
                        "reward": traj.rewards[t],
                        "success": traj.successes[t],
                    }
                    f.write(_dump(row) + "\n")
    except OSError as e:
        raise DataError(f"cannot write trajectory file {path}: {e}") from e


def read_trajectories(path):
    """Returns (header, list of Trajectory). Strict: malformed rows raise."""
    try:
        with open(path, encoding="ascii") as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise DataError(f"cannot read trajectory file {path}: {e}") from e
    if not lines:
        raise DataError(f"{path}: empty file (missing header)")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: bad header: {e}") from e
    if header.get("format") != TRAJ_FORMAT:
        raise DataError(f"{path}: not a {TRAJ_FORMAT} file")
    by_episode = {}
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as e:
            raise DataError(f"{path}:{i}: malformed record: {e}") from e
        ep = row["episode"]
        traj = by_episode.get(ep)
        if traj is None:
            traj = by_episode[ep] = Trajectory(episode=ep)
        traj.append(row["s"], row["a"], row["s_next"], row["done"],
                    row["reward"], row["success"])
    return header, [by_episode[k] for k in sorted(by_episode)]


def load_pairs(path, expected_spec: EnvSpec = None):
    """Load a dataset as flat (states, actions) arrays plus the header.

    Refuses empty datasets and, when `expected_spec` is given, datasets
    recorded under a different environment.
    """
    header, trajectories = read_trajectories(path)
    if expected_spec is not None:
        expected = spec_hash(expected_spec)
        if header.get("env_hash") != expected:
            raise DataError(
                f"{path}: dataset env hash {header.get('env_hash')} does not match "
                f"configured environment ({expected})"
            )
    if not trajectories or all(len(t) == 0 for t in trajectories):
        raise DataError(f"{path}: dataset contains no transitions")
    states = np.concatenate([np.stack(t.states) for t in trajectories if len(t)])
    actions = np.concatenate([np.stack(t.actions) for t in trajectories if len(t)])
    return header, states, actions


def spec_from_header(header):
    env = header.get("env", {})
    return make_spec(env.get("name"), env.get("noise_mult", 1.0))
