"""Deterministic policy evaluation and noise-sweep reporting."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .checkpoints import restore_actor
from .envs import EnvSpec, make_spec, reset, step
from .errors import DataError, UsageError


def evaluate_actor(spec: EnvSpec, act_fn, episodes, rng):
    """Run `episodes` lockstep episodes; returns success rate / return stats.

    Episodes are frozen when they finish (no auto-reset), so every episode
    contributes exactly once.
    """
    states = reset(spec, rng, episodes)
    t = np.zeros(episodes, dtype=np.int64)
    alive = np.ones(episodes, dtype=bool)
    returns = np.zeros(episodes)
    success = np.zeros(episodes, dtype=bool)
    lengths = np.zeros(episodes, dtype=np.int64)
    while alive.any():
        idx = np.flatnonzero(alive)
        actions = act_fn(states[idx])
        res = step(spec, states[idx], actions, t=t[idx])
        returns[idx] += res.true_reward
        success[idx] |= res.success
        states[idx] = res.next_state
        t[idx] += 1
        finished = idx[res.done]
        lengths[finished] = t[finished]
        alive[finished] = False
    return {
        "success_rate": float(success.mean()),
        "mean_return": float(returns.mean()),
        "mean_length": float(lengths.mean()),
        "episodes": int(episodes),
    }


def _eval_rng(seed, noise_mult, salt=0):
    return np.random.default_rng(
        np.random.SeedSequence((int(seed), int(round(noise_mult * 1000)), 77, salt))
    )


def noise_sweep(checkpoints, env_name, noise_mults, episodes):
    """Evaluate checkpoints across noise multipliers.

    `checkpoints` is a list of paths (one per seed). Returns per-(noise, seed)
    rows plus a per-noise aggregate.
    """
    if not noise_mults:
        raise UsageError("noise_mults must be non-empty")
    for m in noise_mults:
        if m < 1.0:
            raise UsageError(f"noise multiplier must be >= 1.0, got {m}")
    rows = []
    for noise in noise_mults:
        spec = make_spec(env_name, noise)
        for path in checkpoints:
            meta, act = restore_actor(path, spec, fp_rng=None)
            seed = meta.get("seed", 0)
            if meta.get("method") == "fp_bc":
                meta, act = restore_actor(path, spec, fp_rng=_eval_rng(seed, noise, salt=1))
            result = evaluate_actor(spec, act, episodes, _eval_rng(seed, noise))
            rows.append({
                "noise_mult": float(noise),
                "seed": int(seed),
                "method": meta.get("method"),
                "checkpoint": str(path),
                **result,
            })
    summary = []
    for noise in noise_mults:
        sub = [r for r in rows if r["noise_mult"] == float(noise)]
        summary.append({
            "noise_mult": float(noise),
            "success_rate": float(np.mean([r["success_rate"] for r in sub])),
            "mean_return": float(np.mean([r["mean_return"] for r in sub])),
            "seeds": len(sub),
        })
    return rows, summary


def find_checkpoints(path):
    """Resolve a checkpoint argument: a file, or a run dir with seed*/ dirs."""
    p = Path(path)
    if p.is_file():
        return [p]
    if p.is_dir():
        found = sorted(p.glob("seed*/checkpoint.txt"))
        if found:
            return found
    raise DataError(f"no checkpoints found at {path}")


def write_results(path, rows, summary):
    with open(path, "w", encoding="ascii") as f:
        for row in rows:
            f.write(json.dumps({"kind": "episode_set", **row}, separators=(",", ":")) + "\n")
        for row in summary:
            f.write(json.dumps({"kind": "summary", **row}, separators=(",", ":")) + "\n")
