"""Deterministic toy continuous-control environments with scripted experts.

Two goal-reaching tasks share the observation layout (px, py, gx, gy) and a
2-D displacement action whose norm is capped per step:

* ``point_goal`` — open arena [-1,1]^2, agent starts anywhere, goal drawn
  from a +/-0.4 box scaled by the noise multiplier (the box stays inside the
  arena up to 2.5x, so goal spread scales exactly with the multiplier).
  Trivially exploitable: straight-line control is optimal.
* ``maze_cont`` — 5x5 arena of unit cells with a fixed wall layout leaving
  two corridors from the start cell (0,0) to the goal cell (4,4); start and
  goal jitter around the cell centers scales with the noise multiplier.
  Requires detouring around walls.

Dynamics are pure functions of (spec, state, action) and broadcast over a
leading batch axis, so many instances can run in lockstep. The true reward
(negative goal distance) exists for the RL sanity baseline and for metrics;
the imitation learners never see it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

MAZE_WALLS = frozenset({(1, 1), (2, 1), (3, 1), (3, 2), (1, 3), (2, 3), (3, 3)})
MAZE_SIZE = 5
_START_CELL = (0, 0)
_GOAL_CELL = (4, 4)


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    action_dim: int
    action_low: tuple
    action_high: tuple
    horizon: int
    success_threshold: float
    noise_mult: float
    max_step: float

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.noise_mult < 1.0:
            raise ConfigError(f"noise_mult must be >= 1.0, got {self.noise_mult}")
        if not np.all(np.isfinite(self.action_low)) or not np.all(np.isfinite(self.action_high)):
            raise ConfigError("action bounds must be finite")


@dataclass
class StepResult:
    next_state: np.ndarray
    true_reward: np.ndarray
    done: np.ndarray
    success: np.ndarray


def make_spec(name, noise_mult=1.0):
    # actions are unit velocity commands; dynamics scale them by max_step
    if name == "point_goal":
        return EnvSpec(name=name, state_dim=4, action_dim=2,
                       action_low=(-1.0, -1.0), action_high=(1.0, 1.0),
                       horizon=60, success_threshold=0.05,
                       noise_mult=float(noise_mult), max_step=0.2)
    if name == "maze_cont":
        return EnvSpec(name=name, state_dim=4, action_dim=2,
                       action_low=(-1.0, -1.0), action_high=(1.0, 1.0),
                       horizon=80, success_threshold=0.3,
                       noise_mult=float(noise_mult), max_step=0.4)
    raise ConfigError(f"unknown environment {name!r}")


def spec_hash(spec: EnvSpec) -> str:
    blob = json.dumps(
        {
            "name": spec.name,
            "state_dim": spec.state_dim,
            "action_dim": spec.action_dim,
            "action_low": list(spec.action_low),
            "action_high": list(spec.action_high),
            "horizon": spec.horizon,
            "success_threshold": spec.success_threshold,
            "noise_mult": spec.noise_mult,
            "max_step": spec.max_step,
        },
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _wall_grid():
    grid = np.zeros((MAZE_SIZE, MAZE_SIZE), dtype=bool)
    for cx, cy in MAZE_WALLS:
        grid[cx, cy] = True
    return grid


_WALLS = _wall_grid()


def _bfs_distance():
    """Grid distance to the goal cell over free cells (walls = large)."""
    dist = np.full((MAZE_SIZE, MAZE_SIZE), 10**6, dtype=np.int64)
    dist[_GOAL_CELL] = 0
    frontier = [_GOAL_CELL]
    while frontier:
        nxt = []
        for cx, cy in frontier:
            for dx, dy in ((1, 0), (0, 1), (-1, 0), (0, -1)):
                nx, ny = cx + dx, cy + dy
                if 0 <= nx < MAZE_SIZE and 0 <= ny < MAZE_SIZE:
                    if not _WALLS[nx, ny] and dist[nx, ny] > dist[cx, cy] + 1:
                        dist[nx, ny] = dist[cx, cy] + 1
                        nxt.append((nx, ny))
        frontier = nxt
    return dist


_MAZE_DIST = _bfs_distance()


def _blocked(px, py):
    """True where a point lies outside the maze arena or inside a wall cell."""
    inside = (px >= 0.0) & (px < float(MAZE_SIZE)) & (py >= 0.0) & (py < float(MAZE_SIZE))
    ix = np.clip(px.astype(np.int64), 0, MAZE_SIZE - 1)
    iy = np.clip(py.astype(np.int64), 0, MAZE_SIZE - 1)
    return ~inside | _WALLS[ix, iy]


def reset(spec: EnvSpec, rng, n=None):
    """Initial states; (state_dim,) for n=None, else (n, state_dim).

    Draw order is fixed (positions first, then goals) so seeded resets are
    reproducible.
    """
    batch = 1 if n is None else n
    if spec.name == "point_goal":
        pos = rng.uniform(-1.0, 1.0, (batch, 2))
        half = 0.4 * spec.noise_mult
        goal = np.clip(rng.uniform(-half, half, (batch, 2)), -1.0, 1.0)
    else:
        jitter = 0.2 * spec.noise_mult
        start_center = np.array(_START_CELL, dtype=np.float64) + 0.5
        goal_center = np.array(_GOAL_CELL, dtype=np.float64) + 0.5
        pos = start_center + np.clip(rng.uniform(-jitter, jitter, (batch, 2)), -0.45, 0.45)
        goal = goal_center + np.clip(rng.uniform(-jitter, jitter, (batch, 2)), -0.45, 0.45)
    state = np.concatenate([pos, goal], axis=1)
    return state[0] if n is None else state


def _clip_displacement(spec, action):
    a = np.clip(action, spec.action_low, spec.action_high) * spec.max_step
    norm = np.linalg.norm(a, axis=-1, keepdims=True)
    scale = np.where(norm > spec.max_step, spec.max_step / np.maximum(norm, 1e-12), 1.0)
    return a * scale


def step(spec: EnvSpec, state, action, t=None):
    """Advance one step; `t` (current step index) folds horizon exhaustion
    into the done flag. Broadcasts over a leading batch axis."""
    state = np.asarray(state, dtype=np.float64)
    single = state.ndim == 1
    state = np.atleast_2d(state)
    action = np.atleast_2d(np.asarray(action, dtype=np.float64))
    if not np.all(np.isfinite(action)):
        raise ConfigError("action contains non-finite values")
    pos, goal = state[:, :2], state[:, 2:]
    disp = _clip_displacement(spec, action)
    if spec.name == "point_goal":
        new_pos = np.clip(pos + disp, -1.0, 1.0)
    else:
        new_x = pos[:, 0] + disp[:, 0]
        blocked_x = _blocked(new_x, pos[:, 1])
        new_x = np.where(blocked_x, pos[:, 0], new_x)
        new_y = pos[:, 1] + disp[:, 1]
        blocked_y = _blocked(new_x, new_y)
        new_y = np.where(blocked_y, pos[:, 1], new_y)
        new_pos = np.stack([new_x, new_y], axis=1)
    dist = np.linalg.norm(new_pos - goal, axis=1)
    success = dist < spec.success_threshold
    done = success.copy()
    if t is not None:
        done |= np.asarray(t) + 1 >= spec.horizon
    next_state = np.concatenate([new_pos, goal], axis=1)
    result = StepResult(next_state=next_state, true_reward=-dist, done=done, success=success)
    if single:
        return StepResult(next_state=next_state[0], true_reward=float(-dist[0]),
                          done=bool(done[0]), success=bool(success[0]))
    return result


def _toward(target, pos, max_step):
    """Unit-command action whose displacement heads for `target`, gain 1.0 on
    the positional error, norm-limited to full speed."""
    delta = (target - pos) / max_step
    norm = np.linalg.norm(delta, axis=-1, keepdims=True)
    scale = np.where(norm > 1.0, 1.0 / np.maximum(norm, 1e-12), 1.0)
    return delta * scale


def scripted_expert(spec: EnvSpec, state):
    """Deterministic expert action for the given state (batch-aware).

    point_goal: proportional controller straight at the goal, speed-limited,
    so episode length matches the straight-line lower bound. maze_cont:
    waypoint follower along the BFS-shortest corridor (fixed tie-breaking).
    """
    state = np.asarray(state, dtype=np.float64)
    single = state.ndim == 1
    state = np.atleast_2d(state)
    pos, goal = state[:, :2], state[:, 2:]
    if spec.name == "point_goal":
        action = _toward(goal, pos, spec.max_step)
    else:
        cx = np.clip(pos[:, 0].astype(np.int64), 0, MAZE_SIZE - 1)
        cy = np.clip(pos[:, 1].astype(np.int64), 0, MAZE_SIZE - 1)
        here = np.stack([cx, cy], axis=1)
        best = here.copy()
        best_dist = _MAZE_DIST[cx, cy]
        for dx, dy in ((1, 0), (0, 1), (-1, 0), (0, -1)):
            nx, ny = cx + dx, cy + dy
            ok = (nx >= 0) & (nx < MAZE_SIZE) & (ny >= 0) & (ny < MAZE_SIZE)
            nd = np.where(ok, _MAZE_DIST[np.clip(nx, 0, 4), np.clip(ny, 0, 4)], 10**6)
            better = nd < best_dist
            best[better] = np.stack([nx, ny], axis=1)[better]
            best_dist = np.where(better, nd, best_dist)
        waypoint = best + 0.5
        at_goal_cell = (cx == _GOAL_CELL[0]) & (cy == _GOAL_CELL[1])
        target = np.where(at_goal_cell[:, None], goal, waypoint)
        action = _toward(target, pos, spec.max_step)
    return action[0] if single else action
