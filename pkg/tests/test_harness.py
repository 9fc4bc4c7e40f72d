"""Configuration, persistence, metrics, CLI and the training harness."""

import json
from pathlib import Path

import numpy as np
import pytest

from fmirl.cli import main
from fmirl.config import RunConfig, config_to_text, load_config, parse_config_text
from fmirl.data import load_pairs, read_trajectories, write_trajectories, Trajectory
from fmirl.envs import make_spec
from fmirl.errors import ConfigError, DataError, UsageError
from fmirl.evaluate import noise_sweep
from fmirl.metrics import MetricsWriter, export_csv, read_rows
from fmirl.normalize import NormStats
from fmirl.train import generate_expert_dataset, train_run


# --- config parsing -----------------------------------------------------------

def test_default_hyperparameters():
    cfg = RunConfig()
    assert cfg.disc.lr == 1e-4
    assert cfg.disc.temperature == 0.1
    assert cfg.disc.s_train == 1
    assert cfg.disc.s_reward == 100
    assert cfg.disc.expert_weight == 1.0
    assert cfg.disc.agent_weight == -1.0
    assert cfg.disc.update_epochs == 1
    assert cfg.flow.noise_scale == 0.5
    assert cfg.flow.num_steps == 100
    assert cfg.flow.hidden_depth == 4
    assert cfg.flow.hidden_width == 128
    assert cfg.policy.beta == 2.0
    assert cfg.policy.gamma == 0.99
    assert cfg.policy.lam == 0.95
    assert cfg.policy.clip_eps == 0.2
    assert cfg.policy.epochs == 10


def test_parse_overrides_and_sections():
    cfg = parse_config_text("""
# comment
method = gail
seeds = 3, 4
total_env_steps = 1000
env.name = maze_cont
env.noise_mult = 1.5
policy.beta = 0.5
disc.temperature = 0.2
""")
    assert cfg.method == "gail"
    assert cfg.seeds == (3, 4)
    assert cfg.env.name == "maze_cont"
    assert cfg.env.noise_mult == 1.5
    assert cfg.policy.beta == 0.5
    assert cfg.disc.temperature == 0.2


def test_unknown_keys_are_errors():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config_text("not_a_key = 1")
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config_text("policy.not_a_key = 1")
    with pytest.raises(ConfigError, match="unknown config section"):
        parse_config_text("nosection.x = 1")


def test_bad_values_are_errors():
    with pytest.raises(ConfigError):
        parse_config_text("total_env_steps = soon")
    with pytest.raises(ConfigError):
        parse_config_text("method = alchemy")
    with pytest.raises(ConfigError):
        parse_config_text("seeds = ")
    with pytest.raises(ConfigError):
        parse_config_text("env.noise_mult = 0.2")
    with pytest.raises(ConfigError):
        parse_config_text("policy.gamma = 1.5")


def test_config_roundtrip_through_text():
    cfg = parse_config_text("method = fmirl\npolicy.beta = 1.25\nseeds = 1,2")
    text = config_to_text(cfg)
    cfg2 = parse_config_text(text)
    assert cfg2.policy.beta == 1.25
    assert cfg2.seeds == (1, 2)
    assert config_to_text(cfg2) == text


def test_flow_config_derives_joint_dim():
    cfg = parse_config_text("env.name = point_goal")
    assert cfg.flow_config().joint_dim == 6


# --- normalization ---------------------------------------------------------------

def test_normalization_roundtrip():
    rng = np.random.default_rng(0)
    states = rng.standard_normal((500, 4)) * [3, 0.1, 10, 1] + [1, -2, 0, 5]
    stats = NormStats.fit(states)
    back = stats.denormalize(stats.normalize(states))
    assert np.max(np.abs(back - states)) < 1e-12


def test_normalization_clamps_tiny_std():
    states = np.ones((50, 3))
    stats = NormStats.fit(states)
    assert np.all(stats.std >= 1e-6)
    assert np.all(np.isfinite(stats.normalize(states)))


# --- trajectory files ----------------------------------------------------------------

def _toy_trajectories(spec, episodes=3, steps=4):
    rng = np.random.default_rng(1)
    out = []
    for ep in range(episodes):
        traj = Trajectory(episode=ep)
        for t in range(steps):
            s = rng.standard_normal(spec.state_dim)
            a = rng.uniform(-1, 1, spec.action_dim)
            traj.append(s, a, s + 0.1, t == steps - 1, -1.0, False)
        out.append(traj)
    return out


def test_trajectory_roundtrip(tmp_path):
    spec = make_spec("point_goal")
    trajs = _toy_trajectories(spec)
    path = tmp_path / "data.jsonl"
    write_trajectories(path, spec, trajs)
    header, loaded = read_trajectories(path)
    assert header["format"] == "fmirl-traj-1"
    assert len(loaded) == 3
    np.testing.assert_allclose(np.stack(loaded[0].states), np.stack(trajs[0].states))
    assert [len(t) for t in loaded] == [4, 4, 4]


def test_trajectory_record_keys(tmp_path):
    spec = make_spec("point_goal")
    path = tmp_path / "data.jsonl"
    write_trajectories(path, spec, _toy_trajectories(spec, 1, 2))
    lines = path.read_text().splitlines()
    record = json.loads(lines[1])
    assert set(record) == {"episode", "t", "s", "a", "s_next", "done", "reward", "success"}


def test_empty_dataset_has_header_and_is_refused(tmp_path):
    spec = make_spec("point_goal")
    path = tmp_path / "empty.jsonl"
    write_trajectories(path, spec, [])
    header, trajs = read_trajectories(path)
    assert header["env_hash"] and trajs == []
    with pytest.raises(DataError):
        load_pairs(path, spec)


def test_dataset_env_mismatch_refused(tmp_path):
    spec = make_spec("point_goal")
    path = tmp_path / "data.jsonl"
    write_trajectories(path, spec, _toy_trajectories(spec))
    with pytest.raises(DataError, match="hash"):
        load_pairs(path, make_spec("maze_cont"))


def test_gen_expert_dataset_matches_episode_count_and_is_deterministic(tmp_path):
    cfg = parse_config_text(f"""
method = fmirl
expert_episodes = 5
env.name = point_goal
""")
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    s1 = generate_expert_dataset(cfg, 0, p1)
    s2 = generate_expert_dataset(cfg, 0, p2)
    assert s1["success_rate"] == 1.0
    _, trajs = read_trajectories(p1)
    assert len(trajs) == 5
    assert p1.read_bytes() == p2.read_bytes()


# --- metrics + export -------------------------------------------------------------------

def test_metrics_rows_and_malformed_skip(tmp_path):
    path = tmp_path / "metrics.jsonl"
    with MetricsWriter(path) as w:
        w.write_row({"method": "x", "seed": 0, "env_steps": 10, "reward_mean": 0.5})
        w.write_row({"method": "x", "seed": 0, "env_steps": 20, "reward_mean": 0.6})
    with open(path, "a") as f:
        f.write('{"truncated": ')  # simulate a killed run
    rows, skipped = read_rows(path)
    assert len(rows) == 2 and skipped == 1


def test_export_csv_columns_and_idempotence(tmp_path):
    run = tmp_path / "run"
    for seed in (0, 1):
        d = run / f"seed{seed}"
        d.mkdir(parents=True)
        with MetricsWriter(d / "metrics.jsonl") as w:
            for step_count in (10, 20):
                w.write_row({"method": "fmirl", "seed": seed, "env_steps": step_count,
                             "success_rate": 0.5, "mean_return": -1.0,
                             "disc_loss": -1.4, "reward_mean": 0.1, "reg_loss": 0.2})
    out = run / "export.csv"
    n, skipped = export_csv(run, out)
    assert (n, skipped) == (4, 0)
    text = out.read_text().splitlines()
    assert text[0] == "method,seed,env_steps,success_rate,mean_return,disc_loss,reward_mean,reg_loss"
    assert len(text) == 5
    seeds = {line.split(",")[1] for line in text[1:]}
    assert seeds == {"0", "1"}
    first = out.read_bytes()
    export_csv(run, out)
    assert out.read_bytes() == first


def test_export_requires_metrics(tmp_path):
    with pytest.raises(DataError):
        export_csv(tmp_path, tmp_path / "out.csv")


# --- training harness ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def tiny_expert(tmp_path_factory):
    root = tmp_path_factory.mktemp("expert")
    cfg = parse_config_text("expert_episodes = 8\nenv.name = point_goal")
    path = root / "expert.jsonl"
    generate_expert_dataset(cfg, 0, path)
    return path


TINY_RUN = """
method = %s
seeds = 0
total_env_steps = 1024
rollout_horizon = 32
n_envs = 8
eval_episodes = 4
eval_every = 1
expert_dataset = %s
out_dir = %s
env.name = point_goal
disc.s_reward = 8
policy.epochs = 2
policy.minibatch = 64
policy.reg_batch_size = 32
flow.num_steps = 10
flow.hidden_width = 32
flow.hidden_depth = 2
fp.train_steps = 60
fp.eval_every = 30
fp.num_steps = 10
fp.hidden_width = 16
fp.hidden_depth = 1
"""


def test_fmirl_run_is_deterministic(tmp_path, tiny_expert):
    outs = []
    for tag in ("r1", "r2"):
        out_dir = tmp_path / tag
        cfg = parse_config_text(TINY_RUN % ("fmirl", tiny_expert, out_dir))
        train_run(cfg, 0)
        outs.append((out_dir / "seed0" / "metrics.jsonl").read_bytes())
    assert outs[0] == outs[1]


def test_fmirl_and_gail_consume_identical_budgets(tmp_path, tiny_expert):
    steps = {}
    for method in ("fmirl", "gail"):
        cfg = parse_config_text(TINY_RUN % (method, tiny_expert, tmp_path / method))
        summary = train_run(cfg, 0)
        steps[method] = summary["env_steps"]
        rows, _ = read_rows(tmp_path / method / "seed0" / "metrics.jsonl")
        assert len(rows) == summary["rounds"]
    assert steps["fmirl"] == steps["gail"] == 1024


def test_fp_bc_consumes_zero_env_steps(tmp_path, tiny_expert):
    cfg = parse_config_text(TINY_RUN % ("fp_bc", tiny_expert, tmp_path / "fp"))
    summary = train_run(cfg, 0)
    assert summary["env_steps"] == 0
    rows, _ = read_rows(tmp_path / "fp" / "seed0" / "metrics.jsonl")
    assert all(r["env_steps"] == 0 for r in rows)


def test_checkpoint_restores_and_validates_env(tmp_path, tiny_expert):
    cfg = parse_config_text(TINY_RUN % ("fmirl", tiny_expert, tmp_path / "ck"))
    train_run(cfg, 0)
    ckpt = tmp_path / "ck" / "seed0" / "checkpoint.txt"
    rows, summary = noise_sweep([ckpt], "point_goal", [1.0, 1.5], 4)
    assert len(rows) == 2 and len(summary) == 2
    with pytest.raises(ConfigError, match="does not match"):
        noise_sweep([ckpt], "maze_cont", [1.0], 2)


def test_noise_sweep_rejects_bad_mults(tmp_path, tiny_expert):
    with pytest.raises(UsageError):
        noise_sweep(["unused"], "point_goal", [], 4)
    with pytest.raises(UsageError):
        noise_sweep(["unused"], "point_goal", [0.5], 4)


# --- CLI ------------------------------------------------------------------------------------

def test_cli_full_pipeline(tmp_path, capsys):
    cfg_path = tmp_path / "run.cfg"
    data_path = tmp_path / "expert.jsonl"
    out_dir = tmp_path / "out"
    cfg_path.write_text(TINY_RUN % ("fmirl", data_path, out_dir) + "\nexpert_episodes = 6\n")

    assert main(["gen-expert", "--config", str(cfg_path)]) == 0
    assert data_path.exists()
    assert main(["train", "--config", str(cfg_path)]) == 0
    assert (out_dir / "seed0" / "checkpoint.txt").exists()
    assert main(["eval", "--config", str(cfg_path), "--checkpoint", str(out_dir),
                 "--noise", "1.0,1.5", "--episodes", "4"]) == 0
    assert (out_dir / "eval_results.jsonl").exists()
    assert main(["export", "--out", str(out_dir)]) == 0
    assert (out_dir / "export.csv").exists()
    out = capsys.readouterr().out
    assert "success" in out


def test_cli_exit_codes(tmp_path):
    cfg_path = tmp_path / "bad.cfg"
    cfg_path.write_text("unknown_key = 3\n")
    assert main(["train", "--config", str(cfg_path)]) == 2

    cfg_path.write_text("method = fmirl\nexpert_dataset = /nonexistent/x.jsonl\n"
                        f"out_dir = {tmp_path}/o\n")
    assert main(["train", "--config", str(cfg_path)]) == 3

    ok_cfg = tmp_path / "ok.cfg"
    ok_cfg.write_text("env.name = point_goal\n")
    assert main(["eval", "--config", str(ok_cfg), "--checkpoint",
                 str(tmp_path / "missing"), "--noise", "1.0"]) == 3
    assert main(["export", "--out", str(tmp_path / "nothing")]) == 3


def test_cli_empty_noise_is_usage_error(tmp_path):
    ok_cfg = tmp_path / "ok.cfg"
    ok_cfg.write_text("env.name = point_goal\n")
    assert main(["eval", "--config", str(ok_cfg), "--checkpoint", str(tmp_path),
                 "--noise", " "]) == 2


def test_error_taxonomy_exit_codes():
    from fmirl import errors

    assert errors.ConfigError("x").exit_code == 2
    assert errors.UsageError("x").exit_code == 2
    assert errors.DataError("x").exit_code == 3
    assert errors.NumericalError("x").exit_code == 4
    assert errors.GenerationError("x", step=3).exit_code == 4
    assert errors.GenerationError("x", step=3).step == 3


def test_gen_expert_zero_episodes_writes_header_and_training_refuses(tmp_path):
    cfg = parse_config_text("expert_episodes = 0\nenv.name = point_goal")
    path = tmp_path / "empty.jsonl"
    stats = generate_expert_dataset(cfg, 0, path)
    assert stats["episodes"] == 0
    header, trajs = read_trajectories(path)
    assert header["format"] == "fmirl-traj-1" and trajs == []
    run_cfg = parse_config_text(
        f"method = fmirl\nexpert_dataset = {path}\nout_dir = {tmp_path}/o\n"
        "total_env_steps = 256\nrollout_horizon = 16\nn_envs = 4\n")
    with pytest.raises(DataError):
        train_run(run_cfg, 0)
