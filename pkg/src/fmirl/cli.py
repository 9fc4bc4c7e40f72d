"""Command-line entry point.

Subcommands: gen-expert, train, eval, export. Exit codes: 0 success,
2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import RunConfig, config_to_text, load_config
from .errors import FmirlError, UsageError
from .evaluate import find_checkpoints, noise_sweep, write_results
from .metrics import export_csv
from .train import generate_expert_dataset, train_run


def _build_parser():
    parser = argparse.ArgumentParser(prog="fmirl")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-expert", help="roll the scripted expert and save a dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="dataset path (default: expert_dataset)")

    p = sub.add_parser("train", help="train one method over the configured seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the seed list")
    p.add_argument("--out", default=None, help="override out_dir")

    p = sub.add_parser("eval", help="evaluate checkpoints across noise multipliers")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True,
                   help="checkpoint file or run dir containing seed*/checkpoint.txt")
    p.add_argument("--noise", default="1.0", help='e.g. "1.0,1.5,2.25"')
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--out", default=None, help="results file path")

    p = sub.add_parser("export", help="merge metrics files into a tidy CSV")
    p.add_argument("--out", required=True, help="run directory to scan")
    p.add_argument("--csv", default=None, help="CSV path (default: <out>/export.csv)")
    return parser


def _load(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seeds = (args.seed,)
    if getattr(args, "out", None) and args.__dict__.get("command") == "train":
        cfg.out_dir = args.out
    return cfg


def cmd_gen_expert(args):
    cfg = _load(args)
    out = args.out or cfg.expert_dataset
    if not out:
        raise UsageError("no output path: set expert_dataset in the config or pass --out")
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    stats = generate_expert_dataset(cfg, cfg.seeds[0], out)
    print(f"wrote {stats['episodes']} episodes to {stats['path']}")
    print(f"success_rate={stats['success_rate']:.3f} mean_return={stats['mean_return']:.3f}")
    return 0


def cmd_train(args):
    cfg = _load(args)
    out_root = Path(cfg.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    (out_root / "config.txt").write_text(config_to_text(cfg), encoding="utf-8")
    for seed in cfg.seeds:
        summary = train_run(cfg, seed)
        ev = summary["final_eval"]
        print(
            f"method={cfg.method} seed={seed} env_steps={summary['env_steps']} "
            f"eval_success={ev['success_rate']} mean_return={ev['mean_return']}"
        )
    return 0


def cmd_eval(args):
    cfg = _load(args)
    noise_text = args.noise.strip()
    if not noise_text:
        raise UsageError("noise list must be non-empty")
    noise_mults = [float(x) for x in noise_text.split(",") if x.strip()]
    episodes = args.episodes or cfg.eval_episodes
    checkpoints = find_checkpoints(args.checkpoint)
    rows, summary = noise_sweep(checkpoints, cfg.env.name, noise_mults, episodes)
    out = args.out or (Path(args.checkpoint) / "eval_results.jsonl"
                       if Path(args.checkpoint).is_dir()
                       else Path(args.checkpoint).with_suffix(".eval.jsonl"))
    write_results(out, rows, summary)
    print(f"{'noise':>6} {'seed':>5} {'success':>8} {'return':>9}")
    for row in rows:
        print(f"{row['noise_mult']:>6.2f} {row['seed']:>5d} "
              f"{row['success_rate']:>8.3f} {row['mean_return']:>9.3f}")
    print(f"{'noise':>6} {'mean success':>13} {'mean return':>12} seeds")
    for row in summary:
        print(f"{row['noise_mult']:>6.2f} {row['success_rate']:>13.3f} "
              f"{row['mean_return']:>12.3f} {row['seeds']}")
    print(f"results written to {out}")
    return 0


def cmd_export(args):
    csv_path = args.csv or str(Path(args.out) / "export.csv")
    n_rows, skipped = export_csv(args.out, csv_path)
    print(f"exported {n_rows} rows to {csv_path} (skipped {skipped} malformed)")
    return 0


_COMMANDS = {
    "gen-expert": cmd_gen_expert,
    "train": cmd_train,
    "eval": cmd_eval,
    "export": cmd_export,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except FmirlError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
