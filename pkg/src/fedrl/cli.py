"""Command-line interface: single runs, campaigns, analysis tables, policy
evaluation and maze generation."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .campaign import Campaign, emit_analysis_tables, execute_run, load_preset, run_campaign
from .federation import RunConfig
from .gridworld import generate_maze, load_maze_file, save_maze_file
from .metrics import evaluate_policy
from .policy import load_policy


def _add_run_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="run configuration JSON file")
    p.add_argument("--n", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--attack", choices=["none", "rand", "opposite", "adaming"])
    p.add_argument("--lam", type=float, help="adversarial scaling factor")
    p.add_argument("--sigma", type=float)
    p.add_argument("--defense", choices=["fedrl", "comafedrl"])
    p.add_argument("--r-th", dest="r_th", type=float)
    p.add_argument("--base-comm", dest="base_comm", type=int)
    p.add_argument("--low-comm", dest="low_comm", type=int)
    p.add_argument("--high-comm", dest="high_comm", type=int)
    p.add_argument("--wait-comm", dest="wait_comm", type=int)
    p.add_argument("--eval-episodes", dest="eval_episodes", type=int)
    p.add_argument("--maze-file", dest="maze_files", action="append", default=None,
                   help="maze text file, repeat once per agent")
    p.add_argument("--maze-seed-base", dest="maze_seed_base", type=int)
    p.add_argument("--hell-density", dest="hell_density", type=float)
    p.add_argument("--step-limit", dest="step_limit", type=int)
    p.add_argument("--attempts", type=int)
    p.add_argument("--optimizer", choices=["plain", "adam"])


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    d: dict = {}
    if args.config:
        d.update(json.loads(args.config.read_text()))
    for key in (
        "n", "rounds", "t", "delta", "gamma", "seed", "attack", "lam", "sigma",
        "defense", "r_th", "base_comm", "low_comm", "high_comm", "wait_comm",
        "eval_episodes", "maze_files", "maze_seed_base", "hell_density",
        "step_limit", "attempts", "optimizer",
    ):
        value = getattr(args, key, None)
        if value is not None:
            d[key] = value
    return RunConfig.from_dict(d)


def cmd_run(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    summary = execute_run(config, args.out)
    print(json.dumps({k: summary[k] for k in ("run_id", "wr", "consensus_std")}, indent=2))
    return 0


def cmd_campaign(args: argparse.Namespace) -> int:
    if args.preset:
        sweep = load_preset(args.preset)
    else:
        sweep = json.loads(Path(args.sweep).read_text())
    campaign = Campaign.from_sweep(sweep, args.out)
    csv_path = run_campaign(campaign, workers=args.workers)
    print(csv_path)
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    for path in emit_analysis_tables(args.out):
        print(path)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    policy = load_policy(args.snapshot)
    mazes = [load_maze_file(p, env_id=i) for i, p in enumerate(args.maze_files or [])]
    if not mazes:
        raise SystemExit("eval requires at least one --maze-file")
    report = evaluate_policy(
        policy, mazes, attempts=args.attempts,
        rng=np.random.default_rng(args.seed), greedy=args.greedy,
    )
    print(json.dumps({"wr": report.wr, "per_env_wr": report.per_env_wr,
                      "consensus_std": report.consensus_std}, indent=2))
    return 0


def cmd_gen_maze(args: argparse.Namespace) -> int:
    maze = generate_maze(
        args.seed, width=args.width, height=args.height, hell_density=args.hell_density
    )
    if args.out:
        save_maze_file(maze, args.out)
        print(args.out)
    else:
        from .gridworld import maze_to_text

        sys.stdout.write(maze_to_text(maze))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedrl")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a single training run")
    _add_run_overrides(p_run)
    p_run.add_argument("--out", type=Path, default=Path("results"))
    p_run.set_defaults(func=cmd_run)

    p_camp = sub.add_parser("campaign", help="execute a sweep of runs")
    src = p_camp.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", help="named preset (figure6, figure7, figure9, table3, figure13)")
    src.add_argument("--sweep", type=Path, help="sweep definition JSON file")
    p_camp.add_argument("--out", type=Path, default=Path("results"))
    p_camp.add_argument("--workers", type=int, default=1)
    p_camp.set_defaults(func=cmd_campaign)

    p_an = sub.add_parser("analyze", help="emit residual-information CSV grids")
    p_an.add_argument("--out", type=Path, default=Path("results"))
    p_an.set_defaults(func=cmd_analyze)

    p_eval = sub.add_parser("eval", help="score a saved policy snapshot")
    p_eval.add_argument("--snapshot", type=Path, required=True)
    p_eval.add_argument("--maze-file", dest="maze_files", action="append")
    p_eval.add_argument("--attempts", type=int, default=100)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--greedy", action="store_true")
    p_eval.set_defaults(func=cmd_eval)

    p_gen = sub.add_parser("gen-maze", help="generate a solvable maze file")
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--width", type=int, default=10)
    p_gen.add_argument("--height", type=int, default=10)
    p_gen.add_argument("--hell-density", dest="hell_density", type=float, default=0.12)
    p_gen.add_argument("--out", type=Path)
    p_gen.set_defaults(func=cmd_gen_maze)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
