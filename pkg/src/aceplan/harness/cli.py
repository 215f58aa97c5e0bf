"""Command-line entry points.

    aceplan train        --config FILE [--seed N] --out DIR
    aceplan eval         --checkpoint PREFIX --episodes N
    aceplan maze-compare --seeds K --out DIR [--config FILE] [--variants ...]
    aceplan ablate       --kind lambda|intrinsic --grid 0.0,0.2,0.4 --config FILE ...
    aceplan oracle-check --suite all|bound|planner|grad [--out DIR]
    aceplan dataset      [--maze FILE] --n N --out FILE
"""

from __future__ import annotations

import argparse
import os
import sys

from ..envs import scripted_navigator_dataset, write_transitions
from .config import RunConfig, dump_config, load_config
from .experiments import MAZE_VARIANTS, run_ablation, run_maze_comparison
from .train import Trainer, load_trainer
from .verification import run_suites


def _load_cfg(args) -> RunConfig:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = str(args.seed)
    if args.config:
        return load_config(args.config, overrides=overrides)
    cfg = RunConfig()
    if overrides:
        cfg.seed = int(overrides["seed"])
    return cfg


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "config.txt"), "w") as fh:
        fh.write(dump_config(cfg))
    trainer = Trainer(cfg, out_dir=args.out)
    result = trainer.run()
    print(f"trained {result['episodes']} episodes / {result['env_steps']} env steps")
    if result["coverage"] is not None:
        print(f"final maze coverage: {result['coverage']:.3f}")
    print(f"metrics: {result['metrics_path']}")
    return 0


def cmd_eval(args) -> int:
    trainer = load_trainer(args.checkpoint)
    result = trainer.evaluate(args.episodes)
    returns = result["returns"]
    print(f"episodes: {args.episodes}")
    print(f"return mean {returns.mean():.4f} +- {returns.std():.4f}")
    print(f"success rate: {result['success_rate']:.2f}")
    return 0


def cmd_maze_compare(args) -> int:
    cfg = _load_cfg(args)
    seeds = list(range(args.seeds))
    variants = args.variants.split(",") if args.variants else list(MAZE_VARIANTS)
    result = run_maze_comparison(cfg, seeds, args.out, variants=variants,
                                 workers=args.workers)
    with open(result["summary_path"]) as fh:
        print(fh.read().strip())
    print(f"curves: {result['curve_path']}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_cfg(args)
    grid = [float(x) for x in args.grid.split(",")]
    result = run_ablation(args.kind, grid, cfg, list(range(args.seeds)), args.out,
                          workers=args.workers)
    for row in result["rows"]:
        print(f"{args.kind}={row['value']}: return {row['return_mean']:.3f} "
              f"+- {row['return_ci']:.3f} ({row['n_seeds']} seeds)")
    print(f"table: {result['table_path']}")
    return 0


def cmd_oracle_check(args) -> int:
    reports = run_suites(args.suite)
    lines = [r.line() for r in reports]
    print("\n".join(lines))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "oracle_report.csv"), "w") as fh:
            fh.write("suite,passed,detail\n")
            for r in reports:
                fh.write(f"{r.name},{int(r.passed)},\"{r.detail}\"\n")
        with open(os.path.join(args.out, "oracle_report.txt"), "w") as fh:
            fh.write("\n".join(lines) + "\n")
    return 0 if all(r.passed for r in reports) else 1


def cmd_dataset(args) -> int:
    maze_text = None
    if args.maze:
        with open(args.maze) as fh:
            maze_text = fh.read()
    transitions, spec = scripted_navigator_dataset(args.n, seed=args.seed,
                                                   maze_text=maze_text)
    write_transitions(args.out, spec.id, 2, 2, transitions)
    print(f"wrote {len(transitions)} transitions to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aceplan",
                                     description="latent-space planning agent")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one agent")
    p.add_argument("--config", default="")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True, help="checkpoint path prefix")
    p.add_argument("--episodes", type=int, default=10)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("maze-compare", help="maze exploration comparison")
    p.add_argument("--config", default="")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--variants", default="")
    p.add_argument("--workers", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_maze_compare)

    p = sub.add_parser("ablate", help="coefficient sweep")
    p.add_argument("--kind", choices=("lambda", "intrinsic"), required=True)
    p.add_argument("--grid", required=True, help="comma-separated values")
    p.add_argument("--config", default="")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--workers", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("oracle-check", help="run verification suites")
    p.add_argument("--suite", choices=("all", "bound", "planner", "grad"),
                   default="all")
    p.add_argument("--out", default="")
    p.set_defaults(fn=cmd_oracle_check)

    p = sub.add_parser("dataset", help="scripted-navigator transition set")
    p.add_argument("--maze", default="", help="ASCII maze file (default fixture)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_dataset)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
