"""Experiment drivers: the maze exploration comparison, hyper-parameter
ablations, and aggregation helpers. Individual runs are independent processes
(one per seed/variant cell); aggregation reads their metrics files back.
"""

from __future__ import annotations

import csv
import dataclasses
import multiprocessing as mp
import os

import numpy as np

from ..envs import scripted_navigator_dataset, write_transitions
from .config import RunConfig
from .train import Trainer

MAZE_VARIANTS = ("ace", "ace-blind", "icem-no-value", "greedy")


def _run_cell(payload) -> dict:
    cfg_values, out_dir = payload
    cfg = RunConfig(**cfg_values)
    trainer = Trainer(cfg, out_dir=out_dir)
    result = trainer.run()
    evaluation = trainer.evaluate(cfg.eval_episodes) if cfg.eval_episodes else None
    summary = {
        "out_dir": out_dir,
        "variant": cfg.variant,
        "seed": cfg.seed,
        "episodes": result["episodes"],
        "coverage": result["coverage"],
        "metrics_path": result["metrics_path"],
    }
    if evaluation is not None:
        summary["eval_return_mean"] = float(evaluation["returns"].mean())
        summary["eval_success_rate"] = evaluation["success_rate"]
    return summary


def run_cells(cells: list, workers: int = 1) -> list:
    if workers <= 1 or len(cells) <= 1:
        return [_run_cell(c) for c in cells]
    # single-threaded BLAS in workers: the matrices are small and the
    # parallelism budget belongs to the seeds
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS"):
        os.environ.setdefault(var, "1")
    method = "fork" if "fork" in mp.get_all_start_methods() else "spawn"
    ctx = mp.get_context(method)
    with ctx.Pool(processes=workers) as pool:
        return pool.map(_run_cell, cells)


def _cfg_values(cfg: RunConfig, **overrides) -> dict:
    values = dataclasses.asdict(cfg)
    values.update(overrides)
    return values


def read_metrics(path: str) -> dict:
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    cols: dict = {}
    for key in rows[0] if rows else []:
        cols[key] = np.array([float(r[key]) if r[key] != "" else np.nan for r in rows])
    return cols


def run_maze_comparison(base_cfg: RunConfig, seeds, out_dir: str,
                        variants=MAZE_VARIANTS, workers: int = 1,
                        dataset_transitions: int = 2000) -> dict:
    """Train every variant on the fixture maze for each seed and aggregate
    coverage curves plus cumulative model predictive error on a scripted
    navigator test set."""
    os.makedirs(out_dir, exist_ok=True)
    dataset_path = os.path.join(out_dir, "navigator_test_set.bin")
    transitions, spec = scripted_navigator_dataset(
        dataset_transitions, seed=base_cfg.seed,
        episode_env_steps=base_cfg.episode_env_steps,
        action_repeat=base_cfg.action_repeat)
    write_transitions(dataset_path, spec.id, 2, 2, transitions)

    cells = []
    for variant in variants:
        for seed in seeds:
            run_dir = os.path.join(out_dir, variant, f"seed{seed}")
            cells.append((_cfg_values(base_cfg, env="maze_large", variant=variant,
                                      seed=int(seed), model_error_dataset=dataset_path),
                          run_dir))
    summaries = run_cells(cells, workers=workers)

    by_variant: dict = {v: [] for v in variants}
    for summary in summaries:
        metrics = read_metrics(summary["metrics_path"])
        cum_err = np.nancumsum(metrics["model_error"])
        summary["final_coverage"] = float(metrics["coverage"][-1])
        summary["cumulative_model_error"] = float(cum_err[-1])
        summary["coverage_curve"] = metrics["coverage"]
        summary["steps"] = metrics["step"]
        by_variant[summary["variant"]].append(summary)

    aggregate = {}
    for variant, runs in by_variant.items():
        curves = np.stack([r["coverage_curve"] for r in runs])
        aggregate[variant] = {
            "steps": runs[0]["steps"],
            "coverage_mean": curves.mean(axis=0),
            "coverage_per_seed": curves,
            "final_coverage_mean": float(curves[:, -1].mean()),
            "cumulative_model_error_mean": float(np.mean(
                [r["cumulative_model_error"] for r in runs])),
        }

    curve_path = os.path.join(out_dir, "coverage_curves.csv")
    with open(curve_path, "w") as fh:
        header = ["step"] + [f"{v}_coverage_mean" for v in variants]
        fh.write(",".join(header) + "\n")
        steps = aggregate[variants[0]]["steps"]
        for i, step in enumerate(steps):
            row = [str(int(step))] + [f"{aggregate[v]['coverage_mean'][i]:.6f}"
                                      for v in variants]
            fh.write(",".join(row) + "\n")

    summary_path = os.path.join(out_dir, "summary.txt")
    with open(summary_path, "w") as fh:
        fh.write("maze exploration comparison\n")
        for variant in variants:
            agg = aggregate[variant]
            fh.write(f"{variant}: final coverage {agg['final_coverage_mean']:.3f}, "
                     f"cumulative model error {agg['cumulative_model_error_mean']:.4f}\n")
    return {"aggregate": aggregate, "runs": summaries, "curve_path": curve_path,
            "summary_path": summary_path, "dataset_path": dataset_path}


ABLATION_KEYS = {"lambda": "td_lambda", "intrinsic": "intrinsic_coef"}


def run_ablation(kind: str, grid, base_cfg: RunConfig, seeds, out_dir: str,
                 workers: int = 1) -> dict:
    """Sweep one coefficient over `grid`, `len(seeds)` runs per cell."""
    if kind not in ABLATION_KEYS:
        raise ValueError(f"ablation kind must be one of {sorted(ABLATION_KEYS)}")
    if not len(grid):
        raise ValueError("ablation grid is empty")
    key = ABLATION_KEYS[kind]
    os.makedirs(out_dir, exist_ok=True)
    cells = []
    for value in grid:
        for seed in seeds:
            run_dir = os.path.join(out_dir, f"{key}={value}", f"seed{seed}")
            cells.append((_cfg_values(base_cfg, seed=int(seed), **{key: float(value)}),
                          run_dir))
    summaries = run_cells(cells, workers=workers)

    rows = []
    for value in grid:
        returns = [s["eval_return_mean"] for s in summaries
                   if s["out_dir"].startswith(os.path.join(out_dir, f"{key}={value}"))]
        mean = float(np.mean(returns))
        half_ci = float(1.96 * np.std(returns) / np.sqrt(len(returns))) if len(returns) > 1 else 0.0
        rows.append({"value": float(value), "return_mean": mean, "return_ci": half_ci,
                     "n_seeds": len(returns)})
    table_path = os.path.join(out_dir, f"ablation_{kind}.csv")
    with open(table_path, "w") as fh:
        fh.write(f"{key},return_mean,return_ci,n_seeds\n")
        for row in rows:
            fh.write(f"{row['value']},{row['return_mean']:.6f},"
                     f"{row['return_ci']:.6f},{row['n_seeds']}\n")
    return {"rows": rows, "table_path": table_path, "runs": summaries}
