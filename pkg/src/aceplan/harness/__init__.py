from .config import RunConfig, config_from_meta, config_to_meta, dump_config, load_config
from .train import METRICS_HEADER, Trainer, TrainingDiverged, load_trainer
from .experiments import run_ablation, run_maze_comparison
from .verification import bound_suite, grad_suite, planner_suite, run_suites

__all__ = [
    "METRICS_HEADER",
    "RunConfig",
    "Trainer",
    "TrainingDiverged",
    "bound_suite",
    "config_from_meta",
    "config_to_meta",
    "dump_config",
    "grad_suite",
    "load_config",
    "load_trainer",
    "planner_suite",
    "run_ablation",
    "run_maze_comparison",
    "run_suites",
]
