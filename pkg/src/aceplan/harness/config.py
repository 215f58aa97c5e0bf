"""Run configuration: one flat key-value text file drives a whole run.

Defaults follow the published hyper-parameter table (discount 0.99, AdamW
betas 0.9/0.999, PER alpha 0.6 / beta 0.4, loss coefficients 1.0/0.5/0.1,
planner population 256 with 32 elites, decay 1.25, temperature 0.5, horizon
schedule 2->6 over 5 episodes, variance floor 0.5->0.05 over 5 episodes).
Unknown keys are rejected so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from ..planner import PlannerConfig, Schedule

VARIANTS = ("ace", "ace-blind", "icem-no-value", "greedy")


@dataclass
class RunConfig:
    # run control
    env: str = "maze_large"
    variant: str = "ace"
    seed: int = 0
    total_env_steps: int = 30_000
    episode_env_steps: int = 600
    action_repeat: int = 2
    seed_episodes: int = 5
    updates_per_step: int = 1
    checkpoint_every: int = 20        # episodes
    eval_episodes: int = 10

    # off-policy learning
    discount: float = 0.99
    rollout_horizon: int = 6          # segment horizon H
    rollout_discount: float = 0.5     # rho in the multi-objective loss
    batch_size: int = 512
    learning_rate: float = 1e-3
    similarity_coef: float = 1.0      # c1
    reward_coef: float = 0.5          # c2
    value_coef: float = 0.1           # c3
    intrinsic_coef: float = 0.25      # c_r (0.25 dense / 0.5 sparse)
    td_lambda: float = 0.4
    target_momentum: float = 0.99
    policy_delay: int = 2
    grad_clip_norm: float = 10.0
    buffer_episodes: int = 0          # 0 = unlimited
    per_alpha: float = 0.6
    per_beta: float = 0.4
    priority_eps: float = 1e-5
    her_k: int = 0
    greedy_noise_sigma: float = 0.1

    # networks
    latent_dim: int = 50
    gru_hidden: int = 128
    encoder_hidden: int = 256
    mlp_hidden: int = 512
    twin_critic: bool = False

    # intrinsic reward shaping
    reweight_xi: float = 0.5
    reweight_exponent_sign: int = 1
    intrinsic_decay: float = 0.99

    # planning
    planning_horizon: int = 6
    horizon_schedule: str = "2->6(5)"
    sigma_floor_schedule: str = "0.5->0.05(5)"
    iterations: int = 6
    population_size: int = 256
    num_elites: int = 32
    reduction_factor: float = 1.25
    elite_reuse_fraction: float = 0.25
    policy_fraction: float = 0.5
    mean_momentum: float = 0.1
    score_temperature: float = 0.5
    sigma_init: float = 0.5
    mu_init: float = 0.0
    colored_noise_exponent: float = 2.5
    sigma_squared_scaling: bool = False

    # logging / diagnostics
    wall_clock: bool = False
    bias_report_every: int = 20       # episodes; 0 disables
    bias_states: int = 20
    bias_rollouts: int = 5
    model_error_dataset: str = ""     # transition file for predictive-error tracking

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must be in [0, 1)")
        if not 0.0 <= self.td_lambda <= 1.0:
            raise ValueError("td_lambda must be in [0, 1]")
        if self.rollout_horizon < 1 or self.planning_horizon < 1:
            raise ValueError("horizons must be >= 1")
        for name in ("similarity_coef", "reward_coef", "value_coef", "intrinsic_coef",
                     "rollout_discount"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        if self.population_size < 2 * self.num_elites:
            raise ValueError("population_size must be >= 2 * num_elites")
        if self.reduction_factor < 1.0:
            raise ValueError("reduction_factor must be >= 1")
        if self.reweight_exponent_sign not in (1, -1):
            raise ValueError("reweight_exponent_sign must be +1 or -1")
        if self.batch_size < 1 or self.updates_per_step < 0:
            raise ValueError("bad batch size or update count")
        if self.action_repeat < 1 or self.episode_env_steps < self.action_repeat:
            raise ValueError("bad action repeat / episode length")
        parse_schedule(self.horizon_schedule)
        parse_schedule(self.sigma_floor_schedule)

    def planner_config(self, action_dim: int) -> PlannerConfig:
        return PlannerConfig(
            action_dim=action_dim,
            horizon=self.planning_horizon,
            iterations=self.iterations,
            population=self.population_size,
            elites=self.num_elites,
            decay=self.reduction_factor,
            noise_beta=self.colored_noise_exponent,
            temperature=self.score_temperature,
            sigma_init=self.sigma_init,
            mu_init=self.mu_init,
            elite_reuse_fraction=self.elite_reuse_fraction,
            policy_fraction=self.policy_fraction,
            mean_momentum=self.mean_momentum,
            discount=self.discount,
            horizon_schedule=parse_schedule(self.horizon_schedule),
            sigma_floor_schedule=parse_schedule(self.sigma_floor_schedule),
            use_terminal_value=self.variant != "icem-no-value",
            scale_by_sigma_squared=self.sigma_squared_scaling,
        )

    @property
    def episode_agent_steps(self) -> int:
        return self.episode_env_steps // self.action_repeat

    def effective_intrinsic_coef(self) -> float:
        return 0.0 if self.variant == "ace-blind" else self.intrinsic_coef


def parse_schedule(text: str) -> Schedule | None:
    """Parse 'start->final(episodes)'; empty string disables the schedule."""
    text = text.strip()
    if not text or text.lower() == "none":
        return None
    try:
        head, _, tail = text.partition("->")
        final, _, eps = tail.partition("(")
        return Schedule(float(head), float(final), int(eps.rstrip(")")))
    except (ValueError, AttributeError) as exc:
        raise ValueError(f"bad schedule {text!r}; expected 'a->b(n)'") from exc


def _coerce(raw: str, kind: type):
    raw = raw.strip()
    if kind is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"bad boolean {raw!r}")
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


_FIELDS = {f.name: f.type for f in dataclasses.fields(RunConfig)}
_TYPES = {"int": int, "float": float, "str": str, "bool": bool}


def config_from_pairs(pairs: dict, base: RunConfig | None = None) -> RunConfig:
    values = dataclasses.asdict(base) if base is not None else {}
    for key, raw in pairs.items():
        if key not in _FIELDS:
            raise KeyError(f"unknown config key {key!r}")
        values[key] = _coerce(str(raw), _TYPES[_FIELDS[key]])
    return RunConfig(**values)


def load_config(path: str, overrides: dict | None = None) -> RunConfig:
    pairs = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            pairs[key.strip()] = value.strip()
    pairs.update(overrides or {})
    return config_from_pairs(pairs)


def dump_config(cfg: RunConfig) -> str:
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in dataclasses.fields(RunConfig)]
    return "\n".join(lines) + "\n"


def config_to_meta(cfg: RunConfig) -> dict:
    return {f"cfg.{f.name}": str(getattr(cfg, f.name)) for f in dataclasses.fields(RunConfig)}


def config_from_meta(meta: dict) -> RunConfig:
    pairs = {k[len("cfg."):]: v for k, v in meta.items() if k.startswith("cfg.")}
    return config_from_pairs(pairs)
