from .networks import (
    AgentConfig,
    AgentNetworks,
    PlanningModel,
    embedding_consistency_losses,
    model_loss,
)
from .intrinsic import RewardNormalizer, intrinsic_batch, raw_prediction_errors
from .values import (
    lambda_loss,
    lambda_residuals,
    policy_objective,
    qk_target,
    qk_targets_batch,
    qlambda_target,
    qlambda_targets_batch,
    rho_weighted_total,
    td_lambda_weights,
    tdk_loss,
)

__all__ = [
    "AgentConfig",
    "AgentNetworks",
    "PlanningModel",
    "RewardNormalizer",
    "embedding_consistency_losses",
    "intrinsic_batch",
    "lambda_loss",
    "lambda_residuals",
    "model_loss",
    "policy_objective",
    "qk_target",
    "qk_targets_batch",
    "qlambda_target",
    "qlambda_targets_batch",
    "raw_prediction_errors",
    "rho_weighted_total",
    "td_lambda_weights",
    "tdk_loss",
]
