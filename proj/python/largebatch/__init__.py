"""Large-minibatch training recipe simulator."""

from ._largebatch import (
    Error,
    OptimizerHyper,
    all_reduce,
    alpha_sgd_at,
    blend_at,
    bn_sync,
    default_config,
    eta_base,
    fit_cost_model,
    from_binary16,
    lr_at,
    optimizer_step,
    ring_time,
    round_to_binary16,
    run,
    scaling_efficiency,
    simulate_allreduce,
    to_binary16,
)

__all__ = [
    "Error",
    "OptimizerHyper",
    "all_reduce",
    "alpha_sgd_at",
    "blend_at",
    "bn_sync",
    "default_config",
    "eta_base",
    "fit_cost_model",
    "from_binary16",
    "lr_at",
    "optimizer_step",
    "ring_time",
    "round_to_binary16",
    "run",
    "scaling_efficiency",
    "simulate_allreduce",
    "to_binary16",
]
