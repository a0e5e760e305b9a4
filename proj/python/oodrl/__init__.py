"""Out-of-distribution detection benchmark for deep reinforcement learning."""

from oodrl._core import (
    ConfigError,
    DataError,
    Error,
    MethodError,
    ShapeError,
    SpecError,
    TrainingError,
    UsageError,
    aggregate,
    auc,
    cartpole_step,
    corrupt,
    ensemble_score,
    env_ids,
    forward,
    init_network,
    load_checkpoint,
    make_env,
    mc_score,
    pendulum_step,
    severity_grid,
    variant_presets,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Error",
    "MethodError",
    "ShapeError",
    "SpecError",
    "TrainingError",
    "UsageError",
    "aggregate",
    "auc",
    "cartpole_step",
    "corrupt",
    "ensemble_score",
    "env_ids",
    "forward",
    "init_network",
    "load_checkpoint",
    "make_env",
    "mc_score",
    "pendulum_step",
    "severity_grid",
    "variant_presets",
]
