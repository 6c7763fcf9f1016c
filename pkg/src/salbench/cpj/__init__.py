"""Learned perceptual saliency metric: network, training and checkpoints."""

from .network import (
    CpjConfig,
    CpjNetwork,
    desk_config,
    forward_pair,
    init_network,
    load_checkpoint,
    save_checkpoint,
    score,
    score_many,
    stack_input,
)
from .training import (
    TrainingHistory,
    TrainingTriplet,
    anchor_ordering_fractions,
    gradient_check,
    gradients,
    loss,
    pairwise_accuracy,
    train,
)

__all__ = [
    "CpjConfig",
    "CpjNetwork",
    "TrainingHistory",
    "TrainingTriplet",
    "anchor_ordering_fractions",
    "desk_config",
    "forward_pair",
    "gradient_check",
    "gradients",
    "init_network",
    "load_checkpoint",
    "loss",
    "pairwise_accuracy",
    "save_checkpoint",
    "score",
    "score_many",
    "stack_input",
    "train",
]
