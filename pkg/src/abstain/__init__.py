"""Strategic classification with abstention: closed forms, brute-force oracle, simulation."""

__version__ = "0.1.0"

from .core import (BestResponse, ConfigError, GameConfig, LossSpec, ThresholdPolicy,
                   k_of_gamma, pointwise_loss)

__all__ = ["BestResponse", "ConfigError", "GameConfig", "LossSpec", "ThresholdPolicy",
           "k_of_gamma", "pointwise_loss", "__version__"]
