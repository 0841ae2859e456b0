"""Shared game types: configuration, threshold policy, loss weights.

The principal commits to a classifier ``f`` and an abstention rule ``r``;
an agent with true feature ``x`` then reports ``x_hat`` maximizing

    U(x_hat | x) = f(x_hat) * r(x_hat) - gamma * dist(x_hat, x)

and the principal pays ``l(f(x_hat), y)`` when it accepts and ``c`` when it
abstains.  In the one-dimensional case study ``dist`` is the squared
distance, so an agent never moves farther than ``K = 1 / sqrt(gamma)``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

DOMAIN_LO = -2.0
DOMAIN_HI = 2.0

DEFAULT_GAMMA = 0.4444
DEFAULT_C = 0.3
DEFAULT_SIGMA = 0.5


class ConfigError(ValueError):
    """Invalid game parameters."""


def k_of_gamma(gamma: float) -> float:
    """Largest displacement an agent will pay for: ``1 / sqrt(gamma)``."""
    if not (gamma > 0) or not math.isfinite(gamma):
        raise ConfigError(f"gamma must be a finite positive number, got {gamma!r}")
    return 1.0 / math.sqrt(gamma)


@dataclass(frozen=True)
class LossSpec:
    """Misclassification weights; correct predictions always cost 0."""

    l01: float = 1.0  # predicted 0, true label 1
    l10: float = 1.0  # predicted 1, true label 0

    def __post_init__(self) -> None:
        for name in ("l01", "l10"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"{name} must lie in [0, 1], got {v!r}")

    def __call__(self, prediction: int, label: int) -> float:
        if prediction == label:
            return 0.0
        return self.l01 if prediction == 0 else self.l10


UNIT_LOSS = LossSpec()


@dataclass(frozen=True)
class GameConfig:
    """Case-study parameters.

    ``sigma`` is the label-noise scale used only by the simulation; the
    closed-form solvers require ``sigma == 0``.
    """

    gamma: float = DEFAULT_GAMMA
    c: float = DEFAULT_C
    sigma: float = 0.0
    domain_lo: float = DOMAIN_LO
    domain_hi: float = DOMAIN_HI

    def __post_init__(self) -> None:
        k_of_gamma(self.gamma)
        if not (0.0 <= self.c <= 1.0):
            raise ConfigError(f"c must lie in [0, 1], got {self.c!r}")
        if not (self.sigma >= 0.0) or not math.isfinite(self.sigma):
            raise ConfigError(f"sigma must be finite and nonnegative, got {self.sigma!r}")
        if not (self.domain_lo < self.domain_hi):
            raise ConfigError("domain_lo must be below domain_hi")

    @property
    def K(self) -> float:
        return k_of_gamma(self.gamma)

    @classmethod
    def from_k(cls, K: float, c: float = DEFAULT_C, sigma: float = 0.0) -> "GameConfig":
        if not (K > 0) or not math.isfinite(K):
            raise ConfigError(f"K must be a finite positive number, got {K!r}")
        return cls(gamma=1.0 / (K * K), c=c, sigma=sigma)

    def replace(self, **changes) -> "GameConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["K"] = self.K
        return d


@dataclass(frozen=True)
class ThresholdPolicy:
    """Classifier ``1{x >= 0}`` with a symmetric abstention band ``|x| < t``."""

    t: float

    def __post_init__(self) -> None:
        if not (self.t >= 0.0):
            raise ConfigError(f"threshold must be nonnegative, got {self.t!r}")

    def predict(self, x: float) -> int:
        return int(x >= 0.0)

    def accept(self, x: float) -> int:
        return int(abs(x) >= self.t)


@dataclass(frozen=True)
class BestResponse:
    x_hat: float
    manipulated: bool
    utility: float


def pointwise_loss(prediction: int, label: int, accepted: int,
                   spec: LossSpec = UNIT_LOSS, c: float = DEFAULT_C) -> float:
    """Principal's loss on one agent: ``l(prediction, label)`` if accepted, else ``c``."""
    if not accepted:
        return c
    return spec(prediction, label)
