"""Exact solutions for the uniform one-dimensional case study.

Features are ``x ~ Unif[-2, 2]`` with labels ``y = 1{x >= 0}``, the
classifier is ``1{x >= 0}`` and the principal abstains on ``|x| < t``.
Agents pay ``gamma * (x_hat - x)**2`` to misreport.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DOMAIN_HI, DOMAIN_LO, BestResponse, ConfigError, GameConfig

# Crossovers where manipulation with abstention equals the no-abstention level.
CROSSOVER_LOW_C = math.sqrt(8.0)
CROSSOVER_HIGH_C = math.sqrt(16.0 / 3.0)
_CROSSOVER_RTOL = 1e-12


class Regime(enum.Enum):
    """The (K, c) cases used for expected manipulation."""

    LOW_K_CHEAP = "0<K<=2, c<0.5"
    LOW_K_COSTLY = "0<K<=2, c>=0.5"
    MID_K_CHEAP = "2<K<=4, c<0.5"
    MID_K_COSTLY = "2<K<=4, c>=0.5"
    HIGH_K = "K>4"


class Ordering(enum.Enum):
    ABSTENTION_LOWER = "abstention_lower"
    EQUAL = "equal"
    ABSTENTION_HIGHER = "abstention_higher"


@dataclass(frozen=True)
class OptimalThreshold:
    lo: float
    hi: float
    canonical: float
    loss: float

    @property
    def unique(self) -> bool:
        return self.lo == self.hi


@dataclass(frozen=True)
class ManipulationReport:
    expected_manipulation: float
    regime: Regime
    t: Optional[float] = None  # threshold the agents respond to; None without abstention


def _check_domain(config: GameConfig) -> None:
    if (config.domain_lo, config.domain_hi) != (DOMAIN_LO, DOMAIN_HI):
        raise ConfigError("closed-form results hold only on the domain [-2, 2]")


def _check_noiseless(config: GameConfig) -> None:
    _check_domain(config)
    if config.sigma != 0.0:
        raise ConfigError("closed-form losses assume noiseless labels (sigma = 0)")


def _check_x(x: float) -> None:
    if not (DOMAIN_LO <= x <= DOMAIN_HI):
        raise ValueError(f"feature {x!r} outside [-2, 2]")


def regime(config: GameConfig) -> Regime:
    K, c = config.K, config.c
    if K > 4.0:
        return Regime.HIGH_K
    cheap = c < 0.5
    if K <= 2.0:
        return Regime.LOW_K_CHEAP if cheap else Regime.LOW_K_COSTLY
    return Regime.MID_K_CHEAP if cheap else Regime.MID_K_COSTLY


def _manipulates(x, t: float, K: float):
    # Open interval on both ends: at x = t - K the agent is indifferent and stays.
    return (x > max(DOMAIN_LO, t - K)) & (x < t)


def best_response(x: float, t: float, config: GameConfig) -> BestResponse:
    """Agent's report against abstention band ``|x| < t``.

    Moves to ``t`` exactly when ``x`` lies in ``(max(-2, t - K), t)``.
    """
    _check_x(x)
    if not (t >= 0.0):
        raise ValueError(f"threshold must be nonnegative, got {t!r}")
    _check_domain(config)
    x_hat = t if _manipulates(x, t, config.K) else x
    gain = float(x_hat >= 0.0 and abs(x_hat) >= t)
    return BestResponse(x_hat=x_hat, manipulated=x_hat != x,
                        utility=gain - config.gamma * (x_hat - x) ** 2)


def best_response_no_abstention(x: float, config: GameConfig) -> BestResponse:
    """Agent's report when the principal always decides: jump to 0 from ``[-K, 0)``."""
    _check_x(x)
    _check_domain(config)
    x_hat = 0.0 if -config.K <= x < 0.0 else x
    gain = float(x_hat >= 0.0)
    return BestResponse(x_hat=x_hat, manipulated=x_hat != x,
                        utility=gain - config.gamma * (x_hat - x) ** 2)


def respond(x: np.ndarray, t: float, K: float) -> np.ndarray:
    """Vectorized :func:`best_response` reports for an array of features."""
    x = np.asarray(x, dtype=float)
    return np.where(_manipulates(x, t, K), t, x)


def analytic_loss(t: float, config: GameConfig) -> float:
    """Principal's expected loss at threshold ``t`` against strategic agents.

    Agents in ``(a, 0)`` with ``a = max(-2, t - K)`` are misclassified
    after jumping to ``t``; truthful agents in ``(-t, a]`` are abstained on.
    Everything else costs nothing.
    """
    _check_noiseless(config)
    if not (0.0 <= t <= DOMAIN_HI):
        raise ValueError(f"threshold {t!r} outside [0, 2]")
    a = max(DOMAIN_LO, t - config.K)
    return 0.25 * (config.c * max(0.0, t + a) + max(0.0, -a))


def analytic_loss_nonstrategic(t: float, config: GameConfig) -> float:
    """Loss with truthful agents: only the abstention band ``|x| < t`` costs ``c``."""
    _check_noiseless(config)
    if not (0.0 <= t <= DOMAIN_HI):
        raise ValueError(f"threshold {t!r} outside [0, 2]")
    return 0.5 * config.c * t


def manipulation_fraction(t: float, config: GameConfig) -> float:
    """Population share of agents that misreport at threshold ``t``."""
    _check_domain(config)
    return 0.25 * (t - max(DOMAIN_LO, t - config.K))


def manipulation_mass_unqualified(t: float, config: GameConfig) -> float:
    """``E[|x - x_hat| ; x < 0]`` at threshold ``t`` (mass over the full population)."""
    _check_domain(config)
    a = max(DOMAIN_LO, t - config.K)
    if a >= 0.0:
        return 0.0
    # (1/4) * integral_a^0 (t - x) dx
    return 0.25 * (-a * t + 0.5 * a * a)


def optimal_threshold(config: GameConfig) -> OptimalThreshold:
    """Minimizing threshold set and minimum loss.

    The set is returned as a closed interval; ``canonical`` is its
    smallest element.
    """
    _check_noiseless(config)
    K, c = config.K, config.c
    if K > 4.0:
        lo, hi = 0.0, 2.0
    elif c < 0.5:
        lo = hi = min(K, 2.0)
    elif c == 0.5:
        lo, hi = K / 2.0, min(K, 2.0)
    else:
        lo = hi = K / 2.0

    if K > 4.0:
        loss = 0.5
    elif c >= 0.5:
        loss = K / 8.0
    elif K < 2.0:
        loss = c * K / 4.0
    else:
        loss = 0.25 * (K - 2.0 + c * (4.0 - K))
    return OptimalThreshold(lo=lo, hi=hi, canonical=lo, loss=loss)


def no_abstention_loss(config: GameConfig) -> float:
    """Loss when the principal cannot abstain: the mass of ``[-K, 0)``."""
    _check_noiseless(config)
    K = config.K
    return K / 4.0 if K <= 2.0 else 0.5


def expected_manipulation_no_abstention(config: GameConfig) -> ManipulationReport:
    _check_noiseless(config)
    K = config.K
    value = K * K / 8.0 if K <= 2.0 else 0.5
    return ManipulationReport(expected_manipulation=value, regime=regime(config))


def _response_threshold(config: GameConfig, t_choice: Optional[float]) -> float:
    if config.K > 4.0:
        if t_choice is None:
            raise ConfigError("K > 4: every threshold in [0, 2] is optimal; pass t_choice")
        if not (0.0 <= t_choice <= 2.0):
            raise ConfigError(f"t_choice must lie in [0, 2], got {t_choice!r}")
        return float(t_choice)
    return optimal_threshold(config).canonical


def expected_manipulation_with_abstention(config: GameConfig,
                                          t_choice: Optional[float] = None) -> ManipulationReport:
    """Manipulation by unqualified agents at the optimal threshold.

    ``t_choice`` selects the threshold when ``K > 4`` (all thresholds are
    optimal there) and is ignored otherwise.
    """
    _check_noiseless(config)
    t = _response_threshold(config, t_choice)
    K = config.K
    reg = regime(config)
    if reg is Regime.HIGH_K:
        value = t / 2.0 + 0.5
    elif reg is Regime.LOW_K_CHEAP:
        value = 0.0
    elif reg is Regime.MID_K_CHEAP:
        value = K * K / 8.0 - 0.5
    else:
        value = 3.0 * K * K / 32.0
    return ManipulationReport(expected_manipulation=value, regime=reg, t=t)


def _compare_k(K: float, crossover: float) -> Ordering:
    if math.isclose(K, crossover, rel_tol=_CROSSOVER_RTOL):
        return Ordering.EQUAL
    return Ordering.ABSTENTION_LOWER if K < crossover else Ordering.ABSTENTION_HIGHER


def manipulation_comparison(config: GameConfig, t_choice: Optional[float] = None) -> Ordering:
    """Sign of (manipulation with abstention) - (manipulation without).

    Decided by region so the crossovers at ``K = sqrt(8)`` and
    ``K = sqrt(16/3)`` are exact rather than subject to rounding.
    """
    _check_noiseless(config)
    reg = regime(config)
    if reg in (Regime.LOW_K_CHEAP, Regime.LOW_K_COSTLY):
        return Ordering.ABSTENTION_LOWER
    if reg is Regime.MID_K_CHEAP:
        return _compare_k(config.K, CROSSOVER_LOW_C)
    if reg is Regime.MID_K_COSTLY:
        return _compare_k(config.K, CROSSOVER_HIGH_C)
    t = _response_threshold(config, t_choice)
    return Ordering.EQUAL if t == 0.0 else Ordering.ABSTENTION_HIGHER
