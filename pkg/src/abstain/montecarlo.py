"""Seeded simulation of the abstention game with noisy labels.

Random numbers come from NumPy's PCG64 bit generator.  A population for
master seed ``s`` uses ``PCG64(SeedSequence(s))``; sweep row ``k`` uses the
64-bit seed drawn from ``SeedSequence(s, spawn_key=(k,))``.  Features are
``Unif[-2, 2]``; label noise is Gaussian by inverse transform
(``scipy.special.ndtri`` applied to uniforms from the same stream).

One population is drawn per (config, seed) and reused across the whole
threshold grid.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, TypeVar

import numpy as np
from scipy.special import ndtri

from .closed_form import respond
from .core import DOMAIN_HI, DOMAIN_LO, ConfigError, GameConfig

DEFAULT_GRID = (0.01, 2.0, 0.01)
DEFAULT_COUNT = 100_000
SWEEP_PARAMS = ("gamma", "c", "sigma")

GENERATOR_INFO = {
    "bit_generator": "numpy PCG64",
    "seeding": "SeedSequence(seed); sweep row k seeded by SeedSequence(seed, spawn_key=(k,))",
    "features": "uniform(-2, 2)",
    "normal_method": "inverse transform, scipy.special.ndtri(uniform)",
}

T = TypeVar("T")


@dataclass(frozen=True, eq=False)
class Population:
    x: np.ndarray
    y: np.ndarray
    seed: int
    sigma: float

    @property
    def count(self) -> int:
        return self.x.shape[0]

    @property
    def samples(self) -> list[tuple[float, int]]:
        return list(zip(self.x.tolist(), self.y.astype(int).tolist()))


@dataclass(frozen=True)
class PolicyEvaluation:
    loss: float
    manip_fraction: float
    manip_mass_unqualified: float


@dataclass(frozen=True)
class CurveRow:
    t: float
    loss_strategic: float
    loss_nonstrategic: float
    manip_fraction: float
    manip_mass_unqualified: float


@dataclass(frozen=True)
class LossCurve:
    rows: tuple[CurveRow, ...]
    grid_lo: float
    grid_hi: float
    grid_step: float

    @property
    def t(self) -> np.ndarray:
        return np.array([r.t for r in self.rows])

    def losses(self, strategic: bool) -> np.ndarray:
        attr = "loss_strategic" if strategic else "loss_nonstrategic"
        return np.array([getattr(r, attr) for r in self.rows])

    def argmin(self, strategic: bool) -> CurveRow:
        """Row with least loss; ties go to the smallest threshold."""
        return self.rows[int(np.argmin(self.losses(strategic)))]

    def at(self, t: float) -> CurveRow:
        for row in self.rows:
            if row.t == t:
                return row
        raise KeyError(t)


@dataclass(frozen=True)
class SweepRow:
    value: float
    t_star: float      # non-strategic optimum
    t_bar: float       # strategic optimum
    loss_star: float
    loss_bar: float


@dataclass(frozen=True)
class HarmReport:
    loss_strat_opt: float
    loss_nonstrat_opt: float
    loss_strat_zero: float
    loss_nonstrat_zero: float
    delta_h: float
    t_star: float = 0.0
    t_bar: float = 0.0

    @property
    def h_abstention(self) -> float:
        return self.loss_strat_opt - self.loss_nonstrat_opt

    @property
    def h_no_abstention(self) -> float:
        return self.loss_strat_zero - self.loss_nonstrat_zero


def derive_seed(seed: int, index: int) -> int:
    """Independent 64-bit seed for substream ``index`` of master ``seed``."""
    ss = np.random.SeedSequence(seed, spawn_key=(index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sample_population(count: int, sigma: float, seed: int) -> Population:
    if count < 1:
        raise ValueError("count must be at least 1")
    if not (sigma >= 0.0):
        raise ConfigError(f"sigma must be nonnegative, got {sigma!r}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    x = rng.uniform(DOMAIN_LO, DOMAIN_HI, size=count)
    u = rng.random(count)
    if sigma > 0.0:
        y = x + sigma * ndtri(u) > 0.0
    else:
        y = x >= 0.0
    x.setflags(write=False)
    y.setflags(write=False)
    return Population(x=x, y=y, seed=seed, sigma=sigma)


def _check_t(t: float) -> None:
    if not (0.0 <= t <= DOMAIN_HI):
        raise ValueError(f"threshold {t!r} outside [0, 2]")


def evaluate_policy(pop: Population, t: float, config: GameConfig, strategic: bool) -> PolicyEvaluation:
    """Sample-average loss and manipulation at threshold ``t``."""
    _check_t(t)
    x = pop.x
    x_hat = respond(x, t, config.K) if strategic else x
    accepted = np.abs(x_hat) >= t
    wrong = (x_hat >= 0.0) != pop.y
    loss = np.where(accepted, wrong, config.c).mean()
    moved = x_hat != x
    shift = np.where(x < 0.0, np.abs(x - x_hat), 0.0)
    return PolicyEvaluation(loss=float(loss), manip_fraction=float(moved.mean()),
                            manip_mass_unqualified=float(shift.mean()))


def grid_points(grid: tuple[float, float, float] = DEFAULT_GRID) -> np.ndarray:
    """``0`` followed by ``lo, lo + step, ..., hi``."""
    lo, hi, step = grid
    if not (step > 0):
        raise ValueError("grid step must be positive")
    if not (0.0 <= lo <= hi <= DOMAIN_HI):
        raise ValueError(f"grid [{lo}, {hi}] must lie within [0, 2]")
    k = int(np.floor((hi - lo) / step + 1e-9))
    pts = np.round(lo + step * np.arange(k + 1), 12)
    if pts.size == 0:
        raise ValueError("empty grid")
    if pts[0] != 0.0:
        pts = np.concatenate(([0.0], pts))
    return pts


def loss_curve(pop: Population, config: GameConfig,
               grid: tuple[float, float, float] = DEFAULT_GRID) -> LossCurve:
    rows = []
    for t in grid_points(grid):
        t = float(t)
        s = evaluate_policy(pop, t, config, strategic=True)
        ns = evaluate_policy(pop, t, config, strategic=False)
        rows.append(CurveRow(t=t, loss_strategic=s.loss, loss_nonstrategic=ns.loss,
                             manip_fraction=s.manip_fraction,
                             manip_mass_unqualified=s.manip_mass_unqualified))
    lo, hi, step = grid
    return LossCurve(rows=tuple(rows), grid_lo=lo, grid_hi=hi, grid_step=step)


def grid_search(pop: Population, config: GameConfig, strategic: bool,
                grid: tuple[float, float, float] = DEFAULT_GRID) -> tuple[LossCurve, float]:
    """Loss curve over ``{0} U grid`` and the minimizing threshold for one agent model."""
    curve = loss_curve(pop, config, grid)
    return curve, curve.argmin(strategic).t


def resolve_workers(workers: Optional[int] = None) -> int:
    """Thread count for sweeps; ``ABSTAIN_THREADS`` caps any request."""
    env = os.environ.get("ABSTAIN_THREADS")
    cap = int(env) if env else None
    if workers is None:
        workers = cap if cap is not None else 1
    elif cap is not None:
        workers = min(workers, cap)
    return max(1, int(workers))


def _ordered_map(fn: Callable[[int], T], n: int, workers: Optional[int]) -> list[T]:
    workers = resolve_workers(workers)
    if workers == 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n)))


def _config_for(param: str, value: float, config: GameConfig) -> GameConfig:
    if param not in SWEEP_PARAMS:
        raise ValueError(f"unknown sweep parameter {param!r}; expected one of {SWEEP_PARAMS}")
    return config.replace(**{param: float(value)})


def sweep_row_from_curve(value: float, curve: LossCurve) -> SweepRow:
    star, bar = curve.argmin(strategic=False), curve.argmin(strategic=True)
    return SweepRow(value=float(value), t_star=star.t, t_bar=bar.t,
                    loss_star=star.loss_nonstrategic, loss_bar=bar.loss_strategic)


def harm_from_curve(curve: LossCurve) -> HarmReport:
    """Compose the harm change from the optimal rows and the ``t = 0`` row of one curve."""
    bar = curve.argmin(strategic=True)
    star = curve.argmin(strategic=False)
    zero = curve.at(0.0)
    delta = ((bar.loss_strategic - star.loss_nonstrategic)
             - (zero.loss_strategic - zero.loss_nonstrategic))
    return HarmReport(loss_strat_opt=bar.loss_strategic, loss_nonstrat_opt=star.loss_nonstrategic,
                      loss_strat_zero=zero.loss_strategic, loss_nonstrat_zero=zero.loss_nonstrategic,
                      delta_h=delta, t_star=star.t, t_bar=bar.t)


def harm(config: GameConfig, count: int = DEFAULT_COUNT, seed: int = 42,
         grid: tuple[float, float, float] = DEFAULT_GRID) -> HarmReport:
    """Change in strategic harm from optimal abstention versus none, on one population."""
    pop = sample_population(count, config.sigma, seed)
    return harm_from_curve(loss_curve(pop, config, grid))


def sweep_curves(param: str, values: Sequence[float], config: GameConfig,
                 count: int = DEFAULT_COUNT, seed: int = 42,
                 grid: tuple[float, float, float] = DEFAULT_GRID,
                 workers: Optional[int] = None) -> list[LossCurve]:
    """One loss curve per parameter value, row ``k`` on population ``derive_seed(seed, k)``.

    Output order follows ``values`` whatever the thread count.
    """
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    configs = [_config_for(param, v, config) for v in values]

    def run(i: int) -> LossCurve:
        cfg = configs[i]
        pop = sample_population(count, cfg.sigma, derive_seed(seed, i))
        return loss_curve(pop, cfg, grid)

    return _ordered_map(run, len(values), workers)


def sweep(param: str, values: Sequence[float], config: GameConfig, count: int = DEFAULT_COUNT,
          seed: int = 42, grid: tuple[float, float, float] = DEFAULT_GRID,
          workers: Optional[int] = None) -> list[SweepRow]:
    """Optimal thresholds with and without strategic agents as one parameter varies.

    Row ``k`` simulates its own population seeded by ``derive_seed(seed, k)``.
    """
    curves = sweep_curves(param, values, config, count, seed, grid, workers)
    return [sweep_row_from_curve(v, c) for v, c in zip(values, curves)]


def harm_sweep(param: str, values: Sequence[float], config: GameConfig, count: int = DEFAULT_COUNT,
               seed: int = 42, grid: tuple[float, float, float] = DEFAULT_GRID,
               workers: Optional[int] = None) -> list[tuple[float, HarmReport]]:
    curves = sweep_curves(param, values, config, count, seed, grid, workers)
    return [(float(v), harm_from_curve(c)) for v, c in zip(values, curves)]


def linspace_values(start: float, stop: float, steps: int) -> list[float]:
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if steps == 1:
        return [float(start)]
    return [float(v) for v in np.linspace(start, stop, steps)]

