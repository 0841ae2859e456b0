"""Brute-force abstention game on a finite feature set.

Each instance lists ``n`` feature points with a prior ``p(x_i)``, a
posterior ``q_i = p(y=1 | x_i)``, the classifier's labels ``f_i``, a
distance matrix and the game constants.  Abstention vectors ``r`` are
enumerated exhaustively (``2**n`` of them), which makes the minimizer set
exact and lets the structural results about optimal abstention be checked
rather than assumed.

Policy ``k`` in the enumeration is the binary expansion of ``k`` read
most-significant bit first, so increasing ``k`` is lexicographic order on
the tuples ``r``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import ConfigError, LossSpec, UNIT_LOSS

MAX_ENUMERATION_N = 16
LOSS_TOL = 1e-12
PRIOR_TOL = 1e-12

_CHUNK = 4096


class InstanceError(ValueError):
    """Malformed or out-of-range discrete instance."""


class HypothesisNotMet(Exception):
    """The instance does not satisfy a theorem's hypothesis."""


@dataclass(frozen=True, eq=False)
class DiscreteInstance:
    prior: np.ndarray
    posterior: np.ndarray
    labels_f: np.ndarray
    dist: np.ndarray
    gamma: float
    c: float
    loss: LossSpec = UNIT_LOSS
    positions: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        prior = np.asarray(self.prior, dtype=float)
        posterior = np.asarray(self.posterior, dtype=float)
        labels = np.asarray(self.labels_f)
        dist = np.asarray(self.dist, dtype=float)
        n = prior.shape[0] if prior.ndim == 1 else -1
        if n < 1:
            raise InstanceError("prior must be a nonempty vector")
        if posterior.shape != (n,) or labels.shape != (n,):
            raise InstanceError(f"prior, posterior and labels_f must all have length {n}")
        if dist.shape != (n, n):
            raise InstanceError(f"dist must be {n}x{n}, got shape {dist.shape}")
        if np.any(~np.isfinite(prior)) or np.any(prior <= 0):
            raise InstanceError("prior entries must be strictly positive")
        if abs(prior.sum() - 1.0) > PRIOR_TOL:
            raise InstanceError(f"prior sums to {prior.sum()!r}, not 1")
        if np.any(~((posterior >= 0) & (posterior <= 1))):
            raise InstanceError("posterior entries must lie in [0, 1]")
        if not np.all((labels == 0) | (labels == 1)):
            raise InstanceError("labels_f must be binary")
        if np.any(~np.isfinite(dist)) or np.any(dist < 0):
            raise InstanceError("dist entries must be finite and nonnegative")
        if not np.array_equal(dist, dist.T):
            raise InstanceError("dist must be symmetric")
        if np.any(np.diag(dist) != 0):
            raise InstanceError("dist must have a zero diagonal")
        if not (self.gamma > 0) or not np.isfinite(self.gamma):
            raise InstanceError(f"gamma must be positive, got {self.gamma!r}")
        if not (0.0 <= self.c <= 1.0):
            raise InstanceError(f"c must lie in [0, 1], got {self.c!r}")
        for name, arr in (("prior", prior), ("posterior", posterior),
                          ("labels_f", labels.astype(np.int8)), ("dist", dist)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.prior.shape[0]

    @property
    def cost(self) -> np.ndarray:
        """Manipulation cost ``gamma * dist``."""
        return self.gamma * self.dist

    @classmethod
    def from_positions(cls, positions: Sequence[float], **kwargs) -> "DiscreteInstance":
        """Instance on the real line with squared-distance costs."""
        pos = np.asarray(positions, dtype=float)
        dist = (pos[:, None] - pos[None, :]) ** 2
        return cls(dist=dist, positions=pos, **kwargs)

    def with_c(self, c: float) -> "DiscreteInstance":
        return DiscreteInstance(prior=self.prior, posterior=self.posterior,
                                labels_f=self.labels_f, dist=self.dist, gamma=self.gamma,
                                c=c, loss=self.loss, positions=self.positions)

    def to_dict(self) -> dict:
        d = {
            "n": self.n,
            "prior": self.prior.tolist(),
            "posterior": self.posterior.tolist(),
            "labels_f": self.labels_f.astype(int).tolist(),
            "gamma": float(self.gamma),
            "c": float(self.c),
            "l01": self.loss.l01,
            "l10": self.loss.l10,
        }
        if self.positions is not None:
            d["positions"] = np.asarray(self.positions, dtype=float).tolist()
        else:
            d["dist"] = self.dist.tolist()
        return d


# -- instance files ---------------------------------------------------------

_REQUIRED = ("prior", "posterior", "labels_f", "gamma", "c")


def instance_from_dict(doc: dict) -> DiscreteInstance:
    if not isinstance(doc, dict):
        raise InstanceError("instance document must be a JSON object")
    missing = [k for k in _REQUIRED if k not in doc]
    if missing:
        raise InstanceError(f"missing field(s): {', '.join(missing)}")
    has_pos, has_dist = "positions" in doc, "dist" in doc
    if has_pos == has_dist:
        raise InstanceError("exactly one of 'positions' or 'dist' is required")
    try:
        loss = LossSpec(l01=float(doc.get("l01", 1.0)), l10=float(doc.get("l10", 1.0)))
        kwargs = dict(prior=doc["prior"], posterior=doc["posterior"], labels_f=doc["labels_f"],
                      gamma=float(doc["gamma"]), c=float(doc["c"]), loss=loss)
        if has_pos:
            inst = DiscreteInstance.from_positions(doc["positions"], **kwargs)
        else:
            inst = DiscreteInstance(dist=doc["dist"], **kwargs)
    except ConfigError as exc:
        raise InstanceError(str(exc)) from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InstanceError):
            raise
        raise InstanceError(f"bad field value: {exc}") from exc
    if "n" in doc and doc["n"] != inst.n:
        raise InstanceError(f"n = {doc['n']!r} does not match vector length {inst.n}")
    return inst


def parse_instance(text: str) -> DiscreteInstance:
    """Parse one JSON instance document.

    Syntax errors are re-raised as :class:`InstanceError` carrying the
    offending line.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        lines = text.splitlines()
        context = lines[exc.lineno - 1] if 0 < exc.lineno <= len(lines) else ""
        raise InstanceError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}: {context.strip()!r}") from exc
    return instance_from_dict(doc)


def load_instance(path) -> DiscreteInstance:
    return parse_instance(Path(path).read_text())


def dump_instance(instance: DiscreteInstance) -> str:
    return json.dumps(instance.to_dict(), indent=2) + "\n"


# -- random instances -------------------------------------------------------

def random_instance(rng: np.random.Generator, n: int, informative: bool = False) -> DiscreteInstance:
    """Random instance for property suites.

    Priors are normalized uniforms, posteriors uniform on [0, 1], positions
    uniform on [0, 1] with squared-distance costs, gamma log-uniform on
    [0.05, 20], c and the two loss weights uniform on [0, 1].  With
    ``informative=True`` the classifier labels the top-k posteriors
    positive for a random k, so positives dominate negatives.
    """
    u = 1.0 - rng.random(n)  # (0, 1]
    prior = u / u.sum()
    posterior = rng.random(n)
    positions = rng.random(n)
    gamma = float(np.exp(rng.uniform(np.log(0.05), np.log(20.0))))
    c = float(rng.random())
    loss = LossSpec(l01=float(rng.random()), l10=float(rng.random()))
    if informative:
        k = int(rng.integers(0, n + 1))
        labels = np.zeros(n, dtype=np.int8)
        labels[np.argsort(-posterior, kind="stable")[:k]] = 1
    else:
        labels = rng.integers(0, 2, size=n).astype(np.int8)
    prior = prior / prior.sum()
    if abs(prior.sum() - 1.0) > PRIOR_TOL:  # pragma: no cover - float guard
        prior[-1] = 1.0 - prior[:-1].sum()
    return DiscreteInstance.from_positions(positions, prior=prior, posterior=posterior,
                                           labels_f=labels, gamma=gamma, c=c, loss=loss)


# -- single-policy evaluation -----------------------------------------------

def conditional_loss(instance: DiscreteInstance, i: int) -> float:
    """Expected classification loss at point ``i`` given its posterior."""
    if not 0 <= i < instance.n:
        raise IndexError(f"point index {i} out of range for n={instance.n}")
    q = float(instance.posterior[i])
    if instance.labels_f[i] == 1:
        return instance.loss.l10 * (1.0 - q)
    return instance.loss.l01 * q


def conditional_losses(instance: DiscreteInstance) -> np.ndarray:
    q = instance.posterior
    return np.where(instance.labels_f == 1, instance.loss.l10 * (1.0 - q), instance.loss.l01 * q)


def unconstrained_abstention(instance: DiscreteInstance) -> tuple[int, ...]:
    """Pointwise optimal rule with truthful agents; accepts on ties."""
    return tuple(int(v) for v in conditional_losses(instance) <= instance.c)


def _as_policy(r, n: int, name: str) -> np.ndarray:
    arr = np.asarray(r)
    if arr.shape != (n,) or not np.all((arr == 0) | (arr == 1)):
        raise InstanceError(f"{name} must be a binary vector of length {n}")
    return arr.astype(np.int8)


def discrete_best_response(instance: DiscreteInstance, i: int, f=None, r=None) -> int:
    """Index the agent at point ``i`` reports.

    Staying is preferred unless a move strictly improves utility; among
    improving moves the cheapest wins, then the smallest index.
    """
    n = instance.n
    if not 0 <= i < n:
        raise IndexError(f"point index {i} out of range for n={n}")
    f = instance.labels_f if f is None else _as_policy(f, n, "f")
    r = np.ones(n, dtype=np.int8) if r is None else _as_policy(r, n, "r")
    gain = f * r
    cost = instance.cost[i]
    stay = float(gain[i])
    best, best_u, best_cost = i, stay, 0.0
    for j in range(n):
        if j == i:
            continue
        u = float(gain[j]) - float(cost[j])
        if u > best_u or (best != i and u == best_u and cost[j] < best_cost):
            best, best_u, best_cost = j, u, float(cost[j])
    return best


def post_response_loss(instance: DiscreteInstance, f=None, r=None) -> float:
    """Principal's expected loss after every agent best-responds to ``(f, r)``.

    Labels follow the agent's true point: an agent from ``i`` who reports
    ``j`` still has ``p(y=1) = q_i``.
    """
    n = instance.n
    f = instance.labels_f if f is None else _as_policy(f, n, "f")
    r = np.ones(n, dtype=np.int8) if r is None else _as_policy(r, n, "r")
    l01, l10, c = instance.loss.l01, instance.loss.l10, instance.c
    total = 0.0
    for i in range(n):
        b = discrete_best_response(instance, i, f, r)
        q = float(instance.posterior[i])
        if r[b]:
            term = l10 * (1.0 - q) if f[b] else l01 * q
        else:
            term = c
        total += float(instance.prior[i]) * term
    return total


# -- enumeration -------------------------------------------------------------

def policy_matrix(n: int, start: int = 0, stop: Optional[int] = None) -> np.ndarray:
    """Rows ``start..stop-1`` of the lexicographic table of all binary n-vectors."""
    stop = 2 ** n if stop is None else stop
    codes = np.arange(start, stop, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((codes[:, None] >> shifts[None, :]) & 1).astype(np.int8)


def policy_index(r: Sequence[int]) -> int:
    k = 0
    for bit in r:
        k = (k << 1) | int(bit)
    return k


def _best_responses(instance: DiscreteInstance, R: np.ndarray) -> np.ndarray:
    """Best-response targets for every policy row of ``R`` (shape P x n)."""
    n = instance.n
    gain = R * instance.labels_f[None, :]                  # P x n, accepted positives
    cost = instance.cost                                    # n x n, row = origin
    affordable = cost < 1.0                                 # strict gain over staying at 0
    ok = gain[:, None, :].astype(bool) & affordable[None, :, :]
    masked = np.where(ok, cost[None, :, :], np.inf)         # P x i x j
    target = np.argmin(masked, axis=2)                      # first index among cheapest
    reachable = np.isfinite(np.take_along_axis(masked, target[..., None], axis=2)[..., 0])
    stay = gain.astype(bool) | ~reachable
    return np.where(stay, np.arange(n)[None, :], target)


def _losses_for(instance: DiscreteInstance, R: np.ndarray) -> np.ndarray:
    b = _best_responses(instance, R)
    rows = np.arange(R.shape[0])[:, None]
    r_b = R[rows, b]
    f_b = instance.labels_f[b]
    q = instance.posterior[None, :]
    classify = np.where(f_b == 1, instance.loss.l10 * (1.0 - q), instance.loss.l01 * q)
    per_point = np.where(r_b == 1, classify, instance.c)
    # row-wise reduction keeps every entry bitwise independent of the chunk shape
    return (per_point * instance.prior[None, :]).sum(axis=1)


def policy_losses(instance: DiscreteInstance, chunk: int = _CHUNK) -> np.ndarray:
    """Post-response loss for all ``2**n`` abstention vectors, in lexicographic order.

    Chunking changes only peak memory; each entry depends on its own row.
    """
    n = instance.n
    if n > MAX_ENUMERATION_N:
        raise InstanceError(f"n={n} exceeds enumeration limit {MAX_ENUMERATION_N}")
    total = 2 ** n
    out = np.empty(total)
    for start in range(0, total, chunk):
        stop = min(start + chunk, total)
        out[start:stop] = _losses_for(instance, policy_matrix(n, start, stop))
    return out


def minimizers_from(losses: np.ndarray, n: int) -> tuple[list[tuple[int, ...]], float]:
    best = float(losses.min())
    idx = np.flatnonzero(losses <= best + LOSS_TOL)
    return [tuple(int(v) for v in row) for row in policy_matrix(n)[idx]], best


def optimal_constrained_abstention(instance: DiscreteInstance) -> tuple[list[tuple[int, ...]], float]:
    """All loss-minimizing abstention vectors (lexicographic) and the minimum."""
    return minimizers_from(policy_losses(instance), instance.n)


# -- structural checks -------------------------------------------------------

def verify_theorem1(instance: DiscreteInstance, losses: Optional[np.ndarray] = None) -> bool:
    """Optimal abstention is never worse than always accepting."""
    losses = policy_losses(instance) if losses is None else losses
    _, best = minimizers_from(losses, instance.n)
    return best <= float(losses[-1]) + LOSS_TOL


def verify_theorem2(instance: DiscreteInstance, losses: Optional[np.ndarray] = None) -> bool:
    """Replacing an optimum's decisions on negatives by the pointwise rule stays optimal."""
    losses = policy_losses(instance) if losses is None else losses
    minim, best = minimizers_from(losses, instance.n)
    r_star = np.array(unconstrained_abstention(instance))
    negative = instance.labels_f == 0
    for r_bar in minim:
        r_tilde = np.where(negative, r_star, np.array(r_bar))
        if abs(float(losses[policy_index(r_tilde)]) - best) > LOSS_TOL:
            return False
    return True


def is_informative(instance: DiscreteInstance) -> bool:
    """Positives' posteriors all at least the negatives' posteriors."""
    q, f = instance.posterior, instance.labels_f
    pos, neg = q[f == 1], q[f == 0]
    if pos.size == 0 or neg.size == 0:
        return True
    return bool(pos.min() >= neg.max())


def is_informative_strict(instance: DiscreteInstance) -> bool:
    """Literal biconditional ``q_x >= q_z  <=>  f_x >= f_z`` over all pairs.

    Forces a constant posterior within each class and a strict gap between
    classes.
    """
    q, f = instance.posterior, instance.labels_f
    q_ge = q[:, None] >= q[None, :]
    f_ge = f[:, None] >= f[None, :]
    return bool(np.array_equal(q_ge, f_ge))


def _dominates_strictly(a: np.ndarray, b: np.ndarray) -> bool:
    return bool(np.all(a >= b) and np.any(a > b))


def theorem3_violations(instance: DiscreteInstance,
                        losses: Optional[np.ndarray] = None) -> list[tuple[int, ...]]:
    """Optimal policies of the negative-side form that accept strictly more than ``r*``.

    A dominating optimum is only a counterexample when ``r*`` itself is
    suboptimal: if ``r*`` ties the minimum, a superset of its acceptances
    with the same loss is an equally optimal choice, not a contradiction.
    """
    if not is_informative(instance):
        raise HypothesisNotMet("classifier is not informative for this instance")
    losses = policy_losses(instance) if losses is None else losses
    minim, best = minimizers_from(losses, instance.n)
    r_star = np.array(unconstrained_abstention(instance))
    r_star_optimal = float(losses[policy_index(r_star)]) <= best + LOSS_TOL
    negative = instance.labels_f == 0
    bad = []
    for r_bar in minim:
        r = np.array(r_bar)
        if np.array_equal(r[negative], r_star[negative]) and _dominates_strictly(r, r_star):
            if not r_star_optimal:
                bad.append(r_bar)
    return bad


def verify_theorem3(instance: DiscreteInstance, losses: Optional[np.ndarray] = None) -> bool:
    """Anticipating manipulation never makes the optimum accept strictly more.

    Raises :class:`HypothesisNotMet` on non-informative instances.
    """
    return not theorem3_violations(instance, losses)


def dominating_policies_not_better(instance: DiscreteInstance,
                                   losses: Optional[np.ndarray] = None) -> bool:
    """Every policy agreeing with ``r*`` on negatives and accepting a superset loses at least as much.

    This is the inequality underlying the no-larger-accept result, checked
    over all such policies rather than just the optimal ones.
    """
    if not is_informative(instance):
        raise HypothesisNotMet("classifier is not informative for this instance")
    losses = policy_losses(instance) if losses is None else losses
    r_star = np.array(unconstrained_abstention(instance))
    base = float(losses[policy_index(r_star)])
    R = policy_matrix(instance.n)
    negative = instance.labels_f == 0
    sel = np.all(R[:, negative] == r_star[negative], axis=1) & np.all(R >= r_star, axis=1)
    return bool(np.all(losses[sel] >= base - LOSS_TOL))


@dataclass(frozen=True)
class VerificationResult:
    theorem1: bool
    theorem2: bool
    theorem3: Optional[bool]  # None when the instance is not informative
    r_star: tuple[int, ...]
    minimizers: list[tuple[int, ...]]
    min_loss: float
    no_abstention_loss: float

    @property
    def passed(self) -> bool:
        return self.theorem1 and self.theorem2 and self.theorem3 is not False


def verify_all(instance: DiscreteInstance) -> VerificationResult:
    losses = policy_losses(instance)
    minim, best = minimizers_from(losses, instance.n)
    t3 = verify_theorem3(instance, losses) if is_informative(instance) else None
    return VerificationResult(
        theorem1=verify_theorem1(instance, losses),
        theorem2=verify_theorem2(instance, losses),
        theorem3=t3,
        r_star=unconstrained_abstention(instance),
        minimizers=minim,
        min_loss=best,
        no_abstention_loss=float(losses[-1]),
    )


def random_suite(count: int, seed: int, min_n: int = 3, max_n: int = 8,
                 informative: bool = False) -> Iterable[DiscreteInstance]:
    """Reproducible stream of random instances with ``n`` uniform on ``[min_n, max_n]``."""
    if not 1 <= min_n <= max_n <= MAX_ENUMERATION_N:
        raise ValueError(f"need 1 <= min_n <= max_n <= {MAX_ENUMERATION_N}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    for _ in range(count):
        n = int(rng.integers(min_n, max_n + 1))
        yield random_instance(rng, n, informative=informative)
