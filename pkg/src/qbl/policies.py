"""Learners operating on bandit feedback.

Every policy exposes the same three calls used by the protocol engine:
``wants_query(t)``, ``select()`` and ``observe(arm, reward, was_query)``.
Arms are 0-indexed and ties in any index comparison go to the lowest index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import ConfigError, InputError

KINDS = ("ucb1", "ucbv", "query_then_ucbv", "spread_query_ucbv", "exp3_with_queries")
DEFAULT_ZETA = 1.2
# Uniform draws prefetched per refill for randomized policies.
_PREFETCH = 4096


@dataclass
class ArmStats:
    """Running count, mean and (1/N-normalized) variance of one arm."""

    pulls: int = 0
    mean_est: float = 0.0
    m2: float = 0.0

    @property
    def var_est(self) -> float:
        return self.m2 / self.pulls if self.pulls else 0.0

    def update(self, reward: float) -> None:
        self.pulls += 1
        d = reward - self.mean_est
        self.mean_est += d / self.pulls
        self.m2 += d * (reward - self.mean_est)


def ucb1_index(stats: ArmStats, t: int) -> float:
    if stats.pulls == 0:
        return math.inf
    return stats.mean_est + math.sqrt(2.0 * math.log(t) / stats.pulls)


def ucbv_index(stats: ArmStats, t: int, zeta: float = DEFAULT_ZETA, b: float = 1.0) -> float:
    """Empirical-Bernstein index: mean + sqrt(2 V zeta ln t / s) + 3 b zeta ln t / s."""
    if stats.pulls == 0:
        return math.inf
    e = zeta * math.log(t)
    s = stats.pulls
    return stats.mean_est + math.sqrt(2.0 * stats.var_est * e / s) + 3.0 * b * e / s


def query_schedule(kind: str, t: int, k: int, T: int) -> bool:
    """Whether a policy of ``kind`` asks for a query in round t (1-based)."""
    if kind in ("query_then_ucbv", "exp3_with_queries"):
        return t <= k
    if kind == "spread_query_ucbv":
        # k evenly spaced rounds: t where floor(t k / T) steps up.
        return (t * k) // T > ((t - 1) * k) // T
    return False


@dataclass(frozen=True)
class PolicySpec:
    kind: str
    zeta: float = DEFAULT_ZETA
    learning_rate: float | str = "auto"
    retain_query_feedback: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown policy kind {self.kind!r}", field="policies.kind")
        if not self.zeta > 0:
            raise ConfigError(f"zeta must be positive, got {self.zeta}", field="policies.zeta")
        lr = self.learning_rate
        if lr != "auto" and not (isinstance(lr, (int, float)) and lr > 0):
            raise ConfigError(f"learning_rate must be positive or 'auto', got {lr!r}",
                              field="policies.learning_rate")

    @property
    def name(self) -> str:
        return self.kind

    def build(self, n: int, T: int, k: int, rng: np.random.Generator | None = None) -> "Policy":
        if self.kind == "ucb1":
            return UCB1(n)
        if self.kind == "ucbv":
            return UCBV(n, self.zeta)
        if self.kind in ("query_then_ucbv", "spread_query_ucbv"):
            return QueryUCBV(n, self.zeta, T, k, self.kind, self.retain_query_feedback)
        lr = self.learning_rate
        if lr == "auto":
            lr = math.sqrt(2.0 * math.log(n) / (n * max(T - k, 1))) if n > 1 else 1.0
        return Exp3WithQueries(n, float(lr), T, k, rng)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind}
        if self.kind == "exp3_with_queries":
            d["learning_rate"] = self.learning_rate
        else:
            d["zeta"] = self.zeta
        if self.retain_query_feedback:
            d["retain_query_feedback"] = True
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PolicySpec":
        if isinstance(d, str):
            return cls(d)
        if not isinstance(d, dict) or "kind" not in d:
            raise ConfigError("policy entry needs a 'kind'", field="policies")
        unknown = set(d) - {"kind", "zeta", "learning_rate", "retain_query_feedback"}
        if unknown:
            raise ConfigError(f"unknown policy fields {sorted(unknown)}", field="policies")
        return cls(**d)


class Policy:
    """Base learner. Subclasses override :meth:`select` and :meth:`observe`."""

    n: int
    kind = "base"

    def wants_query(self, t: int) -> bool:
        return False

    def select(self) -> int:
        raise NotImplementedError

    def observe(self, arm: int, reward: float, was_query: bool) -> None:
        raise NotImplementedError

    def snapshot(self) -> Any:
        """Comparable summary of the learner's full internal state."""
        raise NotImplementedError


class _IndexPolicy(Policy):
    """Shared machinery for UCB-style learners: sweep, then argmax index."""

    def __init__(self, n: int):
        self.n = n
        self.stats = [ArmStats() for _ in range(n)]
        self.t = 0  # rounds whose feedback entered the statistics

    def _index(self, s: ArmStats, t: int) -> float:
        raise NotImplementedError

    def select(self) -> int:
        t = self.t + 1
        best, best_val = 0, -math.inf
        for i, s in enumerate(self.stats):
            if s.pulls == 0:  # initialization sweep
                return i
            v = self._index(s, t)
            if v > best_val:
                best, best_val = i, v
        return best

    def _update(self, arm: int, reward: float) -> None:
        if not 0.0 <= reward <= 1.0:
            raise InputError(f"reward must lie in [0, 1], got {reward}")
        self.stats[arm].update(reward)
        self.t += 1

    def observe(self, arm: int, reward: float, was_query: bool) -> None:
        self._update(arm, reward)

    def snapshot(self):
        return (self.t, tuple((s.pulls, s.mean_est, s.m2) for s in self.stats))


class UCB1(_IndexPolicy):
    kind = "ucb1"

    def _index(self, s: ArmStats, t: int) -> float:
        return s.mean_est + math.sqrt(2.0 * math.log(t) / s.pulls)


class UCBV(_IndexPolicy):
    kind = "ucbv"

    def __init__(self, n: int, zeta: float = DEFAULT_ZETA, b: float = 1.0):
        super().__init__(n)
        self.zeta = zeta
        self.b = b

    def select(self) -> int:
        # Inlined hot path of ucbv_index; same operation order, so same rounding.
        t = self.t + 1
        stats = self.stats
        for i, s in enumerate(stats):
            if s.pulls == 0:
                return i
        e = self.zeta * math.log(t)
        eb = 3.0 * self.b * e
        best, best_val = 0, -math.inf
        for i, s in enumerate(stats):
            p = s.pulls
            v = s.mean_est + math.sqrt(2.0 * (s.m2 / p) * e / p) + eb / p
            if v > best_val:
                best, best_val = i, v
        return best

    def _index(self, s: ArmStats, t: int) -> float:
        return ucbv_index(s, t, self.zeta, self.b)


class QueryUCBV(UCBV):
    """UCB-V that spends k queries first (or on a spread grid) and learns only
    from its own pulls unless ``retain`` is set."""

    def __init__(self, n: int, zeta: float, T: int, k: int, kind: str = "query_then_ucbv",
                 retain: bool = False):
        super().__init__(n, zeta)
        self.T = T
        self.k = k
        self.kind = kind
        self.retain = retain

    def wants_query(self, t: int) -> bool:
        return query_schedule(self.kind, t, self.k, self.T)

    def observe(self, arm: int, reward: float, was_query: bool) -> None:
        if was_query and not self.retain:
            if not 0.0 <= reward <= 1.0:
                raise InputError(f"reward must lie in [0, 1], got {reward}")
            return
        self._update(arm, reward)


class Exp3WithQueries(Policy):
    """Exponential weights over importance-weighted reward estimates.

    Query rounds are skipped: the queried arm was not drawn from the
    learner's distribution, so no unbiased estimate exists for it.
    """

    kind = "exp3_with_queries"

    def __init__(self, n: int, learning_rate: float, T: int, k: int,
                 rng: np.random.Generator | None = None):
        self.n = n
        self.lr = learning_rate
        self.T = T
        self.k = k
        self.gains = [0.0] * n
        self.probs = [1.0 / n] * n
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._u: list[float] = []
        self._pos = 0

    def wants_query(self, t: int) -> bool:
        return query_schedule(self.kind, t, self.k, self.T)

    def _uniform(self) -> float:
        if self._pos == len(self._u):
            self._u = self.rng.random(_PREFETCH).tolist()
            self._pos = 0
        u = self._u[self._pos]
        self._pos += 1
        return u

    def select(self) -> int:
        u = self._uniform()
        acc = 0.0
        for i, p in enumerate(self.probs):
            acc += p
            if u < acc:
                return i
        return self.n - 1

    def _refresh(self) -> None:
        top = max(self.gains)
        w = [math.exp(self.lr * (g - top)) for g in self.gains]
        z = math.fsum(w)
        self.probs = [x / z for x in w]

    def observe(self, arm: int, reward: float, was_query: bool) -> None:
        if not 0.0 <= reward <= 1.0:
            raise InputError(f"reward must lie in [0, 1], got {reward}")
        if was_query:
            return
        self.gains[arm] += reward / self.probs[arm]
        self._refresh()

    def snapshot(self):
        return (tuple(self.gains), tuple(self.probs))


# Functional surface over policy state ----------------------------------------


def policy_step(state: Policy, t: int | None = None, available_arms: int | None = None) -> int:
    """Arm chosen by ``state`` on a non-queried round.

    ``t`` and ``available_arms`` are accepted for interface uniformity; each
    learner keeps its own clock (a learner restarted after a query phase
    counts only its own rounds).
    """
    if available_arms is not None and available_arms != state.n:
        raise InputError(f"policy was built for {state.n} arms, asked about {available_arms}")
    return state.select()


def policy_observe(state: Policy, arm: int, reward: float, was_query: bool) -> Policy:
    state.observe(arm, reward, was_query)
    return state


def replay(spec: PolicySpec, n: int, T: int, k: int,
           log: Sequence[tuple[int, float, bool]]) -> Policy:
    """Fresh learner fed the given (arm, reward, was_query) tuples."""
    state = spec.build(n, T, k)
    for arm, reward, q in log:
        state.observe(int(arm), float(reward), bool(q))
    return state
