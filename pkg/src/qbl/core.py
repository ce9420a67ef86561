"""Protocol engine: budget-gated best-action queries under bandit feedback."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import streams
from .envs import InstanceSpec
from .errors import ConfigError
from .policies import Policy, PolicySpec

# Rounds of environment randomness drawn per refill. Part of the
# determinism contract: changing it changes every sample path.
ENV_BLOCK = 8192


@dataclass
class QueryBudget:
    limit: int
    used: int = 0

    def __post_init__(self):
        if self.limit < 0 or self.used < 0 or self.used > self.limit:
            raise ConfigError(f"invalid budget limit={self.limit}, used={self.used}", field="k")


def enforce_budget(requested: bool, budget: QueryBudget) -> bool:
    """Grant a query iff requested and budget remains; consume it if granted."""
    if requested and budget.used < budget.limit:
        budget.used += 1
        return True
    return False


@dataclass(frozen=True)
class RoundRecord:
    round: int
    queried: bool
    arm: int
    reward: float
    chosen_mean: float


@dataclass(eq=False)
class RunResult:
    """Columnar log of one run plus its regret figures.

    Per-round columns are numpy arrays of length T; :attr:`records` yields
    :class:`RoundRecord` views. ``round_max`` keeps the maximum of each
    round's full reward vector, which the learner never sees.
    """

    instance: InstanceSpec
    policy: PolicySpec
    T: int
    k: int
    seed: int
    queried: np.ndarray
    arms: np.ndarray
    rewards: np.ndarray
    chosen_means: np.ndarray
    round_max: np.ndarray
    arm_totals: np.ndarray
    total_reward: float
    pseudo_regret: float
    realized_regret: float
    queries_used: int
    final_policy: Policy | None = None

    @property
    def records(self) -> list[RoundRecord]:
        return list(self.iter_records())

    def iter_records(self) -> Iterator[RoundRecord]:
        for t in range(self.T):
            yield RoundRecord(t + 1, bool(self.queried[t]), int(self.arms[t]),
                              float(self.rewards[t]), float(self.chosen_means[t]))

    @property
    def config_key(self) -> tuple:
        return (self.instance.to_json(), self.policy, self.T, self.k)

    def same_as(self, other: "RunResult") -> bool:
        """Bit-level equality of every logged column and summary figure."""
        cols = ("queried", "arms", "rewards", "chosen_means", "round_max", "arm_totals")
        return (
            self.config_key == other.config_key
            and self.seed == other.seed
            and all(np.array_equal(getattr(self, c), getattr(other, c)) for c in cols)
            and (self.total_reward, self.pseudo_regret, self.realized_regret, self.queries_used)
            == (other.total_reward, other.pseudo_regret, other.realized_regret, other.queries_used)
        )


def simulate_run(
    instance: InstanceSpec,
    policy,
    T: int,
    k: int,
    seed: int,
) -> RunResult:
    """Play T rounds of the query protocol.

    ``policy`` is a :class:`PolicySpec` or any object with a compatible
    ``build(n, T, k, rng)`` method. The environment and the learner draw from
    separate streams of ``seed``.
    """
    if T < 1:
        raise ConfigError(f"need T >= 1, got {T}", field="T")
    if not 0 <= k <= T:
        raise ConfigError(f"need 0 <= k <= T, got k={k}, T={T}", field="k")
    n = instance.n_arms
    if n < 1:
        raise ConfigError("instance has no arms", field="instance")

    env_rng = streams.stream(seed, "environment")
    learner = policy.build(n, T, k, streams.stream(seed, "policy"))
    budget = QueryBudget(k)
    means = instance.means.tolist()
    opt_d = instance.opt_dynamic

    queried = np.zeros(T, dtype=bool)
    arms = np.empty(T, dtype=np.int64)
    rewards = np.empty(T)
    round_max = np.empty(T)
    arm_totals = np.zeros(n)

    wants_query, select, observe = learner.wants_query, learner.select, learner.observe
    t = 0
    while t < T:
        size = min(ENV_BLOCK, T - t)
        block, best = instance.sample_block(env_rng, size)
        arm_totals += block.sum(axis=0)
        round_max[t:t + size] = block.max(axis=1)
        rows = block.tolist()
        best_l = best.tolist()
        q_col = [False] * size
        a_col = [0] * size
        r_col = [0.0] * size
        for i in range(size):
            q = wants_query(t + i + 1) and budget.used < budget.limit
            if q:
                budget.used += 1
                arm = best_l[i]
            else:
                arm = select()
            r = rows[i][arm]
            observe(arm, r, q)
            q_col[i] = q
            a_col[i] = arm
            r_col[i] = r
        queried[t:t + size] = q_col
        arms[t:t + size] = a_col
        rewards[t:t + size] = r_col
        t += size

    chosen_means = np.where(queried, opt_d, np.asarray(means)[arms])
    total_reward = float(rewards.sum())
    pseudo = T * instance.opt_static - float(chosen_means.sum())
    realized = float(arm_totals.max()) - total_reward
    return RunResult(
        instance=instance,
        policy=policy,
        T=T,
        k=k,
        seed=seed,
        queried=queried,
        arms=arms,
        rewards=rewards,
        chosen_means=chosen_means,
        round_max=round_max,
        arm_totals=arm_totals,
        total_reward=total_reward,
        pseudo_regret=pseudo,
        realized_regret=realized,
        queries_used=budget.used,
        final_policy=learner,
    )


def pseudo_regret(run: RunResult, instance: InstanceSpec | None = None) -> float:
    """T * OPT_s minus the summed conditional means of the actions taken."""
    inst = run.instance if instance is None else instance
    return run.T * inst.opt_static - float(np.sum(run.chosen_means))
