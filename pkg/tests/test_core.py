import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qbl import core, envs
from qbl.core import QueryBudget, enforce_budget, pseudo_regret, simulate_run
from qbl.envs import ArmDistribution, InstanceSpec
from qbl.errors import ConfigError
from qbl.policies import KINDS, PolicySpec


class FixedArm:
    """Test learner that always pulls one arm and never queries."""

    def __init__(self, arm):
        self.arm = arm
        self.kind = "fixed"

    def build(self, n, T, k, rng=None):
        arm = self.arm

        class _P:
            def wants_query(self, t):
                return False

            def select(self):
                return arm

            def observe(self, a, r, q):
                pass

        return _P()


class AlwaysQuery(FixedArm):
    def build(self, n, T, k, rng=None):
        p = super().build(n, T, k, rng)
        p.wants_query = lambda t: True
        return p


def test_enforce_budget_examples():
    assert enforce_budget(True, QueryBudget(0, 0)) is False
    b = QueryBudget(3, 2)
    assert enforce_budget(True, b) is True and b.used == 3
    assert enforce_budget(True, b) is False and b.used == 3
    b = QueryBudget(3, 0)
    assert enforce_budget(False, b) is False and b.used == 0


def test_budget_validation():
    with pytest.raises(ConfigError):
        QueryBudget(2, 3)


@given(st.integers(0, 20), st.lists(st.booleans(), max_size=60))
def test_budget_never_exceeded(limit, requests):
    b = QueryBudget(limit)
    used = []
    for r in requests:
        enforce_budget(r, b)
        used.append(b.used)
    assert all(u <= limit for u in used)
    assert used == sorted(used)


@pytest.mark.parametrize("kind", KINDS)
def test_all_query_regime(kind):
    inst = InstanceSpec.bernoulli([0.3, 0.6])
    spec = PolicySpec(kind)
    run = simulate_run(inst, spec, 10, 10, 1)
    expected = 0 if kind in ("ucb1", "ucbv") else 10  # plain learners never ask
    assert run.queries_used == expected
    assert sum(r.queried for r in run.records) == expected


def test_all_query_regime_with_requesting_learner():
    run = simulate_run(InstanceSpec.bernoulli([0.3, 0.6, 0.5]), AlwaysQuery(0), 10, 10, 4)
    assert run.queries_used == 10 and run.queried.all()


def test_single_arm_zero_regret():
    run = simulate_run(InstanceSpec.bernoulli([0.4]), PolicySpec("ucbv"), 5, 0, 3)
    assert run.pseudo_regret == 0.0


def test_fixed_suboptimal_arm_regret():
    # analytic oracle: gap 0.8 per round for 100 rounds
    run = simulate_run(InstanceSpec.bernoulli([0.9, 0.1]), FixedArm(1), 100, 0, 7)
    assert run.pseudo_regret == pytest.approx(100 * 0.8, abs=1e-9)


def test_best_arm_every_round_zero_regret():
    run = simulate_run(InstanceSpec.bernoulli([0.2, 0.7]), FixedArm(1), 300, 0, 2)
    assert pseudo_regret(run) == pytest.approx(0.0, abs=1e-9)


def test_fair_coins_all_queried():
    T = 40
    run = simulate_run(InstanceSpec.bernoulli([0.5, 0.5]), PolicySpec("query_then_ucbv"), T, T, 0)
    assert pseudo_regret(run) == pytest.approx(-0.25 * T, abs=1e-12)


def test_correlated_single_query_contribution():
    nu1, _ = envs.correlated_params(1000, 1)
    inst = InstanceSpec.from_correlated(nu1)
    with_q = simulate_run(inst, PolicySpec("query_then_ucbv"), 50, 1, 5)
    assert with_q.queried[0] and with_q.queries_used == 1
    contrib = inst.opt_static - with_q.chosen_means[0]
    assert contrib == pytest.approx(-nu1.eta / 12, abs=1e-15)


def test_realized_regret_brute_force():
    inst = InstanceSpec.iid([ArmDistribution.uniform01(), ArmDistribution.bernoulli(0.4)])
    run = simulate_run(inst, PolicySpec("ucb1"), 3000, 100, 13)
    assert run.realized_regret == pytest.approx(run.arm_totals.max() - run.rewards.sum(), abs=1e-9)
    assert run.total_reward == pytest.approx(sum(r.reward for r in run.records), abs=1e-9)


@pytest.mark.parametrize("kind", KINDS)
def test_determinism(kind):
    inst = InstanceSpec.bernoulli([0.6, 0.5, 0.4])
    a = simulate_run(inst, PolicySpec(kind), 20000, 300, 42)
    b = simulate_run(inst, PolicySpec(kind), 20000, 300, 42)
    assert a.same_as(b)
    c = simulate_run(inst, PolicySpec(kind), 20000, 300, 43)
    assert not a.same_as(c)


def test_environment_path_independent_of_learner_randomness():
    inst = InstanceSpec.bernoulli([0.6, 0.5, 0.4])
    a = simulate_run(inst, PolicySpec("ucbv"), 5000, 0, 8)
    b = simulate_run(inst, PolicySpec("exp3_with_queries"), 5000, 0, 8)
    assert np.array_equal(a.round_max, b.round_max)
    assert np.array_equal(a.arm_totals, b.arm_totals)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("k", [0, 1, 17, 400])
def test_prefix_budget_and_queried_optimality(kind, k):
    inst = InstanceSpec.iid([ArmDistribution.discrete([0.0, 0.5, 1.0], [0.3, 0.4, 0.3]),
                             ArmDistribution.bernoulli(0.5), ArmDistribution.uniform01()])
    run = simulate_run(inst, PolicySpec(kind), 400, k, 1)
    assert np.all(np.cumsum(run.queried) <= k)
    assert run.queries_used == int(run.queried.sum())
    q = run.queried
    assert np.array_equal(run.rewards[q], run.round_max[q])
    assert np.all(run.chosen_means[q] == inst.opt_dynamic)
    assert np.all((run.rewards >= 0) & (run.rewards <= 1))


def test_queried_rounds_follow_tie_break():
    # fair coins with reversed priority: ties go to arm 1
    inst = InstanceSpec.bernoulli([0.5, 0.5], tie_break=[1, 0])
    run = simulate_run(inst, PolicySpec("query_then_ucbv"), 2000, 2000, 6)
    assert abs(np.mean(run.arms == 1) - 0.75) < 0.05


def test_regret_identity():
    inst = InstanceSpec.bernoulli([0.25, 0.75, 0.5])
    run = simulate_run(inst, PolicySpec("spread_query_ucbv"), 1000, 123, 9)
    assert run.pseudo_regret == inst.opt_static * run.T - run.chosen_means.sum()
    gaps = inst.opt_static - inst.means
    pulls = np.bincount(run.arms[~run.queried], minlength=3)
    alt = pulls @ gaps + run.queries_used * (inst.opt_static - inst.opt_dynamic)
    assert run.pseudo_regret == pytest.approx(alt, abs=1e-9)


def test_long_run_crosses_env_blocks():
    inst = InstanceSpec.bernoulli([0.5, 0.4])
    T = core.ENV_BLOCK * 2 + 17
    run = simulate_run(inst, PolicySpec("query_then_ucbv"), T, core.ENV_BLOCK + 5, 1)
    assert len(run.records) == T
    assert run.records[-1].round == T
    assert run.queries_used == core.ENV_BLOCK + 5


@pytest.mark.parametrize("T,k", [(0, 0), (10, 11), (10, -1)])
def test_simulate_run_rejects(T, k):
    with pytest.raises(ConfigError):
        simulate_run(InstanceSpec.bernoulli([0.5, 0.5]), PolicySpec("ucbv"), T, k, 0)
