import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from qbl import analysis, envs
from qbl.analysis import (aggregate, bh_lower_bound, kl_bernoulli, kl_density_grid,
                          lemma1_bound, opt_dynamic_bernoulli)
from qbl.core import simulate_run
from qbl.envs import ArmDistribution, InstanceSpec
from qbl.errors import AggregationError, AnalysisError
from qbl.policies import PolicySpec
from qbl.streams import stream


def test_opt_static_examples():
    assert analysis.opt_static(InstanceSpec.bernoulli([0.3, 0.7])) == 0.7
    assert analysis.opt_static(InstanceSpec.bernoulli([0.42])) == 0.42
    nu1, _ = envs.correlated_params(10_000, 10)
    inst = InstanceSpec.from_correlated(nu1)
    assert analysis.opt_static(inst) == pytest.approx(0.5 + (nu1.a + nu1.b) / 12, abs=1e-15)


def test_opt_dynamic_bernoulli_examples():
    assert opt_dynamic_bernoulli([0.5, 0.5]) == 0.75
    assert opt_dynamic_bernoulli([0.37]) == pytest.approx(0.37, abs=1e-15)
    assert opt_dynamic_bernoulli([1.0, 0.2]) == 1.0


def test_closed_form_matches_instance_integration():
    means = [0.1, 0.6, 0.35]
    assert analysis.opt_dynamic(InstanceSpec.bernoulli(means)) == pytest.approx(
        opt_dynamic_bernoulli(means), abs=1e-12)


@pytest.mark.parametrize("make", [
    lambda: InstanceSpec.bernoulli([0.5, 0.5]),
    lambda: InstanceSpec.iid([ArmDistribution.uniform01(), ArmDistribution.bernoulli(0.3)]),
    lambda: InstanceSpec.from_correlated(envs.correlated_params(1000, 4)[0]),
    lambda: InstanceSpec.from_correlated(envs.correlated_params(1000, 4)[1]),
])
def test_monte_carlo_agrees_with_closed_form(make):
    inst = make()
    est, se = analysis.opt_dynamic_mc(inst, 200_000, stream(3, "analysis"))
    assert abs(est - analysis.opt_dynamic(inst)) <= 4 * se
    assert est + 4 * se >= analysis.opt_static(inst)


def test_monte_carlo_degenerate_arms():
    est, se = analysis.opt_dynamic_mc(InstanceSpec.bernoulli([1.0, 0.0]), 1000, stream(0, "analysis"))
    assert (est, se) == (1.0, 0.0)


def test_monte_carlo_needs_two_samples():
    with pytest.raises(AnalysisError):
        analysis.opt_dynamic_mc(InstanceSpec.bernoulli([0.5]), 1, stream(0, "analysis"))


def test_lemma1_examples():
    assert lemma1_bound([0.0, 0.0], [0.25, 0.25], 2) == 0.0
    assert lemma1_bound([0.0, 0.01], [0.25, 0.25], 2) == pytest.approx(0.06, abs=1e-15)
    assert lemma1_bound([0.0, 0.3, 0.2], [0.1, 0.2, 0.2], 3) == 0.0


@settings(max_examples=300)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=8))
def test_lemma1_holds_for_bernoulli(means):
    m = np.asarray(means)
    bound = lemma1_bound(m.max() - m, m * (1 - m), len(m))
    assert opt_dynamic_bernoulli(m) - m.max() >= bound - 1e-15
    assert bound >= 0


def test_analyze_reports():
    r = analysis.analyze(InstanceSpec.bernoulli([0.5, 0.5]))
    assert (r.opt_static, r.opt_dynamic, r.dynamic_gap) == (0.5, 0.75, 0.25)
    assert r.opt_dynamic_ci == 0.0 and r.closed_form
    single = analysis.analyze(InstanceSpec.bernoulli([0.3]))
    assert single.lemma1_bound == 0.0 and single.opt_dynamic == pytest.approx(0.3)


def test_analyze_correlated():
    nu1, _ = envs.correlated_params(5000, 8)
    r = analysis.analyze(InstanceSpec.from_correlated(nu1))
    assert r.opt_static == pytest.approx(0.5 + (nu1.a + nu1.b) / 12, abs=1e-15)
    assert r.opt_dynamic == pytest.approx(0.5 + nu1.b / 6, abs=1e-15)
    assert r.opt_dynamic >= r.opt_static


def test_correlated_variances_against_sampling():
    nu1, nu2 = envs.correlated_params(1000, 2)
    for spec in (nu1, nu2):
        inst = InstanceSpec.from_correlated(spec)
        rewards, _ = inst.sample_block(stream(11, "analysis"), 400_000)
        r = analysis.analyze(inst)
        assert np.allclose(rewards.var(axis=0), r.variances, atol=2e-3)


def test_analyze_monte_carlo_mode():
    r = analysis.analyze(InstanceSpec.bernoulli([0.5, 0.5]), mc_samples=100_000, seed=1)
    assert not r.closed_form and r.opt_dynamic_ci > 0
    assert abs(r.opt_dynamic - 0.75) <= r.opt_dynamic_ci * 4 / 1.96


def test_kl_bernoulli_examples():
    assert kl_bernoulli(0.3, 0.3) == 0.0
    expected = 0.5 * math.log(2) + 0.5 * math.log(2 / 3)
    assert kl_bernoulli(0.5, 0.25) == pytest.approx(expected, abs=1e-15)
    assert expected == pytest.approx(0.143841, abs=1e-6)
    assert kl_bernoulli(0.2, 0.0) == math.inf
    assert kl_bernoulli(0.2, 1.0) == math.inf
    assert kl_bernoulli(0.0, 0.0) == 0.0 and kl_bernoulli(1.0, 1.0) == 0.0
    with pytest.raises(AnalysisError):
        kl_bernoulli(1.2, 0.5)


def test_kl_bernoulli_lb_parameter_bound():
    for n, T, k in [(2, 10**6, 2000), (4, 10**6, 4000), (8, 10**7, 10**4)]:
        lb = envs.build_lb_instances(n, T, k)[2]
        assert kl_bernoulli(lb.p, lb.epsilon) <= 8 * lb.delta**2 / lb.epsilon


def _kl_quad(a, b, direction):
    f = lambda x: 1 + (a + b) / 2 * (2 * x - 1)
    g = lambda x: 1 + b / 2 * (2 * x - 1)
    if direction == "reverse":
        f, g = g, f
    return quad(lambda x: f(x) * math.log(f(x) / g(x)), 0, 1, epsabs=1e-14, epsrel=1e-12)[0]


@pytest.mark.parametrize("a,b", [(0.1, 0.11), (0.05, 0.06), (0.125, 0.13), (0.01, 0.2)])
@pytest.mark.parametrize("direction", ["forward", "reverse"])
def test_kl_density_grid_matches_quadrature(a, b, direction):
    assert kl_density_grid((a, b), direction) == pytest.approx(_kl_quad(a, b, direction), abs=1e-12)


def test_kl_density_examples():
    assert kl_density_grid((0.0, 0.1)) == 0.0
    assert kl_density_grid((0.0, 0.1), "reverse") == 0.0
    assert kl_density_grid((0.1, 0.11)) <= 0.1**2 / 9
    for a in (0.01, 0.05, 0.1):
        b = a + a / 48
        fwd = kl_density_grid((a, b))
        rev = kl_density_grid((a, b), "reverse")
        assert fwd <= a * a / 9 + 1e-9
        assert abs(fwd - rev) <= a**3


def test_kl_density_rejects():
    with pytest.raises(AnalysisError):
        kl_density_grid((0.1, 0.1), gridpoints=100)
    with pytest.raises(AnalysisError):
        kl_density_grid((0.1, 0.1), direction="sideways")
    with pytest.raises(AnalysisError):
        kl_density_grid((1.5, 1.0))


def test_bh_examples():
    assert bh_lower_bound(0.0) == 0.5
    assert bh_lower_bound(1 / 9) == pytest.approx(0.5 * math.exp(-1 / 9), abs=1e-15)
    assert bh_lower_bound(1 / 9) == pytest.approx(0.44742, abs=1e-5)
    xs = np.linspace(0, 5, 50)
    vals = [bh_lower_bound(x) for x in xs]
    assert all(u > v for u, v in zip(vals, vals[1:]))
    with pytest.raises(AnalysisError):
        bh_lower_bound(-0.1)


def test_two_point_summary():
    s = analysis.summary_from_values(PolicySpec("ucbv"), 10, 0, [0.0, 2.0])
    assert (s.mean_pseudo_regret, s.std_err) == (1.0, 1.0)
    assert s.ci95 == (1.0 - 1.96, 1.0 + 1.96)
    assert s.half_width == 1.96


def test_aggregate_identical_runs():
    inst = InstanceSpec.bernoulli([0.5])
    runs = [simulate_run(inst, PolicySpec("ucbv"), 50, 0, s) for s in range(4)]
    s = aggregate(runs, inst)
    assert s.std_err == 0.0 and s.replicates == 4


def test_aggregate_rejects_mixed_configs():
    inst = InstanceSpec.bernoulli([0.5, 0.4])
    runs = [simulate_run(inst, PolicySpec("ucbv"), 50, 0, 1),
            simulate_run(inst, PolicySpec("ucbv"), 60, 0, 1)]
    with pytest.raises(AggregationError):
        aggregate(runs)
    with pytest.raises(AggregationError):
        aggregate([])
    with pytest.raises(AggregationError):
        aggregate(runs[:1], InstanceSpec.bernoulli([0.5, 0.3]))


def test_lemma2_degenerate_budgets():
    inst = InstanceSpec.bernoulli([0.5, 0.45])
    lhs, rhs, resid, bare = analysis.lemma2_residual(inst, 2000, 0, 20)
    assert rhs == bare.mean_pseudo_regret
    assert abs(resid) <= 1.96 * math.hypot(lhs.std_err, bare.std_err) * 3
    lhs, rhs, resid, _ = analysis.lemma2_residual(inst, 500, 500, 5)
    assert lhs.mean_pseudo_regret == pytest.approx(-500 * (1 - 0.5 * 0.55 - 0.5), abs=1e-9)
    assert resid == pytest.approx(0.0, abs=1e-9)


def test_lemma2_rejects():
    nu1, _ = envs.correlated_params(100, 2)
    with pytest.raises(AnalysisError):
        analysis.lemma2_residual(InstanceSpec.from_correlated(nu1), 100, 2, 2)
    with pytest.raises(AnalysisError):
        analysis.lemma2_residual(InstanceSpec.bernoulli([0.5, 0.4]), 100, 2, 2, seeds=[1])


def test_pull_audit_small():
    inst = InstanceSpec.bernoulli([0.6, 0.4])
    audit = analysis.ucbv_pull_audit(inst, 3000, 4)
    assert audit.gap == pytest.approx(0.2)
    assert 0 < audit.mean_pulls < 3000
    assert audit.constant == pytest.approx(audit.scaled_pulls / audit.envelope)
