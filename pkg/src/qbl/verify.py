"""Named verification checks shared by ``qbl verify`` and the test suite.

Every check returns a :class:`Check` with a measured value and the threshold
it was held to. ``level='full'`` uses the acceptance sizes; ``'quick'`` caps
Monte Carlo work at 1e5 samples and 50 replicates.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from . import analysis, envs, policies
from .core import simulate_run
from .envs import InstanceSpec
from .policies import PolicySpec

LEVELS = ("quick", "full")


@dataclass
class Check:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""
    seconds: float = 0.0
    budget: float | None = None  # wall-clock limit in seconds, full level only

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        out = f"{status} {self.name} {self.measured:.6g} {self.threshold:.6g}"
        if self.detail:
            out += f"  # {self.detail}"
        return out


def _size(level: str, full: int, quick: int) -> int:
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}, got {level!r}")
    return full if level == "full" else quick


def _rng(tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(20240601, spawn_key=(tag,)))


# ---------------------------------------------------------------------------
# Acceptance criteria
# ---------------------------------------------------------------------------


def ac01_hc_moments(level: str = "full") -> Check:
    n = _size(level, 10**6, 10**5)
    rng = _rng(1)
    worst = 0.0
    for c in (0.05, 0.1, 0.25, 0.5):
        x = envs.h_inverse(c, rng.random(n))
        z = abs(x.mean() - (0.5 + c / 6.0)) / (x.std(ddof=1) / math.sqrt(n))
        worst = max(worst, z)
    return Check("ac01_hc_sampler_moments", worst <= 4.0, worst, 4.0, "max |z| over c", budget=10)


def _criterion2_params():
    return envs.correlated_params(10**4 + 1, 1)


def ac02_ordering(level: str = "full") -> Check:
    n = _size(level, 10**6, 10**5)
    nu1, nu2 = _criterion2_params()
    rng = _rng(2)
    violations = 0
    for spec in (nu1, nu2):
        rewards, best, w = envs.sample_correlated_block(spec, rng, n // 2)
        y, zm, zp = envs.correlated_latents(spec.a, spec.b, rng.random(n // 2))
        violations += int(np.sum(~((y <= zm) & (zm <= zp))))
        # the best arm's reward must dominate the other in every assembled row
        top = rewards[np.arange(len(best)), best]
        violations += int(np.sum(top < rewards.min(axis=1)))
    return Check("ac02_almost_sure_ordering", violations == 0, violations, 0, budget=10)


def ac03_kl_budget(level: str = "full") -> Check:
    nu1, _ = _criterion2_params()
    m = 10**4
    worst_budget = max(m * analysis.kl_density_grid((nu1.a, nu1.b), d) for d in ("forward", "reverse"))
    excess = -math.inf
    for a in np.round(np.arange(0.01, 0.1201, 0.01), 10):
        b = a + a / 48.0
        for d in ("forward", "reverse"):
            excess = max(excess, analysis.kl_density_grid((a, b), d) - a * a / 9.0)
    ok = worst_budget <= 1 / 9 + 1e-9 and excess <= 1e-9
    return Check("ac03_kl_budget", ok, worst_budget, 1 / 9 + 1e-9,
                 f"m*KL; max(KL - a^2/9) over a-grid = {excess:.3g}", budget=5)


def ac04_lemma1(level: str = "full") -> Check:
    rng = _rng(4)
    violations = 0
    for _ in range(1000):
        n = int(rng.integers(2, 9))
        means = rng.random(n)
        gaps = means.max() - means
        bound = analysis.lemma1_bound(gaps, means * (1 - means), n)
        if analysis.opt_dynamic_bernoulli(means) - means.max() < bound:
            violations += 1
    return Check("ac04_lemma1_exactness", violations == 0, violations, 0, budget=1)


def ac05_lemma2(level: str = "full") -> Check:
    reps = _size(level, 200, 50)
    inst = InstanceSpec.bernoulli([0.5, 0.45])
    lhs, rhs, resid, bare = analysis.lemma2_residual(inst, 20000, 5000, reps, seeds=range(reps))
    tol = lhs.half_width + bare.half_width
    return Check("ac05_lemma2_decomposition", abs(resid) <= tol, abs(resid), tol,
                 f"lhs={lhs.mean_pseudo_regret:.2f} rhs={rhs:.2f} reps={reps}", budget=300)


def _c6_instance(T: int) -> InstanceSpec:
    return InstanceSpec.bernoulli([0.5, 0.5 - 1.0 / math.sqrt(T)])


def _regret_batch(inst, spec, T, k, reps, seed0=0):
    return analysis.aggregate([simulate_run(inst, spec, T, k, seed0 + r) for r in range(reps)])


def ac06_negative_regret(level: str = "full") -> Check:
    T = _size(level, 10**5, 2 * 10**4)
    reps = _size(level, 100, 20)
    inst = _c6_instance(T)
    q = _regret_batch(inst, PolicySpec("query_then_ucbv"), T, T // 10, reps)
    u = _regret_batch(inst, PolicySpec("ucbv"), T, 0, reps, seed0=10**6)
    ok = q.ci95[1] < 0 and u.mean_pseudo_regret > 0
    return Check("ac06_negative_regret_with_queries", ok, q.ci95[1], 0.0,
                 f"query-first mean={q.mean_pseudo_regret:.2f} ci_hi={q.ci95[1]:.2f}; "
                 f"ucbv mean={u.mean_pseudo_regret:.2f}; T={T} reps={reps}", budget=600)


def k_grid_c7(T: int) -> list[int]:
    return [0, round(T ** 0.5), round(T ** (2 / 3)), T // 10, T // 2]


def ac07_regret_decreasing(level: str = "full") -> Check:
    T = _size(level, 10**5, 2 * 10**4)
    reps = _size(level, 100, 20)
    inst = _c6_instance(T)
    spec = PolicySpec("query_then_ucbv")
    sums = [_regret_batch(inst, spec, T, k, reps, seed0=2 * 10**6) for k in k_grid_c7(T)]
    margin = math.inf
    for s0, s1 in zip(sums, sums[1:]):
        gap = s0.mean_pseudo_regret - s1.mean_pseudo_regret
        se = math.hypot(s0.std_err, s1.std_err)
        if se > 0:
            margin = min(margin, gap / se)
        elif gap <= 0:
            margin = -math.inf
    means = ", ".join(f"{s.k}:{s.mean_pseudo_regret:.1f}" for s in sums)
    return Check("ac07_regret_decreases_in_k", margin > 1.0, margin, 1.0,
                 f"min step / combined s.e.; {means}", budget=900)


def ac08_correlated_fidelity(level: str = "full") -> Check:
    n = _size(level, 10**6, 10**5)
    nu1, _ = _criterion2_params()
    inst = InstanceSpec.from_correlated(nu1)
    run = simulate_run(inst, PolicySpec("query_then_ucbv"), n, n, 8)
    worst = 0.0
    rewards, _, _ = envs.sample_correlated_block(nu1, _rng(8), n)
    for i, target in enumerate(nu1.arm_means):
        col = rewards[:, i]
        worst = max(worst, abs(col.mean() - target) / (col.std(ddof=1) / math.sqrt(n)))
    regret = inst.opt_static - run.rewards
    z_q = abs(regret.mean() + nu1.eta / 12.0) / (regret.std(ddof=1) / math.sqrt(n))
    exact = abs(run.pseudo_regret / n + nu1.eta / 12.0)
    ok = max(worst, z_q) <= 4.0 and exact <= 1e-12 and run.queries_used == n
    return Check("ac08_correlated_fidelity", ok, max(worst, z_q), 4.0,
                 f"arm-mean |z|={worst:.2f}, queried-regret |z|={z_q:.2f}, "
                 f"pseudo per query + eta/12 = {exact:.2g}", budget=30)


def ac09_indistinguishable(level: str = "full") -> Check:
    n = 10**5
    nu1, nu2 = _criterion2_params()
    runs = [simulate_run(InstanceSpec.from_correlated(s), PolicySpec("query_then_ucbv"), n, n, 90 + i)
            for i, s in enumerate((nu1, nu2))]
    p_ks = stats.ks_2samp(runs[0].rewards, runs[1].rewards).pvalue
    f1, f2 = (float(np.mean(r.arms == 0)) for r in runs)
    pooled = 0.5 * (f1 + f2)
    se = math.sqrt(pooled * (1 - pooled) * 2.0 / n)
    z = abs(f1 - f2) / se
    return Check("ac09_query_feedback_indistinguishable", p_ks > 0.01 and z < 3.0, p_ks, 0.01,
                 f"KS p-value; coin-frequency |z|={z:.2f}", budget=10)


def ac10_lb_algebra(level: str = "full") -> Check:
    violations = cases = 0
    for n in (2, 3, 4, 8, 16, 64):
        for T in (10**4, 10**5, 10**6, 10**7, 10**8):
            lo = math.isqrt(n * T - 1) + 1  # ceil(sqrt(nT))
            hi = T // envs.LB_C
            if lo > hi:
                continue
            for k in sorted({lo, round(math.sqrt(lo * hi)), hi}):
                _, _, s = envs.build_lb_instances(n, T, k)
                cases += 1
                ok = (s.p <= 0.25 and 1 - s.p + 2 * s.delta <= 1
                      and analysis.kl_bernoulli(s.p, s.epsilon) <= 8 * s.delta ** 2 / s.epsilon)
                violations += not ok
    return Check("ac10_lb_parameter_algebra", violations == 0 and cases > 0, violations, 0,
                 f"{cases} (n, T, k) cases", budget=1)


def ac11_ucbv_audit(level: str = "full") -> Check:
    reps = _size(level, 200, 50)
    audit = analysis.ucbv_pull_audit(InstanceSpec.bernoulli([0.6, 0.5]), 10**4, reps)
    return Check("ac11_ucbv_pull_audit", audit.constant <= 20.0, audit.constant, 20.0,
                 f"gap*E[N]={audit.scaled_pulls:.2f} envelope={audit.envelope:.2f} reps={reps}", budget=120)


ACCEPTANCE: dict[str, Callable[[str], Check]] = {
    "ac01": ac01_hc_moments,
    "ac02": ac02_ordering,
    "ac03": ac03_kl_budget,
    "ac04": ac04_lemma1,
    "ac05": ac05_lemma2,
    "ac06": ac06_negative_regret,
    "ac07": ac07_regret_decreasing,
    "ac08": ac08_correlated_fidelity,
    "ac09": ac09_indistinguishable,
    "ac10": ac10_lb_algebra,
    "ac11": ac11_ucbv_audit,
}


# ---------------------------------------------------------------------------
# Module invariants
# ---------------------------------------------------------------------------


def inv_budget_cap(level: str = "quick") -> Check:
    worst = 0
    inst = InstanceSpec.bernoulli([0.7, 0.4, 0.5])
    for kind in ("query_then_ucbv", "spread_query_ucbv", "exp3_with_queries"):
        for k in (0, 3, 40):
            run = simulate_run(inst, PolicySpec(kind), 40, k, 11)
            worst = max(worst, int(np.max(np.cumsum(run.queried) - k)))
    return Check("inv_budget_hard_cap", worst <= 0, worst, 0, "max prefix overrun")


def inv_determinism(level: str = "quick") -> Check:
    inst = InstanceSpec.bernoulli([0.6, 0.5, 0.55])
    same = all(
        simulate_run(inst, PolicySpec(kind), 500, 50, 5).same_as(simulate_run(inst, PolicySpec(kind), 500, 50, 5))
        for kind in policies.KINDS
    )
    # the environment path must not depend on how much randomness the learner uses
    a = simulate_run(inst, PolicySpec("ucbv"), 500, 0, 5)
    b = simulate_run(inst, PolicySpec("exp3_with_queries"), 500, 0, 5)
    isolated = np.array_equal(a.round_max, b.round_max) and np.array_equal(a.arm_totals, b.arm_totals)
    return Check("inv_determinism", same and isolated, float(same and isolated), 1.0,
                 "equal seeds give bit-identical runs; streams isolated")


def inv_queried_optimality(level: str = "quick") -> Check:
    bad = 0
    insts = [InstanceSpec.bernoulli([0.5, 0.5]),
             InstanceSpec.iid([envs.ArmDistribution.uniform01(),
                               envs.ArmDistribution.discrete([0.2, 0.9], [0.5, 0.5])]),
             InstanceSpec.from_correlated(envs.correlated_params(200, 20)[1])]
    for inst in insts:
        run = simulate_run(inst, PolicySpec("spread_query_ucbv"), 200, 60, 3)
        bad += int(np.sum(run.rewards[run.queried] != run.round_max[run.queried]))
    return Check("inv_queried_round_optimality", bad == 0, bad, 0)


def inv_regret_identity(level: str = "quick") -> Check:
    inst = InstanceSpec.bernoulli([0.3, 0.8, 0.6])
    worst = 0.0
    for kind in policies.KINDS:
        run = simulate_run(inst, PolicySpec(kind), 700, 70, 9)
        gaps = inst.opt_static - inst.means
        pulls = np.bincount(run.arms[~run.queried], minlength=3)
        alt = float(pulls @ gaps) + run.queries_used * (inst.opt_static - inst.opt_dynamic)
        worst = max(worst, abs(run.pseudo_regret - alt),
                    abs(run.pseudo_regret - (run.T * inst.opt_static - run.chosen_means.sum())))
    return Check("inv_regret_accounting_identity", worst <= 1e-9, worst, 1e-9)


def inv_h_monotone(level: str = "quick") -> Check:
    x = np.linspace(0.0, 1.0, 2001)
    worst = math.inf
    for c in np.linspace(0.0, 0.5, 51):
        worst = min(worst, float(np.min(np.diff(envs.h_map(c, x)))))
    return Check("inv_h_map_monotone", worst > 0, worst, 0.0, "min forward difference")


def inv_h_roundtrip(level: str = "quick") -> Check:
    cs = np.linspace(0.0, 0.5, 40)
    us = np.linspace(0.0, 1.0, 25)
    worst = max(float(np.max(np.abs(envs.h_map(c, envs.h_inverse(c, us)) - us))) for c in cs)
    return Check("inv_h_map_roundtrip", worst <= 1e-10, worst, 1e-10, "1000-point (c, u) grid")


def inv_density_ks(level: str = "quick") -> Check:
    n = _size(level, 10**6, 10**5)
    worst = 0.0
    crit = stats.kstwo.ppf(0.99, n)
    for c in (0.1, 0.5):
        x = envs.h_inverse(c, _rng(30).random(n))
        d = stats.kstest(x, lambda y: envs.h_map(c, np.clip(y, 0.0, 1.0))).statistic
        worst = max(worst, d)
    return Check("inv_density_law_ks", worst < crit, worst, crit, "KS statistic vs 1% critical value")


def inv_correlated_structure(level: str = "quick") -> Check:
    nu1, nu2 = envs.correlated_params(1000, 10)
    rng = _rng(31)
    u = rng.random(10**4)
    w = rng.integers(1, 3, 10**4)
    y, zm, zp = envs.correlated_latents(nu1.a, nu1.b, u)
    rows = np.arange(len(w))
    x1 = envs.assemble_correlated(1, w, y, zm, zp)
    x2 = envs.assemble_correlated(2, w, y, zm, zp)
    same = np.array_equal(x1[rows, w - 1], x2[rows, w - 1]) and np.array_equal(x1[rows, w - 1], zp)
    return Check("inv_query_feedback_variant_free", bool(same), float(same), 1.0)


def inv_lb_means(level: str = "quick") -> Check:
    worst = 0.0
    for n, T, k in ((2, 101000, 1000), (4, 10**6, 5000), (7, 10**7, 10**5)):
        nu1, nu2, s = envs.build_lb_instances(n, T, k)
        want1 = [1 - s.p + s.delta] + [1 - s.p] * (n - 1)
        want2 = list(want1)
        want2[s.j] = 1 - s.p + 2 * s.delta
        got = [a.mean for a in nu1] + [a.mean for a in nu2]
        worst = max(worst, max(abs(g - w) for g, w in zip(got, want1 + want2)))
    return Check("inv_lb_instance_means", worst == 0.0, worst, 0.0)


def inv_streaming_stats(level: str = "quick") -> Check:
    rng = _rng(32)
    worst = 0.0
    for _ in range(50):
        xs = rng.random(int(rng.integers(1, 400)))
        s = policies.ArmStats()
        for x in xs:
            s.update(float(x))
        worst = max(worst, abs(s.mean_est - xs.mean()), abs(s.var_est - xs.var()))
    return Check("inv_streaming_statistics", worst <= 1e-10, worst, 1e-10)


def inv_exp3_normalization(level: str = "quick") -> Check:
    pol = PolicySpec("exp3_with_queries", learning_rate=0.05).build(5, 3000, 100, _rng(33))
    rng = _rng(34)
    worst = 0.0
    for t in range(1, 3001):
        q = pol.wants_query(t)
        arm = int(rng.integers(5)) if q else pol.select()
        pol.observe(arm, float(rng.random()), q)
        worst = max(worst, abs(math.fsum(pol.probs) - 1.0))
    return Check("inv_exp3_normalization", worst <= 1e-12, worst, 1e-12)


def inv_bandit_purity(level: str = "quick") -> Check:
    inst = InstanceSpec.bernoulli([0.4, 0.6, 0.5])
    ok = True
    for kind in policies.KINDS:
        spec = PolicySpec(kind)
        run = simulate_run(inst, spec, 600, 60, 21)
        fresh = policies.replay(spec, 3, 600, 60, zip(run.arms, run.rewards, run.queried))
        ok &= fresh.snapshot() == run.final_policy.snapshot()
    return Check("inv_bandit_feedback_purity", ok, float(ok), 1.0, "replayed log reproduces learner state")


def inv_opt_dominance(level: str = "quick") -> Check:
    rng = _rng(35)
    worst = math.inf
    for _ in range(200):
        n = int(rng.integers(1, 6))
        arms = []
        for _ in range(n):
            kind = rng.integers(3)
            if kind == 0:
                arms.append(envs.ArmDistribution.bernoulli(rng.random()))
            elif kind == 1:
                arms.append(envs.ArmDistribution.uniform01())
            else:
                v = rng.random(3)
                arms.append(envs.ArmDistribution.discrete(v, rng.dirichlet(np.ones(3))))
        inst = InstanceSpec.iid(arms)
        worst = min(worst, inst.opt_dynamic - inst.opt_static)
    mc_n = _size(level, 10**6, 10**5)
    inst = InstanceSpec.iid([envs.ArmDistribution.uniform01(), envs.ArmDistribution.bernoulli(0.3)])
    est, se = analysis.opt_dynamic_mc(inst, mc_n, _rng(36))
    z = abs(est - inst.opt_dynamic) / se
    ok = worst >= -1e-12 and z <= 4 and est >= inst.opt_static - 4 * se
    return Check("inv_opt_dominance", ok, worst, 0.0, f"MC vs closed form |z|={z:.2f}")


def inv_kl_nonnegative(level: str = "quick") -> Check:
    grid = np.linspace(0.01, 0.99, 41)
    worst = min(analysis.kl_bernoulli(p, q) for p in grid for q in grid)
    ident = max(analysis.kl_bernoulli(p, p) for p in grid)
    dens = min(analysis.kl_density_grid((a, a + 0.01), d) for a in (0.01, 0.1, 0.2) for d in ("forward", "reverse"))
    ok = worst >= 0 and ident == 0 and dens >= 0 and analysis.kl_density_grid((0.0, 0.05)) == 0.0
    return Check("inv_kl_nonnegative", ok, min(worst, dens), 0.0)


def inv_simpson_convergence(level: str = "quick") -> Check:
    worst = 0.0
    for a in (0.01, 0.1, 0.2):
        b = a + a / 48
        for d in ("forward", "reverse"):
            worst = max(worst, abs(analysis.kl_density_grid((a, b), d, 4097)
                                   - analysis.kl_density_grid((a, b), d, 8193)))
    return Check("inv_simpson_convergence", worst < 1e-10, worst, 1e-10)


def inv_thm1_kl_budget(level: str = "quick") -> Check:
    worst = 0.0
    for T, k in ((2, 1), (10, 3), (65, 1), (100, 50), (10**4 + 1, 1), (10**6, 10**3), (10**8, 10**7)):
        nu1, _ = envs.correlated_params(T, k)
        kl = max(analysis.kl_density_grid((nu1.a, nu1.b), d) for d in ("forward", "reverse"))
        worst = max(worst, (T - k) * kl)
    return Check("inv_thm1_kl_budget", worst <= 1 / 9 + 1e-9, worst, 1 / 9 + 1e-9, "max m*KL")


INVARIANTS: dict[str, Callable[[str], Check]] = {
    f.__name__: f
    for f in (
        inv_budget_cap, inv_determinism, inv_queried_optimality, inv_regret_identity,
        inv_h_monotone, inv_h_roundtrip, inv_density_ks, inv_correlated_structure,
        inv_lb_means, inv_streaming_stats, inv_exp3_normalization, inv_bandit_purity,
        inv_opt_dominance, inv_kl_nonnegative, inv_simpson_convergence, inv_thm1_kl_budget,
    )
}


def timed(fn: Callable[[str], Check], level: str) -> Check:
    t0 = time.perf_counter()
    try:
        check = fn(level)
    except Exception as exc:  # a crashing check is a failing check
        check = Check(fn.__name__, False, math.nan, math.nan, f"raised {type(exc).__name__}: {exc}")
    check.seconds = time.perf_counter() - t0
    if level == "full" and check.budget is not None and check.seconds > check.budget:
        check.passed = False
        check.detail += f"; runtime {check.seconds:.1f}s over {check.budget}s"
    return check


def run_all(level: str = "quick", echo: Callable[[str], None] | None = None) -> list[Check]:
    results = []
    for fn in (*INVARIANTS.values(), *ACCEPTANCE.values()):
        check = timed(fn, level)
        results.append(check)
        if echo is not None:
            echo(check.line())
    return results
