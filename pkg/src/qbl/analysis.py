"""Analytic and Monte Carlo oracles: OPT gaps, KL divergences, regret summaries."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import simpson

from .core import RunResult, simulate_run
from .envs import InstanceSpec, h_density
from .errors import AggregationError, AnalysisError
from .policies import DEFAULT_ZETA, PolicySpec

Z95 = 1.96
DEFAULT_GRIDPOINTS = 4097


# ---------------------------------------------------------------------------
# Static versus dynamic optimum
# ---------------------------------------------------------------------------


def opt_static(instance: InstanceSpec) -> float:
    """Mean of the best fixed arm."""
    if instance.family not in ("iid", "correlated", "lb_stochastic"):
        raise AnalysisError(f"unsupported family {instance.family!r}")
    return instance.opt_static


def opt_dynamic_bernoulli(means: Sequence[float]) -> float:
    """E[max] for independent Bernoulli arms: 1 - prod(1 - p_i)."""
    return 1.0 - float(np.prod(1.0 - np.asarray(means, dtype=float)))


def opt_dynamic(instance: InstanceSpec) -> float:
    """Closed-form E[max_i X_i] (exact piecewise integration for iid arms)."""
    return instance.opt_dynamic


def opt_dynamic_mc(instance: InstanceSpec, samples: int, stream: np.random.Generator,
                   block: int = 1 << 16) -> tuple[float, float]:
    """Monte Carlo estimate of E[max_i X_i] with its standard error."""
    if samples < 2:
        raise AnalysisError("need at least two samples")
    total = 0.0
    total_sq = 0.0
    left = samples
    while left:
        size = min(block, left)
        rewards, _ = instance.sample_block(stream, size)
        m = rewards.max(axis=1)
        total += float(m.sum())
        total_sq += float(np.dot(m, m))
        left -= size
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0) * samples / (samples - 1)
    return mean, math.sqrt(var / samples)


def lemma1_bound(gaps: Sequence[float], variances: Sequence[float], n: int | None = None) -> float:
    """(1 / 2n) * sum over strictly suboptimal arms of (sigma^2 - gap)_+."""
    gaps = np.asarray(gaps, dtype=float)
    variances = np.asarray(variances, dtype=float)
    if n is None:
        n = len(gaps)
    sub = gaps > 0
    return float(np.sum(np.maximum(variances[sub] - gaps[sub], 0.0))) / (2.0 * n)


@dataclass
class AnalysisReport:
    opt_static: float
    opt_dynamic: float
    opt_dynamic_ci: float
    lemma1_bound: float
    gaps: list[float]
    variances: list[float]
    family: str = "iid"
    closed_form: bool = True

    @property
    def dynamic_gap(self) -> float:
        return self.opt_dynamic - self.opt_static

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dynamic_gap"] = self.dynamic_gap
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _correlated_variances(instance: InstanceSpec) -> list[float]:
    # E[h_inverse(c, U)^2] = int x^2 (1 + c(2x - 1)) dx = 1/3 + c/6.
    c = instance.correlated
    second = {"y": 1.0 / 3.0, "zm": 1.0 / 3.0 + c.a / 6.0, "zp": 1.0 / 3.0 + c.b / 6.0}
    if c.variant == 1:
        m2 = [0.5 * (second["zp"] + second["zm"]), 0.5 * (second["y"] + second["zp"])]
    else:
        m2 = [0.5 * (second["zp"] + second["y"]), 0.5 * (second["zm"] + second["zp"])]
    return [s - mu * mu for s, mu in zip(m2, c.arm_means)]


def analyze(instance: InstanceSpec, mc_samples: int = 0, seed: int = 0) -> AnalysisReport:
    """OPT_s, OPT_d, per-arm gaps and variances, and the variance-gap bound.

    ``mc_samples > 0`` replaces the closed-form OPT_d by a Monte Carlo
    estimate whose 95% half-width is reported.
    """
    means = instance.means
    gaps = (means.max() - means).tolist()
    if instance.family == "correlated":
        variances = _correlated_variances(instance)
    else:
        variances = instance.variances.tolist()
    if mc_samples:
        from .streams import stream

        od, se = opt_dynamic_mc(instance, mc_samples, stream(seed, "analysis"))
        ci, closed = Z95 * se, False
    else:
        od, ci, closed = opt_dynamic(instance), 0.0, True
    return AnalysisReport(
        opt_static=opt_static(instance),
        opt_dynamic=od,
        opt_dynamic_ci=ci,
        lemma1_bound=lemma1_bound(gaps, variances, instance.n_arms),
        gaps=gaps,
        variances=variances,
        family=instance.family,
        closed_form=closed,
    )


# ---------------------------------------------------------------------------
# Regret summaries
# ---------------------------------------------------------------------------


@dataclass
class RegretSummary:
    policy: PolicySpec
    T: int
    k: int
    replicates: int
    mean_pseudo_regret: float
    std_err: float
    ci95: tuple[float, float]
    mean_realized_regret: float = 0.0
    queries_used_mean: float = 0.0

    @property
    def half_width(self) -> float:
        return Z95 * self.std_err


def summarize(values: Sequence[float]) -> tuple[float, float]:
    """Sample mean and standard error (ddof=1; zero for a single value)."""
    x = np.asarray(values, dtype=float)
    if len(x) < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def summary_from_values(policy: PolicySpec, T: int, k: int, pseudo: Sequence[float],
                        realized: Sequence[float] = (), queries: Sequence[float] = ()) -> RegretSummary:
    mean, se = summarize(pseudo)
    hw = Z95 * se
    return RegretSummary(
        policy=policy, T=T, k=k, replicates=len(pseudo),
        mean_pseudo_regret=mean, std_err=se, ci95=(mean - hw, mean + hw),
        mean_realized_regret=float(np.mean(realized)) if len(realized) else math.nan,
        queries_used_mean=float(np.mean(queries)) if len(queries) else math.nan,
    )


def aggregate(runs: Sequence[RunResult], instance: InstanceSpec | None = None) -> RegretSummary:
    """Mean pseudo-regret, standard error and 95% CI across replicate runs."""
    if not runs:
        raise AggregationError("nothing to aggregate")
    key = runs[0].config_key
    if any(r.config_key != key for r in runs):
        raise AggregationError("runs differ in instance, policy, T or k")
    if instance is not None and instance.to_json() != runs[0].instance.to_json():
        raise AggregationError("runs were not produced on the given instance")
    first = runs[0]
    return summary_from_values(
        first.policy, first.T, first.k,
        [r.pseudo_regret for r in runs],
        [r.realized_regret for r in runs],
        [r.queries_used for r in runs],
    )


def lemma2_residual(
    instance: InstanceSpec,
    T: int,
    k: int,
    replicates: int,
    seeds: Sequence[int] | None = None,
    zeta: float = DEFAULT_ZETA,
) -> tuple[RegretSummary, float, float, RegretSummary]:
    """Check R_{T,k}(query-first UCB-V) = R_{T-k,0}(UCB-V) - k (OPT_d - OPT_s).

    Both sides are estimated from independent replicates: the left side with
    ``seeds``, the bare UCB-V side with the same seeds shifted by
    ``replicates``. Returns ``(lhs, rhs, residual, rhs_runs)`` where ``rhs``
    already includes the query credit and ``rhs_runs`` summarizes the bare
    UCB-V runs (its half-width is the right side's uncertainty).
    """
    if not instance.is_iid:
        raise AnalysisError("the decomposition requires independent rewards")
    if not 0 <= k <= T:
        raise AnalysisError(f"need 0 <= k <= T, got k={k}")
    seeds = list(range(replicates)) if seeds is None else list(seeds)
    if len(seeds) != replicates:
        raise AnalysisError("need one seed per replicate")
    credit = k * (opt_dynamic(instance) - opt_static(instance))
    lhs_spec = PolicySpec("query_then_ucbv", zeta=zeta)
    lhs = aggregate([simulate_run(instance, lhs_spec, T, k, s) for s in seeds])
    if T - k == 0:
        bare = summary_from_values(PolicySpec("ucbv", zeta=zeta), 0, 0, [0.0] * replicates)
    else:
        bare = aggregate([simulate_run(instance, PolicySpec("ucbv", zeta=zeta), T - k, 0, s + replicates)
                          for s in seeds])
    rhs = bare.mean_pseudo_regret - credit
    return lhs, rhs, lhs.mean_pseudo_regret - rhs, bare


# ---------------------------------------------------------------------------
# Divergences
# ---------------------------------------------------------------------------


def kl_bernoulli(p: float, q: float) -> float:
    """KL(Be(p) || Be(q)) with 0 ln 0 = 0; ``math.inf`` when unbounded."""
    if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
        raise AnalysisError(f"Bernoulli parameters must lie in [0, 1], got p={p}, q={q}")
    total = 0.0
    for x, y in ((p, q), (1.0 - p, 1.0 - q)):
        if x == 0.0:
            continue
        if y == 0.0:
            return math.inf
        total += x * math.log(x / y)
    return max(total, 0.0)


def correlated_observation_densities(a: float, b: float):
    """Densities of a pulled arm's reward under the two correlated variants.

    p_plus mixes the Z+ and Z- laws (arm favoured), p_minus mixes the
    uniform and Z+ laws.
    """
    def p_plus(x):
        return 0.5 * h_density(b, x) + 0.5 * h_density(a, x)

    def p_minus(x):
        return 0.5 + 0.5 * h_density(b, x)

    return p_plus, p_minus


def kl_density_grid(params: tuple[float, float], direction: str = "forward",
                    gridpoints: int = DEFAULT_GRIDPOINTS) -> float:
    """KL between the two correlated observation densities by composite Simpson.

    ``direction='forward'`` gives KL(p_plus || p_minus), ``'reverse'`` the
    other order.
    """
    a, b = params
    if gridpoints < 3 or gridpoints % 2 == 0:
        raise AnalysisError("Simpson needs an odd number of at least 3 gridpoints")
    if direction not in ("forward", "reverse"):
        raise AnalysisError(f"direction must be 'forward' or 'reverse', got {direction!r}")
    x = np.linspace(0.0, 1.0, gridpoints)
    p_plus, p_minus = correlated_observation_densities(a, b)
    pp, pm = p_plus(x), p_minus(x)
    if np.any(pp <= 0) or np.any(pm <= 0):
        raise AnalysisError("observation density is not positive on [0, 1]")
    f, g = (pp, pm) if direction == "forward" else (pm, pp)
    return float(simpson(f * np.log(f / g), x=x))


def bh_lower_bound(kl: float) -> float:
    """Bretagnolle-Huber: P1(E^c) + P2(E) >= exp(-KL) / 2."""
    if kl < 0:
        raise AnalysisError(f"KL must be nonnegative, got {kl}")
    return 0.5 * math.exp(-kl)


# ---------------------------------------------------------------------------
# Pull-count audit for UCB-V
# ---------------------------------------------------------------------------


@dataclass
class PullAudit:
    gap: float
    variance: float
    T: int
    replicates: int
    mean_pulls: float
    scaled_pulls: float  # gap * E[N_subopt(T)]
    envelope: float  # (variance / gap + 1) * ln T
    constant: float  # scaled_pulls / envelope
    per_arm: list[dict] = field(default_factory=list)


def ucbv_pull_audit(instance: InstanceSpec, T: int, replicates: int, seed0: int = 0,
                    zeta: float = DEFAULT_ZETA) -> PullAudit:
    """Empirical constant C in gap * E[N_i(T)] <= C (var/gap + 1) ln T.

    Reports the worst suboptimal arm.
    """
    if not instance.is_iid:
        raise AnalysisError("pull audit needs independent arms")
    means = instance.means
    gaps = means.max() - means
    variances = instance.variances
    counts = np.zeros(instance.n_arms)
    spec = PolicySpec("ucbv", zeta=zeta)
    for r in range(replicates):
        run = simulate_run(instance, spec, T, 0, seed0 + r)
        counts += np.bincount(run.arms, minlength=instance.n_arms)
    counts /= replicates
    rows = []
    for i in np.flatnonzero(gaps > 0):
        env = (variances[i] / gaps[i] + 1.0) * math.log(T)
        scaled = gaps[i] * counts[i]
        rows.append({"arm": int(i), "gap": float(gaps[i]), "variance": float(variances[i]),
                     "mean_pulls": float(counts[i]), "scaled_pulls": float(scaled),
                     "envelope": float(env), "constant": float(scaled / env)})
    if not rows:
        return PullAudit(0.0, 0.0, T, replicates, 0.0, 0.0, 0.0, 0.0, [])
    worst = max(rows, key=lambda d: d["constant"])
    return PullAudit(worst["gap"], worst["variance"], T, replicates, worst["mean_pulls"],
                     worst["scaled_pulls"], worst["envelope"], worst["constant"], rows)
