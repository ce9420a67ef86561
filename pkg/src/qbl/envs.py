"""Environment families and their samplers.

Three families are supported:

* ``iid``: independent arms, each Bernoulli, finite discrete on [0, 1], or
  uniform on [0, 1];
* ``correlated``: the two-arm family where a fair coin picks the round's
  best arm and all rewards are monotone transforms of one uniform draw;
* ``lb_stochastic``: near-one Bernoulli instances where one low-priority arm
  is nudged up by a tiny amount.

Arms are indexed from 0. A tie-break order is a permutation of arm indices,
highest priority first; the oracle returns the first arm in that order that
attains the round's maximum.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import ConfigError, InputError

# Tolerance used when validating user-supplied probability vectors.
PROB_TOL = 1e-12
# Large-budget lower-bound regime: k <= T / LB_C.
LB_C = 100


# ---------------------------------------------------------------------------
# Arm distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ArmDistribution:
    """A reward distribution supported in [0, 1].

    Use the :meth:`bernoulli`, :meth:`discrete` and :meth:`uniform01`
    constructors; they fill in the analytic ``mean`` and ``variance``.
    """

    kind: str
    values: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()
    mean: float = 0.0
    variance: float = 0.0

    @classmethod
    def bernoulli(cls, p: float) -> "ArmDistribution":
        p = float(p)
        if not 0.0 <= p <= 1.0:
            raise InputError(f"Bernoulli parameter must lie in [0, 1], got {p}")
        return cls("bernoulli", (0.0, 1.0), (1.0 - p, p), p, p * (1.0 - p))

    @classmethod
    def discrete(cls, values: Sequence[float], probs: Sequence[float]) -> "ArmDistribution":
        if len(values) == 0 or len(values) != len(probs):
            raise InputError("discrete distribution needs matching, nonempty values and probs")
        pairs = sorted(zip(map(float, values), map(float, probs)))
        vals = tuple(v for v, _ in pairs)
        ps = tuple(q for _, q in pairs)
        if vals[0] < 0.0 or vals[-1] > 1.0:
            raise InputError("discrete support must lie in [0, 1]")
        if len(set(vals)) != len(vals):
            raise InputError("discrete support values must be distinct")
        if min(ps) < 0.0 or abs(math.fsum(ps) - 1.0) > PROB_TOL:
            raise InputError("discrete probabilities must be nonnegative and sum to 1")
        mean = math.fsum(v * q for v, q in pairs)
        var = math.fsum(q * (v - mean) ** 2 for v, q in pairs)
        return cls("discrete", vals, ps, mean, var)

    @classmethod
    def uniform01(cls) -> "ArmDistribution":
        return cls("uniform01", (), (), 0.5, 1.0 / 12.0)

    @property
    def p(self) -> float:
        if self.kind != "bernoulli":
            raise AttributeError("only Bernoulli arms have a success probability")
        return self.probs[1]

    def cdf_left(self, x: float) -> float:
        """P(X <= x) for discrete kinds; for uniform01, x clipped to [0, 1]."""
        if self.kind == "uniform01":
            return min(max(x, 0.0), 1.0)
        return math.fsum(q for v, q in zip(self.values, self.probs) if v <= x)

    def transform(self, u: np.ndarray) -> np.ndarray:
        """Map uniform draws to samples by inverse CDF."""
        if self.kind == "uniform01":
            return u
        if self.kind == "bernoulli":
            return (u < self.p).astype(np.float64)
        cdf = np.cumsum(self.probs)
        idx = np.searchsorted(cdf, u, side="right")
        np.minimum(idx, len(self.values) - 1, out=idx)
        return np.asarray(self.values)[idx]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.transform(rng.random(size))

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "bernoulli":
            return {"kind": "bernoulli", "p": self.p}
        if self.kind == "uniform01":
            return {"kind": "uniform01"}
        return {"kind": "discrete", "values": list(self.values), "probs": list(self.probs)}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ArmDistribution":
        kind = d.get("kind")
        if kind == "bernoulli":
            return cls.bernoulli(d["p"])
        if kind == "uniform01":
            return cls.uniform01()
        if kind == "discrete":
            return cls.discrete(d["values"], d["probs"])
        raise ConfigError(f"unknown arm kind {kind!r}", field="arms.kind")


def bernoulli_arms(means: Sequence[float]) -> list[ArmDistribution]:
    return [ArmDistribution.bernoulli(p) for p in means]


def expected_max(arms: Sequence[ArmDistribution]) -> float:
    """E[max_i X_i] for independent arms, by exact piecewise integration.

    Uses E[max] = int_0^1 (1 - prod_i F_i(x)) dx. Between consecutive atoms
    every discrete CDF is constant and every uniform CDF equals x, so the
    integrand is ``1 - C x^m`` on each piece.
    """
    cuts = sorted({0.0, 1.0, *(v for a in arms for v in a.values)})
    m = sum(a.kind == "uniform01" for a in arms)
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        const = 1.0
        for a in arms:
            if a.kind != "uniform01":
                const *= a.cdf_left(lo)
        total += (hi - lo) - const * (hi ** (m + 1) - lo ** (m + 1)) / (m + 1)
    return total


def oracle_argmax(rewards: np.ndarray, tie_break: Sequence[int]) -> np.ndarray:
    """Row-wise best arm: first arm in ``tie_break`` attaining the row max."""
    order = np.asarray(tie_break)
    return order[np.argmax(rewards[:, order], axis=1)]


def sample_iid_block(
    arms: Sequence[ArmDistribution],
    rng: np.random.Generator,
    size: int,
    tie_break: Sequence[int] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    n = len(arms)
    u = rng.random((size, n))
    rewards = np.empty_like(u)
    for i, arm in enumerate(arms):
        rewards[:, i] = arm.transform(u[:, i])
    order = range(n) if tie_break is None else tie_break
    return rewards, oracle_argmax(rewards, order)


def sample_iid_round(
    arms: Sequence[ArmDistribution],
    rng: np.random.Generator,
    tie_break: Sequence[int] | None = None,
) -> tuple[np.ndarray, int]:
    """One round of independent rewards and the oracle's best arm."""
    if len(arms) == 0:
        raise InputError("need at least one arm")
    rewards, best = sample_iid_block(arms, rng, 1, tie_break)
    return rewards[0], int(best[0])


# ---------------------------------------------------------------------------
# Correlated family
# ---------------------------------------------------------------------------


def _check_c(c: float) -> None:
    if not 0.0 <= c <= 0.5:
        raise InputError(f"distortion parameter c must lie in [0, 1/2], got {c}")


def _check_unit(name: str, x: Any) -> None:
    arr = np.asarray(x)
    if np.any(~((arr >= 0.0) & (arr <= 1.0))):
        raise InputError(f"{name} must lie in [0, 1]")


def h_map(c: float, x):
    """x - c x (1 - x): a strictly increasing bijection of [0, 1]."""
    _check_c(c)
    _check_unit("x", x)
    return x - c * x * (1.0 - x)


def h_inverse(c: float, u):
    """Unique root in [0, 1] of c x^2 + (1 - c) x - u = 0.

    Written in rationalized form, which has no cancellation and reduces to
    ``u`` at c = 0.
    """
    _check_c(c)
    _check_unit("u", u)
    x = 2.0 * u / ((1.0 - c) + np.sqrt((1.0 - c) ** 2 + 4.0 * c * u))
    return np.minimum(x, 1.0) if isinstance(x, np.ndarray) else min(float(x), 1.0)


def h_density(c: float, x):
    """Density of h_inverse(c, U) for U uniform: 1 + c (2x - 1)."""
    return 1.0 + c * (2.0 * x - 1.0)


@dataclass(frozen=True)
class CorrelatedSpec:
    variant: int
    a: float
    eta: float

    def __post_init__(self):
        if self.variant not in (1, 2):
            raise ConfigError(f"variant must be 1 or 2, got {self.variant}", field="variant")
        if not 0.0 < self.a < 0.25:
            raise ConfigError(f"need 0 < a < 1/4, got a={self.a}", field="a")
        if not 0.0 < self.eta < 0.25 - self.a:
            raise ConfigError(f"need 0 < eta < 1/4 - a, got eta={self.eta}", field="eta")

    @property
    def b(self) -> float:
        return self.a + self.eta

    @property
    def arm_means(self) -> tuple[float, float]:
        hi = 0.5 + (self.a + self.b) / 12.0
        lo = 0.5 + self.b / 12.0
        return (hi, lo) if self.variant == 1 else (lo, hi)

    @property
    def gap(self) -> float:
        return self.a / 12.0

    @property
    def queried_mean(self) -> float:
        """E[Z+], the expected reward of a queried round."""
        return 0.5 + self.b / 6.0

    def with_variant(self, variant: int) -> "CorrelatedSpec":
        return CorrelatedSpec(variant, self.a, self.eta)


def correlated_latents(a: float, b: float, u: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(Y, Z-, Z+) from the shared uniform draw; variant-independent."""
    return u, h_inverse(a, u), h_inverse(b, u)


def assemble_correlated(
    variant: int, w: np.ndarray, y: np.ndarray, zm: np.ndarray, zp: np.ndarray
) -> np.ndarray:
    """Place the latents into arm slots according to the variant table.

    ``w`` holds the coin in {1, 2}; the arm with index ``w - 1`` gets Z+.
    """
    first = w == 1
    x = np.empty((len(w), 2))
    if variant == 1:
        x[:, 0] = np.where(first, zp, zm)
        x[:, 1] = np.where(first, y, zp)
    else:
        x[:, 0] = np.where(first, zp, y)
        x[:, 1] = np.where(first, zm, zp)
    return x


def sample_correlated_block(
    spec: CorrelatedSpec, rng: np.random.Generator, size: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    u = rng.random(size)
    w = rng.integers(1, 3, size)
    y, zm, zp = correlated_latents(spec.a, spec.b, u)
    return assemble_correlated(spec.variant, w, y, zm, zp), w - 1, w


def sample_correlated_round(spec: CorrelatedSpec, rng: np.random.Generator) -> tuple[np.ndarray, int, int]:
    """One correlated round: (rewards, best arm index, coin in {1, 2})."""
    rewards, best, w = sample_correlated_block(spec, rng, 1)
    return rewards[0], int(best[0]), int(w[0])


def correlated_params(T: int, k: int) -> tuple[CorrelatedSpec, CorrelatedSpec]:
    """Hard pair for horizon T with k queries: a = min(1/8, 1/sqrt(T - k))."""
    if k < 0 or k >= T:
        raise ConfigError(f"need 0 <= k <= T - 1, got T={T}, k={k}", field="k")
    m = T - k
    a = min(0.125, 1.0 / math.sqrt(m))
    eta = a / (24.0 * (k + 1))
    return CorrelatedSpec(1, a, eta), CorrelatedSpec(2, a, eta)


# ---------------------------------------------------------------------------
# Near-one Bernoulli lower-bound family
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LBStochasticSpec:
    n: int
    T: int
    k: int
    j: int
    delta: float
    epsilon: float
    p: float
    case: int = 2


def _low_priority_half(n: int, tie_break: Sequence[int]) -> list[int]:
    return list(tie_break)[n - n // 2:]


def _lb_pair(n: int, p: float, delta: float, j: int):
    base = [1.0 - p + delta] + [1.0 - p] * (n - 1)
    alt = list(base)
    alt[j] = 1.0 - p + 2.0 * delta
    for q in (*base, *alt):
        if not 0.0 <= q <= 1.0:
            raise ConfigError(f"arm mean {q} outside [0, 1]; need 1 - p + 2 delta <= 1", field="p")
    return bernoulli_arms(base), bernoulli_arms(alt)


def _check_lb_common(n: int, T: int, k: int, j: int | None, tie_break: Sequence[int] | None):
    if n < 2:
        raise ConfigError(f"need n >= 2 arms, got {n}", field="n")
    if k < 1:
        raise ConfigError(f"need k >= 1, got {k}", field="k")
    if LB_C * k > T:
        raise ConfigError(f"need k <= T/{LB_C}, got T={T}, k={k}", field="k")
    order = list(range(n)) if tie_break is None else list(tie_break)
    if sorted(order) != list(range(n)):
        raise ConfigError("tie_break must be a permutation of the arm indices", field="tie_break")
    low = _low_priority_half(n, order)
    if j is None:
        j = order[-1]
    if j not in low or j == 0:
        raise ConfigError(
            f"arm j={j} must be one of the {n // 2} lowest-priority arms {low} and differ from arm 0",
            field="j",
        )
    return j


def build_lb_instances(
    n: int, T: int, k: int, j: int | None = None, tie_break: Sequence[int] | None = None
) -> tuple[list[ArmDistribution], list[ArmDistribution], LBStochasticSpec]:
    """Large-budget (k >= sqrt(nT)) pair of near-one Bernoulli instances.

    In the first instance arm 0 sits at 1 - p + delta and all others at 1 - p;
    the second lifts arm ``j`` to 1 - p + 2 delta.
    """
    j = _check_lb_common(n, T, k, j, tie_break)
    if k * k < n * T:
        raise ConfigError(f"need k >= sqrt(nT), got n={n}, T={T}, k={k}", field="k")
    delta = n / (1000.0 * k)
    epsilon = (T - k) * delta / (50.0 * k)
    p = 2.0 * delta + epsilon
    if p > 0.25:
        raise ConfigError(f"need p <= 1/4, got p={p}", field="p")
    nu1, nu2 = _lb_pair(n, p, delta, j)
    return nu1, nu2, LBStochasticSpec(n, T, k, j, delta, epsilon, p, case=2)


def build_lb_case1_instances(
    n: int,
    T: int,
    k: int,
    j: int | None = None,
    tie_break: Sequence[int] | None = None,
    delta: float | None = None,
    p: float = 0.125,
) -> tuple[list[ArmDistribution], list[ArmDistribution], LBStochasticSpec]:
    """Small-budget (k <= sqrt(nT)) variant with a fixed base level p.

    ``delta`` defaults to sqrt(n / (T - k)) / 4 and ``p`` to 1/8. Both are
    free choices; any small constant p and delta of order sqrt(n / (T - k))
    give the same construction.
    """
    j = _check_lb_common(n, T, k, j, tie_break)
    if k * k > n * T:
        raise ConfigError(f"need k <= sqrt(nT), got n={n}, T={T}, k={k}", field="k")
    if delta is None:
        delta = math.sqrt(n / (T - k)) / 4.0
    if not 0.0 < p < 1.0:
        raise ConfigError(f"need 0 < p < 1, got {p}", field="p")
    if delta <= 0.0:
        raise ConfigError(f"need delta > 0, got {delta}", field="delta")
    nu1, nu2 = _lb_pair(n, p, delta, j)
    return nu1, nu2, LBStochasticSpec(n, T, k, j, delta, p - 2.0 * delta, p, case=1)


# ---------------------------------------------------------------------------
# Declarative instance description
# ---------------------------------------------------------------------------

FAMILIES = ("iid", "correlated", "lb_stochastic")


@dataclass(frozen=True)
class InstanceSpec:
    """Serializable description of an environment.

    ``arms`` is populated for ``iid`` and ``lb_stochastic``; ``correlated``
    holds the two-arm correlated parameters; ``lb_params`` keeps the builder
    arguments so that the JSON form stays declarative.
    """

    family: str
    arms: tuple[ArmDistribution, ...] = ()
    correlated: CorrelatedSpec | None = None
    lb_params: dict | None = field(default=None, compare=True, hash=False)
    tie_break: tuple[int, ...] = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}", field="family")
        if self.family == "correlated" and self.correlated is None:
            raise ConfigError("correlated family requires parameters", field="params")
        if self.family != "correlated" and len(self.arms) == 0:
            raise ConfigError("instance has no arms", field="arms")
        n = self.n_arms
        if not self.tie_break:
            object.__setattr__(self, "tie_break", tuple(range(n)))
        if sorted(self.tie_break) != list(range(n)):
            raise ConfigError("tie_break must be a permutation of the arm indices", field="tie_break")

    # constructors -------------------------------------------------------

    @classmethod
    def iid(cls, arms: Sequence[ArmDistribution], tie_break: Sequence[int] = ()) -> "InstanceSpec":
        return cls("iid", tuple(arms), tie_break=tuple(tie_break))

    @classmethod
    def bernoulli(cls, means: Sequence[float], tie_break: Sequence[int] = ()) -> "InstanceSpec":
        return cls.iid(bernoulli_arms(means), tie_break)

    @classmethod
    def from_correlated(cls, spec: CorrelatedSpec) -> "InstanceSpec":
        return cls("correlated", correlated=spec)

    @classmethod
    def lb_stochastic(cls, n: int, T: int, k: int, j: int | None = None, variant: int = 1,
                      case: int = 2, tie_break: Sequence[int] = (), **extra) -> "InstanceSpec":
        if variant not in (1, 2):
            raise ConfigError(f"variant must be 1 or 2, got {variant}", field="variant")
        order = tuple(tie_break) or tuple(range(n))
        if case == 2:
            nu1, nu2, spec = build_lb_instances(n, T, k, j, order)
        elif case == 1:
            nu1, nu2, spec = build_lb_case1_instances(n, T, k, j, order, **extra)
        else:
            raise ConfigError(f"case must be 1 or 2, got {case}", field="case")
        params = {"n": n, "T": T, "k": k, "j": spec.j, "variant": variant, "case": case, **extra}
        arms = nu1 if variant == 1 else nu2
        return cls("lb_stochastic", tuple(arms), lb_params=params, tie_break=order)

    # properties ---------------------------------------------------------

    @property
    def n_arms(self) -> int:
        return 2 if self.family == "correlated" else len(self.arms)

    @property
    def is_iid(self) -> bool:
        return self.family != "correlated"

    @property
    def means(self) -> np.ndarray:
        if self.family == "correlated":
            return np.array(self.correlated.arm_means)
        return np.array([a.mean for a in self.arms])

    @property
    def variances(self) -> np.ndarray:
        if self.family == "correlated":
            raise AttributeError("per-arm variances are not tabulated for the correlated family")
        return np.array([a.variance for a in self.arms])

    @property
    def opt_static(self) -> float:
        return float(np.max(self.means))

    @property
    def opt_dynamic(self) -> float:
        if self.family == "correlated":
            return self.correlated.queried_mean
        return expected_max(self.arms)

    # sampling -----------------------------------------------------------

    def sample_block(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        """``size`` rounds of reward vectors and the oracle's best arms."""
        if self.family == "correlated":
            rewards, best, _ = sample_correlated_block(self.correlated, rng, size)
            return rewards, best
        return sample_iid_block(self.arms, rng, size, self.tie_break)

    # serialization ------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"family": self.family}
        if self.family == "iid":
            d["arms"] = [a.to_dict() for a in self.arms]
        elif self.family == "correlated":
            c = self.correlated
            d["params"] = {"variant": c.variant, "a": c.a, "eta": c.eta}
        else:
            d["params"] = dict(self.lb_params)
        d["tie_break"] = list(self.tie_break)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "InstanceSpec":
        if not isinstance(d, dict):
            raise ConfigError("instance must be a JSON object", field="instance")
        family = d.get("family")
        tie = tuple(d.get("tie_break", ()))
        try:
            if family == "iid":
                arms = [ArmDistribution.from_dict(a) for a in d["arms"]]
                return cls.iid(arms, tie)
            if family == "correlated":
                p = dict(d["params"])
                variant = p.pop("variant", 1)
                if "a" in p:
                    spec = CorrelatedSpec(variant, p["a"], p["eta"])
                else:
                    spec = correlated_params(p["T"], p["k"])[0].with_variant(variant)
                if tie and tie != (0, 1):
                    raise ConfigError("the correlated family has a unique best arm; tie_break is fixed", field="tie_break")
                return cls.from_correlated(spec)
            if family == "lb_stochastic":
                p = dict(d["params"])
                return cls.lb_stochastic(tie_break=tie, **p)
        except KeyError as exc:
            raise ConfigError(f"missing field {exc.args[0]!r}", field=str(exc.args[0])) from None
        except (InputError, TypeError) as exc:
            raise ConfigError(str(exc), field="instance") from None
        raise ConfigError(f"unknown family {family!r}", field="family")

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "InstanceSpec":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}", field="instance") from None
