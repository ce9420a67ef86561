"""Replicate batches, k-sweeps, CSV tables and SVG charts."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

from .analysis import summary_from_values
from .core import simulate_run
from .envs import InstanceSpec
from .errors import ConfigError
from .policies import PolicySpec

CSV_HEADER = (
    "policy", "k", "mean_pseudo_regret", "std_err", "ci95_lo", "ci95_hi",
    "mean_realized_regret", "queries_used_mean",
)
THREADS_ENV = "QBL_THREADS"


@dataclass
class ExperimentConfig:
    instance: InstanceSpec
    policies: list[PolicySpec]
    T: int
    k_grid: list[int]
    replicates: int = 1
    root_seed: int = 0
    parallelism: int = 1
    output_dir: Path = Path("results")

    def __post_init__(self):
        if not isinstance(self.T, int) or self.T < 1:
            raise ConfigError(f"T must be a positive integer, got {self.T!r}", field="T")
        if not self.k_grid:
            raise ConfigError("k_grid must not be empty", field="k_grid")
        for k in self.k_grid:
            if not isinstance(k, int) or not 0 <= k <= self.T:
                raise ConfigError(f"every k must satisfy 0 <= k <= T={self.T}, got {k!r}", field="k_grid")
        if not self.policies:
            raise ConfigError("at least one policy is required", field="policies")
        if not isinstance(self.replicates, int) or self.replicates < 1:
            raise ConfigError(f"replicates must be >= 1, got {self.replicates!r}", field="replicates")
        if not isinstance(self.parallelism, int) or self.parallelism < 1:
            raise ConfigError(f"parallelism must be >= 1, got {self.parallelism!r}", field="parallelism")
        if not isinstance(self.root_seed, int) or self.root_seed < 0:
            raise ConfigError(f"root_seed must be a nonnegative integer, got {self.root_seed!r}",
                              field="root_seed")
        self.output_dir = Path(self.output_dir)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object", field="config")
        known = {"instance", "policies", "T", "k_grid", "replicates", "root_seed",
                 "parallelism", "output_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}", field=sorted(unknown)[0])
        for req in ("instance", "policies", "T", "k_grid"):
            if req not in d:
                raise ConfigError(f"missing field {req!r}", field=req)
        try:
            policies = [PolicySpec.from_dict(p) for p in d["policies"]]
        except TypeError as exc:
            raise ConfigError(str(exc), field="policies") from None
        return cls(
            instance=InstanceSpec.from_dict(d["instance"]),
            policies=policies,
            T=d["T"],
            k_grid=list(d["k_grid"]),
            replicates=d.get("replicates", 1),
            root_seed=d.get("root_seed", 0),
            parallelism=d.get("parallelism", 1),
            output_dir=Path(d.get("output_dir", "results")),
        )

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExperimentConfig":
        text = Path(path).read_text()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}", field="config") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "instance": self.instance.to_dict(),
            "policies": [p.to_dict() for p in self.policies],
            "T": self.T,
            "k_grid": list(self.k_grid),
            "replicates": self.replicates,
            "root_seed": self.root_seed,
            "parallelism": self.parallelism,
            "output_dir": str(self.output_dir),
        }

    def effective_parallelism(self) -> int:
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                value = int(env)
            except ValueError:
                raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {env!r}",
                                  field=THREADS_ENV) from None
            if value < 1:
                raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {env!r}",
                                  field=THREADS_ENV)
            return value
        return self.parallelism


@dataclass
class SweepRow:
    policy: str
    k: int
    mean_pseudo_regret: float
    std_err: float
    ci95_lo: float
    ci95_hi: float
    mean_realized_regret: float
    queries_used_mean: float
    replicates: list[float] = field(default_factory=list, repr=False)

    def as_csv(self) -> list[str]:
        return [self.policy, str(self.k), *(repr(float(getattr(self, c))) for c in CSV_HEADER[2:])]


def _one_replicate(args) -> tuple[float, float, int]:
    instance, policy, T, k, seed = args
    run = simulate_run(instance, policy, T, k, seed)
    return run.pseudo_regret, run.realized_regret, run.queries_used


def run_experiment(config: ExperimentConfig, parallelism: int | None = None) -> list[SweepRow]:
    """One row per (policy, k); replicate r always uses seed root_seed + r."""
    jobs = [
        (config.instance, policy, config.T, k, config.root_seed + r)
        for policy in config.policies
        for k in config.k_grid
        for r in range(config.replicates)
    ]
    workers = parallelism or config.effective_parallelism()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_replicate, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_one_replicate(j) for j in jobs]

    rows = []
    it = iter(results)
    for policy in config.policies:
        for k in config.k_grid:
            chunk = [next(it) for _ in range(config.replicates)]
            pseudo = [c[0] for c in chunk]
            s = summary_from_values(policy, config.T, k, pseudo, [c[1] for c in chunk], [c[2] for c in chunk])
            rows.append(SweepRow(policy.name, k, s.mean_pseudo_regret, s.std_err, s.ci95[0], s.ci95[1],
                                 s.mean_realized_regret, s.queries_used_mean, pseudo))
    return rows


def atomic_write_text(path: Path, text: str) -> None:
    """Write via a temp file in the same directory and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def rows_to_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.as_csv())
    return buf.getvalue()


def write_csv(rows: Sequence[SweepRow], path: Path) -> None:
    atomic_write_text(path, rows_to_csv(rows))


# ---------------------------------------------------------------------------
# Rate envelope and chart
# ---------------------------------------------------------------------------


def envelope(n: int, T: int, k: float) -> float:
    """min{n T ln T / k, sqrt(n T ln T)} (the second branch when k = 0)."""
    lt = math.log(T)
    root = math.sqrt(n * T * lt)
    if k <= 0:
        return root
    return min(n * T * lt / k, root)


def fit_envelope(n: int, T: int, ks: Sequence[int], values: Sequence[float]) -> float:
    """Least-squares constant c for values ~ c * envelope(k)."""
    f = [envelope(n, T, k) for k in ks]
    denom = math.fsum(x * x for x in f)
    return math.fsum(x * y for x, y in zip(f, values)) / denom if denom else 0.0


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def sweep_svg(rows: Sequence[SweepRow], n: int, T: int, ref_policy: str = "query_then_ucbv",
              width: int = 720, height: int = 440) -> tuple[str, float | None]:
    """Line chart of mean pseudo-regret against k, one polyline per policy.

    CI bands are drawn as translucent polygons. A dashed reference curve
    c * envelope(k) is added when ``ref_policy`` is present; its fitted c
    is returned alongside the SVG text.
    """
    policies: dict[str, list[SweepRow]] = {}
    for r in rows:
        policies.setdefault(r.policy, []).append(r)
    for series in policies.values():
        series.sort(key=lambda r: r.k)

    c = None
    ref_pts: list[tuple[float, float]] = []
    if ref_policy in policies:
        ref = policies[ref_policy]
        c = fit_envelope(n, T, [r.k for r in ref], [r.mean_pseudo_regret for r in ref])
        ks = sorted({r.k for r in ref})
        dense = sorted(set(ks) | {ks[0] + (ks[-1] - ks[0]) * i / 64 for i in range(65)})
        ref_pts = [(k, c * envelope(n, T, k)) for k in dense]

    xs = [r.k for r in rows] + [p[0] for p in ref_pts]
    ys = [v for r in rows for v in (r.ci95_lo, r.ci95_hi, r.mean_pseudo_regret)] + [p[1] for p in ref_pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys + [0.0]), max(ys + [0.0])
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    ml, mr, mt, mb = 70, 170, 30, 50
    pw, ph = width - ml - mr, height - mt - mb

    def sx(x: float) -> float:
        return ml + (x - x0) / (x1 - x0) * pw

    def sy(y: float) -> float:
        return mt + (y1 - y) / (y1 - y0) * ph

    def pts(seq) -> str:
        return " ".join(f"{sx(x):.3f},{sy(y):.3f}" for x, y in seq)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" style="fill:#ffffff"/>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" style="fill:none;stroke:#333333;stroke-width:1"/>',
    ]
    if y0 < 0 < y1:
        out.append(f'<line x1="{ml}" y1="{sy(0):.3f}" x2="{ml + pw}" y2="{sy(0):.3f}" '
                   'style="stroke:#999999;stroke-width:1;stroke-dasharray:2,3"/>')
    font = "font-family:sans-serif;font-size:11px;fill:#333333"
    for i in range(5):
        xv = x0 + (x1 - x0) * i / 4
        yv = y0 + (y1 - y0) * i / 4
        out.append(f'<text x="{sx(xv):.1f}" y="{mt + ph + 16}" style="{font};text-anchor:middle">{xv:.4g}</text>')
        out.append(f'<text x="{ml - 6}" y="{sy(yv) + 4:.1f}" style="{font};text-anchor:end">{yv:.4g}</text>')
    out.append(f'<text x="{ml + pw / 2}" y="{height - 10}" style="{font};text-anchor:middle">queries k</text>')
    out.append(f'<text x="16" y="{mt + ph / 2}" style="{font};text-anchor:middle" '
               f'transform="rotate(-90 16 {mt + ph / 2})">mean pseudo-regret</text>')

    for i, (name, series) in enumerate(policies.items()):
        color = _PALETTE[i % len(_PALETTE)]
        band = [(r.k, r.ci95_hi) for r in series] + [(r.k, r.ci95_lo) for r in reversed(series)]
        out.append(f'<polygon class="ci" data-policy="{escape(name)}" points="{pts(band)}" '
                   f'style="fill:{color};fill-opacity:0.18;stroke:none"/>')
        out.append(f'<polyline class="mean" data-policy="{escape(name)}" '
                   f'points="{pts([(r.k, r.mean_pseudo_regret) for r in series])}" '
                   f'style="fill:none;stroke:{color};stroke-width:2"/>')
        ly = mt + 14 + 18 * i
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly}" x2="{ml + pw + 30}" y2="{ly}" '
                   f'style="stroke:{color};stroke-width:2"/>')
        out.append(f'<text x="{ml + pw + 34}" y="{ly + 4}" style="{font}">{escape(name)}</text>')
    if ref_pts:
        out.append(f'<polyline class="reference" points="{pts(ref_pts)}" '
                   'style="fill:none;stroke:#000000;stroke-width:1.2;stroke-dasharray:6,4"/>')
        ly = mt + 14 + 18 * len(policies)
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly}" x2="{ml + pw + 30}" y2="{ly}" '
                   'style="stroke:#000000;stroke-width:1.2;stroke-dasharray:6,4"/>')
        out.append(f'<text x="{ml + pw + 34}" y="{ly + 4}" style="{font}">c={c:.4g} envelope</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n", c
