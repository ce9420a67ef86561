"""Command-line entry point: ``qbl run|sweep|verify|analyze``.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import verify as verify_mod
from .analysis import analyze
from .envs import InstanceSpec
from .errors import ConfigError
from .experiment import ExperimentConfig, atomic_write_text, run_experiment, sweep_svg, write_csv

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("qbl")


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    if args.output_dir is not None:
        cfg.output_dir = Path(args.output_dir)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("seed must be nonnegative", field="root_seed")
        cfg.root_seed = args.seed
    return cfg


def _run(cfg: ExperimentConfig):
    rows = run_experiment(cfg)
    path = cfg.output_dir / "results.csv"
    write_csv(rows, path)
    print(f"wrote {path} ({len(rows)} rows)")
    return rows


def cmd_run(args) -> int:
    _run(_load_config(args))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    if len(set(cfg.k_grid)) < 2:
        raise ConfigError("a sweep needs at least two distinct k values", field="k_grid")
    rows = _run(cfg)
    svg, c = sweep_svg(rows, cfg.instance.n_arms, cfg.T)
    path = cfg.output_dir / "sweep.svg"
    atomic_write_text(path, svg)
    print(f"wrote {path}")
    if c is not None:
        print(f"envelope fit: c = {c:.6g} (least squares on query_then_ucbv)")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = verify_mod.run_all(args.level, echo=print)
    failed = [c.name for c in results if not c.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        print("failures: " + ", ".join(failed))
        return EXIT_VERIFY
    return EXIT_OK


def cmd_analyze(args) -> int:
    try:
        text = Path(args.instance).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read instance: {exc}", field="instance") from None
    data = json.loads(text) if text.strip() else None
    if isinstance(data, dict) and "instance" in data and "family" not in data:
        data = data["instance"]  # accept a full experiment config too
    instance = InstanceSpec.from_dict(data)
    report = analyze(instance, mc_samples=args.mc_samples, seed=args.seed or 0)
    out = report.to_json()
    print(out)
    if args.output_dir is not None:
        path = Path(args.output_dir) / "analysis.json"
        atomic_write_text(path, out + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qbl", description="Bandits with best-action queries.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--output-dir", default=None, help="override the config's output_dir")
        p.add_argument("--seed", type=int, default=None, help="override the root seed")

    p = sub.add_parser("run", help="run replicate batches for every (policy, k)")
    p.add_argument("config")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run, then chart regret against k")
    p.add_argument("config")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run the named verification checks")
    p.add_argument("--level", choices=verify_mod.LEVELS, default="quick")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("analyze", help="OPT_s, OPT_d and the variance-gap bound for an instance")
    p.add_argument("instance")
    p.add_argument("--mc-samples", type=int, default=0,
                   help="estimate OPT_d by Monte Carlo instead of the closed form")
    common(p)
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        where = f" [{exc.field}]" if exc.field else ""
        print(f"configuration error{where}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except json.JSONDecodeError as exc:
        print(f"configuration error [json]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"configuration error [path]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
