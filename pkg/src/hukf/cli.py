"""Command line entry point: ``hukf simulate | filter | experiment``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .csvio import read_trajectory, write_bands, write_summary, write_trace, write_trajectory
from .errors import InvalidInput, NumericalFailure
from .experiment import ExperimentConfig, run_experiment, simulate_replication
from .filters import HUKF, UKF, filter_sequence

log = logging.getLogger("hukf")


def _variants(arg: str | None, cfg: ExperimentConfig) -> tuple[str, ...]:
    if arg is None:
        return cfg.variants
    return (UKF, HUKF) if arg == "both" else (arg,)


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_toml(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    if getattr(args, "variant", None) is not None:
        overrides["variants"] = _variants(args.variant, cfg)
    return replace(cfg, **overrides) if overrides else cfg


def _suffixed(path: str, variant: str, many: bool) -> Path:
    p = Path(path)
    return p.with_name(f"{p.stem}_{variant}{p.suffix}") if many else p


def cmd_simulate(args) -> int:
    cfg = _load(args)
    truth, traj = simulate_replication(cfg, args.replication, args.length)
    log.info("true parameters: %s", np.array2string(truth, precision=6))
    write_trajectory(traj, cfg.out)
    print(f"wrote {len(traj)} rows to {cfg.out}")
    return 0


def cmd_filter(args) -> int:
    cfg = _load(args)
    traj = read_trajectory(args.input)
    model, belief = cfg.augmented()
    names = [f"y{i + 1}" for i in range(model.state_dim)] + list(model.augmented_names)
    many = len(cfg.variants) > 1
    for variant in cfg.variants:
        result = filter_sequence(model, belief, traj.observation_pairs(),
                                 cfg.filter_config(variant))
        out = _suffixed(cfg.out, variant, many)
        write_trace(result.steps, out)
        if args.bands:
            write_bands(result.steps, _suffixed(args.bands, variant, many), names)
        post = result.posterior
        print(f"{variant}: log-likelihood {result.log_likelihood:.6f}, "
              f"repairs {result.repairs}, trace -> {out}")
        for j, name in enumerate(names):
            print(f"  {name:>6s} {post.mean[j]: .6f}  var {post.var[j]:.6g}")
    return 0


def cmd_experiment(args) -> int:
    cfg = _load(args)
    if args.N is not None:
        cfg = replace(cfg, N=args.N)
    if args.T:
        cfg = replace(cfg, T=tuple(args.T))
    summaries = run_experiment(cfg, threads=args.threads)
    write_summary(summaries.values(), cfg.out)
    hdr = f"{'variant':7s} {'T':>5s} {'param':6s} {'m(nu)':>10s} {'m(nu^2)':>10s} " \
          f"{'m(var)':>10s} {'m.95':>6s} {'excl':>4s}"
    print(hdr)
    for s in summaries.values():
        for row in s.rows():
            print(f"{row['variant']:7s} {row['T']:5d} {row['param']:6s} "
                  f"{row['mean_error']:10.5f} {row['mse']:10.5f} {row['mean_est_var']:10.5f} "
                  f"{row['exceed_095']:6.3f} {row['excluded_count']:4d}")
    print(f"summary -> {cfg.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hukf", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, variant=True):
        p.add_argument("--config", help="TOML experiment config")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--out", help="output CSV path (overrides config)")
        if variant:
            p.add_argument("--variant", choices=("ukf", "hukf", "both"))

    p = sub.add_parser("simulate", help="draw parameters and write a trajectory CSV")
    common(p, variant=False)
    p.add_argument("--replication", type=int, default=0, help="random stream index")
    p.add_argument("--length", type=int, help="number of steps (default: largest T)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("filter", help="filter a trajectory CSV and write a trace CSV")
    common(p)
    p.add_argument("--input", required=True, help="trajectory CSV (time, y..., z...)")
    p.add_argument("--bands", help="also write mean +- sqrt(3) sd bands to this CSV")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("experiment", help="run the Monte Carlo study, write a summary CSV")
    common(p)
    p.add_argument("--threads", type=int, default=1, help="worker processes")
    p.add_argument("--N", type=int, help="replications (overrides config)")
    p.add_argument("--T", type=int, nargs="+", help="horizons (overrides config)")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InvalidInput, NumericalFailure, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
