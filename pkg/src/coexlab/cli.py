"""Command line for the coexistence lab.

Subcommands: fixed-point (analytical operating point), simulate (one
observation window), train (one scheme), sweep (full grid plus report
bundle), stabilize (settling episode of a recorded reward trace).

Exit codes: 0 success, 2 validation error, 3 run failure, 4 ordering
check failure (sweep --check).
"""

import argparse
import csv
import sys
from dataclasses import asdict, fields
from pathlib import Path

from .access import solve_coexistence_fixed_point
from .errors import (
    ConfigError,
    FixedPointError,
    InsufficientDataError,
    TrainingDivergedError,
    UndefinedFairnessError,
)
from .harness import (
    ORDER_FAIRNESS,
    detect_stabilization,
    emit_report,
    load_config,
    ordering_checks,
    run_one,
    run_suite,
)
from .simulate import SimConfig, run_window


def _u64(text):
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _load(args):
    overrides = {}
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    return load_config(args.config, overrides=overrides)


def _print_row(record):
    writer = csv.writer(sys.stdout)
    writer.writerow(list(record))
    writer.writerow([record[k] for k in record])


def _cmd_fixed_point(args):
    cfg = _load(args)
    cls = cfg.classes[cfg.priority_class]
    op = solve_coexistence_fixed_point(cfg.n_pairs, cfg.n_pairs, cls.wifi, cls.nru)
    _print_row({f.name: getattr(op, f.name) for f in fields(op)})
    return 0


def _cmd_simulate(args):
    cfg = _load(args)
    cls = cfg.classes[cfg.priority_class]
    sim = SimConfig(
        wifi=cls.wifi,
        nru=cls.nru,
        n_wifi=cfg.n_pairs,
        n_nru=cfg.n_pairs,
        window_slots=cfg.sim.window_slots,
        rng_seed=cfg.base_seed,
    )
    metrics = run_window(sim, t_nr_override=cfg.txop.t_nr_us)
    _print_row(asdict(metrics))
    return 0


def _cmd_train(args):
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = run_one(cfg, cfg.scheme, cfg.priority_class, cfg.n_pairs, trial=1)
    path = out / f"training_{cfg.scheme}_p{cfg.priority_class}_n{cfg.n_pairs}.csv"
    res.log.write_csv(path)
    stab = "none" if res.stabilization_episode is None else res.stabilization_episode
    print(
        f"scheme={cfg.scheme} priority={cfg.priority_class} n_pairs={cfg.n_pairs} "
        f"seed={res.run_seed} agg_throughput_mbps={res.agg_throughput_mbps:.4f} "
        f"jain={res.jain:.4f} mean_utility={res.mean_utility:.4f} "
        f"stabilization={stab}"
    )
    print(f"wrote {path}")
    return 0


def _cmd_sweep(args):
    cfg = _load(args)
    if args.check:
        missing = sorted(set(ORDER_FAIRNESS) - set(cfg.sweep_schemes))
        if missing:
            raise ConfigError(
                [f"sweep --check needs schemes {missing} in the sweep grid"]
            )
    bundle = run_suite(cfg, parallel=args.parallel, verbose=True)
    for path in emit_report(bundle, args.out, plots=args.plots):
        print(f"wrote {path}")
    if bundle.failures():
        for r in bundle.failures():
            print(
                f"run failed: {r.scheme} p{r.priority} n{r.n_pairs} t{r.trial}: "
                f"{r.error}",
                file=sys.stderr,
            )
        return 3
    if args.check:
        checks = ordering_checks(bundle)
        for chk in checks:
            print(chk.summary_line())
        if not checks or not all(chk.passed for chk in checks):
            return 4
    return 0


def _read_reward_series(path):
    """Reward column of a training CSV: `mean_reward` or the only column."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise ConfigError([f"{path!r} is empty"])
    col = 0
    start = 0
    if "mean_reward" in rows[0]:
        col = rows[0].index("mean_reward")
        start = 1
    elif len(rows[0]) > 1:
        raise ConfigError(
            [f"{path!r} has {len(rows[0])} columns and no mean_reward header"]
        )
    try:
        return [float(row[col]) for row in rows[start:]]
    except (IndexError, ValueError) as exc:
        raise ConfigError([f"{path!r}: bad reward value: {exc}"])


def _cmd_stabilize(args):
    cfg = _load(args)
    rewards = _read_reward_series(args.rewards_csv)
    t_star = detect_stabilization(rewards, cfg.stabilization)
    print(f"t_star={'none' if t_star is None else t_star}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="coexlab",
        description="Spectrum-coexistence laboratory: channel-access models, "
        "slotted simulation, and TXOP-control training runs.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, help_text, handler):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", metavar="PATH",
                       help="JSON config merged over the built-in defaults")
        p.add_argument("--seed", type=_u64, metavar="U64",
                       help="override base_seed")
        p.add_argument("--out", default="out", metavar="DIR",
                       help="output directory (default: out)")
        p.add_argument("--trials", type=int, metavar="N",
                       help="override independent trials per grid cell")
        p.add_argument("--parallel", type=int, default=1, metavar="N",
                       help="worker processes for sweep runs (default: 1)")
        p.set_defaults(handler=handler)
        return p

    add("fixed-point", "print the coupled analytical operating point as CSV",
        _cmd_fixed_point)
    add("simulate", "run one observation window and print its metrics as CSV",
        _cmd_simulate)
    add("train", "train the configured scheme and write its training-log CSV",
        _cmd_train)
    p = add("sweep", "run the scheme/priority/pairs grid and write the report "
            "bundle", _cmd_sweep)
    p.add_argument("--check", action="store_true",
                   help="exit 4 unless the scheme orderings hold with margin")
    p.add_argument("--plots", action="store_true",
                   help="render SVG charts too (needs matplotlib)")
    p = add("stabilize", "read a reward CSV and print the stabilization episode",
            _cmd_stabilize)
    p.add_argument("rewards_csv",
                   help="CSV with a mean_reward column (or a single column)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        for violation in exc.violations:
            print(f"config error: {violation}", file=sys.stderr)
        return 2
    except InsufficientDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TrainingDivergedError, FixedPointError, UndefinedFairnessError,
            OSError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
