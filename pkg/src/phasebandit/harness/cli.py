"""Command line entry point: ``phasebandit {simulate,sweep,moments,check,plot}``.

Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 failed check.
"""

from __future__ import annotations

import argparse
import logging
import sys
import typing
from dataclasses import fields

from .. import analysis
from .checks import CHECKS, run_checks
from .config import ConfigError, ExperimentConfig
from .output import CsvParseError, emit_csv, emit_plot
from .runner import sweep_and_fit, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3

logger = logging.getLogger("phasebandit")


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _optional_float(text: str) -> float | None:
    return None if text.lower() == "none" else float(text)


_FLAG_TYPES = {
    "d_grid": _int_list,
    "n_grid": _int_list,
    "seeds": int,
    "base_seed": int,
    "r": float,
    "noise_sigma": float,
    "constant_scale": float,
    "alpha": float,
    "etc_scale": _optional_float,
    "mix_weight": _optional_float,
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags below override its values")
    for f in fields(ExperimentConfig):
        p.add_argument(
            "--" + f.name.replace("_", "-"),
            dest=f.name,
            type=_FLAG_TYPES.get(f.name, str),
            default=None,
            help=f"override {f.name}",
        )
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: PHASE_BANDIT_WORKERS or CPU count)")


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    base = ExperimentConfig.load(args.config).to_dict() if args.config else {}
    for f in fields(ExperimentConfig):
        value = getattr(args, f.name)
        if value is not None:
            base[f.name] = value
    return ExperimentConfig.from_dict(base)


def _print_summary(summary) -> None:
    for c in summary.cells:
        se = f" ± {c.se_cum_regret:.4g}" if c.se_cum_regret is not None else ""
        print(
            f"{c.policy:>16} d={c.d:<4d} n={c.n:<8d} r={c.r:.4g}  cum={c.mean_cum_regret:.6g}{se}  "
            f"simple={c.mean_simple_regret:.4g}"
        )


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    summary = run_experiment(cfg, args.workers)
    emit_csv(summary, cfg.output_path)
    _print_summary(summary)
    print(f"wrote {cfg.output_path}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    try:
        fit, summary = sweep_and_fit(cfg, args.axis, args.metric, args.workers)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    emit_csv(summary, cfg.output_path)
    _print_summary(summary)
    print(f"slope={fit.slope:.4f} intercept={fit.intercept:.4f} residual_rms={fit.residual_rms:.4f}")
    print(f"wrote {cfg.output_path}")
    return EXIT_OK


def cmd_moments(args: argparse.Namespace) -> int:
    print("d,r,moment2,moment4,variance,info_gain,info_bound,ratio_over_d2")
    for d in args.d:
        for r in args.r:
            ratio = analysis.information_ratio(d, r) / d**2 if d >= 2 and r > 0 else float("nan")
            print(
                f"{d},{r!r},{analysis.sphere_moment2(d, r)!r},{analysis.sphere_moment4(d, r)!r},"
                f"{analysis.reward_variance(d, r, args.sigma)!r},{analysis.information_gain_approx(d, r)!r},"
                f"{analysis.information_gain_bound(d, r)!r},{ratio!r}"
            )
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    try:
        results = run_checks(args.only, args.seed)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None
    for res in results:
        print(f"{'PASS' if res.passed else 'FAIL'} {res.name}: {res.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


def cmd_plot(args: argparse.Namespace) -> int:
    emit_plot(args.csv, args.x_axis, args.out, args.log_log, args.metric)
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phasebandit", description="Bandit phase retrieval experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one experiment config and write its CSV")
    _add_config_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run a sweep and fit the log-log scaling exponent")
    _add_config_flags(p)
    p.add_argument("--axis", choices=("n", "d"), required=True)
    p.add_argument("--metric", choices=("cum_regret", "simple_regret"), default="cum_regret")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("moments", help="print closed-form moment and information tables")
    p.add_argument("--d", type=_int_list, default=[1, 2, 5, 20])
    p.add_argument("--r", type=_float_list, default=[0.5, 1.0])
    p.add_argument("--sigma", type=float, default=1.0)
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("check", help="run the fast invariant checks")
    p.add_argument("--only", nargs="*", choices=sorted(CHECKS), default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("plot", help="render an SVG from a results CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--x-axis", choices=("n", "d"), default="n")
    p.add_argument("--metric", choices=("cum_regret", "simple_regret"), default="cum_regret")
    p.add_argument("--log-log", action="store_true")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: typing.Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad usage; report it as a config error
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CsvParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - anything else is a runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
