"""Command line interface.

Exit codes: 0 success, 1 validation or usage error, 2 numerical error
(singular design).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import scenarios
from .correctives import aggregate_strata, estimate_aggregated
from .datagen import load_population_csv, write_population_csv
from .errors import ConfigError, FraglabError, SingularDesignError
from .estimators import estimate_fragmented, estimate_true
from .fragmentation import FORMS, load_fragments_csv, write_fragments_csv
from .reports import FORMATS, ReportBundle, write_bundle
from .rng import check_seed

log = logging.getLogger("fraglab")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    """Argument parser that reports usage errors as exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _seed(text: str) -> int:
    try:
        return check_seed(int(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}; expected an unsigned 64-bit integer") from None


def _common(p: argparse.ArgumentParser, config_required: bool = False) -> None:
    p.add_argument("--config", type=Path, required=config_required, help="JSON scenario or data-generating config")
    p.add_argument("--seed", type=_seed, help="master seed (overrides the config)")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
    p.add_argument("--format", choices=FORMATS, help="write only this table format (default: both)")
    p.add_argument("--no-plots", action="store_true", help="skip figure rendering")


def build_parser() -> Parser:
    parser = Parser(prog="fraglab", description="Identity-fragmentation bias: simulate, estimate, decompose, correct.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("simulate", help="generate a population CSV")
    _common(p, config_required=True)

    p = sub.add_parser("fragment", help="generate and fragment a population")
    _common(p, config_required=True)
    p.add_argument("--no-oracle", action="store_true", help="omit the true_user_id column")

    p = sub.add_parser("estimate", help="true and fragmented OLS")
    _common(p)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--population", type=Path, help="user-level CSV: fit the true-data model")
    src.add_argument("--fragments", type=Path, help="fragment CSV: fit the naive model")
    p.add_argument("--form", choices=FORMS, default="common-stacked", help="model form for --fragments")

    p = sub.add_parser("bias", help="closed-form bias decomposition")
    _common(p, config_required=True)

    p = sub.add_parser("montecarlo", help="fixed-exposure Monte Carlo check of the closed form")
    _common(p, config_required=True)
    p.add_argument("--reps", type=int, help="replications (overrides mc_reps)")

    p = sub.add_parser("aggregate", help="stratified aggregation estimator")
    _common(p)
    p.add_argument("--fragments", type=Path, help="fragment CSV with s_* strata columns")
    p.add_argument("--vars", help="comma-separated strata variables (default: all)")

    p = sub.add_parser("debias", help="rescale the fragmented estimate by J under the symmetric treatment condition")
    _common(p, config_required=True)
    p.add_argument("--force", action="store_true", help="debias even if the condition check fails")

    p = sub.add_parser("diagnose", help="symmetric treatment check and device correlation matrices")
    _common(p, config_required=True)

    p = sub.add_parser("sweep-mixed", help="mixed-estimator bias across fragmented fractions")
    _common(p, config_required=True)

    p = sub.add_parser("scenario", help="run a built-in or configured scenario")
    p.add_argument("name", nargs="?", help=f"built-in: {', '.join(scenarios.BUILTINS)}")
    _common(p)
    p.add_argument("--reps", type=int, help="replications (overrides the default)")
    p.add_argument("--list", action="store_true", help="list built-in scenarios")
    return parser


def _config(args) -> scenarios.ScenarioConfig:
    cfg = scenarios.ScenarioConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    reps = getattr(args, "reps", None)
    if reps is not None:
        if reps < 1:
            raise ConfigError("--reps must be at least 1", field="mc_reps")
        cfg.mc_reps = reps
    return cfg


def _emit(bundle: ReportBundle, args) -> None:
    formats = [args.format] if args.format else list(FORMATS)
    paths = write_bundle(bundle, args.out, formats)
    if not args.no_plots:
        from .plotting import render_bundle

        paths += render_bundle(bundle, args.out)
    for path in paths:
        print(path)
    for name, ok in bundle.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")


def cmd_simulate(args) -> None:
    ex = scenarios.build(_config(args))
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"{ex.cfg.name}_population.csv"
    write_population_csv(ex.pop, path)
    print(path)


def cmd_fragment(args) -> None:
    ex = scenarios.build(_config(args))
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"{ex.cfg.name}_fragments.csv"
    write_fragments_csv(ex.f, path, include_oracle=not args.no_oracle)
    print(path)


def cmd_estimate(args) -> None:
    if args.population or args.fragments:
        src = args.population or args.fragments
        bundle = ReportBundle(src.stem)
        if args.population:
            rep = estimate_true(load_population_csv(src))
            bundle.add("estimates", scenarios.estimate_rows("true", rep))
        else:
            rep = estimate_fragmented(load_fragments_csv(src), args.form)
            bundle.add("estimates", scenarios.estimate_rows("fragmented", rep))
    elif args.config:
        ex = scenarios.build(_config(args))
        bundle = ReportBundle(ex.cfg.name)
        scenarios.add_estimates(bundle, ex)
    else:
        raise ConfigError("give --config, --population or --fragments", field="input")
    _emit(bundle, args)


def cmd_bias(args) -> None:
    ex = scenarios.build(_config(args))
    bundle = ReportBundle(ex.cfg.name)
    scenarios.add_bias(bundle, ex)
    _emit(bundle, args)


def cmd_montecarlo(args) -> None:
    cfg = _config(args)
    M = cfg.mc_reps or 1000
    if M < 2:
        raise ConfigError("Monte Carlo needs at least 2 replications", field="mc_reps")
    ex = scenarios.build(cfg)
    bundle = ReportBundle(cfg.name)
    scenarios.add_montecarlo(bundle, ex, M)
    _emit(bundle, args)


def cmd_aggregate(args) -> None:
    if args.fragments:
        f = load_fragments_csv(args.fragments)
        variables = args.vars.split(",") if args.vars else sorted(f.strata)
        if not variables:
            raise ConfigError("fragment file has no s_* strata columns", field="strata")
        agg = aggregate_strata(f, variables)
        bundle = ReportBundle(args.fragments.stem)
        bundle.add("aggregate", scenarios.estimate_rows("aggregated", estimate_aggregated(agg)),
                   variables=variables, n_bins=agg.n_bins)
        bundle.add("bins", agg.rows())
    elif args.config:
        cfg = _config(args)
        if args.vars:
            cfg.aggregate_vars = args.vars.split(",")
        ex = scenarios.build(cfg)
        bundle = ReportBundle(cfg.name)
        scenarios.add_aggregate(bundle, ex)
    else:
        raise ConfigError("give --config or --fragments", field="input")
    _emit(bundle, args)


def cmd_debias(args) -> None:
    ex = scenarios.build(_config(args))
    bundle = ReportBundle(ex.cfg.name)
    scenarios.add_debias(bundle, ex, force=args.force)
    _emit(bundle, args)


def cmd_diagnose(args) -> None:
    ex = scenarios.build(_config(args))
    bundle = ReportBundle(ex.cfg.name)
    scenarios.add_diagnose(bundle, ex)
    _emit(bundle, args)


def cmd_sweep(args) -> None:
    ex = scenarios.build(_config(args))
    bundle = ReportBundle(ex.cfg.name)
    scenarios.add_sweep(bundle, ex)
    _emit(bundle, args)


def cmd_scenario(args) -> None:
    if args.list:
        for name in scenarios.BUILTINS:
            print(name)
        return
    if args.config:
        cfg = _config(args)
        if args.name and args.name != cfg.name:
            cfg.name = args.name
    elif args.name:
        if args.reps is not None and args.reps < 1:
            raise ConfigError("--reps must be at least 1", field="mc_reps")
        cfg = scenarios.ScenarioConfig(args.name, seed=args.seed, mc_reps=args.reps)
    else:
        raise ConfigError("give a scenario name or --config", field="scenario")
    _emit(scenarios.run_scenario(cfg), args)


COMMANDS = {
    "simulate": cmd_simulate,
    "fragment": cmd_fragment,
    "estimate": cmd_estimate,
    "bias": cmd_bias,
    "montecarlo": cmd_montecarlo,
    "aggregate": cmd_aggregate,
    "debias": cmd_debias,
    "diagnose": cmd_diagnose,
    "sweep-mixed": cmd_sweep,
    "scenario": cmd_scenario,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_VALIDATION
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except SingularDesignError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FraglabError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
