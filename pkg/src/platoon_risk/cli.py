"""Command-line front end.

Exit codes: 0 success, 1 simulation comparison failed, 2 unstable
configuration, 3 parse error or invalid parameter, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    DegenerateCorrelationError,
    InsufficientSamplesError,
    InvalidParameterError,
    NumericalFailureError,
    ScenarioParseError,
    StabilityDomainError,
)
from .graph import graph_eigenstructure
from .report import (
    ResultBundle,
    analyze,
    compare_with_simulation,
    emit_plot_data,
    fmt,
    provenance,
    write_bundle,
    write_matrix_csv,
)
from .scenario import CASE_STUDIES, Scenario, case_study_scenarios, load_scenario
from .simulator import estimate_statistics, simulate
from .stability import platoon_is_stable

EXIT_OK = 0
EXIT_COMPARISON_FAILED = 1
EXIT_UNSTABLE = 2
EXIT_PARSE = 3
EXIT_NUMERICAL = 4

log = logging.getLogger("platoon_risk")


def _formats(text: str | None) -> tuple[str, ...] | None:
    if text is None:
        return None
    formats = tuple(part.strip().lower() for part in text.split(",") if part.strip())
    bad = set(formats) - {"csv", "json"}
    if bad or not formats:
        raise ScenarioParseError(f"--format takes a list of csv,json; got {text!r}")
    return formats


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a scenario value (section.key=value); repeatable")
    common.add_argument("--out", type=Path, help="output directory (overrides [output] dir)")
    common.add_argument("--format", dest="formats", help="comma list of csv,json")
    common.add_argument("--seed", type=_seed, help="simulation seed (u64)")
    common.add_argument("--allow-unstable-report", action="store_true",
                        help="on an unstable configuration write the stability report and exit 0")
    common.add_argument("--plots", action="store_true", help="also write plot data files and PNG figures")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="platoon-risk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, text in [
        ("check-stability", "per-mode delay-stability report"),
        ("analyze", "analytic covariance, conditional laws and risk tables"),
        ("simulate", "Monte Carlo run; writes samples and empirical covariance"),
        ("compare", "analytic vs simulated covariance with z-scores"),
    ]:
        p = sub.add_parser(verb, parents=[common], help=text)
        p.add_argument("--scenario", type=Path, required=True)
    p = sub.add_parser("case-study", parents=[common], help="run a built-in parameter set")
    p.add_argument("name", choices=sorted(CASE_STUDIES))
    return parser


def _load(args) -> Scenario:
    sc = load_scenario(args.scenario, args.overrides)
    return _apply_flags(sc, args)


def _apply_flags(sc: Scenario, args) -> Scenario:
    if args.out is not None and args.verb != "case-study":
        sc.out_dir = args.out
    formats = _formats(args.formats)
    if formats is not None:
        sc.formats = formats
    if args.plots:
        sc.plots = True
    return sc


def _emit(bundle: ResultBundle, sc: Scenario) -> list[Path]:
    written = write_bundle(bundle, sc.out_dir, sc.formats)
    if sc.plots and bundle.sigma is not None:
        from .plots import render_figures

        written += emit_plot_data(bundle, "variance", sc.out_dir)
        written += emit_plot_data(bundle, "risk", sc.out_dir)
        written += render_figures(bundle, sc.out_dir)
    return written


def _stability_gate(sc: Scenario, args) -> ResultBundle | None:
    """Return a stability-only bundle when the run must stop early."""
    report = platoon_is_stable(graph_eigenstructure(sc.graph), sc.config.tau, sc.config.beta)
    print(report.summary())
    if report.stable:
        return None
    if not args.allow_unstable_report:
        raise StabilityDomainError(report.summary())
    return ResultBundle(provenance(sc, args.seed), report)


def cmd_check_stability(args) -> int:
    sc = _load(args)
    report = platoon_is_stable(graph_eigenstructure(sc.graph), sc.config.tau, sc.config.beta)
    print(report.summary())
    write_bundle(ResultBundle(provenance(sc), report), sc.out_dir, sc.formats)
    if report.stable or args.allow_unstable_report:
        return EXIT_OK
    return EXIT_UNSTABLE


def _run_analysis(sc: Scenario, args) -> int:
    early = _stability_gate(sc, args)
    if early is not None:
        write_bundle(early, sc.out_dir, sc.formats)
        return EXIT_OK
    bundle = analyze(sc)
    written = _emit(bundle, sc)
    print(f"wrote {len(written)} files to {sc.out_dir}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    return _run_analysis(_load(args), args)


def cmd_simulate(args) -> int:
    sc = _load(args)
    early = _stability_gate(sc, args)
    if early is not None:
        write_bundle(early, sc.out_dir, sc.formats)
        return EXIT_OK
    samples = simulate(sc.plan(seed=args.seed))
    stats = estimate_statistics(samples)
    sc.out_dir.mkdir(parents=True, exist_ok=True)
    samples.to_csv(sc.out_dir / "samples.csv")
    write_matrix_csv(sc.out_dir / "empirical_sigma.csv", stats.cov)
    write_matrix_csv(sc.out_dir / "empirical_sigma_se.csv", stats.cov_se)
    with open(sc.out_dir / "empirical_mean.csv", "w") as fh:
        fh.write("j,mean,se\n")
        for j, (m, se) in enumerate(zip(stats.mean, stats.mean_se), start=1):
            fh.write(f"{j},{fmt(m)},{fmt(se)}\n")
    print(f"{samples.samples.shape[0]} samples, {stats.batches} batches, "
          f"min effective samples {np.min(stats.effective_samples):.0f}")
    return EXIT_OK


def cmd_compare(args) -> int:
    sc = _load(args)
    early = _stability_gate(sc, args)
    if early is not None:
        write_bundle(early, sc.out_dir, sc.formats)
        return EXIT_OK
    bundle = analyze(sc)
    table, samples, _ = compare_with_simulation(sc, seed=args.seed)
    bundle.comparison = table
    bundle.provenance["seed"] = sc.plan(seed=args.seed).seed
    _emit(bundle, sc)
    print(table.summary())
    return EXIT_OK if table.passed else EXIT_COMPARISON_FAILED


def cmd_case_study(args) -> int:
    scenarios = case_study_scenarios(args.name, args.overrides, args.out)
    code = EXIT_OK
    for sc in scenarios:
        _apply_flags(sc, args)
        print(f"[{sc.graph_label}]")
        code = max(code, _run_analysis(sc, args))
    return code


COMMANDS = {
    "check-stability": cmd_check_stability,
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "case-study": cmd_case_study,
}


def _origin(exc: BaseException) -> str:
    frames = traceback.extract_tb(exc.__traceback__)
    return Path(frames[-1].filename).stem if frames else "platoon_risk"


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.verb](args)
    except StabilityDomainError as exc:
        print(f"error: unstable configuration: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except (ScenarioParseError, InvalidParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (NumericalFailureError, DegenerateCorrelationError, InsufficientSamplesError) as exc:
        print(f"error: numerical failure in {_origin(exc)}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
