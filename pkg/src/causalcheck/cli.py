"""Batch command line front end.

Exit codes: 0 success, 1 input or validation failure (message on
stderr), 2 usage error (argparse). Reports go to stdout as bytes so the
JSON rendering is byte-identical across runs.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .confounding import SensitivityRange
from .errors import CausalCheckError
from .legal import Scheme, parse_taxi_file
from .report import (
    EngineConfig,
    build_apportion_report,
    build_checklist_report,
    build_dose_report,
    build_legal_report,
    build_measure_report,
    build_meta_report,
    build_sensitivity_report,
    build_simulate_report,
    build_taxi_report,
    parse_config,
    render_report,
)
from .simulate import parse_truth_file
from .study import parse_study_file

_SCHEMES = {
    "paper": Scheme.PAPER_EXCESS_UNITS,
    "synergy": Scheme.SYNERGY_PARTITION,
}


def _range(text: str) -> tuple[float, float]:
    parts = text.split(":")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(
            f"expected LO:HI, got {text!r}"
        )
    try:
        return (float(parts[0]), float(parts[1]))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected numeric LO:HI, got {text!r}"
        ) from None


def _add_common(p: argparse.ArgumentParser):
    p.add_argument(
        "--format",
        choices=("human", "json"),
        default="human",
        help="output rendering (default: human)",
    )
    p.add_argument(
        "--config",
        metavar="FILE",
        help="flat JSON config file; omitted keys keep their defaults",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causalcheck",
        description=(
            "Evaluate epidemiological evidence of causation: effect "
            "measures, confounding checks, evidence synthesis, the "
            "ten-test checklist and the legal causation rules."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, text in (
        ("measure", "effect measures for each study in a file"),
        ("meta", "pool several studies and assess consistency"),
        ("dose", "trend test and dose-response fit for each series"),
        ("checklist", "run the ten-test checklist"),
        ("legal", "checklist plus the legal causation verdicts"),
        ("sensitivity", "Monte Carlo confounder sensitivity analysis"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("file", help="study file (JSON)")
        _add_common(p)
        if name == "sensitivity":
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--draws", type=int, default=1000)
            p.add_argument(
                "--threshold",
                type=float,
                default=None,
                help="RR threshold for the exceedance fraction "
                "(default: config mc_threshold)",
            )
            p.add_argument("--workers", type=int, default=1)
            p.add_argument(
                "--rr-range", type=_range, default=(1.0, 4.0),
                metavar="LO:HI",
                help="confounder-outcome RR range (default 1:4)",
            )
            p.add_argument(
                "--p1-range", type=_range, default=(0.0, 1.0),
                metavar="LO:HI",
                help="exposed-prevalence range (default 0:1)",
            )
            p.add_argument(
                "--p0-range", type=_range, default=(0.0, 1.0),
                metavar="LO:HI",
                help="unexposed-prevalence range (default 0:1)",
            )

    p = sub.add_parser(
        "apportion", help="split joint-exposure outcomes between two causes"
    )
    p.add_argument("--rr-a", type=float, required=True)
    p.add_argument("--rr-s", type=float, required=True)
    p.add_argument("--rr-as", type=float, required=True)
    p.add_argument(
        "--scheme", choices=sorted(_SCHEMES), default="paper",
        help="paper: one unit per excess-RR point of each input; "
        "synergy: partition of the joint excess into main effects "
        "plus interaction",
    )
    _add_common(p)

    p = sub.add_parser("taxi", help="fleet posterior for the harm's source")
    p.add_argument("--spec", required=True, help="scenario file (JSON)")
    _add_common(p)

    p = sub.add_parser(
        "simulate", help="draw a synthetic cohort from a truth file"
    )
    p.add_argument("--truth", required=True, help="truth file (JSON)")
    p.add_argument(
        "--seed", type=int, default=None,
        help="override the truth file's seed",
    )
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument(
        "--expected", action="store_true",
        help="emit expected counts instead of random draws",
    )
    _add_common(p)

    return parser


def _load_config(args) -> EngineConfig:
    if args.config is None:
        return parse_config(None)
    return parse_config(Path(args.config).read_bytes())


def _dispatch(args) -> dict:
    cfg = _load_config(args)
    if args.command == "apportion":
        return build_apportion_report(
            args.rr_a, args.rr_s, args.rr_as, _SCHEMES[args.scheme], cfg
        )
    if args.command == "taxi":
        raw = Path(args.spec).read_bytes()
        return build_taxi_report(parse_taxi_file(raw), cfg, raw)
    if args.command == "simulate":
        raw = Path(args.truth).read_bytes()
        truth = parse_truth_file(raw)
        if args.seed is not None:
            truth = dataclasses.replace(truth, seed=args.seed)
        return build_simulate_report(
            truth, cfg, raw, replicate=args.replicate, expected=args.expected
        )

    raw = Path(args.file).read_bytes()
    bundle = parse_study_file(raw)
    if args.command == "measure":
        return build_measure_report(bundle, cfg, raw)
    if args.command == "meta":
        return build_meta_report(bundle, cfg, raw)
    if args.command == "dose":
        return build_dose_report(bundle, cfg, raw)
    if args.command == "checklist":
        return build_checklist_report(bundle, cfg, raw)
    if args.command == "legal":
        return build_legal_report(bundle, cfg, raw)
    rng = SensitivityRange(
        rr_range=args.rr_range,
        p1_range=args.p1_range,
        p0_range=args.p0_range,
        draws=args.draws,
        seed=args.seed,
    )
    return build_sensitivity_report(
        bundle, cfg, raw, rng,
        threshold=args.threshold, workers=args.workers,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        out = render_report(_dispatch(args), args.format)
    except CausalCheckError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    sys.stdout.buffer.write(out)
    sys.stdout.buffer.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
