"""Command-line entry point: simulate, analyze, reconstruct, intensity, report.

Data go to files only; logs and error text go to stderr. Exit code 0 on
success, 1 on data errors, 2 on usage or configuration errors.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import ValidationError

from config import settings
from models import FLAT_KEYS, FitOptions, GridOptions, RunConfig, TwbModel
from services.errors import ConfigurationError, TwinBeamError
from services.pipeline import twinbeam_service
from services.storage import (
    document_kind,
    load_grid,
    load_histogram,
    load_histogram_from_shots,
    load_model,
    save_fit,
    save_grid,
    save_histogram,
    save_report,
    load_fit_summary,
    save_shots,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Bad command-line arguments discovered after parsing"""


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twinbeam",
        description="Photon statistics of mesoscopic twin beams: simulation, criteria, reconstruction, quasi-distributions.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.app_version}")
    parser.add_argument("--quiet", action="store_true", help="Log warnings and errors only.")
    subparsers = parser.add_subparsers(dest="command", required=True)

    simulate = subparsers.add_parser("simulate", help="Simulate detected counts shot by shot.")
    simulate.add_argument("--model", default=None, metavar="JSON", help="Model or fit file.")
    simulate.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                          help=f"Model parameter, one of {', '.join(FLAT_KEYS)}; overrides --model.")
    simulate.add_argument("--shots", type=int, default=settings.default_shots)
    simulate.add_argument("--seed", type=int, required=True)
    simulate.add_argument("--out", required=True, metavar="CSV")
    simulate.add_argument("--histogram", default=None, metavar="JSON", help="Also write the histogram.")

    analyze = subparsers.add_parser("analyze", help="Nonclassicality criteria of recorded shots.")
    analyze.add_argument("shots", metavar="CSV")
    analyze.add_argument("--eta", type=float, default=None, help="Known detection efficiency.")
    analyze.add_argument("--bootstrap", type=int, default=settings.bootstrap_resamples,
                         help="Bootstrap resamples; 0 disables standard errors.")
    analyze.add_argument("--seed", type=int, default=0)
    analyze.add_argument("--out", required=True, metavar="JSON")

    reconstruct = subparsers.add_parser("reconstruct", help="Fit the twin-beam model to recorded shots.")
    reconstruct.add_argument("shots", metavar="CSV")
    reconstruct.add_argument("--restarts", type=int, default=settings.fit_restarts)
    reconstruct.add_argument("--min-shots", type=int, default=settings.fit_min_shots)
    reconstruct.add_argument("--out", required=True, metavar="JSON")

    intensity = subparsers.add_parser("intensity", help="Quasi-distribution of integrated intensities.")
    intensity.add_argument("source", metavar="JSON|CSV", help="Model or fit file, histogram JSON or shots CSV.")
    intensity.add_argument("--which", choices=["photons", "detected", "convolution"], default="photons")
    intensity.add_argument("--order", type=int, default=None)
    intensity.add_argument("--damping", type=float, default=None)
    intensity.add_argument("--points", type=int, default=settings.grid_points)
    intensity.add_argument("--w-max", type=float, default=None)
    intensity.add_argument("--allow-singular", action="store_true")
    intensity.add_argument("--out", required=True, metavar="CSV")

    report = subparsers.add_parser("report", help="Assemble criteria, fit and negativity into one document.")
    report.add_argument("shots", metavar="CSV")
    report.add_argument("--fit", default=None, metavar="JSON")
    report.add_argument("--grid", default=None, metavar="CSV")
    report.add_argument("--eta", type=float, default=None)
    report.add_argument("--bootstrap", type=int, default=settings.bootstrap_resamples)
    report.add_argument("--seed", type=int, default=0)
    report.add_argument("--eps-neg", type=float, default=settings.eps_neg)
    report.add_argument("--out", required=True, metavar="JSON")

    return parser


def _parse_params(pairs: List[str]) -> Dict[str, float]:
    values = {}
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        key = key.strip()
        if not sep or key not in FLAT_KEYS:
            raise UsageError(f"--param expects KEY=VALUE with KEY in {', '.join(FLAT_KEYS)}, got {pair!r}")
        try:
            values[key] = float(raw)
        except ValueError:
            raise UsageError(f"--param {key} needs a number, got {raw!r}")
    return values


def _run_config(args: argparse.Namespace) -> RunConfig:
    inputs = [path for path in (getattr(args, "model", None), getattr(args, "shots", None),
                                getattr(args, "source", None), getattr(args, "fit", None),
                                getattr(args, "grid", None))
              if isinstance(path, str)]
    fit = FitOptions(restarts=args.restarts, min_shots=args.min_shots) if args.command == "reconstruct" else FitOptions()
    grid = GridOptions()
    if args.command == "intensity":
        grid = GridOptions(which=args.which, order=args.order, damping=args.damping, points=args.points,
                           w_max=args.w_max, allow_singular=args.allow_singular)
    return RunConfig(
        command=args.command,
        inputs=inputs,
        output=args.out,
        shots=args.shots if args.command == "simulate" else None,
        seed=getattr(args, "seed", None),
        bootstrap=getattr(args, "bootstrap", 0),
        fit=fit,
        grid=grid,
    )


def _echo(cfg: RunConfig) -> dict:
    # file names only, so artifacts do not depend on the run directory
    echo = cfg.model_dump(mode="json")
    echo["inputs"] = [Path(path).name for path in cfg.inputs]
    echo["output"] = Path(cfg.output).name if cfg.output else None
    return echo


def _cmd_simulate(args: argparse.Namespace, cfg: RunConfig) -> int:
    values = load_model(args.model).to_flat() if args.model else {}
    values.update(_parse_params(args.param))
    try:
        model = TwbModel.from_flat(values)
    except ValueError as e:
        raise UsageError(f"incomplete or invalid model: {e}")
    m_s, m_i, histogram = twinbeam_service.simulate(model, cfg.shots, cfg.seed)
    save_shots(args.out, m_s, m_i)
    if args.histogram:
        save_histogram(args.histogram, histogram)
    return EXIT_OK


def _cmd_analyze(args: argparse.Namespace, cfg: RunConfig) -> int:
    histogram = load_histogram_from_shots(args.shots)
    criteria = twinbeam_service.analyze(histogram, args.eta, args.bootstrap, args.seed)
    provenance = twinbeam_service.provenance(args.seed, cfg.inputs, _echo(cfg))
    save_report(args.out, twinbeam_service.report(criteria, provenance))
    return EXIT_OK


def _cmd_reconstruct(args: argparse.Namespace, cfg: RunConfig) -> int:
    histogram = load_histogram_from_shots(args.shots)
    result = twinbeam_service.reconstruct(histogram, cfg.fit)
    save_fit(args.out, result.summary)
    return EXIT_OK


def _load_source(path: str):
    if path.lower().endswith(".csv"):
        return load_histogram_from_shots(path)
    if document_kind(path) == "histogram":
        return load_histogram(path)
    return load_model(path)


def _cmd_intensity(args: argparse.Namespace, cfg: RunConfig) -> int:
    grid = twinbeam_service.intensity(_load_source(args.source), cfg.grid)
    save_grid(args.out, grid)
    return EXIT_OK


def _cmd_report(args: argparse.Namespace, cfg: RunConfig) -> int:
    histogram = load_histogram_from_shots(args.shots)
    criteria = twinbeam_service.analyze(histogram, args.eta, args.bootstrap, args.seed)
    reconstruction = load_fit_summary(args.fit) if args.fit else None
    negativity = twinbeam_service.negativity(load_grid(args.grid), args.eps_neg) if args.grid else None
    provenance = twinbeam_service.provenance(args.seed, cfg.inputs, _echo(cfg))
    save_report(args.out, twinbeam_service.report(criteria, provenance, reconstruction, negativity))
    return EXIT_OK


COMMANDS = {
    "simulate": _cmd_simulate,
    "analyze": _cmd_analyze,
    "reconstruct": _cmd_reconstruct,
    "intensity": _cmd_intensity,
    "report": _cmd_report,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # --help and --version exit 0, parse errors exit 2
        return int(e.code or 0)

    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
    )

    try:
        cfg = _run_config(args)
    except ValidationError as e:
        logger.error(f"Invalid run configuration: {e}")
        return EXIT_USAGE

    try:
        logger.info(f"Running {cfg.command}")
        return COMMANDS[cfg.command](args, cfg)
    except (UsageError, ConfigurationError) as e:
        logger.error(f"Usage error: {e}")
        return EXIT_USAGE
    except TwinBeamError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_DATA
    except (OSError, ValueError, KeyError) as e:
        logger.error(f"Could not process input: {e}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
