"""Command-line entry point.

Subcommands: ``estimate``, ``simulate``, ``experiment``, ``validate-design``
and ``peaks``. Data goes to stdout (or ``--output``), diagnostics to stderr.
Exit status is 0 on success, 1 for I/O or parse problems and 2 when
estimation or design validation fails.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .designio import design_passes, load_design, validate_design
from .errors import DesignError, DomainError, EstimationError, GridRangeError, ParseError, SingularityError
from .estimator import EstimationResult, estimate
from .experiments import RUNNERS, report_csv, report_summary, write_report
from .simulator import EXPERIMENT1, EXPERIMENT2, EXPERIMENT3, NoiseModel, rng_stream, synthesize_spectrum
from .spectrum import (
    SIMULATION_GRID,
    FrequencyGrid,
    csv_text,
    find_minima,
    read_csv,
    read_spectrum,
    read_touchstone,
    write_spectrum,
)

EXIT_OK, EXIT_IO, EXIT_FAILED = 0, 1, 2
SPECS = {1: EXPERIMENT1, 2: EXPERIMENT2, 3: EXPERIMENT3}


def _err(msg: str) -> None:
    print(f"textile-resonance: {msg}", file=sys.stderr)


def _emit(text: str, output) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _read_spectrum(path, fmt):
    if fmt == "touchstone":
        return read_touchstone(path)
    if fmt == "csv":
        return read_csv(path)
    return read_spectrum(path)


def _noise(args) -> NoiseModel:
    decimals = None if args.no_rounding else args.decimals
    return NoiseModel(0.0 if args.sigma is None else args.sigma, decimals)


def _grid(args, default: FrequencyGrid) -> FrequencyGrid:
    return FrequencyGrid(
        default.start if args.start is None else args.start * 1e6,
        default.stop if args.stop is None else args.stop * 1e6,
        default.points if args.points is None else args.points,
    )


# ---------------------------------------------------------------------------


def cmd_estimate(args) -> int:
    doc = load_design(args.design)
    known = doc.known()
    state = Path(args.state) if args.state else None
    if state is not None and state.exists():
        known = known.with_last_estimate(EstimationResult.from_dict(json.loads(state.read_text(encoding="utf-8"))))
    spec = _read_spectrum(args.spectrum, args.format)
    result = estimate(spec, known)
    if args.csv:
        text = ",".join(result.csv_header()) + "\n" + ",".join(result.csv_row()) + "\n"
    else:
        text = json.dumps(result.to_dict(), indent=2) + "\n"
    _emit(text, args.output)
    if state is not None:
        state.write_text(json.dumps(result.to_dict(), indent=2) + "\n", encoding="utf-8")
    if not result.converged:
        _err("warning: the least-squares fit did not converge; best values returned")
    failed = [known.branches[i].name or str(i) for i in result.step2_failed]
    if failed:
        _err(f"warning: no resonance found for {', '.join(failed)}; values reported as null")
    return EXIT_OK


def cmd_simulate(args) -> int:
    doc = load_design(args.design)
    design = doc.interface(args.coupling_factor)
    grid = _grid(args, SIMULATION_GRID)
    noise = _noise(args)
    rng = rng_stream(args.seed) if noise.sigma > 0 else None
    spec = synthesize_spectrum(design, grid, noise, rng)
    if args.output:
        write_spectrum(spec, args.output)
    else:
        # stdout has no file extension to go by; CSV composes best in pipes
        sys.stdout.write(csv_text(spec))
    return EXIT_OK


def cmd_experiment(args) -> int:
    spec = SPECS[args.number]
    if args.sigma is not None or args.no_rounding or args.decimals is not None:
        spec = replace(spec, noise=NoiseModel(
            spec.noise.sigma if args.sigma is None else args.sigma,
            None if args.no_rounding else (spec.noise.decimals if args.decimals is None else args.decimals),
        ))
    if args.no_fluctuation:
        spec = replace(spec, line_capacitance_fluctuation=0.0)

    def progress(i, n):
        if not args.quiet and (i == n or i % max(1, n // 20) == 0):
            print(f"\r  {i}/{n} conditions", end="" if i < n else "\n", file=sys.stderr, flush=True)

    report = RUNNERS[args.number](spec, args.reps, args.seed, threads=args.threads, progress=progress)
    if args.output:
        csv_path, summary = write_report(report, args.output)
        _err(f"wrote {csv_path} and {summary}")
    else:
        sys.stdout.write(report_csv(report))
    if not args.quiet:
        sys.stderr.write(report_summary(report))
    return EXIT_OK


def cmd_validate(args) -> int:
    doc = load_design(args.design)
    results = validate_design(doc)
    for r in results:
        print(r.line())
    ok = design_passes(results)
    print("design passes" if ok else "design fails")
    return EXIT_OK if ok else EXIT_FAILED


def cmd_peaks(args) -> int:
    spec = _read_spectrum(args.spectrum, args.format)
    peaks = find_minima(spec, refine=not args.no_refine, min_depth=args.min_depth, window=args.window)
    rows = [{"frequency": float(f), "magnitude": float(m)} for f, m in peaks]
    _emit(json.dumps(rows, indent=2) + "\n", args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="textile-resonance",
                                description="Simulate S11 spectra of textile sensor interfaces and recover sensor values.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def noise_flags(sp, sigma_help, decimals_help):
        sp.add_argument("--sigma", type=float, help=f"Gaussian noise per S11 component ({sigma_help})")
        sp.add_argument("--decimals", type=int, help=f"round S11 components to this many decimals ({decimals_help})")
        sp.add_argument("--no-rounding", action="store_true", help="skip the rounding step")

    def spectrum_format(sp):
        sp.add_argument("--format", choices=("auto", "touchstone", "csv"), default="auto",
                        help="spectrum file format (default: from the extension)")

    e = sub.add_parser("estimate", help="recover sensor values from a measured spectrum")
    e.add_argument("design", help="design JSON")
    e.add_argument("spectrum", help=".s1p or .csv spectrum")
    e.add_argument("-o", "--output", help="write the result here instead of stdout")
    e.add_argument("--state", help="JSON file holding the previous estimate; read if present, then updated")
    e.add_argument("--csv", action="store_true", help="emit a CSV row instead of JSON")
    spectrum_format(e)
    e.set_defaults(func=cmd_estimate)

    s = sub.add_parser("simulate", help="synthesise a spectrum for a design")
    s.add_argument("design", help="design JSON with a coupling_factor")
    s.add_argument("-o", "--output", help=".s1p or .csv output (default: CSV on stdout)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--coupling-factor", type=float, help="override the design's coupling factor")
    s.add_argument("--start", type=float, help="grid start in MHz (default 1)")
    s.add_argument("--stop", type=float, help="grid stop in MHz (default 30)")
    s.add_argument("--points", type=int, help="grid points (default 101)")
    noise_flags(s, "default 0", "default: no rounding")
    s.set_defaults(func=cmd_simulate)

    x = sub.add_parser("experiment", help="run a Monte-Carlo accuracy experiment")
    x.add_argument("number", type=int, choices=sorted(RUNNERS))
    x.add_argument("--reps", type=int, default=None, help="repetitions per condition (default 100)")
    x.add_argument("--seed", type=int, default=0)
    x.add_argument("--threads", type=int, default=1, help="worker threads")
    x.add_argument("-o", "--output", help="report CSV path; a .txt summary is written next to it")
    x.add_argument("--no-fluctuation", action="store_true", help="disable the random line-capacitance deviation")
    x.add_argument("-q", "--quiet", action="store_true")
    noise_flags(x, "default 5e-4", "default 3")
    x.set_defaults(func=cmd_experiment)

    v = sub.add_parser("validate-design", help="check a design against the operating rules")
    v.add_argument("design")
    v.set_defaults(func=cmd_validate)

    k = sub.add_parser("peaks", help="list local minima of |S11|")
    k.add_argument("spectrum")
    k.add_argument("-o", "--output")
    k.add_argument("--no-refine", action="store_true", help="report sample locations without parabolic refinement")
    k.add_argument("--min-depth", type=float, default=0.0)
    k.add_argument("--window", type=int, default=1)
    spectrum_format(k)
    k.set_defaults(func=cmd_peaks)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "reps", None) is not None and args.reps < 1:
        _err("--reps must be positive")
        return EXIT_FAILED
    try:
        return args.func(args)
    except (OSError, ParseError) as exc:
        _err(str(exc))
        return EXIT_IO
    except (DesignError, EstimationError, DomainError, GridRangeError, SingularityError) as exc:
        _err(str(exc))
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
