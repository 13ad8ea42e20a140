"""
Command-line entry point

    afclab run       <scenario.yaml>      run a scenario (g2 scans, fringes, Bell test)
    afclab bell      <scenario.yaml>      CHSH test only, --variant / --noiseless
    afclab comb      --period 40MHz ...   design a comb, propagate a 5 ns photon
    afclab analyze   <tags.bin>           histogram and g2 of a recorded TagStream
    afclab calibrate <scenario.yaml>      pair rate per mW matching the no-AFC g2

Outputs (CSV columns are named in each header line):
    *_hist_*.csv, histogram.csv   delay_s, counts
    <scan>.csv                    power_W, storage_time_s, efficiency, g2, sigma, expected_g2, peak_delay_s
    fringes.csv                   idler_phase_rad, signal_phase_rad, counts
    bell_*_runs.csv               signal_setting_rad, idler_setting_rad, outcome, window_center_s, count, expected
    comb.csv                      frequency_Hz, depth
    envelope.csv                  time_s, re, im
    echo.csv                      delay_s, expected_delay_s, efficiency, phase_rad
    summary.json, manifest.json

Exit codes: 0 success, 2 invalid input, 3 runtime failure.
"""

import argparse
import logging
import os
import sys
from dataclasses import replace
from importlib import metadata
from typing import List, Optional

from . import afc
from .coincidence import (
    accidental_offsets,
    g2si,
    save_histogram_csv,
    save_summary_json,
    stream_histogram,
    summary_document,
)
from .config import configure_logging, get_settings
from .errors import ValidationError
from .experiments import (
    Scenario,
    bell_test,
    calibrate_rate,
    check_finite,
    run_scenario,
    scenario_hash,
    write_bell,
)
from .montecarlo import load_tags
from .units import parse_quantity
from .utils import banner, ensure_folder, hash_file, prun, save_data_json

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3
DEPENDENCIES = ("numpy", "scipy", "PyYAML", "joblib", "python-dotenv")


def quantity(dimension: str):
    def parse(text):
        try:
            return parse_quantity(text, dimension)
        except ValidationError as e:
            raise argparse.ArgumentTypeError(str(e))
    return parse


def quantity_pair(dimension: str):
    def parse(text):
        parts = text.split(",")
        if len(parts) != 2:
            raise argparse.ArgumentTypeError(f"expected two comma-separated quantities, got {text!r}")
        return tuple(quantity(dimension)(p) for p in parts)
    return parse


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = argparse.ArgumentParser(prog="afclab", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--workers", type=int, default=settings.workers,
                        help="parallel Monte Carlo slices (-1 = all cores)")
    parser.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    parser.add_argument("--output-dir", default=settings.output_dir, help="output folder")
    parser.add_argument("--log-level", default=settings.log_level, help="logging level")
    parser.add_argument("--engine", choices=("auto", "events", "counts"), default=None,
                        help="Monte Carlo engine (default: scenario setting)")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario file")
    p.add_argument("scenario")

    p = sub.add_parser("bell", help="CHSH test of a scenario")
    p.add_argument("scenario")
    p.add_argument("--variant", choices=("partial_readout", "hybrid"), default=None)
    p.add_argument("--noiseless", action="store_true")

    p = sub.add_parser("comb", help="design a comb and report its echoes")
    p.add_argument("--period", type=quantity("Hz"), default=parse_quantity("40 MHz"))
    p.add_argument("--finesse", type=float, default=4.0)
    p.add_argument("--depth", type=float, default=4.0, help="peak optical depth")
    p.add_argument("--background", type=float, default=0.0, help="optical depth between peaks")
    p.add_argument("--bandwidth", type=quantity("Hz"), default=afc.AFC_BANDWIDTH)
    p.add_argument("--shape", choices=afc.SHAPES, default="square")
    p.add_argument("--shift", type=quantity("Hz"), default=0.0, help="comb shift")
    p.add_argument("--passes", type=int, default=1)
    p.add_argument("--readout", type=quantity_pair("s"), default=None,
                   help="double readout at two delays, e.g. 50ns,75ns")
    p.add_argument("--weight", type=float, default=0.5, help="double-readout weight of the first delay")
    p.add_argument("--phases", type=quantity_pair("rad"), default=(0.0, 0.0),
                   help="double-readout tooth phases, e.g. \"0 rad,180 deg\"")
    p.add_argument("--pulse-fwhm", type=quantity("s"), default=afc.PHOTON_COHERENCE_TIME)
    p.add_argument("--window", type=quantity("s"), default=None, help="echo window (default 3x FWHM)")

    p = sub.add_parser("analyze", help="histogram and g2 of a tag file")
    p.add_argument("tags")
    p.add_argument("--window", type=quantity("s"), default=parse_quantity("10 ns"))
    p.add_argument("--bin-width", type=quantity("s"), default=parse_quantity("1 ns"))
    p.add_argument("--range", type=quantity_pair("s"), default=(-500e-9, 500e-9))
    p.add_argument("--peak", type=quantity("s"), default=0.0)
    p.add_argument("--accidentals", type=int, default=20)

    p = sub.add_parser("calibrate", help="calibrate the pair rate per mW")
    p.add_argument("scenario")
    p.add_argument("--target", type=float, default=115.0, help="no-AFC g2 at 3 mW")

    return parser


def _load_scenario(args) -> Scenario:
    scenario = Scenario.from_yaml(args.scenario)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    if args.engine is not None:
        scenario = replace(scenario, engine=args.engine)
    return scenario


def _versions():
    out = {}
    for name in ("afclab",) + DEPENDENCIES:
        try:
            out[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            out[name] = None
    return out


def write_manifest(output_dir: str, argv: List[str], files: List[str],
                   scenario: Optional[Scenario] = None, seed: Optional[int] = None) -> str:
    manifest = {
        "command": ["afclab"] + list(argv),
        "versions": _versions(),
        "outputs": {os.path.basename(f): hash_file(f) for f in files},
    }
    if scenario is not None:
        manifest.update(scenario=scenario.to_dict(), scenario_sha256=scenario_hash(scenario),
                        seed=scenario.seed)
    elif seed is not None:
        manifest["seed"] = seed
    path = os.path.join(output_dir, "manifest.json")
    save_data_json(path, manifest)
    return path


def cmd_run(args, argv):
    scenario = _load_scenario(args)
    banner(f"Run scenario {scenario.name} ({scenario.kind})")
    summary, files = run_scenario(scenario, args.output_dir, workers=args.workers)
    write_manifest(args.output_dir, argv, files, scenario)
    return summary


def cmd_bell(args, argv):
    scenario = _load_scenario(args)
    result = bell_test(scenario, variant=args.variant, noiseless=args.noiseless or None,
                       workers=args.workers)
    files = write_bell(result, args.output_dir)
    summary = summary_document(chsh=result.chsh, bell=result.to_dict(), scenario=scenario.name)
    check_finite(summary)
    path = os.path.join(args.output_dir, "summary.json")
    save_summary_json(path, summary)
    write_manifest(args.output_dir, argv, files + [path], scenario)
    return summary


def cmd_comb(args, argv):
    banner("Comb design")
    grid = afc.FrequencyGrid.default()
    pulse = afc.gaussian_pulse(grid, fwhm=args.pulse_fwhm)
    window = args.window or 3.0 * pulse.fwhm()

    if args.readout:
        t_short, t_long = args.readout
        comb = afc.double_readout_comb(t_short=t_short, t_long=t_long, weight=args.weight,
                                       phases=args.phases,
                                       depth=args.depth, finesse=args.finesse,
                                       bandwidth=args.bandwidth, shape=args.shape, grid=grid,
                                       background_depth=args.background, passes=args.passes)
        delays = [t_short, t_long]
    else:
        comb = afc.build_comb(args.period, args.finesse, args.depth,
                              background_depth=args.background, bandwidth=args.bandwidth,
                              shape=args.shape, comb_shift=args.shift, grid=grid,
                              passes=args.passes)
        delays = [1.0 / args.period]

    out = afc.propagate(pulse, comb)
    report = afc.echo_report(out, delays, window, pulse)

    files = [os.path.join(args.output_dir, name) for name in ("comb.csv", "envelope.csv", "echo.csv")]
    afc.save_comb(files[0], comb)
    afc.save_envelope(files[1], out)
    afc.save_echo_report(files[2], report)

    summary = {
        "echo": report.to_dict(),
        "absorption_efficiency": afc.absorption_efficiency(comb, pulse),
        "theoretical_efficiency": afc.theoretical_efficiency(args.depth, args.finesse, args.background),
        "clipped": comb.clipped,
    }
    for line in report.echoes:
        logger.info(f"echo at {line.delay * 1e9:.2f} ns: efficiency {line.efficiency:.4f}, "
                    f"phase {line.phase:.4f} rad")
    check_finite(summary)
    path = os.path.join(args.output_dir, "summary.json")
    save_summary_json(path, summary)
    write_manifest(args.output_dir, argv, files + [path])
    return summary


def cmd_analyze(args, argv):
    banner(f"Analyze {args.tags}")
    stream = load_tags(args.tags)
    hist = stream_histogram(stream, bin_width=args.bin_width, range=args.range)
    offsets = accidental_offsets([args.peak], args.window, args.accidentals, args.range)
    est = g2si(hist, args.peak, offsets, args.window)
    logger.info(f"{len(stream)} tags, g2 = {est.g2:.2f} +- {est.sigma:.2f}")

    h_path = os.path.join(args.output_dir, "histogram.csv")
    save_histogram_csv(h_path, hist)
    summary = summary_document(g2=est, n_tags=len(stream), duration_s=stream.duration,
                               n_peak=est.n_peak, mean_accidental=est.mean_accidental)
    check_finite(summary)
    path = os.path.join(args.output_dir, "summary.json")
    save_summary_json(path, summary)
    write_manifest(args.output_dir, argv, [h_path, path], seed=stream.metadata.get("seed"))
    return summary


def cmd_calibrate(args, argv):
    scenario = _load_scenario(args)
    banner("Pair-rate calibration")
    cal = calibrate_rate(scenario, target_g2=args.target, power=scenario.power)
    summary = summary_document(calibration=cal.to_dict(),
                               rate_per_mW=cal.rate_per_W * 1e-3)
    check_finite(summary)
    path = os.path.join(args.output_dir, "calibration.json")
    save_summary_json(path, summary)
    write_manifest(args.output_dir, argv, [path], scenario)
    return summary


COMMANDS = {
    "run": cmd_run,
    "bell": cmd_bell,
    "comb": cmd_comb,
    "analyze": cmd_analyze,
    "calibrate": cmd_calibrate,
}


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    ensure_folder(args.output_dir)

    try:
        prun(COMMANDS[args.command], reraise=True, args=args, argv=argv)
    except ValidationError:
        return EXIT_INVALID
    except Exception:
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
