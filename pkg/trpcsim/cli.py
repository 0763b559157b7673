"""
Command-line driver.

Subcommands:
    synth     baseband and RF waveform files for a bit pattern
    spectrum  analyzer emulation of a random-data frame plus FCC verdict
    ser       Monte Carlo symbol error rate (one row per Eb/N0 point)
    table1    per-mode peak power and amplitude limits next to published values
    comply    FCC check of an externally supplied waveform file

Exit codes: 0 success, 1 usage or parameter error, 2 mask violation,
3 guard-inequality violation.
"""

import argparse
import csv
import logging
import math
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import config
from .compliance import (
    FCC_UWB,
    FccVerdict,
    check_fcc,
    compliance_report,
    solve_amplitude,
    table1_rows,
    write_compliance_report,
)
from .errors import GuardViolationError, TrpcError
from .link import SerResult, channel_eb_n0_db, check_guard, sweep_ser
from .scenario import Scenario, load_scenario
from .trpc import MODES, ClusterSpec, iq_feed, pulse_bandwidth_3db, synth_frame
from .impairments import upconvert_impaired
from .waveform import psd_estimate, read_waveform, write_spectrum_csv, write_waveform

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MASK_VIOLATION = 2
EXIT_GUARD_VIOLATION = 3

# Record length for spectrum runs, in RBW time constants
SPECTRUM_RECORD_RBW_PRODUCT = 12.0


def transmit_spec(scenario: Scenario) -> ClusterSpec:
    """Cluster at the mask-limited amplitude for the scenario's LO, times amplitude_scale."""
    amplitude = solve_amplitude(scenario.mode, lo_frequency=scenario.lo.frequency)
    return scenario.mode.cluster.with_amplitude(amplitude * scenario.amplitude_scale)


def _suffixed(path: Path, tag: str) -> Path:
    suffix = path.suffix or ".csv"
    return path.with_name(f"{path.stem}_{tag}{suffix}")


def _rf_frame(scenario: Scenario, spec: ClusterSpec, bits: Sequence[int]):
    baseband = synth_frame(bits, spec, scenario.rf_sample_rate)
    i, q = iq_feed(baseband)
    return upconvert_impaired(i, q, scenario.lo, scenario.impairments, pulse_bandwidth_3db(spec))


def cmd_synth(scenario: Scenario, output_path) -> Tuple[Path, Path]:
    """Write ``<stem>_baseband`` and ``<stem>_rf`` waveform files for the scenario bits."""
    bits = scenario.bit_list()
    spec = transmit_spec(scenario)
    output_path = Path(output_path)

    baseband = synth_frame(bits, spec, scenario.sample_rate)
    rf = _rf_frame(scenario, spec, bits)
    baseband_path = write_waveform(baseband, _suffixed(output_path, "baseband"))
    rf_path = write_waveform(rf, _suffixed(output_path, "rf"))
    logger.info(
        f"Synthesized {len(bits)} symbols of {scenario.mode_name} at "
        f"A_TX = {spec.amplitude * 1e3:.3f} mV"
    )
    return baseband_path, rf_path


def _check_and_report(spectrum, output_path: Path, mode_name: str) -> FccVerdict:
    verdict = check_fcc(spectrum, FCC_UWB)
    write_spectrum_csv(spectrum, output_path)
    write_compliance_report(
        compliance_report(verdict, spectrum, mode_name), output_path.with_suffix(".json")
    )
    return verdict


def cmd_spectrum(scenario: Scenario, rbw: float, output_path) -> FccVerdict:
    """Emulate an analyzer sweep of a random-data frame and check it against the mask."""
    FCC_UWB.check_rbw(rbw)
    spec = transmit_spec(scenario)
    n_symbols = int(math.ceil(SPECTRUM_RECORD_RBW_PRODUCT / (rbw * spec.symbol_duration)))
    bits = np.random.default_rng(scenario.seed).integers(0, 2, size=n_symbols)

    rf = _rf_frame(scenario, spec, bits)
    spectrum = psd_estimate(rf, rbw)
    return _check_and_report(spectrum, Path(output_path), scenario.mode_name)


def _format_eb_n0(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.4f}"


def cmd_ser(scenario: Scenario, output_path) -> List[SerResult]:
    """Write eb_n0_db, ser, ci95, symbols, errors rows, one per sweep point."""
    spec = transmit_spec(scenario)
    check_guard(spec, scenario.channel)

    if scenario.sweep:
        points = list(scenario.sweep)
    else:
        # a single point at the scenario's own noise level
        points = [channel_eb_n0_db(spec, scenario.channel, scenario.impairments, scenario.lo)]
    results = sweep_ser(
        scenario.mode,
        scenario.channel,
        scenario.impairments,
        points,
        scenario.n_symbols,
        scenario.seed,
        lo=scenario.lo,
        sample_rate=scenario.sample_rate,
        spec=spec,
        workers=scenario.workers,
    )

    output_path = Path(output_path)
    try:
        with open(output_path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["eb_n0_db", "ser", "ci95", "symbols", "errors"])
            for result in results:
                writer.writerow(
                    [
                        _format_eb_n0(result.eb_n0),
                        f"{result.ser:.6e}",
                        f"{result.ci95_halfwidth:.6e}",
                        result.symbols_sent,
                        result.symbol_errors,
                    ]
                )
    except OSError as e:
        raise OSError(f"Cannot write SER table to {output_path}: {e}") from e
    return results


TABLE1_COLUMNS = [
    "mode",
    "data_rate_mbps",
    "n_pulses",
    "pulse_width_ns",
    "p_peak_dbm",
    "published_p_peak_dbm",
    "p_peak_delta_db",
    "amplitude_mv",
    "published_amplitude_mv",
    "amplitude_delta_pct",
    "binding_constraint",
    "note",
]


def cmd_table1(output_path=None) -> List[dict]:
    """Print the design-table reproduction; also write it as CSV when a path is given."""
    rows = table1_rows()
    print(
        f"{'mode':<6}{'N_p':>4}{'T_p ns':>8}{'P_peak dBm':>12}{'published':>11}{'delta dB':>10}"
        f"{'A_TX mV':>9}{'published':>11}{'delta %':>9}"
    )
    for row in rows:
        print(
            f"{row['mode']:<6}{row['n_pulses']:>4}{row['pulse_width_ns']:>8.2f}"
            f"{row['p_peak_dbm']:>12.2f}{row['published_p_peak_dbm']:>11.2f}"
            f"{row['p_peak_delta_db']:>+10.2f}{row['amplitude_mv']:>9.2f}"
            f"{row['published_amplitude_mv']:>11.2f}{row['amplitude_delta_pct']:>+9.1f}"
            + (f"  ({row['note']})" if row["note"] else "")
        )

    if output_path:
        output_path = Path(output_path)
        try:
            with open(output_path, "w", newline="", encoding="utf-8") as f:
                writer = csv.DictWriter(f, fieldnames=TABLE1_COLUMNS)
                writer.writeheader()
                for row in rows:
                    writer.writerow(
                        {k: (f"{v:.4f}" if isinstance(v, float) else v) for k, v in row.items()}
                    )
        except OSError as e:
            raise OSError(f"Cannot write table to {output_path}: {e}") from e
    return rows


def cmd_comply(waveform_path, rbw: float, output_path, mode_name: str = "") -> FccVerdict:
    """FCC check of a waveform file written by ``synth`` or any other tool."""
    FCC_UWB.check_rbw(rbw)
    wave = read_waveform(waveform_path)
    spectrum = psd_estimate(wave, rbw)
    return _check_and_report(spectrum, Path(output_path), mode_name)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="YAML scenario file")
    common.add_argument("--mode", choices=sorted(MODES), help="preset mode (overrides the scenario)")
    common.add_argument("--rbw", type=float, help="resolution bandwidth in Hz")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--out", help="output path")
    common.add_argument("--bits", help="bit pattern for synth, e.g. 1011")
    common.add_argument("--amplitude-scale", type=float, help="multiplier on the solved amplitude")
    common.add_argument("--n-symbols", type=int, help="symbols per SER point")
    common.add_argument("--sample-rate", type=float, help="baseband/link sample rate in Hz")
    common.add_argument("--rf-sample-rate", type=float, help="RF waveform sample rate in Hz")
    common.add_argument("--workers", type=int, help="parallel Monte Carlo workers")
    common.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ...")

    parser = argparse.ArgumentParser(
        prog="trpcsim", description="TRPC UWB transceiver simulator and FCC compliance toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write baseband and RF waveforms")
    sub.add_parser("spectrum", parents=[common], help="spectrum and FCC verdict of a frame")
    sub.add_parser("ser", parents=[common], help="Monte Carlo symbol error rate")
    sub.add_parser("table1", parents=[common], help="reproduce the per-mode design table")
    comply = sub.add_parser("comply", parents=[common], help="FCC check of a waveform file")
    comply.add_argument("waveform", help="waveform file (.csv or .npz)")
    return parser


def _scenario_from_args(args) -> Scenario:
    if args.scenario:
        scenario = load_scenario(args.scenario)
        if args.mode:
            scenario = scenario.with_overrides(mode=MODES[args.mode])
    else:
        scenario = Scenario.default(args.mode or "r10")
    return scenario.with_overrides(
        seed=args.seed,
        bits=args.bits,
        amplitude_scale=args.amplitude_scale,
        n_symbols=args.n_symbols,
        sample_rate=args.sample_rate,
        rf_sample_rate=args.rf_sample_rate,
        workers=args.workers,
        rbw=args.rbw,
    )


DEFAULT_OUTPUTS = {
    "synth": "trpc_waveform.csv",
    "spectrum": "trpc_spectrum.csv",
    "ser": "trpc_ser.csv",
    "comply": "trpc_comply.csv",
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # argparse exits with 2, which is reserved for mask violations
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    config.configure_logging(args.log_level)

    try:
        if args.command == "table1":
            cmd_table1(args.out)
            return EXIT_OK

        out = args.out or DEFAULT_OUTPUTS[args.command]
        if args.command == "comply":
            verdict = cmd_comply(args.waveform, args.rbw or 1e6, out, args.mode or "")
            return EXIT_OK if verdict.passes else EXIT_MASK_VIOLATION

        scenario = _scenario_from_args(args)
        if args.command == "synth":
            cmd_synth(scenario, out)
        elif args.command == "spectrum":
            verdict = cmd_spectrum(scenario, scenario.rbw, out)
            return EXIT_OK if verdict.passes else EXIT_MASK_VIOLATION
        elif args.command == "ser":
            cmd_ser(scenario, out)
        return EXIT_OK
    except GuardViolationError as e:
        logger.error(str(e))
        return EXIT_GUARD_VIOLATION
    except (TrpcError, OSError) as e:
        logger.error(str(e))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
