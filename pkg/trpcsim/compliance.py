"""
FCC UWB compliance: closed-form power laws for pulse trains and TRPC
clusters, the average/peak emission limits, full-bandwidth peak power of a
single carrier-modulated pulse, and the amplitude solver behind the
per-mode design table.

Closed-form regime: the analyzer sums every pulse that arrives within one
RBW time constant 1/B_R, so a pulse train at R_p >> B_R reads
P_peak * T_p^2 * R_p^2 and a cluster of N_p pulses at symbol rate R reads
N_p^2 * P_peak * T_p^2 * R^2, independent of B_R.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.integrate import quad, trapezoid

from .config import LOAD_IMPEDANCE, RF_SAMPLE_RATE
from .errors import OutOfModelError, ParameterError
from .trpc import ClusterSpec, MODES, TxMode, rrc_pulse
from .waveform import SampledWaveform, SpectrumEstimate, dbm_to_watts, watts_to_dbm

logger = logging.getLogger(__name__)

ONE_MHZ = 1e6
# Closed-form laws hold only when many repetitions fall inside one RBW time constant
REGIME_FACTOR = 10.0
_RBW_TOLERANCE = 1e-6
# Spectral lines are searched up to this many multiples of 1/T_p from the LO
LINE_SEARCH_SPAN = 1.5


@dataclass(frozen=True)
class PulseTrainPowerModel:
    """Periodic pulse train: FBW peak power (W), pulse width (s), repetition rate (Hz)."""

    p_peak: float
    pulse_width: float
    prf: float

    def __post_init__(self):
        for name in ("p_peak", "pulse_width", "prf"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be positive, got {value}")
        if self.duty_cycle > 1.0 + 1e-12:
            raise ParameterError(
                f"duty cycle {self.duty_cycle:.4g} exceeds 1 (pulse width x PRF)"
            )

    @property
    def duty_cycle(self) -> float:
        return self.pulse_width * self.prf


@dataclass(frozen=True)
class FccMask:
    """
    FCC UWB indoor emission limits.

    Attributes:
        average_limit: Average EIRP limit in dBm per MHz.
        peak_limit_ref: Peak EIRP limit in dBm within ``peak_reference_bw``.
        peak_reference_bw: Reference bandwidth of the peak limit (Hz).
        rbw_range: Allowed measurement RBW range (Hz).
    """

    average_limit: float = -41.25
    peak_limit_ref: float = 0.0
    peak_reference_bw: float = 50e6
    rbw_range: Tuple[float, float] = (1e6, 50e6)

    def __post_init__(self):
        low, high = self.rbw_range
        if not 0 < low <= high:
            raise ParameterError(f"invalid rbw_range {self.rbw_range}")

    def check_rbw(self, rbw: float) -> None:
        low, high = self.rbw_range
        if not low * (1 - _RBW_TOLERANCE) <= rbw <= high * (1 + _RBW_TOLERANCE):
            raise ParameterError(
                f"rbw {rbw:.4g} Hz outside the mask measurement range "
                f"[{low:.4g}, {high:.4g}] Hz"
            )

    def average_limit_dbm(self, rbw: float = ONE_MHZ) -> float:
        """Average limit expressed in a ``rbw``-wide bin (dBm)."""
        return self.average_limit + 10.0 * math.log10(rbw / ONE_MHZ)

    def peak_limit_dbm(self, rbw: float) -> float:
        """Peak limit scaled to ``rbw``: 0 dBm + 20 log10(rbw / 50 MHz)."""
        return self.peak_limit_ref + 20.0 * math.log10(rbw / self.peak_reference_bw)


FCC_UWB = FccMask()


@dataclass(frozen=True)
class FccVerdict:
    """Result of a mask check; margins in dB, positive means headroom."""

    passes: bool
    worst_margin: float
    worst_frequency: float
    binding_constraint: str
    violations: Tuple[Tuple[float, float, float, str], ...] = field(default=(), compare=False)

    def __post_init__(self):
        if self.passes != (self.worst_margin >= 0):
            raise ParameterError(
                f"inconsistent verdict: passes={self.passes} with margin {self.worst_margin:.3f} dB"
            )
        if self.binding_constraint not in ("average", "peak"):
            raise ParameterError(f"unknown constraint '{self.binding_constraint}'")


def duty_cycle_average(model: PulseTrainPowerModel) -> float:
    """Average power (W) of a pulse train: P_peak * T_p * R_p."""
    return model.p_peak * model.duty_cycle


def _check_regime(rate: float, rbw: float, what: str) -> None:
    if rbw <= 0:
        raise ParameterError(f"rbw must be positive, got {rbw}")
    if rate < REGIME_FACTOR * rbw:
        raise OutOfModelError(
            f"{what} {rate:.4g} Hz is below {REGIME_FACTOR:g} x RBW ({rbw:.4g} Hz); "
            f"the closed-form measured-power law does not apply"
        )


def measured_power_pulse_train(model: PulseTrainPowerModel, rbw: float) -> float:
    """Analyzer reading (W) of a pulse train: P_peak * T_p^2 * R_p^2."""
    _check_regime(model.prf, rbw, "pulse repetition rate")
    return model.p_peak * model.pulse_width ** 2 * model.prf ** 2


def measured_power_trpc(
    p_peak: float,
    pulse_width: float,
    n_pulses: int,
    symbol_rate: float,
    rbw: float,
) -> float:
    """Analyzer reading (W) of a TRPC signal: N_p^2 * P_peak * T_p^2 * R^2."""
    if n_pulses < 1:
        raise ParameterError(f"n_pulses must be at least 1, got {n_pulses}")
    _check_regime(symbol_rate, rbw, "symbol rate")
    return n_pulses ** 2 * p_peak * pulse_width ** 2 * symbol_rate ** 2


def _fbw_limits(mode: TxMode, mask: FccMask, rbw: float) -> Dict[str, float]:
    """Largest P_peak (W) allowed by each branch of the mask."""
    spec = mode.cluster
    _check_regime(spec.symbol_rate, rbw, "symbol rate")
    per_watt = spec.n_pulses ** 2 * spec.pulse_width ** 2 * spec.symbol_rate ** 2
    return {
        "average": dbm_to_watts(mask.average_limit_dbm(rbw)) / per_watt,
        "peak": dbm_to_watts(mask.peak_limit_dbm(rbw)) / per_watt,
    }


def binding_constraint(mode: TxMode, mask: FccMask = FCC_UWB, rbw: float = ONE_MHZ) -> str:
    """Which mask branch ('average' or 'peak') limits the mode's peak power."""
    limits = _fbw_limits(mode, mask, rbw)
    return min(limits, key=limits.get)


def max_fbw_peak_power(mode: TxMode, mask: FccMask = FCC_UWB, rbw: float = ONE_MHZ) -> float:
    """
    Largest full-bandwidth peak power (dBm) of the component pulse.

    Inverts the TRPC measured-power law against both mask branches and
    returns the tighter of the two.
    """
    limits = _fbw_limits(mode, mask, rbw)
    binding = min(limits, key=limits.get)
    logger.debug(
        f"{mode.name}: P_peak limit {watts_to_dbm(limits[binding]):.2f} dBm ({binding} binds)"
    )
    return watts_to_dbm(limits[binding])


def fbw_peak_power_of_pulse(
    rf_pulse: SampledWaveform,
    pulse_width: float,
    load_impedance: float = LOAD_IMPEDANCE,
) -> float:
    """
    Full-bandwidth peak power (W): integral of s^2 / (Z * T_p) over one pulse window.

    Args:
        rf_pulse: Samples spanning exactly [-T_p/2, T_p/2], endpoints included.
        pulse_width: T_p in seconds.
        load_impedance: Load in ohms.
    """
    if rf_pulse.is_quadrature:
        raise ParameterError("expected a real RF pulse")
    if load_impedance <= 0:
        raise ParameterError("load_impedance must be positive")
    dt = 1.0 / rf_pulse.sample_rate
    span = (len(rf_pulse) - 1) * dt
    if abs(span - pulse_width) > 0.5 * dt or abs(rf_pulse.start_time + pulse_width / 2) > 0.5 * dt:
        raise ParameterError(
            f"pulse record spans [{rf_pulse.start_time:.4g}, {rf_pulse.start_time + span:.4g}] s, "
            f"expected the window [-{pulse_width / 2:.4g}, {pulse_width / 2:.4g}] s"
        )
    if len(rf_pulse) - 1 < 16:
        raise ParameterError("at least 16 samples per pulse width are required")
    energy = trapezoid(rf_pulse.samples ** 2, dx=dt)
    return float(energy / (load_impedance * pulse_width))


def carrier_modulated_pulse(
    spec: ClusterSpec,
    lo_frequency: float,
    amplitude: float = 1.0,
    sample_rate: Optional[float] = None,
) -> SampledWaveform:
    """One RRC component pulse times cos(w_LO t), sampled over [-T_p/2, T_p/2]."""
    if lo_frequency <= 0:
        raise ParameterError("lo_frequency must be positive")
    rate = sample_rate or max(RF_SAMPLE_RATE, 16.0 * lo_frequency, 64.0 / spec.pulse_width)
    n_intervals = int(math.ceil(spec.pulse_width * rate))
    t = np.linspace(-spec.pulse_width / 2, spec.pulse_width / 2, n_intervals + 1)
    g = rrc_pulse(spec.with_amplitude(amplitude).rrc, t)
    return SampledWaveform(n_intervals / spec.pulse_width, g * np.cos(2 * np.pi * lo_frequency * t), t[0])


def solve_amplitude(
    mode: TxMode,
    mask: FccMask = FCC_UWB,
    load_impedance: float = LOAD_IMPEDANCE,
    rbw: float = ONE_MHZ,
    lo_frequency: Optional[float] = None,
) -> float:
    """
    Largest component-pulse amplitude A_TX (V) that keeps the mode inside the mask.

    Power is quadratic in amplitude, so one reference evaluation at 1 V
    fixes the answer.

    Example:
        amplitude_mv = solve_amplitude(MODES["r10"]) * 1e3  # about 32 mV
    """
    lo = lo_frequency or mode.lo_frequency
    reference = fbw_peak_power_of_pulse(
        carrier_modulated_pulse(mode.cluster, lo, 1.0), mode.cluster.pulse_width, load_impedance
    )
    target = dbm_to_watts(max_fbw_peak_power(mode, mask, rbw))
    amplitude = math.sqrt(target / reference)
    logger.debug(f"{mode.name}: reference P_peak {reference:.4g} W/V^2 -> A_TX {amplitude * 1e3:.3f} mV")
    return amplitude


def coherence_factor(spec: ClusterSpec) -> float:
    """
    (integral of g)^2 / (T_p * integral of g^2 over the pulse window).

    Ratio between what an RBW-resolving analyzer sees for a train of shaped
    pulses and the rectangular-pulse assumption of the closed-form laws.
    """
    rrc = spec.with_amplitude(1.0).rrc
    area, _ = quad(lambda t: rrc_pulse(rrc, t), -rrc.truncation, rrc.truncation, limit=200)
    energy, _ = quad(
        lambda t: rrc_pulse(rrc, t) ** 2, -spec.pulse_width / 2, spec.pulse_width / 2, limit=200
    )
    return area ** 2 / (spec.pulse_width * energy)


def line_shape_factor(spec: ClusterSpec) -> float:
    """
    Strongest spectral line of a random-data frame relative to the line at the carrier.

    With equiprobable bits the mean cluster is the N_p reference pulses alone,
    so the lines sit at multiples of the symbol rate with weights
    |G(f) * sum_i exp(-j 2 pi f t_i)|^2 over the reference positions t_i. The
    RRC spectrum G rises above G(0) before its roll-off, so the strongest
    line is usually a few hundred MHz away from the LO.
    """
    rrc = spec.with_amplitude(1.0).rrc
    dt = spec.pulse_width / 64.0
    t = np.arange(-rrc.truncation, rrc.truncation + dt / 2, dt)
    g = rrc_pulse(rrc, t)
    centres, is_data = spec.pulse_layout()
    references = centres[~is_data]

    n_lines = int(LINE_SEARCH_SPAN / (spec.pulse_width * spec.symbol_rate)) + 1
    f = np.arange(n_lines) * spec.symbol_rate
    pulse_spectrum = np.exp(-2j * np.pi * np.outer(f, t)) @ g * dt
    array_factor = np.exp(-2j * np.pi * np.outer(f, references)).sum(axis=1)
    lines = np.abs(pulse_spectrum * array_factor) ** 2
    strongest = int(np.argmax(lines))
    logger.debug(
        f"strongest line {strongest} x {spec.symbol_rate / 1e6:.4g} MHz from the LO, "
        f"{10 * math.log10(lines[strongest] / lines[0]):+.2f} dB over the carrier line"
    )
    return float(lines[strongest] / lines[0])


def predicted_peak_bin_power(spec: ClusterSpec, p_peak: float, rbw: float = ONE_MHZ) -> float:
    """
    Expected analyzer peak bin (W) for a random-data TRPC frame.

    The spectral line at the carrier carries the closed-form power scaled by
    the pulse coherence factor, and :func:`line_shape_factor` lifts it to the
    strongest line of the comb. Equiprobable data adds a continuum with the
    same spectral shape that puts another rbw / R of that line into its bin.
    """
    line = measured_power_trpc(p_peak, spec.pulse_width, spec.n_pulses, spec.symbol_rate, rbw)
    return line * coherence_factor(spec) * line_shape_factor(spec) * (1.0 + rbw / spec.symbol_rate)


def emulator_limit_amplitude(mode: TxMode, mask: FccMask = FCC_UWB, rbw: float = ONE_MHZ) -> float:
    """Amplitude at which the predicted analyzer reading sits exactly on the average limit."""
    amplitude = solve_amplitude(mode, mask, rbw=rbw)
    p_peak = dbm_to_watts(max_fbw_peak_power(mode, mask, rbw))
    reading = predicted_peak_bin_power(mode.cluster, p_peak, rbw)
    limit = dbm_to_watts(min(mask.average_limit_dbm(rbw), mask.peak_limit_dbm(rbw)))
    return amplitude * math.sqrt(limit / reading)


def check_fcc(spectrum: SpectrumEstimate, mask: FccMask = FCC_UWB) -> FccVerdict:
    """
    Compare every spectrum bin against both mask branches.

    Average branch: bin power normalized to 1 MHz against -41.25 dBm.
    Peak branch: bin power against 0 dBm + 20 log10(rbw / 50 MHz).
    """
    mask.check_rbw(spectrum.rbw)
    powers = spectrum.bin_powers
    average_margin = mask.average_limit - (powers - 10.0 * math.log10(spectrum.rbw / ONE_MHZ))
    peak_margin = mask.peak_limit_dbm(spectrum.rbw) - powers
    margin = np.minimum(average_margin, peak_margin)

    worst = int(np.argmin(margin))
    binding = "average" if average_margin[worst] <= peak_margin[worst] else "peak"
    violations = tuple(
        (
            float(spectrum.bin_frequencies[k]),
            float(powers[k]),
            float(margin[k]),
            "average" if average_margin[k] <= peak_margin[k] else "peak",
        )
        for k in np.flatnonzero(margin < 0)
    )
    worst_margin = float(margin[worst])
    verdict = FccVerdict(
        passes=worst_margin >= 0,
        worst_margin=worst_margin,
        worst_frequency=float(spectrum.bin_frequencies[worst]),
        binding_constraint=binding,
        violations=violations,
    )
    logger.info(
        f"FCC check: {'PASS' if verdict.passes else 'FAIL'}, worst margin "
        f"{worst_margin:+.2f} dB at {verdict.worst_frequency / 1e9:.4f} GHz ({binding})"
    )
    return verdict


def compliance_report(
    verdict: FccVerdict,
    spectrum: SpectrumEstimate,
    mode_name: str = "",
) -> Dict[str, object]:
    """Structured key/value form of a verdict."""
    return {
        "mode": mode_name,
        "rbw_hz": spectrum.rbw,
        "passes": verdict.passes,
        "worst_margin_db": round(verdict.worst_margin, 4),
        "worst_frequency_hz": verdict.worst_frequency,
        "binding_constraint": verdict.binding_constraint,
        "violations": [
            {
                "frequency_hz": f,
                "power_dbm": round(p, 4),
                "margin_db": round(m, 4),
                "constraint": c,
            }
            for f, p, m, c in verdict.violations
        ],
    }


def write_compliance_report(report: Dict[str, object], path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(report, f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise OSError(f"Cannot write compliance report to {path}: {e}") from e
    return path


def table1_rows(mask: FccMask = FCC_UWB, load_impedance: float = LOAD_IMPEDANCE) -> List[Dict[str, object]]:
    """Recompute the per-mode P_peak and amplitude limits next to the published values."""
    rows = []
    for mode in MODES.values():
        p_peak = max_fbw_peak_power(mode, mask)
        amplitude = solve_amplitude(mode, mask, load_impedance)
        power_delta = p_peak - mode.p_peak_rrc
        amplitude_delta = (amplitude - mode.max_amplitude) / mode.max_amplitude * 100.0
        note = ""
        if abs(power_delta) > 0.1:
            note = "direct inversion differs from the published value"
            logger.warning(f"{mode.name}: P_peak differs from the published value by {power_delta:+.2f} dB")
        rows.append(
            {
                "mode": mode.name,
                "data_rate_mbps": mode.data_rate_mbps,
                "n_pulses": mode.cluster.n_pulses,
                "pulse_width_ns": mode.cluster.pulse_width * 1e9,
                "p_peak_dbm": p_peak,
                "published_p_peak_dbm": mode.p_peak_rrc,
                "p_peak_delta_db": power_delta,
                "amplitude_mv": amplitude * 1e3,
                "published_amplitude_mv": mode.max_amplitude * 1e3,
                "amplitude_delta_pct": amplitude_delta,
                "binding_constraint": binding_constraint(mode, mask),
                "note": note,
            }
        )
    return rows
