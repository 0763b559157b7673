"""
Behavioral model of the direct-conversion transmitter front end.

- baseband DC offsets leak the LO into the RF output (carrier leakage)
- I/Q gain and phase imbalance leave a residual image sideband
- the output driver is a variable-gain scalar in [-12, 0] dB

The dBc figures quoted for a built transmitter are treated as calibration
targets: the solvers below return the impairment values that produce them.
"""

import logging
import math
from dataclasses import dataclass, fields
from typing import Mapping, Optional, Tuple

import numpy as np

from .errors import ParameterError
from .trpc import LoConfig, check_lo_rate, quadrature_mix, rails_bandwidth
from .waveform import (
    SampledWaveform,
    SpectrumEstimate,
    check_aligned,
    psd_estimate,
    watts_to_dbm,
)

logger = logging.getLogger(__name__)

OUTPUT_GAIN_RANGE = (-12.0, 0.0)
# Measured at a 3.71 GHz LO with a 200 MHz lower-sideband tone
MEASURED_CARRIER_LEAKAGE_DBC = 37.1
MEASURED_SSB_SUPPRESSION_DBC = 28.9


@dataclass(frozen=True)
class ImpairmentConfig:
    """
    Front-end impairments.

    Attributes:
        dc_offset_i: DC offset added to the I rail (V).
        dc_offset_q: DC offset added to the Q rail (V).
        gain_imbalance: I-path gain relative to Q-path (dB), split evenly.
        phase_imbalance: Deviation of the Q LO from 90 degrees (degrees).
        output_gain: Output driver gain setting (dB), within [-12, 0].
    """

    dc_offset_i: float = 0.0
    dc_offset_q: float = 0.0
    gain_imbalance: float = 0.0
    phase_imbalance: float = 0.0
    output_gain: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise ParameterError(f"{f.name} must be finite, got {value}")
        low, high = OUTPUT_GAIN_RANGE
        if not low <= self.output_gain <= high:
            raise ParameterError(
                f"output_gain {self.output_gain} dB outside the driver range [{low}, {high}] dB"
            )

    @classmethod
    def from_mapping(cls, data: Mapping[str, float]) -> "ImpairmentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown impairment fields: {', '.join(sorted(unknown))}")
        try:
            values = {key: float(value) for key, value in data.items()}
        except (TypeError, ValueError) as e:
            raise ParameterError(f"impairment values must be numbers: {e}") from e
        return cls(**values)

    @property
    def rail_gains(self) -> Tuple[float, float]:
        return 10.0 ** (self.gain_imbalance / 40.0), 10.0 ** (-self.gain_imbalance / 40.0)

    @property
    def linear_output_gain(self) -> float:
        return 10.0 ** (self.output_gain / 20.0)


IDEAL = ImpairmentConfig()


@dataclass(frozen=True)
class RfMetrics:
    carrier_leakage: float
    ssb_suppression: float


def apply_tx_impairments(
    i: SampledWaveform,
    q: SampledWaveform,
    cfg: ImpairmentConfig,
) -> Tuple[SampledWaveform, SampledWaveform]:
    """Rail gains and DC offsets: i' = g_i*i + d_i, q' = g_q*q + d_q."""
    check_aligned(i, q)
    g_i, g_q = cfg.rail_gains
    return (
        i.with_samples(g_i * i.samples + cfg.dc_offset_i),
        q.with_samples(g_q * q.samples + cfg.dc_offset_q),
    )


def upconvert_impaired(
    i: SampledWaveform,
    q: SampledWaveform,
    lo: LoConfig,
    cfg: ImpairmentConfig,
    baseband_bandwidth: Optional[float] = None,
) -> SampledWaveform:
    """
    I-Q modulator with front-end impairments.

    Returns i'(t) cos(w t + phi) - q'(t) sin(w t + phi + phase_imbalance),
    scaled by the output gain. With ``IDEAL`` this equals ``upconvert_iq``;
    ``baseband_bandwidth`` is measured from the rails when omitted.
    """
    if i.is_quadrature or q.is_quadrature:
        raise ParameterError("upconvert_impaired expects two real rails")
    i_imp, q_imp = apply_tx_impairments(i, q, cfg)
    if baseband_bandwidth is None:
        baseband_bandwidth = rails_bandwidth(i, q)
    check_lo_rate(lo, i.sample_rate, baseband_bandwidth)
    rf = quadrature_mix(
        i_imp.samples,
        q_imp.samples,
        i.times(),
        lo,
        q_phase_error=math.radians(cfg.phase_imbalance),
    )
    return i.with_samples(rf * cfg.linear_output_gain)


def quadrature_tone(
    f_m: float,
    amplitude: float,
    sample_rate: float,
    duration: float,
    sideband: str = "lower",
) -> Tuple[SampledWaveform, SampledWaveform]:
    """
    Single-sideband test pair: i = A cos(w_m t), q = -/+ A sin(w_m t).

    After ideal up-conversion the ``lower`` pair lands at f_LO - f_m only,
    the ``upper`` pair at f_LO + f_m only.
    """
    if sideband not in ("lower", "upper"):
        raise ParameterError(f"sideband must be 'lower' or 'upper', got '{sideband}'")
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    sign = -1.0 if sideband == "lower" else 1.0
    return (
        SampledWaveform(sample_rate, amplitude * np.cos(2 * np.pi * f_m * t)),
        SampledWaveform(sample_rate, sign * amplitude * np.sin(2 * np.pi * f_m * t)),
    )


def measure_carrier_leakage(
    spectrum: SpectrumEstimate,
    f_lo: float,
    signal_band: Tuple[float, float],
) -> float:
    """
    Carrier suppression in dBc: integrated desired-signal power over carrier bin power.

    Bins within 3 RBW of the carrier are excluded from the signal integral.
    """
    f_low, f_high = signal_band
    if not f_low < f_high:
        raise ParameterError(f"empty signal band {signal_band}")
    carrier_dbm = spectrum.power_near(f_lo)

    freqs = spectrum.bin_frequencies
    in_band = (freqs >= f_low) & (freqs <= f_high) & (np.abs(freqs - f_lo) > 3 * spectrum.rbw)
    if not np.any(in_band):
        raise ParameterError(f"no spectrum bins in the signal band {signal_band}")
    signal_w = np.sum(spectrum.powers_watts()[in_band]) * spectrum.bin_spacing / spectrum.rbw
    leakage = watts_to_dbm(signal_w) - carrier_dbm
    logger.debug(f"Carrier leakage at {f_lo / 1e9:.4f} GHz: {leakage:.2f} dBc")
    return leakage


def measure_ssb_suppression(
    spectrum: SpectrumEstimate,
    f_lo: float,
    f_m: float,
    sideband: str = "lower",
) -> float:
    """Desired-sideband bin power minus image-sideband bin power (dBc)."""
    desired, image = (f_lo - f_m, f_lo + f_m) if sideband == "lower" else (f_lo + f_m, f_lo - f_m)
    suppression = spectrum.power_near(desired) - spectrum.power_near(image)
    logger.debug(f"SSB suppression for f_m = {f_m / 1e6:.1f} MHz: {suppression:.2f} dBc")
    return suppression


def image_rejection_db(gain_db: float, phase_deg: float) -> float:
    """Analytic image rejection (1 + 2k cos p + k^2) / (1 - 2k cos p + k^2), k = 10^(-g/20)."""
    k = 10.0 ** (-gain_db / 20.0)
    c = math.cos(math.radians(phase_deg))
    denominator = 1.0 - 2.0 * k * c + k * k
    if denominator <= 0:
        return math.inf
    return 10.0 * math.log10((1.0 + 2.0 * k * c + k * k) / denominator)


def carrier_leakage_db(cfg: ImpairmentConfig, tone_amplitude: float) -> float:
    """Analytic carrier suppression (dBc) for a lower-sideband quadrature tone."""
    g_i, g_q = cfg.rail_gains
    phi = math.radians(cfg.phase_imbalance)
    desired = tone_amplitude * abs(g_i + g_q * np.exp(1j * phi)) / 2.0
    carrier = abs(cfg.dc_offset_i + 1j * cfg.dc_offset_q * np.exp(1j * phi))
    if carrier == 0:
        return math.inf
    return 20.0 * math.log10(desired / carrier)


def solve_phase_for_ssb(dbc: float) -> float:
    """Phase imbalance (degrees, balanced gains) that yields ``dbc`` of SSB suppression."""
    if dbc <= 0:
        raise ParameterError("SSB suppression target must be positive")
    return math.degrees(2.0 * math.atan(10.0 ** (-dbc / 20.0)))


def solve_gain_for_ssb(dbc: float) -> float:
    """Gain imbalance (dB, zero phase error) that yields ``dbc`` of SSB suppression."""
    if dbc <= 0:
        raise ParameterError("SSB suppression target must be positive")
    r = 10.0 ** (dbc / 20.0)
    return -20.0 * math.log10((r - 1.0) / (r + 1.0))


def solve_dc_for_leakage(
    dbc: float,
    tone_amplitude: float,
    gain_imbalance: float = 0.0,
    phase_imbalance: float = 0.0,
) -> float:
    """
    Equal I/Q DC offset (V) giving ``dbc`` of carrier suppression for a tone of
    ``tone_amplitude``, with the given gain and phase imbalance present.
    """
    if tone_amplitude <= 0:
        raise ParameterError("tone_amplitude must be positive")
    unit = ImpairmentConfig(
        dc_offset_i=1.0,
        dc_offset_q=1.0,
        gain_imbalance=gain_imbalance,
        phase_imbalance=phase_imbalance,
    )
    return 10.0 ** ((carrier_leakage_db(unit, tone_amplitude) - dbc) / 20.0)


def calibrate_to_targets(
    tone_amplitude: float,
    carrier_leakage_dbc: float = MEASURED_CARRIER_LEAKAGE_DBC,
    ssb_suppression_dbc: float = MEASURED_SSB_SUPPRESSION_DBC,
    output_gain: float = 0.0,
) -> ImpairmentConfig:
    """
    Impairment config (phase error plus equal DC offsets) hitting both RF targets.

    The targets default to the figures measured on the built transmitter.
    """
    phase = solve_phase_for_ssb(ssb_suppression_dbc)
    dc = solve_dc_for_leakage(carrier_leakage_dbc, tone_amplitude, phase_imbalance=phase)
    cfg = ImpairmentConfig(
        dc_offset_i=dc, dc_offset_q=dc, phase_imbalance=phase, output_gain=output_gain
    )
    logger.info(
        f"Calibrated front end: DC offset {dc * 1e3:.4f} mV per rail, "
        f"phase imbalance {phase:.3f} deg"
    )
    return cfg


def rf_metrics(
    cfg: ImpairmentConfig,
    lo: LoConfig,
    f_m: float,
    tone_amplitude: float,
    sample_rate: float,
    rbw: float,
    duration: float = None,
) -> RfMetrics:
    """Drive a lower-sideband tone through the impaired modulator and measure both metrics."""
    duration = duration or 20.0 / rbw
    i, q = quadrature_tone(f_m, tone_amplitude, sample_rate, duration)
    rf = upconvert_impaired(i, q, lo, cfg, baseband_bandwidth=f_m)
    spectrum = psd_estimate(rf, rbw)
    band = (lo.frequency - f_m - 2 * rbw, lo.frequency - f_m + 2 * rbw)
    return RfMetrics(
        carrier_leakage=measure_carrier_leakage(spectrum, lo.frequency, band),
        ssb_suppression=measure_ssb_suppression(spectrum, lo.frequency, f_m),
    )
