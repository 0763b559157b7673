"""
TRPC signal synthesis: RRC component pulse, pulse clusters, frames and
ideal I-Q up-conversion.

Cluster layout (one symbol of duration T_s):
- N_p reference/data doublets, i.e. 2*N_p physical pulses
- pulse k is centred at T_p/2 + k*T_d; even k are reference pulses (always
  positive), odd k are data pulses with polarity +1 for bit 1, -1 for bit 0

The component pulse is a root-raised-cosine with period T_p/2, truncated at
the zero crossing of its tail nearest +/-T_p (about 0.93 T_p for beta = 0.25)
and peak-normalized to the cluster amplitude A_TX.
"""

import logging
import math
from dataclasses import dataclass, replace
from functools import cached_property, lru_cache
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import brentq

from .config import BASEBAND_SAMPLE_RATE, LOAD_IMPEDANCE
from .errors import ParameterError
from .waveform import SampledWaveform, check_aligned, occupied_bandwidth

logger = logging.getLogger(__name__)

DEFAULT_BETA = 0.25
MIN_SAMPLES_PER_PULSE = 16
# Relative distance from a 0/0 point of the RRC formula that is evaluated by its limit
_SINGULAR_TOLERANCE = 1e-9


@dataclass(frozen=True)
class RrcParams:
    """Root-raised-cosine pulse parameters (period and truncation in seconds)."""

    period: float
    beta: float = DEFAULT_BETA
    truncation: float = None
    normalization: float = 1.0

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ParameterError(f"roll-off beta must lie in (0, 1), got {self.beta}")
        if not self.period > 0:
            raise ParameterError(f"RRC period must be positive, got {self.period}")
        if self.truncation is None:
            object.__setattr__(self, "truncation", 2.0 * self.period)
        if not self.truncation > 0:
            raise ParameterError(f"truncation must be positive, got {self.truncation}")
        if not math.isfinite(self.normalization):
            raise ParameterError("normalization must be finite")


def _rrc_unit(x: np.ndarray, beta: float) -> np.ndarray:
    """Standard RRC impulse response at x = t/T, with both 0/0 points filled by their limits."""
    value = np.empty_like(x)
    at_zero = np.abs(x) < _SINGULAR_TOLERANCE
    at_edge = np.abs(np.abs(4.0 * beta * x) - 1.0) < _SINGULAR_TOLERANCE
    regular = ~(at_zero | at_edge)

    value[at_zero] = 1.0 - beta + 4.0 * beta / np.pi
    value[at_edge] = (beta / np.sqrt(2.0)) * (
        (1.0 + 2.0 / np.pi) * np.sin(np.pi / (4.0 * beta))
        + (1.0 - 2.0 / np.pi) * np.cos(np.pi / (4.0 * beta))
    )

    xr = x[regular]
    value[regular] = (
        np.sin(np.pi * xr * (1.0 - beta)) + 4.0 * beta * xr * np.cos(np.pi * xr * (1.0 + beta))
    ) / (np.pi * xr * (1.0 - (4.0 * beta * xr) ** 2))
    return value


def rrc_pulse(params: RrcParams, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    Evaluate the peak-normalized RRC pulse.

    The roll-off form used here differs from the textbook impulse response by
    the constant pi/(4*beta); after peak normalization both are identical.

    Args:
        params: Pulse parameters.
        t: Time(s) in seconds relative to the pulse centre.

    Returns:
        Amplitude in volts; exactly ``params.normalization`` at t = 0 and
        zero for |t| > truncation.
    """
    t_arr = np.asarray(t, dtype=float)
    x = np.atleast_1d(t_arr / params.period)
    value = _rrc_unit(x, params.beta) / (1.0 - params.beta + 4.0 * params.beta / np.pi)
    value[np.abs(x) * params.period > params.truncation] = 0.0
    value = value * params.normalization
    if t_arr.ndim == 0:
        return float(value[0])
    return value.reshape(t_arr.shape)


@lru_cache(maxsize=None)
def tail_zero(beta: float = DEFAULT_BETA) -> float:
    """Zero of the unit RRC tail closest to x = t/T = 2, i.e. closest to one pulse width."""
    x = np.linspace(1.0, 3.0, 2001)
    value = _rrc_unit(x, beta)
    brackets = np.nonzero(np.sign(value[:-1]) * np.sign(value[1:]) <= 0)[0]
    if brackets.size == 0:
        return 2.0

    def unit(u):
        return float(_rrc_unit(np.array([u]), beta)[0])

    roots = [x[i] if value[i] == 0 else brentq(unit, x[i], x[i + 1]) for i in brackets]
    return float(min(roots, key=lambda r: abs(r - 2.0)))


@dataclass(frozen=True)
class ClusterSpec:
    """
    TRPC signaling parameters for one symbol.

    Attributes:
        n_pulses: Number of reference/data doublets N_p.
        pulse_width: Component pulse width T_p (s).
        pulse_delay: Reference-to-data delay T_d (s).
        symbol_duration: Symbol duration T_s (s).
        amplitude: Component pulse peak A_TX (V).
        beta: RRC roll-off.
    """

    n_pulses: int
    pulse_width: float
    pulse_delay: float
    symbol_duration: float
    amplitude: float
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        if int(self.n_pulses) != self.n_pulses or self.n_pulses < 1:
            raise ParameterError(f"n_pulses must be a positive integer, got {self.n_pulses}")
        for name in ("pulse_width", "pulse_delay", "symbol_duration"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be positive, got {value}")
        if not (math.isfinite(self.amplitude) and self.amplitude >= 0):
            raise ParameterError(f"amplitude must be non-negative, got {self.amplitude}")
        # validates beta
        self.rrc

    @property
    def symbol_rate(self) -> float:
        return 1.0 / self.symbol_duration

    @property
    def rrc(self) -> RrcParams:
        params = RrcParams(period=self.pulse_width / 2.0, beta=self.beta, normalization=self.amplitude)
        return replace(params, truncation=params.period * tail_zero(params.beta))

    @property
    def cluster_span(self) -> float:
        """Time from the start of the symbol to the end of the last pulse window."""
        return (2 * self.n_pulses - 1) * self.pulse_delay + self.pulse_width

    def pulse_layout(self) -> Tuple[np.ndarray, np.ndarray]:
        """(pulse centres within the symbol, is-data flags) for all 2*N_p pulses."""
        k = np.arange(2 * self.n_pulses)
        return self.pulse_width / 2.0 + k * self.pulse_delay, k % 2 == 1

    def pulse_signs(self, bit: int) -> np.ndarray:
        _, is_data = self.pulse_layout()
        return np.where(is_data, 1.0 if bit else -1.0, 1.0)

    def with_amplitude(self, amplitude: float) -> "ClusterSpec":
        return replace(self, amplitude=amplitude)

    def guard_margin(self, tau_max: float = 0.0) -> float:
        """T_s - ((2N_p - 1) T_d + T_p + tau_max); negative means adjacent symbols overlap."""
        return self.symbol_duration - (self.cluster_span + tau_max)

    @cached_property
    def _squared_area(self) -> float:
        # integral of s^2 over the rendered symbol [0, T_s], averaged over both bits
        dt = self.pulse_width / 64.0
        t = np.arange(0.0, self.symbol_duration + dt / 2, dt)
        centres, _ = self.pulse_layout()
        areas = []
        for bit in (0, 1):
            s = np.zeros_like(t)
            for centre, sign in zip(centres, self.pulse_signs(bit)):
                s += sign * rrc_pulse(self.rrc, t - centre)
            areas.append(trapezoid(s ** 2, dx=dt))
        return float(np.mean(areas))

    def bit_energy(self, load_impedance: float = LOAD_IMPEDANCE) -> float:
        """
        Energy (J) of one cluster as synthesized, averaged over both bit values.

        The first pulse's leading tail is cut at t = 0 and the last one's at
        T_s, exactly as :func:`synth_cluster` renders them. When pulses closer
        than two truncation half-widths overlap, a single cluster differs from
        this average by the reference/data cross terms, which change sign with
        the bit and cancel in the average.
        """
        if not load_impedance > 0:
            raise ParameterError(f"load_impedance must be positive, got {load_impedance}")
        return self._squared_area / load_impedance

    @property
    def energy_per_bit(self) -> float:
        """:meth:`bit_energy` into the configured default load."""
        return self.bit_energy()


@dataclass(frozen=True)
class TxMode:
    """
    One transmission mode of the design table.

    ``data_rate`` and ``bw_3db`` are in Hz; ``p_peak_rrc`` (dBm) and
    ``max_amplitude`` (V) are the published values, kept for reporting.
    """

    name: str
    data_rate: float
    cluster: ClusterSpec
    bw_3db: float
    p_peak_rrc: float
    max_amplitude: float
    lo_frequency: float

    def __post_init__(self):
        if not math.isclose(self.data_rate, self.cluster.symbol_rate, rel_tol=1e-9):
            raise ParameterError(
                f"mode {self.name}: data_rate {self.data_rate:.6g} does not match "
                f"symbol rate {self.cluster.symbol_rate:.6g}"
            )
        if self.bw_3db <= 0 or self.max_amplitude <= 0 or self.lo_frequency <= 0:
            raise ParameterError(f"mode {self.name}: bandwidth, amplitude and LO must be positive")

    @property
    def data_rate_mbps(self) -> float:
        return self.data_rate / 1e6


@dataclass(frozen=True)
class LoConfig:
    """Local oscillator (frequency in Hz, phase in rad, amplitude in V)."""

    frequency: float
    phase: float = 0.0
    amplitude: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.frequency) and self.frequency > 0):
            raise ParameterError(f"LO frequency must be positive, got {self.frequency}")
        if not (math.isfinite(self.phase) and math.isfinite(self.amplitude)):
            raise ParameterError("LO phase and amplitude must be finite")


LOW_BAND_LO = 3.827e9
HIGH_BAND_LO = 7.884e9


def _table_mode(rate_mbps, n_pulses, t_p_ns, bw_mhz, p_peak_dbm, amplitude_mv, lo) -> TxMode:
    t_s = 1e-6 / rate_mbps
    t_p = t_p_ns * 1e-9
    t_d = t_p
    if (2 * n_pulses - 1) * t_d + t_p > t_s:
        # compress the doublet spacing so the whole cluster fits in the symbol
        t_d = (t_s - t_p) / (2 * n_pulses - 1)
    amplitude = amplitude_mv * 1e-3
    return TxMode(
        name=f"r{rate_mbps}",
        data_rate=rate_mbps * 1e6,
        cluster=ClusterSpec(n_pulses, t_p, t_d, t_s, amplitude),
        bw_3db=bw_mhz * 1e6,
        p_peak_rrc=p_peak_dbm,
        max_amplitude=amplitude,
        lo_frequency=lo,
    )


MODES: Dict[str, TxMode] = {
    mode.name: mode
    for mode in (
        _table_mode(10, 8, 1.65, 650, -23.47, 32.8, LOW_BAND_LO),
        _table_mode(20, 8, 1.65, 650, -29.47, 16.4, LOW_BAND_LO),
        _table_mode(40, 8, 0.85, 1180, -29.47, 16.4, LOW_BAND_LO),
        _table_mode(100, 4, 0.85, 1180, -31.93, 12.36, HIGH_BAND_LO),
        _table_mode(200, 4, 0.85, 1180, -37.9, 6.21, HIGH_BAND_LO),
        _table_mode(250, 3, 0.85, 1180, -37.3, 6.63, HIGH_BAND_LO),
        _table_mode(300, 2, 0.85, 1180, -35.4, 8.28, HIGH_BAND_LO),
    )
}


def get_mode(name: str) -> TxMode:
    """Look up a preset by name (``r10`` ... ``r300``)."""
    try:
        return MODES[name]
    except KeyError:
        raise ParameterError(
            f"unknown mode '{name}'; available: {', '.join(MODES)}"
        ) from None


@lru_cache(maxsize=None)
def _warn_if_overlapping(spec: ClusterSpec) -> None:
    if spec.pulse_delay < spec.pulse_width * (1 - 1e-9):
        logger.warning(
            f"pulse_delay {spec.pulse_delay * 1e9:.3f} ns is shorter than pulse_width "
            f"{spec.pulse_width * 1e9:.3f} ns; adjacent pulses overlap"
        )


def _check_sample_rate(spec: ClusterSpec, sample_rate: float) -> None:
    if not sample_rate > 0:
        raise ParameterError(f"sample_rate must be positive, got {sample_rate}")
    per_pulse = spec.pulse_width * sample_rate
    if per_pulse < MIN_SAMPLES_PER_PULSE:
        raise ParameterError(
            f"sample rate {sample_rate:.4g} Hz gives {per_pulse:.1f} samples per pulse width; "
            f"at least {MIN_SAMPLES_PER_PULSE} are required"
        )


def _render(spec: ClusterSpec, bits: np.ndarray, sample_rate: float) -> np.ndarray:
    """Baseband samples of consecutive clusters, pulse tails clipped to the record."""
    n_total = int(round(bits.size * spec.symbol_duration * sample_rate))
    centres, is_data = spec.pulse_layout()

    symbol_starts = np.arange(bits.size) * spec.symbol_duration
    all_centres = (symbol_starts[:, None] + centres[None, :]).ravel()
    data_sign = np.where(bits[:, None] == 1, 1.0, -1.0)
    signs = np.where(is_data[None, :], data_sign, 1.0).ravel()

    half = int(math.ceil(spec.pulse_width * sample_rate)) + 1
    offsets = np.arange(-half, half + 1)
    idx = np.floor(all_centres * sample_rate).astype(np.int64)[:, None] + offsets[None, :]
    values = rrc_pulse(spec.rrc, idx / sample_rate - all_centres[:, None]) * signs[:, None]

    inside = (idx >= 0) & (idx < n_total)
    return np.bincount(idx[inside], weights=values[inside], minlength=n_total)


def synth_frame(
    bits: Sequence[int],
    spec: ClusterSpec,
    sample_rate: float = BASEBAND_SAMPLE_RATE,
) -> SampledWaveform:
    """
    Synthesize the baseband TRPC frame for a bit sequence.

    Args:
        bits: Sequence of 0/1 values, one cluster per bit.
        spec: Cluster parameters.
        sample_rate: Output sample rate in Hz.

    Returns:
        Real baseband waveform of duration len(bits) * T_s starting at t = 0.

    Example:
        >>> frame = synth_frame([1, 0, 1], MODES["r10"].cluster)
    """
    bits = np.asarray(bits)
    if bits.ndim != 1 or bits.size == 0:
        raise ParameterError("bit sequence must be a non-empty 1-D sequence")
    if not np.all((bits == 0) | (bits == 1)):
        raise ParameterError("bits must be 0 or 1")
    _check_sample_rate(spec, sample_rate)
    _warn_if_overlapping(spec)

    samples = _render(spec, bits.astype(np.int64), sample_rate)
    logger.debug(f"Synthesized {bits.size} symbols ({samples.size} samples at {sample_rate:.4g} Hz)")
    return SampledWaveform(sample_rate, samples, 0.0)


def synth_cluster(
    spec: ClusterSpec,
    bit: int,
    sample_rate: float = BASEBAND_SAMPLE_RATE,
) -> SampledWaveform:
    """Baseband waveform of a single symbol (one pulse cluster)."""
    if bit not in (0, 1):
        raise ParameterError(f"bit must be 0 or 1, got {bit}")
    return synth_frame([bit], spec, sample_rate)


def quadrature_mix(
    i_samples: np.ndarray,
    q_samples: np.ndarray,
    times: np.ndarray,
    lo: LoConfig,
    q_phase_error: float = 0.0,
) -> np.ndarray:
    """i*cos(wt + phi) - q*sin(wt + phi + q_phase_error), scaled by the LO amplitude."""
    theta = 2.0 * np.pi * lo.frequency * times + lo.phase
    return lo.amplitude * (i_samples * np.cos(theta) - q_samples * np.sin(theta + q_phase_error))


def rails_bandwidth(i: SampledWaveform, q: SampledWaveform) -> float:
    """Occupied one-sided bandwidth (Hz) of an I-Q rail pair."""
    return max(occupied_bandwidth(i), occupied_bandwidth(q))


def check_lo_rate(lo: LoConfig, sample_rate: float, baseband_bandwidth: float) -> None:
    if lo.frequency + baseband_bandwidth >= sample_rate / 2.0:
        raise ParameterError(
            f"LO {lo.frequency:.4g} Hz plus baseband bandwidth {baseband_bandwidth:.4g} Hz "
            f"exceeds the Nyquist frequency {sample_rate / 2.0:.4g} Hz"
        )


def upconvert_iq(
    i_baseband: SampledWaveform,
    q_baseband: SampledWaveform,
    lo: LoConfig,
    baseband_bandwidth: Optional[float] = None,
) -> SampledWaveform:
    """
    Ideal I-Q modulator: i(t) cos(w_LO t + phi) - q(t) sin(w_LO t + phi).

    Args:
        i_baseband, q_baseband: Aligned real baseband rails.
        lo: Local oscillator.
        baseband_bandwidth: One-sided bandwidth of the rails, used for the
            Nyquist check; measured from the rails (99 % energy) when None.

    Returns:
        Real RF waveform on the same time grid.
    """
    if i_baseband.is_quadrature or q_baseband.is_quadrature:
        raise ParameterError("upconvert_iq expects two real rails")
    check_aligned(i_baseband, q_baseband)
    if baseband_bandwidth is None:
        baseband_bandwidth = rails_bandwidth(i_baseband, q_baseband)
    check_lo_rate(lo, i_baseband.sample_rate, baseband_bandwidth)
    rf = quadrature_mix(i_baseband.samples, q_baseband.samples, i_baseband.times(), lo)
    return i_baseband.with_samples(rf)


def iq_feed(baseband: SampledWaveform) -> Tuple[SampledWaveform, SampledWaveform]:
    """Identical pulse train on both rails, scaled so the RF envelope equals the baseband."""
    rail = baseband.scaled(1.0 / math.sqrt(2.0))
    return rail, rail


def transmit_frame(
    bits: Sequence[int],
    spec: ClusterSpec,
    lo: LoConfig,
    sample_rate: float = BASEBAND_SAMPLE_RATE,
) -> Tuple[SampledWaveform, SampledWaveform]:
    """Synthesize and up-convert a frame; returns (rf, baseband)."""
    baseband = synth_frame(bits, spec, sample_rate)
    i, q = iq_feed(baseband)
    rf = upconvert_iq(i, q, lo, pulse_bandwidth_3db(spec))
    return rf, baseband


@lru_cache(maxsize=64)
def pulse_bandwidth_3db(spec: ClusterSpec) -> float:
    """
    One-sided 3 dB bandwidth (Hz) of the component pulse spectrum.

    The cluster spectrum is the pulse spectrum times the array factor of the
    pulse positions, so the pulse sets the envelope of every cluster spectrum.
    """
    oversample = 256
    dt = spec.pulse_width / oversample
    t = np.arange(-spec.pulse_width, spec.pulse_width + dt / 2, dt)
    g = rrc_pulse(replace(spec.rrc, normalization=1.0), t)
    n_fft = 1 << 20
    power = np.abs(np.fft.rfft(g, n_fft)) ** 2
    power /= power[0]
    freqs = np.fft.rfftfreq(n_fft, dt)
    k = int(np.argmax(power <= 0.5))
    # interpolate between the last bin above and the first bin below -3 dB
    f0, f1, p0, p1 = freqs[k - 1], freqs[k], power[k - 1], power[k]
    return float(f0 + (0.5 - p0) * (f1 - f0) / (p1 - p0))
