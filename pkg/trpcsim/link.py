"""
Link-level simulation: multipath/AWGN channel, the I-Q autocorrelation
receiver, Monte Carlo symbol-error-rate harness and the energy-per-pulse
metric.

AWGN convention: ``noise_psd`` is the one-sided density N_0 in W/Hz over
[0, fs/2]. Each sample gets zero-mean Gaussian noise of variance
N_0 * Z * fs / 2 (V^2), so a noise-only record has waveform_power N_0 * fs / 2.

Eb/N0 is referenced to the transmitted RF energy per bit: half the baseband
cluster energy (the I and Q rails each carry s/sqrt(2)), times the square of
the output driver gain and LO amplitude.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import signal

from .config import BASEBAND_SAMPLE_RATE, LOAD_IMPEDANCE, WORKERS
from .errors import GuardViolationError, ParameterError
from .impairments import IDEAL, ImpairmentConfig, upconvert_impaired
from .trpc import ClusterSpec, LoConfig, TxMode, iq_feed, pulse_bandwidth_3db, synth_frame
from .waveform import SampledWaveform, check_aligned

logger = logging.getLogger(__name__)

LPF_ORDER = 4
LPF_BANDWIDTH_FACTOR = 1.5
MIN_SER_SYMBOLS = 100
# Samples per Monte Carlo block; fixes the block partition independently of worker count
BLOCK_SAMPLES = 1 << 19
_DELAY_TOLERANCE = 1e-6

Seed = Union[int, Sequence[int]]


@dataclass(frozen=True)
class ChannelTap:
    delay: float
    gain: float = 1.0
    sign: int = 1


@dataclass(frozen=True)
class ChannelModel:
    """Tapped delay line plus white Gaussian noise (one-sided PSD in W/Hz)."""

    taps: Tuple[ChannelTap, ...] = (ChannelTap(0.0),)
    noise_psd: float = 0.0
    load_impedance: float = LOAD_IMPEDANCE

    def __post_init__(self):
        taps = tuple(t if isinstance(t, ChannelTap) else ChannelTap(*t) for t in self.taps)
        if not taps:
            raise ParameterError("channel needs at least one tap")
        delays = [t.delay for t in taps]
        if delays[0] < 0 or any(b <= a for a, b in zip(delays, delays[1:])):
            raise ParameterError(f"tap delays must be non-negative and strictly increasing: {delays}")
        for tap in taps:
            if not math.isfinite(tap.gain) or not math.isfinite(tap.delay):
                raise ParameterError(f"tap {tap} must have finite delay and gain")
            if tap.sign not in (1, -1):
                raise ParameterError(f"tap sign must be +1 or -1, got {tap.sign}")
        if not (math.isfinite(self.noise_psd) and self.noise_psd >= 0):
            raise ParameterError(f"noise_psd must be non-negative, got {self.noise_psd}")
        if self.load_impedance <= 0:
            raise ParameterError("load_impedance must be positive")
        object.__setattr__(self, "taps", taps)

    @property
    def tau_max(self) -> float:
        return self.taps[-1].delay

    @classmethod
    def from_mapping(cls, taps: Iterable[Mapping], noise_psd: float = 0.0) -> "ChannelModel":
        try:
            parsed = tuple(
                ChannelTap(float(t["delay"]), float(t.get("gain", 1.0)), int(t.get("sign", 1)))
                for t in taps
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ParameterError(f"invalid channel tap list: {e}") from e
        return cls(parsed, float(noise_psd))


@dataclass(frozen=True)
class SerResult:
    symbols_sent: int
    symbol_errors: int
    eb_n0: float
    ser: float = None
    ci95_halfwidth: float = None

    def __post_init__(self):
        if self.symbols_sent < 1 or not 0 <= self.symbol_errors <= self.symbols_sent:
            raise ParameterError(
                f"invalid counts: {self.symbol_errors} errors in {self.symbols_sent} symbols"
            )
        p = self.symbol_errors / self.symbols_sent
        object.__setattr__(self, "ser", p)
        object.__setattr__(self, "ci95_halfwidth", 1.96 * math.sqrt(p * (1.0 - p) / self.symbols_sent))


@dataclass(frozen=True)
class PowerProfile:
    """Transmitter supply: voltage (V), active current (A), active fraction of symbol time."""

    supply_voltage: float
    active_current: float
    duty: float = 1.0

    def __post_init__(self):
        if self.supply_voltage <= 0 or self.active_current <= 0:
            raise ParameterError("supply voltage and current must be positive")
        if not 0 < self.duty <= 1:
            raise ParameterError(f"duty must lie in (0, 1], got {self.duty}")


@dataclass(frozen=True)
class EnergyReport:
    energy_per_pulse: float  # pJ
    pulses_per_second: float
    average_power: float  # W

    def __post_init__(self):
        expected = self.average_power / self.pulses_per_second * 1e12
        if not math.isclose(self.energy_per_pulse, expected, rel_tol=1e-9):
            raise ParameterError("energy_per_pulse must equal average_power / pulses_per_second")


def _rng(seed: Seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def apply_channel(rf: SampledWaveform, ch: ChannelModel, seed: Seed = 0) -> SampledWaveform:
    """
    Tapped-delay-line convolution plus AWGN.

    Echo tails beyond the end of the record are dropped; the output keeps
    the input time grid.
    """
    if rf.is_quadrature:
        raise ParameterError("apply_channel expects a real RF waveform")
    x = rf.samples
    y = np.zeros_like(x)
    for tap in ch.taps:
        shift = tap.delay * rf.sample_rate
        n = int(round(shift))
        if abs(shift - n) > _DELAY_TOLERANCE * max(1.0, shift):
            raise ParameterError(
                f"tap delay {tap.delay:.6g} s is not a whole number of samples at "
                f"{rf.sample_rate:.6g} Hz"
            )
        if n < x.size:
            y[n:] += tap.sign * tap.gain * x[: x.size - n]

    if ch.noise_psd > 0:
        sigma = math.sqrt(ch.noise_psd * ch.load_impedance * rf.sample_rate / 2.0)
        y = y + sigma * _rng(seed).standard_normal(x.size)
    return rf.with_samples(y)


def demodulate_iq(
    rf: SampledWaveform,
    lo: LoConfig,
    lpf_cutoff: float,
    frequency_offset: float = 0.0,
) -> Tuple[SampledWaveform, SampledWaveform]:
    """
    I-Q down-conversion followed by zero-phase Butterworth low-pass filters.

    Mixes with 2cos(w t + theta) and -2sin(w t + theta), so an up-converted
    pair comes back at unit gain, rotated by the LO phase difference.

    Args:
        rf: Real RF waveform.
        lo: Receiver LO (phase need not match the transmitter).
        lpf_cutoff: Low-pass cutoff in Hz.
        frequency_offset: RX LO frequency error in Hz.
    """
    if rf.is_quadrature:
        raise ParameterError("demodulate_iq expects a real RF waveform")
    f_rx = lo.frequency + frequency_offset
    if not 0 < lpf_cutoff < min(f_rx, rf.sample_rate / 2.0):
        raise ParameterError(
            f"LPF cutoff {lpf_cutoff:.4g} Hz must lie between 0 and both the LO "
            f"{f_rx:.4g} Hz and the Nyquist frequency {rf.sample_rate / 2.0:.4g} Hz"
        )
    theta = 2.0 * np.pi * f_rx * rf.times() + lo.phase
    sos = signal.butter(LPF_ORDER, lpf_cutoff, btype="low", fs=rf.sample_rate, output="sos")
    i = signal.sosfiltfilt(sos, 2.0 * rf.samples * np.cos(theta))
    q = signal.sosfiltfilt(sos, -2.0 * rf.samples * np.sin(theta))
    return rf.with_samples(i), rf.with_samples(q)


def receiver_cutoff(spec: ClusterSpec) -> float:
    return LPF_BANDWIDTH_FACTOR * pulse_bandwidth_3db(spec.with_amplitude(1.0))


def decision_statistics(i: SampledWaveform, q: SampledWaveform, spec: ClusterSpec) -> np.ndarray:
    """
    Per-symbol statistic Z_m: the lag-T_d product i(t)i(t-T_d) + q(t)q(t-T_d)
    integrated over every data-pulse window (width T_p) of the symbol.
    """
    if i.is_quadrature or q.is_quadrature:
        raise ParameterError("expected real I and Q rails")
    check_aligned(i, q)
    fs = i.sample_rate
    n_symbols = int(round(i.duration / spec.symbol_duration))
    if n_symbols < 1 or abs(n_symbols * spec.symbol_duration - i.duration) > 1.0 / fs:
        raise ParameterError(
            f"record of {i.duration:.6g} s is not a whole number of "
            f"{spec.symbol_duration:.6g} s symbols"
        )

    t = np.arange(len(i)) / fs
    i_d = np.interp(t - spec.pulse_delay, t, i.samples, left=0.0, right=0.0)
    q_d = np.interp(t - spec.pulse_delay, t, q.samples, left=0.0, right=0.0)
    product = i.samples * i_d + q.samples * q_d
    cumulative = np.concatenate(([0.0], np.cumsum(product)))

    centres, is_data = spec.pulse_layout()
    data_centres = centres[is_data]
    starts = (
        np.arange(n_symbols)[:, None] * spec.symbol_duration
        + data_centres[None, :]
        - spec.pulse_width / 2.0
    )
    lo = np.clip(np.ceil(starts * fs - 1e-9).astype(np.int64), 0, len(i))
    hi = np.clip(np.floor((starts + spec.pulse_width) * fs + 1e-9).astype(np.int64) + 1, 0, len(i))
    windows = (cumulative[hi] - cumulative[lo]) / fs
    return windows.sum(axis=1)


def autocorr_detect(i: SampledWaveform, q: SampledWaveform, spec: ClusterSpec) -> np.ndarray:
    """
    Decide one bit per symbol: 1 if Z_m > 0, else 0 (a tie Z_m = 0 decides 0).

    The record must start at the first symbol boundary and span a whole
    number of symbols.
    """
    return (decision_statistics(i, q, spec) > 0).astype(np.uint8)


def rf_energy_per_bit(
    spec: ClusterSpec,
    impairments: ImpairmentConfig = IDEAL,
    lo: Optional[LoConfig] = None,
    load_impedance: float = LOAD_IMPEDANCE,
) -> float:
    """
    Transmitted RF energy per bit (J).

    Half the baseband cluster energy, scaled by the mean square rail gain,
    the output driver gain and the LO amplitude. DC offsets only add the
    carrier line and are not counted.
    """
    g_i, g_q = impairments.rail_gains
    amplitude = lo.amplitude if lo is not None else 1.0
    gain = (g_i ** 2 + g_q ** 2) / 2.0 * (impairments.linear_output_gain * amplitude) ** 2
    return spec.bit_energy(load_impedance) / 2.0 * gain


def channel_for_eb_n0(
    ch: ChannelModel,
    spec: ClusterSpec,
    eb_n0_db: Optional[float],
    impairments: ImpairmentConfig = IDEAL,
    lo: Optional[LoConfig] = None,
) -> ChannelModel:
    """Copy of ``ch`` whose noise PSD gives the requested Eb/N0 (None or inf: noiseless)."""
    if eb_n0_db is None or math.isinf(eb_n0_db):
        return replace(ch, noise_psd=0.0)
    energy = rf_energy_per_bit(spec, impairments, lo, ch.load_impedance)
    return replace(ch, noise_psd=energy / 10.0 ** (eb_n0_db / 10.0))


def channel_eb_n0_db(
    spec: ClusterSpec,
    ch: ChannelModel,
    impairments: ImpairmentConfig = IDEAL,
    lo: Optional[LoConfig] = None,
) -> float:
    """Eb/N0 (dB) the channel's noise PSD gives the transmitted signal."""
    if ch.noise_psd == 0:
        return math.inf
    return 10.0 * math.log10(rf_energy_per_bit(spec, impairments, lo, ch.load_impedance) / ch.noise_psd)


def check_guard(spec: ClusterSpec, ch: ChannelModel) -> None:
    """Raise GuardViolationError unless T_s >= (2N_p - 1) T_d + T_p + tau_max."""
    margin = spec.guard_margin(ch.tau_max)
    if margin < -1e-6 * spec.symbol_duration:
        raise GuardViolationError(
            f"guard inequality T_s >= (2N_p - 1)*T_d + T_p + tau_max violated: "
            f"T_s = {spec.symbol_duration * 1e9:.3f} ns, cluster span "
            f"{spec.cluster_span * 1e9:.3f} ns + tau_max {ch.tau_max * 1e9:.3f} ns"
        )


class SerSimulator:
    """
    Monte Carlo TX -> channel -> RX chain for one (mode, channel, impairments) setup.

    Symbols are processed in fixed-size blocks. Block b draws its bits from
    ``default_rng([seed, b, 0])`` and its noise from ``default_rng([seed, b, 1])``,
    so the outcome does not depend on how many workers run the blocks.
    """

    def __init__(
        self,
        mode: TxMode,
        ch: ChannelModel,
        impairments: ImpairmentConfig = IDEAL,
        lo: Optional[LoConfig] = None,
        sample_rate: float = BASEBAND_SAMPLE_RATE,
        rx_phase: float = 0.0,
        rx_frequency_offset: float = 0.0,
        spec: Optional[ClusterSpec] = None,
    ):
        self.mode = mode
        self.spec = spec or mode.cluster
        self.channel = ch
        self.impairments = impairments
        self.tx_lo = lo or LoConfig(mode.lo_frequency)
        self.rx_lo = replace(self.tx_lo, phase=self.tx_lo.phase + rx_phase)
        self.rx_frequency_offset = rx_frequency_offset
        self.sample_rate = sample_rate

        check_guard(self.spec, ch)
        self.cutoff = receiver_cutoff(self.spec)
        self.samples_per_symbol = self.spec.symbol_duration * sample_rate
        self.block_symbols = max(1, int(BLOCK_SAMPLES // self.samples_per_symbol))
        # room for pulse tails, echoes and the filter transient on both sides
        settle = 2 * self.spec.pulse_width + ch.tau_max + 8.0 / self.cutoff
        self.pad = int(math.ceil(settle * sample_rate))

    def run_block(self, seed: int, block: int, n_symbols: int) -> int:
        bits = _rng([seed, block, 0]).integers(0, 2, size=n_symbols)
        baseband = synth_frame(bits, self.spec, self.sample_rate)
        i, q = iq_feed(baseband)
        rf = upconvert_impaired(i, q, self.tx_lo, self.impairments, pulse_bandwidth_3db(self.spec))
        rf = apply_channel(rf.padded(self.pad, self.pad), self.channel, seed=[seed, block, 1])
        i_rx, q_rx = demodulate_iq(rf, self.rx_lo, self.cutoff, self.rx_frequency_offset)
        frame_end = baseband.duration
        decided = autocorr_detect(i_rx.window(0.0, frame_end), q_rx.window(0.0, frame_end), self.spec)
        errors = int(np.count_nonzero(decided != bits))
        logger.debug(f"block {block}: {errors} errors in {n_symbols} symbols")
        return errors

    def run(self, n_symbols: int, seed: int, workers: Optional[int] = None) -> SerResult:
        if n_symbols < MIN_SER_SYMBOLS:
            raise ParameterError(f"n_symbols must be at least {MIN_SER_SYMBOLS}, got {n_symbols}")
        sizes = [self.block_symbols] * (n_symbols // self.block_symbols)
        if n_symbols % self.block_symbols:
            sizes.append(n_symbols % self.block_symbols)

        workers = workers or WORKERS
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                errors = list(pool.map(lambda b: self.run_block(seed, b, sizes[b]), range(len(sizes))))
        else:
            errors = [self.run_block(seed, b, size) for b, size in enumerate(sizes)]

        eb_n0 = channel_eb_n0_db(self.spec, self.channel, self.impairments, self.tx_lo)
        result = SerResult(n_symbols, int(sum(errors)), eb_n0)
        logger.info(
            f"{self.mode.name}: Eb/N0 {result.eb_n0:.2f} dB, SER {result.ser:.3e} "
            f"({result.symbol_errors}/{result.symbols_sent})"
        )
        return result


def run_ser(
    mode: TxMode,
    ch: ChannelModel,
    impairments: ImpairmentConfig = IDEAL,
    n_symbols: int = 1000,
    seed: int = 0,
    **options,
) -> SerResult:
    """
    Estimate the symbol error rate of the full TRPC link.

    Args:
        mode: Transmission mode (its cluster amplitude is used as is).
        ch: Channel; its tau_max is checked against the guard inequality.
        impairments: Transmitter front-end impairments.
        n_symbols: Number of symbols, at least 100.
        seed: Base seed; identical arguments give identical results.
        **options: ``lo``, ``sample_rate``, ``rx_phase``, ``rx_frequency_offset``,
            ``spec`` for SerSimulator and ``workers`` for the block pool.

    Raises:
        GuardViolationError: the channel spreads clusters into the next symbol.
    """
    workers = options.pop("workers", None)
    return SerSimulator(mode, ch, impairments, **options).run(n_symbols, seed, workers)


def sweep_ser(
    mode: TxMode,
    ch: ChannelModel,
    impairments: ImpairmentConfig,
    eb_n0_db: Sequence[Optional[float]],
    n_symbols: int,
    seed: int,
    **options,
) -> List[SerResult]:
    """
    Run one SER point per Eb/N0 value with common random numbers across points.

    Eb/N0 is referenced to the RF energy actually transmitted, so the output
    gain and LO amplitude in effect do not shift the curve.
    """
    spec = options.get("spec") or mode.cluster
    lo = options.get("lo") or LoConfig(mode.lo_frequency)
    check_guard(spec, ch)
    channels = [channel_for_eb_n0(ch, spec, point, impairments, lo) for point in eb_n0_db]
    return [run_ser(mode, c, impairments, n_symbols, seed, **dict(options)) for c in channels]


def energy_per_pulse(profile: PowerProfile, mode: TxMode) -> EnergyReport:
    """
    Transmitter energy per emitted pulse.

    Pulse events per second are N_p * R: a reference/data doublet counts as
    one event. 1.2 V x 24 mA at 250 Mbps with N_p = 3 gives
    28.8 mW / 7.5e8 = 38.4 pJ.
    """
    average_power = profile.supply_voltage * profile.active_current * profile.duty
    pulses_per_second = mode.cluster.n_pulses * mode.cluster.symbol_rate
    return EnergyReport(
        energy_per_pulse=average_power / pulses_per_second * 1e12,
        pulses_per_second=pulses_per_second,
        average_power=average_power,
    )
