"""
Sampled-signal representation and spectrum-analyzer emulation.

A ``SampledWaveform`` is the currency passed between every stage of the
simulator: real samples for baseband and RF signals, complex samples
(I + jQ) for quadrature pairs. ``psd_estimate`` turns a waveform into the
reading a swept analyzer with a given resolution bandwidth would show.

Power conventions:
- real waveform: mean(v^2) / Z
- quadrature waveform: mean(i^2 + q^2) / Z, so the baseband power equals the
  RF power after ideal up-conversion of the same pair.
"""

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from scipy import signal

from .config import LOAD_IMPEDANCE
from .errors import InsufficientRecordError, ParameterError

logger = logging.getLogger(__name__)

# Bins with no energy are reported at this floor instead of -inf
POWER_FLOOR_W = 1e-24
# Flat-top window keeps line readings within ~0.01 dB wherever the tone falls
RBW_WINDOW = "flattop"
MIN_RECORD_RBW_PRODUCT = 10.0

PathLike = Union[str, Path]


@dataclass(frozen=True)
class SampledWaveform:
    """Uniformly sampled real or quadrature signal in volts."""

    sample_rate: float
    samples: np.ndarray
    start_time: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.sample_rate) or self.sample_rate <= 0:
            raise ParameterError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.isfinite(self.start_time):
            raise ParameterError("start_time must be finite")

        data = np.asarray(self.samples)
        if data.ndim != 1:
            raise ParameterError(f"samples must be one-dimensional, got shape {data.shape}")
        if data.size < 1:
            raise ParameterError("waveform needs at least one sample")
        data = data.astype(np.complex128 if np.iscomplexobj(data) else np.float64, copy=True)
        if not np.all(np.isfinite(data)):
            raise ParameterError("waveform samples must be finite (no NaN or inf)")
        data.setflags(write=False)
        object.__setattr__(self, "samples", data)

    @classmethod
    def from_iq(cls, i: "SampledWaveform", q: "SampledWaveform") -> "SampledWaveform":
        """Combine two aligned real rails into one quadrature waveform."""
        check_aligned(i, q)
        return cls(i.sample_rate, i.samples + 1j * q.samples, i.start_time)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def is_quadrature(self) -> bool:
        return np.iscomplexobj(self.samples)

    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.samples.size) / self.sample_rate

    def rails(self) -> Tuple["SampledWaveform", "SampledWaveform"]:
        """Split into (I, Q) real waveforms; a real waveform has Q = 0."""
        q = self.samples.imag if self.is_quadrature else np.zeros(self.samples.size)
        return (
            SampledWaveform(self.sample_rate, self.samples.real, self.start_time),
            SampledWaveform(self.sample_rate, q, self.start_time),
        )

    def with_samples(self, samples: np.ndarray) -> "SampledWaveform":
        return SampledWaveform(self.sample_rate, samples, self.start_time)

    def scaled(self, k: float) -> "SampledWaveform":
        return self.with_samples(self.samples * k)

    def delayed(self, n_samples: int) -> "SampledWaveform":
        """Circularly delay the record by an integer number of samples."""
        return self.with_samples(np.roll(self.samples, int(n_samples)))

    def padded(self, before: int, after: int) -> "SampledWaveform":
        """Zero-pad both ends; start_time moves so existing samples keep their times."""
        if before < 0 or after < 0:
            raise ParameterError("padding must be non-negative")
        return SampledWaveform(
            self.sample_rate,
            np.pad(self.samples, (int(before), int(after))),
            self.start_time - before / self.sample_rate,
        )

    def window(self, t0: float, t1: float) -> "SampledWaveform":
        """Samples with t0 <= t < t1 (times rounded to the sample grid)."""
        first = int(round((t0 - self.start_time) * self.sample_rate))
        last = int(round((t1 - self.start_time) * self.sample_rate))
        if first < 0 or last > self.samples.size or last <= first:
            raise ParameterError(
                f"window [{t0:.4g}, {t1:.4g}) s is outside the record "
                f"[{self.start_time:.4g}, {self.start_time + self.duration:.4g}) s"
            )
        return SampledWaveform(
            self.sample_rate, self.samples[first:last], self.start_time + first / self.sample_rate
        )


@dataclass(frozen=True)
class SpectrumEstimate:
    """Analyzer reading: power in each resolution-bandwidth bin, in dBm."""

    bin_frequencies: np.ndarray
    bin_powers: np.ndarray
    rbw: float
    load_impedance: float = LOAD_IMPEDANCE

    def __post_init__(self):
        freqs = np.asarray(self.bin_frequencies, dtype=float)
        powers = np.asarray(self.bin_powers, dtype=float)
        if freqs.ndim != 1 or freqs.shape != powers.shape or freqs.size < 2:
            raise ParameterError("bin_frequencies and bin_powers must be equal-length 1-D arrays")
        if np.any(np.diff(freqs) <= 0):
            raise ParameterError("bin_frequencies must be strictly increasing")
        if self.rbw <= 0 or self.load_impedance <= 0:
            raise ParameterError("rbw and load_impedance must be positive")
        freqs.setflags(write=False)
        powers.setflags(write=False)
        object.__setattr__(self, "bin_frequencies", freqs)
        object.__setattr__(self, "bin_powers", powers)

    @property
    def bin_spacing(self) -> float:
        return float(np.median(np.diff(self.bin_frequencies)))

    def powers_watts(self) -> np.ndarray:
        return dbm_to_watts(self.bin_powers)

    def total_power(self) -> float:
        """Integrate the bins back to total power (W)."""
        return float(np.sum(self.powers_watts()) * self.bin_spacing / self.rbw)

    def band_power(self, f_low: float, f_high: float) -> float:
        """Integrated power (W) of the bins inside [f_low, f_high]."""
        mask = (self.bin_frequencies >= f_low) & (self.bin_frequencies <= f_high)
        if not np.any(mask):
            raise ParameterError(f"no spectrum bins inside [{f_low:.6g}, {f_high:.6g}] Hz")
        return float(np.sum(self.powers_watts()[mask]) * self.bin_spacing / self.rbw)

    def peak(self) -> Tuple[float, float]:
        """(frequency, dBm) of the strongest bin."""
        k = int(np.argmax(self.bin_powers))
        return float(self.bin_frequencies[k]), float(self.bin_powers[k])

    def power_near(self, frequency: float, span: float = None) -> float:
        """Strongest bin (dBm) within +/- span of a frequency; defaults to 1.5 RBW."""
        span = 1.5 * self.rbw if span is None else span
        if not self.bin_frequencies[0] <= frequency <= self.bin_frequencies[-1]:
            raise ParameterError(
                f"{frequency:.6g} Hz is outside the spectrum "
                f"[{self.bin_frequencies[0]:.6g}, {self.bin_frequencies[-1]:.6g}] Hz"
            )
        mask = np.abs(self.bin_frequencies - frequency) <= span
        if not np.any(mask):
            raise ParameterError(f"no bin within {span:.3g} Hz of {frequency:.6g} Hz")
        return float(np.max(self.bin_powers[mask]))


def check_aligned(a: SampledWaveform, b: SampledWaveform) -> None:
    """Raise unless two waveforms share sample rate, start time and length."""
    if a.sample_rate != b.sample_rate or len(a) != len(b):
        raise ParameterError(
            f"waveforms are not aligned: {len(a)} samples @ {a.sample_rate:.6g} Hz "
            f"vs {len(b)} samples @ {b.sample_rate:.6g} Hz"
        )
    if not math.isclose(a.start_time, b.start_time, rel_tol=0.0, abs_tol=0.5 / a.sample_rate):
        raise ParameterError("waveforms start at different times")


def watts_to_dbm(power):
    """Convert watts to dBm; power must be strictly positive."""
    p = np.asarray(power, dtype=float)
    if np.any(~np.isfinite(p)) or np.any(p <= 0):
        raise ParameterError(f"power must be positive and finite to express in dBm, got {power}")
    result = 10.0 * np.log10(p / 1e-3)
    return float(result) if result.ndim == 0 else result


def dbm_to_watts(dbm):
    """Convert dBm to watts."""
    d = np.asarray(dbm, dtype=float)
    if np.any(np.isnan(d)):
        raise ParameterError("dBm value is NaN")
    result = 1e-3 * 10.0 ** (d / 10.0)
    return float(result) if result.ndim == 0 else result


def waveform_power(wave: SampledWaveform, load_impedance: float = LOAD_IMPEDANCE) -> float:
    """Time-averaged power (W) delivered into ``load_impedance``."""
    if wave is None or len(wave) == 0:
        raise ParameterError("waveform is empty")
    if load_impedance <= 0:
        raise ParameterError("load_impedance must be positive")
    return float(np.mean(np.abs(wave.samples) ** 2) / load_impedance)


def occupied_bandwidth(wave: SampledWaveform, fraction: float = 0.99) -> float:
    """Smallest |f| (Hz) below which ``fraction`` of the waveform energy lies."""
    if not 0 < fraction <= 1:
        raise ParameterError(f"fraction must lie in (0, 1], got {fraction}")
    if wave.is_quadrature:
        energy = np.abs(np.fft.fft(wave.samples)) ** 2
        freqs = np.abs(np.fft.fftfreq(wave.samples.size, 1.0 / wave.sample_rate))
        order = np.argsort(freqs, kind="stable")
        energy, freqs = energy[order], freqs[order]
    else:
        energy = np.abs(np.fft.rfft(wave.samples)) ** 2
        freqs = np.fft.rfftfreq(wave.samples.size, 1.0 / wave.sample_rate)
    total = energy.sum()
    if total == 0:
        return 0.0
    k = int(np.searchsorted(np.cumsum(energy), fraction * total))
    return float(freqs[min(k, freqs.size - 1)])


def rbw_segment_length(sample_rate: float, rbw: float) -> Tuple[int, float]:
    """
    Welch segment length whose window noise bandwidth equals ``rbw``.

    Returns:
        (nperseg, effective noise bandwidth in Hz)
    """
    reference = signal.get_window(RBW_WINDOW, 4096, fftbins=True)
    enbw_bins = reference.size * np.sum(reference ** 2) / np.sum(reference) ** 2
    nperseg = int(round(enbw_bins * sample_rate / rbw))
    window = signal.get_window(RBW_WINDOW, nperseg, fftbins=True)
    enbw_hz = sample_rate * np.sum(window ** 2) / np.sum(window) ** 2
    return nperseg, float(enbw_hz)


def psd_estimate(
    wave: SampledWaveform,
    rbw: float,
    load_impedance: float = LOAD_IMPEDANCE,
) -> SpectrumEstimate:
    """
    Emulate a spectrum-analyzer sweep with resolution bandwidth ``rbw``.

    The model is a Welch averaged periodogram (flat-top window, 50% overlap)
    whose equivalent noise bandwidth is set to ``rbw``. Each bin reports
    density x rbw, i.e. the power a ``rbw``-wide filter centred on the bin
    would pass. A sinusoid therefore reads its full power in its bin and a
    flat noise floor reads N0 x rbw.

    Args:
        wave: Real (one-sided spectrum) or quadrature (two-sided) waveform.
        rbw: Resolution bandwidth in Hz.
        load_impedance: Reference load for the dBm conversion.

    Returns:
        SpectrumEstimate in dBm per RBW bin.

    Raises:
        InsufficientRecordError: record shorter than 10 / rbw.
        ParameterError: rbw not below sample_rate / 4.
    """
    if rbw <= 0 or not np.isfinite(rbw):
        raise ParameterError(f"rbw must be positive, got {rbw}")
    if rbw >= wave.sample_rate / 4:
        raise ParameterError(
            f"rbw {rbw:.4g} Hz too large for sample rate {wave.sample_rate:.4g} Hz (needs rbw < fs/4)"
        )
    if load_impedance <= 0:
        raise ParameterError("load_impedance must be positive")
    if wave.duration * rbw < MIN_RECORD_RBW_PRODUCT:
        raise InsufficientRecordError(
            f"record of {wave.duration:.4g} s is shorter than 10/RBW = "
            f"{MIN_RECORD_RBW_PRODUCT / rbw:.4g} s; the RBW filter cannot settle"
        )

    nperseg, enbw_hz = rbw_segment_length(wave.sample_rate, rbw)
    logger.debug(
        f"psd_estimate: {len(wave)} samples, nperseg={nperseg}, "
        f"enbw={enbw_hz:.6g} Hz for requested rbw={rbw:.6g} Hz"
    )

    freqs, density = signal.welch(
        wave.samples,
        fs=wave.sample_rate,
        window=RBW_WINDOW,
        nperseg=nperseg,
        noverlap=nperseg // 2,
        detrend=False,
        return_onesided=not wave.is_quadrature,
        scaling="density",
    )
    if wave.is_quadrature:
        freqs = np.fft.fftshift(freqs)
        density = np.fft.fftshift(density)

    bin_watts = np.maximum(density * rbw / load_impedance, POWER_FLOOR_W)
    return SpectrumEstimate(
        bin_frequencies=freqs,
        bin_powers=watts_to_dbm(bin_watts),
        rbw=rbw,
        load_impedance=load_impedance,
    )


def write_waveform(wave: SampledWaveform, path: PathLike) -> Path:
    """
    Write a waveform as CSV (``.csv``) or NumPy archive (``.npz``).

    CSV layout (stable)::

        sample_rate_hz,<float>
        start_time_s,<float>
        channels,<1|2>
        <v>            one row per sample (channels = 1)
        <i>,<q>        one row per sample (channels = 2)
    """
    path = Path(path)
    channels = 2 if wave.is_quadrature else 1
    columns = (
        np.column_stack([wave.samples.real, wave.samples.imag])
        if channels == 2
        else wave.samples.reshape(-1, 1)
    )
    try:
        if path.suffix.lower() == ".npz":
            np.savez(
                path,
                sample_rate_hz=wave.sample_rate,
                start_time_s=wave.start_time,
                channels=channels,
                samples=columns,
            )
        else:
            with open(path, "w", newline="", encoding="utf-8") as f:
                f.write(f"sample_rate_hz,{wave.sample_rate!r}\n")
                f.write(f"start_time_s,{wave.start_time!r}\n")
                f.write(f"channels,{channels}\n")
                np.savetxt(f, columns, delimiter=",", fmt="%.17g")
    except OSError as e:
        raise OSError(f"Cannot write waveform to {path}: {e}") from e

    logger.info(f"Wrote {len(wave)}-sample waveform to {path}")
    return path


def read_waveform(path: PathLike) -> SampledWaveform:
    """Read a waveform written by :func:`write_waveform`."""
    path = Path(path)
    try:
        if path.suffix.lower() == ".npz":
            with np.load(path) as archive:
                sample_rate = float(archive["sample_rate_hz"])
                start_time = float(archive["start_time_s"])
                channels = int(archive["channels"])
                columns = np.asarray(archive["samples"], dtype=float)
        else:
            with open(path, "r", encoding="utf-8") as f:
                header = {}
                for expected in ("sample_rate_hz", "start_time_s", "channels"):
                    key, _, value = f.readline().strip().partition(",")
                    if key != expected:
                        raise ParameterError(
                            f"{path}: expected header line '{expected}', found '{key}'"
                        )
                    header[key] = value
                sample_rate = float(header["sample_rate_hz"])
                start_time = float(header["start_time_s"])
                channels = int(header["channels"])
                columns = np.loadtxt(f, delimiter=",", ndmin=2)
    except OSError as e:
        raise OSError(f"Cannot read waveform from {path}: {e}") from e
    except ParameterError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ParameterError(f"{path}: malformed waveform file: {e}") from e

    if channels not in (1, 2) or columns.ndim != 2 or columns.shape[1] != channels:
        raise ParameterError(f"{path}: channel count {channels} does not match the sample columns")
    samples = columns[:, 0] + 1j * columns[:, 1] if channels == 2 else columns[:, 0]
    return SampledWaveform(sample_rate, samples, start_time)


def write_spectrum_csv(spectrum: SpectrumEstimate, path: PathLike) -> Path:
    """Write (frequency_hz, power_dbm) rows for any plotting tool."""
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["frequency_hz", "power_dbm"])
            for freq, power in zip(spectrum.bin_frequencies, spectrum.bin_powers):
                writer.writerow([f"{freq:.9g}", f"{power:.4f}"])
    except OSError as e:
        raise OSError(f"Cannot write spectrum to {path}: {e}") from e
    return path
