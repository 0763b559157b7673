import math
import tempfile
import unittest
from pathlib import Path

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from trpcsim.errors import InsufficientRecordError, ParameterError
from trpcsim.waveform import (
    SampledWaveform,
    SpectrumEstimate,
    dbm_to_watts,
    psd_estimate,
    read_waveform,
    waveform_power,
    watts_to_dbm,
    write_waveform,
)

FS = 1e9


def tone(freq, amplitude=1.0, duration=20e-6, fs=FS, phase=0.0):
    t = np.arange(int(round(duration * fs))) / fs
    return SampledWaveform(fs, amplitude * np.cos(2 * np.pi * freq * t + phase))


def multitone(duration=40e-6, fs=FS):
    t = np.arange(int(round(duration * fs))) / fs
    parts = [(60e6, 1.0, 0.3), (90e6, 0.5, 1.1), (130e6, 0.8, 2.0), (170e6, 0.2, 0.7), (210e6, 0.6, 2.9)]
    return SampledWaveform(fs, sum(a * np.cos(2 * np.pi * f * t + p) for f, a, p in parts))


class TestSampledWaveform(unittest.TestCase):
    def test_rejects_invalid_records(self):
        with self.assertRaises(ParameterError):
            SampledWaveform(0.0, [1.0])
        with self.assertRaises(ParameterError):
            SampledWaveform(FS, [])
        with self.assertRaises(ParameterError):
            SampledWaveform(FS, [1.0, np.nan])
        with self.assertRaises(ParameterError):
            SampledWaveform(FS, [1.0, np.inf])

    def test_duration_and_times(self):
        wave = SampledWaveform(1e3, np.zeros(250), start_time=2.0)
        self.assertAlmostEqual(wave.duration, 0.25)
        self.assertAlmostEqual(wave.times()[1], 2.001)

    def test_samples_are_read_only(self):
        wave = SampledWaveform(FS, np.ones(4))
        with self.assertRaises(ValueError):
            wave.samples[0] = 2.0

    def test_padding_keeps_sample_times(self):
        wave = SampledWaveform(FS, np.arange(1.0, 5.0))
        padded = wave.padded(3, 2)
        self.assertEqual(len(padded), 9)
        self.assertAlmostEqual(padded.times()[3], wave.times()[0])
        window = padded.window(0.0, wave.duration)
        np.testing.assert_array_equal(window.samples, wave.samples)

    def test_from_iq_and_rails(self):
        i = SampledWaveform(FS, [1.0, 2.0])
        q = SampledWaveform(FS, [3.0, 4.0])
        pair = SampledWaveform.from_iq(i, q)
        self.assertTrue(pair.is_quadrature)
        i2, q2 = pair.rails()
        np.testing.assert_array_equal(i2.samples, i.samples)
        np.testing.assert_array_equal(q2.samples, q.samples)

    def test_from_iq_rejects_misaligned(self):
        with self.assertRaises(ParameterError):
            SampledWaveform.from_iq(SampledWaveform(FS, [1.0]), SampledWaveform(2 * FS, [1.0]))


class TestPower(unittest.TestCase):
    def test_dc_power(self):
        self.assertAlmostEqual(waveform_power(SampledWaveform(FS, np.ones(100)), 50.0), 0.02)

    def test_sine_power(self):
        p = waveform_power(tone(10e6, duration=10e-6), 50.0)
        self.assertAlmostEqual(p, 0.01, delta=1e-5)

    def test_quadrature_convention(self):
        t = np.arange(1000) / FS
        pair = SampledWaveform(FS, np.exp(2j * np.pi * 10e6 * t))
        self.assertAlmostEqual(waveform_power(pair, 50.0), 0.02)

    def test_dbm_values(self):
        self.assertEqual(watts_to_dbm(1e-3), 0.0)
        self.assertAlmostEqual(watts_to_dbm(75e-9), -41.25, delta=0.01)
        self.assertAlmostEqual(dbm_to_watts(-23.47), 4.50e-6, delta=0.045e-6)

    def test_dbm_rejects_non_positive(self):
        with self.assertRaises(ParameterError):
            watts_to_dbm(0.0)
        with self.assertRaises(ParameterError):
            watts_to_dbm(-1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(min_value=1e-15, max_value=1e3))
def test_dbm_round_trip(power):
    assert math.isclose(dbm_to_watts(watts_to_dbm(power)), power, rel_tol=1e-12)


class TestPsdEstimate(unittest.TestCase):
    def test_sine_reads_its_power(self):
        spectrum = psd_estimate(tone(123.4e6), rbw=1e6, load_impedance=50.0)
        freq, power = spectrum.peak()
        self.assertAlmostEqual(freq, 123.4e6, delta=1e6)
        self.assertAlmostEqual(power, 10.0, delta=0.1)

    def test_zero_waveform_is_at_floor(self):
        spectrum = psd_estimate(SampledWaveform(FS, np.zeros(20000)), rbw=1e6)
        self.assertTrue(np.all(spectrum.bin_powers <= -200.0))

    def test_parseval(self):
        wave = multitone()
        spectrum = psd_estimate(wave, rbw=1e6)
        self.assertAlmostEqual(spectrum.total_power() / waveform_power(wave), 1.0, delta=0.02)

    def test_scaling_shifts_bins(self):
        wave = multitone()
        base = psd_estimate(wave, rbw=1e6)
        scaled = psd_estimate(wave.scaled(3.0), rbw=1e6)
        visible = base.bin_powers > -150
        np.testing.assert_allclose(
            scaled.bin_powers[visible] - base.bin_powers[visible], 20 * np.log10(3.0), atol=0.01
        )

    def test_time_shift_invariance(self):
        # complex tone with a whole number of periods: the circular delay is a true delay
        t = np.arange(20000) / FS
        wave = SampledWaveform(FS, np.exp(2j * np.pi * 100e6 * t))
        base = psd_estimate(wave, rbw=1e6)
        for shift in (1, 7, 333):
            shifted = psd_estimate(wave.delayed(shift), rbw=1e6)
            visible = base.bin_powers > -120
            np.testing.assert_allclose(
                shifted.bin_powers[visible], base.bin_powers[visible], atol=0.01
            )

    def test_quadrature_spectrum_is_two_sided(self):
        t = np.arange(20000) / FS
        pair = SampledWaveform(FS, np.exp(-2j * np.pi * 50e6 * t))
        spectrum = psd_estimate(pair, rbw=1e6)
        freq, power = spectrum.peak()
        self.assertAlmostEqual(freq, -50e6, delta=1e6)
        self.assertAlmostEqual(power, watts_to_dbm(1.0 / 50.0), delta=0.1)

    def test_short_record_is_rejected(self):
        with self.assertRaises(InsufficientRecordError):
            psd_estimate(tone(10e6, duration=5e-6), rbw=1e6)

    def test_rbw_too_large(self):
        with self.assertRaises(ParameterError):
            psd_estimate(tone(10e6), rbw=FS / 4)


class TestSpectrumEstimate(unittest.TestCase):
    def test_invariants(self):
        with self.assertRaises(ParameterError):
            SpectrumEstimate([1.0, 1.0], [0.0, 0.0], 1e6)
        with self.assertRaises(ParameterError):
            SpectrumEstimate([1.0, 2.0], [0.0], 1e6)
        with self.assertRaises(ParameterError):
            SpectrumEstimate([1.0, 2.0], [0.0, 0.0], 0.0)

    def test_power_near_outside_range(self):
        spectrum = SpectrumEstimate([0.0, 1e6, 2e6], [-10.0, 0.0, -10.0], 1e6)
        self.assertEqual(spectrum.power_near(1e6), 0.0)
        with self.assertRaises(ParameterError):
            spectrum.power_near(5e6)


class TestWaveformFiles(unittest.TestCase):
    def test_csv_layout_and_reload(self):
        wave = SampledWaveform(2e9, [0.5, -0.25, 0.125], start_time=1e-9)
        with tempfile.TemporaryDirectory() as tmp:
            path = write_waveform(wave, Path(tmp) / "w.csv")
            header = path.read_text().splitlines()[:3]
            self.assertEqual([line.split(",")[0] for line in header],
                             ["sample_rate_hz", "start_time_s", "channels"])
            self.assertEqual(header[2], "channels,1")
            loaded = read_waveform(path)
        self.assertEqual(loaded.sample_rate, wave.sample_rate)
        self.assertEqual(loaded.start_time, wave.start_time)
        np.testing.assert_array_equal(loaded.samples, wave.samples)

    def test_quadrature_npz(self):
        wave = SampledWaveform(1e9, np.array([1 + 2j, 3 - 4j]))
        with tempfile.TemporaryDirectory() as tmp:
            loaded = read_waveform(write_waveform(wave, Path(tmp) / "w.npz"))
        self.assertTrue(loaded.is_quadrature)
        np.testing.assert_array_equal(loaded.samples, wave.samples)

    def test_bad_header(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "bad.csv"
            path.write_text("rate,1\nstart_time_s,0\nchannels,1\n0.0\n")
            with self.assertRaises(ParameterError):
                read_waveform(path)

    def test_non_numeric_csv_sample(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "bad.csv"
            path.write_text("sample_rate_hz,1e9\nstart_time_s,0\nchannels,1\n0.5\nabc\n")
            with self.assertRaises(ParameterError) as ctx:
                read_waveform(path)
            self.assertIn("bad.csv", str(ctx.exception))

    def test_non_numeric_npz_field(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "bad.npz"
            np.savez(path, sample_rate_hz="xyz", start_time_s=0.0, channels=1, samples=np.zeros((4, 1)))
            with self.assertRaises(ParameterError):
                read_waveform(path)
            np.savez(path, sample_rate_hz=1e9, start_time_s=0.0, channels=1)
            with self.assertRaises(ParameterError):
                read_waveform(path)

    def test_missing_file_names_path(self):
        with self.assertRaises(OSError) as ctx:
            read_waveform("/nonexistent/dir/w.csv")
        self.assertIn("/nonexistent/dir/w.csv", str(ctx.exception))


if __name__ == "__main__":
    unittest.main()
