import json
import math
import tempfile
import unittest
from pathlib import Path

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from trpcsim.compliance import (
    FCC_UWB,
    REGIME_FACTOR,
    FccVerdict,
    PulseTrainPowerModel,
    binding_constraint,
    carrier_modulated_pulse,
    check_fcc,
    coherence_factor,
    compliance_report,
    duty_cycle_average,
    emulator_limit_amplitude,
    fbw_peak_power_of_pulse,
    line_shape_factor,
    max_fbw_peak_power,
    measured_power_pulse_train,
    measured_power_trpc,
    predicted_peak_bin_power,
    solve_amplitude,
    table1_rows,
    write_compliance_report,
)
from trpcsim.errors import OutOfModelError, ParameterError
from trpcsim.trpc import MODES, ClusterSpec, LoConfig, rrc_pulse, transmit_frame
from trpcsim.waveform import (
    SampledWaveform,
    SpectrumEstimate,
    dbm_to_watts,
    psd_estimate,
    waveform_power,
    watts_to_dbm,
)

FS = 20e9
RBW = 1e6
DOUBLING_DB = 20 * math.log10(2.0)


def frame_spectrum(spec, lo_frequency, rbw=RBW, seed=0, bits=None):
    """Analyzer view of a random-data frame roughly 12 RBW time constants long."""
    if bits is None:
        n_symbols = int(math.ceil(12.0 / (rbw * spec.symbol_duration)))
        bits = np.random.default_rng(seed).integers(0, 2, size=n_symbols)
    rf, _ = transmit_frame(bits, spec, LoConfig(lo_frequency), FS)
    return psd_estimate(rf, rbw)


def flat_spectrum(level_dbm, rbw=RBW):
    freqs = np.linspace(3e9, 5e9, 201)
    return SpectrumEstimate(freqs, np.full(freqs.size, level_dbm), rbw)


class TestPowerLaws(unittest.TestCase):
    def test_duty_cycle(self):
        model = PulseTrainPowerModel(p_peak=1e-3, pulse_width=1e-9, prf=100e6)
        self.assertAlmostEqual(model.duty_cycle, 0.1)
        self.assertAlmostEqual(duty_cycle_average(model), 1e-4)
        with self.assertRaises(ParameterError):
            PulseTrainPowerModel(p_peak=1e-3, pulse_width=1e-8, prf=200e6)

    def test_doubling_prf_quadruples_reading(self):
        slow = measured_power_pulse_train(PulseTrainPowerModel(1e-3, 1e-9, 100e6), RBW)
        fast = measured_power_pulse_train(PulseTrainPowerModel(1e-3, 1e-9, 200e6), RBW)
        self.assertAlmostEqual(watts_to_dbm(fast) - watts_to_dbm(slow), DOUBLING_DB, places=9)

    def test_doubling_pulse_count(self):
        base = measured_power_trpc(1e-6, 0.85e-9, 4, 100e6, RBW)
        doubled = measured_power_trpc(1e-6, 0.85e-9, 8, 100e6, RBW)
        self.assertAlmostEqual(watts_to_dbm(doubled) - watts_to_dbm(base), DOUBLING_DB, places=9)

    def test_regime_is_enforced(self):
        with self.assertRaises(OutOfModelError):
            measured_power_trpc(1e-6, 1.65e-9, 8, 10e6, 2e6)
        with self.assertRaises(OutOfModelError):
            max_fbw_peak_power(MODES["r10"], rbw=50e6)

    def test_pulse_train_matches_analyzer(self):
        # every symbol is a bit-1 doublet 10 ns apart: a plain 100 MHz pulse train
        spec = ClusterSpec(1, 1.65e-9, 10e-9, 20e-9, 0.03)
        lo = 3.827e9
        spectrum = frame_spectrum(spec, lo, bits=np.ones(600, dtype=int))
        p_peak = fbw_peak_power_of_pulse(
            carrier_modulated_pulse(spec, lo, spec.amplitude), spec.pulse_width
        )
        closed_form = measured_power_pulse_train(
            PulseTrainPowerModel(p_peak, spec.pulse_width, 100e6), RBW
        )
        expected = watts_to_dbm(closed_form * coherence_factor(spec))
        self.assertAlmostEqual(spectrum.power_near(lo), expected, delta=0.5)

    def test_time_average_matches_duty_cycle(self):
        # the pulse window holds all but the RRC tails (about 4 % of the energy)
        mode = MODES["r10"]
        spec = mode.cluster
        bits = np.random.default_rng(3).integers(0, 2, size=100)
        rf, _ = transmit_frame(bits, spec, LoConfig(mode.lo_frequency), FS)
        p_peak = fbw_peak_power_of_pulse(
            carrier_modulated_pulse(spec, mode.lo_frequency, spec.amplitude), spec.pulse_width
        )
        model = PulseTrainPowerModel(p_peak, spec.pulse_width, 2 * spec.n_pulses * spec.symbol_rate)
        self.assertAlmostEqual(waveform_power(rf) / duty_cycle_average(model), 1.0, delta=0.06)


class TestPeakPowerLimits(unittest.TestCase):
    def test_published_rows(self):
        expected = {"r200": -37.9, "r250": -37.3, "r300": -35.4}
        for name, p_peak in expected.items():
            self.assertAlmostEqual(max_fbw_peak_power(MODES[name]), p_peak, delta=0.1, msg=name)

    def test_direct_inversion_at_10_mbps(self):
        self.assertAlmostEqual(max_fbw_peak_power(MODES["r10"]), -23.66, delta=0.02)

    def test_all_rows_within_half_db(self):
        for mode in MODES.values():
            self.assertAlmostEqual(max_fbw_peak_power(mode), mode.p_peak_rrc, delta=0.5, msg=mode.name)

    def test_average_limit_binds(self):
        for mode in MODES.values():
            self.assertEqual(binding_constraint(mode), "average")


class TestPulsePower(unittest.TestCase):
    def test_pure_carrier(self):
        t_p = 1.65e-9
        t = np.linspace(-t_p / 2, t_p / 2, 1001)
        wave = SampledWaveform(1000 / t_p, 0.2 * np.cos(2 * np.pi * (4 / t_p) * t), t[0])
        self.assertAlmostEqual(fbw_peak_power_of_pulse(wave, t_p) / (0.04 / 100.0), 1.0, delta=0.01)

    def test_published_amplitude_gives_published_power(self):
        mode = MODES["r10"]
        pulse = carrier_modulated_pulse(mode.cluster, mode.lo_frequency, 0.0328)
        p_peak = fbw_peak_power_of_pulse(pulse, mode.cluster.pulse_width)
        self.assertAlmostEqual(watts_to_dbm(p_peak), -23.47, delta=0.5)

    def test_rejects_wrong_window(self):
        t = np.linspace(0.0, 1.65e-9, 101)
        wave = SampledWaveform(100 / 1.65e-9, np.ones(101), 0.0)
        with self.assertRaises(ParameterError):
            fbw_peak_power_of_pulse(wave, 1.65e-9)
        with self.assertRaises(ParameterError):
            fbw_peak_power_of_pulse(SampledWaveform(100 / 1.65e-9, np.ones(101), t[0] - 0.825e-9), 1e-9)


class TestSolveAmplitude(unittest.TestCase):
    def test_published_amplitudes(self):
        self.assertAlmostEqual(solve_amplitude(MODES["r10"]) / 0.0328, 1.0, delta=0.1)
        self.assertAlmostEqual(solve_amplitude(MODES["r200"]) / 0.00621, 1.0, delta=0.1)

    def test_all_rows_within_ten_percent(self):
        for mode in MODES.values():
            ratio = solve_amplitude(mode) / mode.max_amplitude
            self.assertAlmostEqual(ratio, 1.0, delta=0.1, msg=mode.name)

    def test_solved_pulse_sits_on_the_limit(self):
        mode = MODES["r250"]
        amplitude = solve_amplitude(mode)
        pulse = carrier_modulated_pulse(mode.cluster, mode.lo_frequency, amplitude)
        p_peak = watts_to_dbm(fbw_peak_power_of_pulse(pulse, mode.cluster.pulse_width))
        self.assertAlmostEqual(p_peak, max_fbw_peak_power(mode), places=6)

    def test_coherence_factor(self):
        spec = MODES["r10"].cluster.with_amplitude(1.0)
        t = np.linspace(-spec.rrc.truncation, spec.rrc.truncation, 20001)
        g = rrc_pulse(spec.rrc, t)
        window = np.abs(t) <= spec.pulse_width / 2
        expected = trapezoid(g, t) ** 2 / (spec.pulse_width * trapezoid(g[window] ** 2, t[window]))
        self.assertAlmostEqual(coherence_factor(spec) / expected, 1.0, delta=1e-3)
        self.assertTrue(0.40 < coherence_factor(spec) < 0.50)
        # shape only: independent of width and amplitude
        self.assertAlmostEqual(
            coherence_factor(MODES["r10"].cluster), coherence_factor(MODES["r300"].cluster), places=6
        )


class TestCheckFcc(unittest.TestCase):
    def test_limits(self):
        self.assertAlmostEqual(FCC_UWB.average_limit_dbm(1e6), -41.25)
        self.assertAlmostEqual(FCC_UWB.peak_limit_dbm(50e6), 0.0)
        self.assertAlmostEqual(FCC_UWB.peak_limit_dbm(1e6), -33.98, delta=0.01)

    def test_flat_spectrum_below_limit(self):
        verdict = check_fcc(flat_spectrum(-50.0))
        self.assertTrue(verdict.passes)
        self.assertAlmostEqual(verdict.worst_margin, 8.75)
        self.assertEqual(verdict.binding_constraint, "average")
        self.assertEqual(verdict.violations, ())

    def test_single_violating_bin(self):
        spectrum = flat_spectrum(-60.0)
        powers = spectrum.bin_powers.copy()
        powers[100] = -40.0
        verdict = check_fcc(SpectrumEstimate(spectrum.bin_frequencies, powers, RBW))
        self.assertFalse(verdict.passes)
        self.assertAlmostEqual(verdict.worst_margin, -1.25)
        self.assertAlmostEqual(verdict.worst_frequency, 4e9)
        self.assertEqual(len(verdict.violations), 1)

    def test_rbw_outside_range(self):
        with self.assertRaises(ParameterError):
            check_fcc(flat_spectrum(-60.0, rbw=100e3))
        with self.assertRaises(ParameterError):
            check_fcc(flat_spectrum(-60.0, rbw=100e6))

    def test_inconsistent_verdict(self):
        with self.assertRaises(ParameterError):
            FccVerdict(passes=True, worst_margin=-1.0, worst_frequency=4e9, binding_constraint="average")
        with self.assertRaises(ParameterError):
            FccVerdict(passes=True, worst_margin=1.0, worst_frequency=4e9, binding_constraint="both")

    def test_report(self):
        spectrum = flat_spectrum(-40.0)
        verdict = check_fcc(spectrum)
        report = compliance_report(verdict, spectrum, "r250")
        self.assertEqual(report["mode"], "r250")
        self.assertFalse(report["passes"])
        self.assertEqual(len(report["violations"]), 201)
        with tempfile.TemporaryDirectory() as tmp:
            path = write_compliance_report(report, Path(tmp) / "verdict.json")
            self.assertEqual(json.loads(path.read_text()), report)


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=-90.0, max_value=-10.0), st.sampled_from([1e6, 3e6, 10e6, 50e6]))
def test_margin_of_flat_spectrum(level, rbw):
    verdict = check_fcc(flat_spectrum(level, rbw))
    expected = FCC_UWB.average_limit_dbm(rbw) - level
    assert math.isclose(verdict.worst_margin, expected, abs_tol=1e-9)
    assert verdict.passes == (expected >= 0)


class TestAnalyzerEmulation(unittest.TestCase):
    def test_peak_bin_matches_prediction(self):
        modes = [m for m in MODES.values() if m.data_rate >= REGIME_FACTOR * RBW]
        self.assertEqual(len(modes), len(MODES))
        for mode in modes:
            with self.subTest(mode=mode.name):
                spec = mode.cluster.with_amplitude(solve_amplitude(mode))
                spectrum = frame_spectrum(spec, mode.lo_frequency)
                p_peak = dbm_to_watts(max_fbw_peak_power(mode))
                predicted = watts_to_dbm(predicted_peak_bin_power(spec, p_peak))
                self.assertAlmostEqual(spectrum.peak()[1], predicted, delta=0.5)

    def test_strongest_line_is_off_carrier(self):
        mode = MODES["r250"]
        self.assertGreater(line_shape_factor(mode.cluster), 1.0)
        frequency, _ = frame_spectrum(mode.cluster, mode.lo_frequency).peak()
        self.assertGreaterEqual(abs(frequency - mode.lo_frequency), 0.5 * mode.data_rate)

    def test_line_shape_ignores_amplitude(self):
        spec = MODES["r40"].cluster
        self.assertAlmostEqual(
            line_shape_factor(spec), line_shape_factor(spec.with_amplitude(1.0)), places=9
        )
        self.assertGreaterEqual(line_shape_factor(spec), 1.0)

    def test_doubling_pulse_count_in_emulator(self):
        lo = 7.884e9
        base = ClusterSpec(2, 0.85e-9, 0.85e-9, 10e-9, 0.01)
        doubled = ClusterSpec(4, 0.85e-9, 0.85e-9, 10e-9, 0.01)
        p_base = frame_spectrum(base, lo, seed=4).power_near(lo)
        p_doubled = frame_spectrum(doubled, lo, seed=4).power_near(lo)
        self.assertAlmostEqual(p_doubled - p_base, DOUBLING_DB, delta=0.3)

    def test_compliance_closure(self):
        for mode in MODES.values():
            spec = mode.cluster.with_amplitude(solve_amplitude(mode))
            verdict = check_fcc(frame_spectrum(spec, mode.lo_frequency))
            self.assertTrue(verdict.passes, mode.name)

            hot = mode.cluster.with_amplitude(emulator_limit_amplitude(mode) * 10 ** (3 / 20))
            self.assertFalse(check_fcc(frame_spectrum(hot, mode.lo_frequency)).passes, mode.name)

    def test_double_amplitude_costs_six_db(self):
        mode = MODES["r250"]
        amplitude = solve_amplitude(mode)
        nominal = check_fcc(frame_spectrum(mode.cluster.with_amplitude(amplitude), mode.lo_frequency))
        doubled = check_fcc(frame_spectrum(mode.cluster.with_amplitude(2 * amplitude), mode.lo_frequency))
        self.assertTrue(nominal.passes)
        self.assertAlmostEqual(nominal.worst_margin - doubled.worst_margin, DOUBLING_DB, delta=0.01)


class TestTable1(unittest.TestCase):
    def test_rows(self):
        rows = {row["mode"]: row for row in table1_rows()}
        self.assertEqual(len(rows), 7)
        self.assertLessEqual(abs(rows["r200"]["p_peak_delta_db"]), 0.1)
        self.assertLessEqual(abs(rows["r10"]["p_peak_delta_db"]), 0.5)
        self.assertTrue(rows["r10"]["note"])
        for row in rows.values():
            self.assertLessEqual(abs(row["amplitude_delta_pct"]), 10.0, row["mode"])


if __name__ == "__main__":
    unittest.main()
