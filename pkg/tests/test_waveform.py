"""
Unit tests for the surrogate waveform generator.
"""

import math
import unittest

import numpy as np

from grid_fault_attacks.core import constants
from grid_fault_attacks.core.errors import ConfigurationError
from grid_fault_attacks.core.models import FaultSpec, FaultType, SimulationTiming
from grid_fault_attacks.core.waveform import (
    GenerationConfig,
    affected_phases,
    faulted_window_rms,
    generate_dataset,
    generate_waveform,
    healthy_window_rms,
    record_seed,
    resistance_sigma,
    sag_multiplier,
    window_rms,
)

NOISELESS = GenerationConfig(noise_std=0.0, load_jitter=0.0)


class TestFaultModel(unittest.TestCase):
    """Test cases for fault types, phases and sag multipliers."""

    def test_affected_phases(self):
        """Test that the phases come from the fault code, not the ground flag."""
        self.assertEqual(affected_phases(FaultType.AG), {"A"})
        self.assertEqual(affected_phases(FaultType.ABC), {"A", "B", "C"})
        self.assertEqual(affected_phases(FaultType.BCG), {"B", "C"})
        self.assertEqual(affected_phases(FaultType.ABCG), {"A", "B", "C"})

    def test_fault_type_labels(self):
        """Test the 1-based label order AG..ABCG."""
        self.assertEqual(FaultType.AG.label, 1)
        self.assertEqual(FaultType.ABCG.label, 11)
        self.assertEqual(FaultType.from_label(7), FaultType.ABG)
        with self.assertRaises(ConfigurationError):
            FaultType.from_label(12)

    def test_symmetric_fault_equal_multipliers(self):
        """Test that a three-phase fault sags all phases equally."""
        for zone in constants.ZONES:
            for resistance in (0.001, 0.5, 2.0):
                a, b, c = sag_multiplier(FaultType.ABCG, zone, zone, resistance)
                self.assertEqual(a, b)
                self.assertEqual(b, c)

    def test_sag_monotone_in_resistance(self):
        """Test that the faulted-phase multiplier strictly increases with R."""
        values = [sag_multiplier(FaultType.AG, 1, 1, r)[0] for r in constants.FAULT_RESISTANCES]
        self.assertTrue(all(a < b for a, b in zip(values, values[1:])))
        self.assertLess(sag_multiplier(FaultType.AG, 1, 1, 0.001)[0], sag_multiplier(FaultType.AG, 1, 1, 2.0)[0])

    def test_sag_closed_form(self):
        """Test the multiplier triple for AG in zone 1 seen from bus 1 at 0.1061 ohm."""
        sigma = constants.SIGMA_CEILING * (math.log10(0.1061) + 3.0) / (constants.LOG10_R_HIGH + 3.0)
        severity = 1.0 - sigma
        expected_sag = 1.0 - (1.0 - constants.MIN_SAG_MULTIPLIER) * severity
        expected_healthy = 1.0 + constants.HEALTHY_PHASE_SWING * severity

        a, b, c = sag_multiplier(FaultType.AG, 1, 1, 0.1061)
        self.assertAlmostEqual(a, expected_sag, places=12)
        self.assertAlmostEqual(a, 0.5971, places=3)
        self.assertAlmostEqual(b, expected_healthy, places=12)
        self.assertEqual(b, c)

    def test_multiplier_ranges(self):
        """Test that sagged phases stay in (0, 1] and healthy ones within 2%."""
        for ftype in FaultType:
            for zone in constants.ZONES:
                for location in constants.LOCATIONS:
                    for resistance in (0.001, 0.3162, 2.0):
                        multipliers = sag_multiplier(ftype, zone, location, resistance)
                        for phase, m in zip("ABC", multipliers):
                            if phase in ftype.phases:
                                self.assertGreater(m, 0.0)
                                self.assertLessEqual(m, 1.0)
                            else:
                                self.assertGreaterEqual(m, 0.98)
                                self.assertLessEqual(m, 1.02)

    def test_deepest_sag_on_own_bus(self):
        """Test that the diagonal of the coupling matrix gives the deepest sag."""
        for zone in constants.ZONES:
            own = sag_multiplier(FaultType.AG, zone, zone, 0.001)[0]
            for location in constants.LOCATIONS:
                if location != zone:
                    self.assertLess(own, sag_multiplier(FaultType.AG, zone, location, 0.001)[0])

    def test_resistance_sigma_clamped(self):
        """Test the sigma mapping endpoints."""
        self.assertAlmostEqual(resistance_sigma(0.001), 0.0, places=12)
        self.assertAlmostEqual(resistance_sigma(2.0), constants.SIGMA_CEILING, places=4)

    def test_fault_spec_validation(self):
        """Test rejection of out-of-table fault parameters."""
        with self.assertRaises(ConfigurationError):
            FaultSpec(fault_type=FaultType.AG, zone=5, resistance=0.001, measurement_location=1)
        with self.assertRaises(ConfigurationError):
            FaultSpec(fault_type=FaultType.AG, zone=1, resistance=0.002, measurement_location=1)
        with self.assertRaises(ConfigurationError):
            FaultSpec(fault_type=FaultType.AG, zone=1, resistance=0.001, measurement_location=0)
        with self.assertRaises(ConfigurationError):
            FaultSpec(fault_type="AG", zone=1, resistance=0.001, measurement_location=1)


class TestGenerateWaveform(unittest.TestCase):
    """Test cases for single-record synthesis."""

    def setUp(self):
        """Set up test fixtures before each test method."""
        self.spec = FaultSpec(fault_type=FaultType.AG, zone=1, resistance=0.001, measurement_location=1, rng_seed=42)

    def test_sample_count(self):
        """Test the default timing gives 2200 samples per phase."""
        waveform = generate_waveform(self.spec)
        self.assertEqual(SimulationTiming().sample_count, 2200)
        self.assertEqual(len(waveform.phase_a), 2200)
        self.assertEqual(waveform.as_array().shape, (3, 2200))

    def test_no_fault_window_is_pure_sinusoid(self):
        """Test that an empty fault window and no noise give clean sinusoids."""
        timing = SimulationTiming(fault_on=0.01, fault_off=0.01)
        waveform = generate_waveform(self.spec, timing, NOISELESS)
        t = timing.time_axis()
        np.testing.assert_allclose(waveform.phase_a, np.sin(2 * np.pi * 60.0 * t), atol=1e-12)
        self.assertLessEqual(np.max(np.abs(waveform.phase_a)), 1.0 + 1e-9)
        self.assertGreater(np.max(np.abs(waveform.phase_a)), 0.999)

    def test_deterministic(self):
        """Test that the same spec and seed give bit-identical waveforms."""
        first = generate_waveform(self.spec)
        second = generate_waveform(self.spec)
        np.testing.assert_array_equal(first.as_array(), second.as_array())

    def test_seed_changes_noise(self):
        """Test that another record seed gives other noise."""
        other = FaultSpec(fault_type=FaultType.AG, zone=1, resistance=0.001, measurement_location=1, rng_seed=43)
        self.assertFalse(np.array_equal(generate_waveform(self.spec).phase_a, generate_waveform(other).phase_a))

    def test_faulted_phase_sags(self):
        """Test that phase A RMS drops inside the fault window."""
        waveform = generate_waveform(self.spec)
        self.assertLess(faulted_window_rms(waveform, "A"), 0.5 * healthy_window_rms(waveform, "A"))
        self.assertGreater(window_rms(waveform.phase_a, waveform.timing.healthy_mask()), 0.0)

    def test_phase_selectivity(self):
        """Test that non-faulted phases of single-phase faults keep their RMS within 5%."""
        for ftype, healthy in ((FaultType.AG, "BC"), (FaultType.BG, "AC"), (FaultType.CG, "AB")):
            for resistance in (0.001, 0.5):
                spec = FaultSpec(fault_type=ftype, zone=2, resistance=resistance, measurement_location=2, rng_seed=3)
                waveform = generate_waveform(spec)
                for phase in healthy:
                    ratio = faulted_window_rms(waveform, phase) / healthy_window_rms(waveform, phase)
                    self.assertLess(abs(ratio - 1.0), 0.05)

    def test_monotone_sag_rms(self):
        """Test that faulted-phase RMS in the fault window does not decrease with R."""
        for ftype in (FaultType.AG, FaultType.BC, FaultType.ABCG):
            phase = sorted(ftype.phases)[0]
            rms = []
            for resistance in constants.FAULT_RESISTANCES:
                spec = FaultSpec(fault_type=ftype, zone=3, resistance=resistance, measurement_location=1)
                rms.append(faulted_window_rms(generate_waveform(spec, config=NOISELESS), phase))
            self.assertTrue(all(a <= b + 1e-12 for a, b in zip(rms, rms[1:])), f"{ftype}: {rms}")

    def test_envelope_outside_fault_window(self):
        """Test that pre- and post-fault samples stay within the nominal band."""
        waveform = generate_waveform(self.spec)
        outside = ~waveform.timing.fault_mask()
        band = 1.0 + constants.LOAD_JITTER + 6 * constants.NOISE_STD
        self.assertLessEqual(np.max(np.abs(waveform.as_array()[:, outside])), band)

    def test_invalid_timing(self):
        """Test that a fault window outside the simulation is rejected."""
        with self.assertRaises(ConfigurationError):
            generate_waveform(self.spec, SimulationTiming(fault_on=0.01, fault_off=0.03))
        with self.assertRaises(ConfigurationError):
            generate_waveform(self.spec, SimulationTiming(fault_on=0.02, fault_off=0.01))

    def test_invalid_generation_config(self):
        """Test coupling and noise validation."""
        with self.assertRaises(ConfigurationError):
            GenerationConfig(noise_std=-1.0).validate()
        with self.assertRaises(ConfigurationError):
            GenerationConfig(coupling=((1.0, 0.5), (0.5, 1.0))).validate()


class TestGenerateDataset(unittest.TestCase):
    """Test cases for the full Cartesian dataset."""

    @classmethod
    def setUpClass(cls):
        """Generate the default dataset once for the class."""
        cls.dataset = generate_dataset(GenerationConfig(master_seed=11))

    def test_record_count(self):
        """Test 4 zones x 11 types x 22 resistances x 4 locations."""
        self.assertEqual(len(self.dataset), 3872)
        self.assertEqual(self.dataset.manifest["record_count"], 3872)

    def test_zone_filter(self):
        """Test that one zone holds 11 x 22 x 4 records."""
        self.assertEqual(len(self.dataset.filter(zone=2)), 968)

    def test_each_tuple_once(self):
        """Test that every (zone, type, resistance, location) appears exactly once."""
        keys = {(r.spec.zone, r.spec.fault_type, r.spec.resistance, r.spec.measurement_location)
                for r in self.dataset.records}
        self.assertEqual(len(keys), 3872)

    def test_deterministic(self):
        """Test that the same master seed reproduces the dataset."""
        again = generate_dataset(GenerationConfig(master_seed=11), n_jobs=2)
        for a, b in zip(self.dataset.records, again.records):
            self.assertEqual(a.spec, b.spec)
            np.testing.assert_array_equal(a.as_array(), b.as_array())

    def test_record_seeds(self):
        """Test per-record seeds derive from (master seed, index)."""
        self.assertEqual(self.dataset.records[5].spec.rng_seed, record_seed(11, 5))
        self.assertNotEqual(record_seed(11, 5), record_seed(11, 6))
        self.assertNotEqual(record_seed(11, 5), record_seed(12, 5))


if __name__ == "__main__":
    unittest.main()
