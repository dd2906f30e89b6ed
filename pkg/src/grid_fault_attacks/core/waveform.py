"""
Surrogate three-phase fault waveform generator.

Each record is a 60 Hz balanced three-phase voltage whose faulted phases sag
during the fault window. Sag depth depends on fault resistance and on the
electrical coupling between the faulted zone and the measuring bus; ground
faults add a decaying ring-down at fault inception. Gaussian measurement
noise and a per-record load level complete the measurement model.
"""

import itertools
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, FrozenSet, Iterator, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from grid_fault_attacks.core import constants
from grid_fault_attacks.core.errors import ConfigurationError
from grid_fault_attacks.core.models import (
    FaultSpec,
    FaultType,
    SimulationTiming,
    ThreePhaseWaveform,
    WaveformDataset,
)

logger = logging.getLogger(__name__)

PHASES: Tuple[str, str, str] = ("A", "B", "C")
PHASE_ANGLES: Dict[str, float] = {"A": 0.0, "B": -2.0 * math.pi / 3.0, "C": 2.0 * math.pi / 3.0}


@dataclass(frozen=True)
class GenerationConfig:
    """Everything that determines a generated dataset."""
    master_seed: int = constants.DEFAULT_SEED
    noise_std: float = constants.NOISE_STD
    load_jitter: float = constants.LOAD_JITTER
    transient_amplitude: float = constants.TRANSIENT_AMPLITUDE
    transient_tau: float = constants.TRANSIENT_TIME_CONSTANT
    coupling: Tuple[Tuple[float, ...], ...] = constants.COUPLING_MATRIX
    timing: SimulationTiming = field(default_factory=SimulationTiming)

    def validate(self) -> None:
        if self.noise_std < 0 or self.load_jitter < 0 or self.load_jitter >= 1:
            raise ConfigurationError("noise_std must be >= 0 and load_jitter in [0, 1)")
        if self.transient_tau <= 0:
            raise ConfigurationError("transient_tau must be positive")
        coupling = np.asarray(self.coupling, dtype=float)
        if coupling.shape != (len(constants.ZONES), len(constants.LOCATIONS)):
            raise ConfigurationError(f"coupling matrix must be 4x4, got {coupling.shape}")
        off_diagonal = coupling[~np.eye(len(constants.ZONES), dtype=bool)]
        if not np.allclose(np.diag(coupling), 1.0) or np.any(off_diagonal <= 0) or np.any(off_diagonal >= 1):
            raise ConfigurationError("coupling needs a unit diagonal and off-diagonal values in (0, 1)")
        self.timing.validate()

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["coupling"] = [list(row) for row in self.coupling]
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GenerationConfig":
        data = dict(data)
        timing = SimulationTiming(**data.pop("timing", {}))
        coupling = tuple(tuple(float(v) for v in row) for row in data.pop("coupling", constants.COUPLING_MATRIX))
        return cls(timing=timing, coupling=coupling, **data)


def affected_phases(fault_type: FaultType) -> FrozenSet[str]:
    """Phases involved in a fault type.

    Args:
        fault_type: One of the 11 fault types

    Returns:
        Subset of {"A", "B", "C"}; ground involvement adds no phase
    """
    return fault_type.phases


def resistance_sigma(resistance: float) -> float:
    """Map a fault resistance to [0, SIGMA_CEILING], affine in log10(R) and clamped."""
    span = constants.LOG10_R_HIGH - constants.LOG10_R_LOW
    unit = (math.log10(resistance) - constants.LOG10_R_LOW) / span
    return constants.SIGMA_CEILING * min(max(unit, 0.0), 1.0)


def sag_multiplier(fault_type: FaultType, zone: int, measurement_location: int, resistance: float,
                   coupling: Optional[Tuple[Tuple[float, ...], ...]] = None) -> Tuple[float, float, float]:
    """Per-phase voltage multipliers during the fault window.

    Affected phases get ``1 - (1 - m_min) * (1 - sigma(R)) * coupling[zone][location]``,
    which is strictly increasing in R and deepest at the faulted zone's own bus.
    Non-faulted phases swell slightly for ground faults and dip slightly for
    ungrounded ones, staying within 1 +/- HEALTHY_PHASE_SWING.

    Args:
        fault_type: Fault type
        zone: Faulted zone, 1..4
        measurement_location: Measuring bus, 1..4
        resistance: Fault resistance in ohms
        coupling: Optional 4x4 zone/location coupling matrix

    Returns:
        Multipliers for phases (A, B, C)
    """
    matrix = coupling if coupling is not None else constants.COUPLING_MATRIX
    c = matrix[zone - 1][measurement_location - 1]
    severity = (1.0 - resistance_sigma(resistance)) * c
    sagged = 1.0 - (1.0 - constants.MIN_SAG_MULTIPLIER) * severity
    swing = constants.HEALTHY_PHASE_SWING * severity
    healthy = 1.0 + swing if fault_type.is_ground else 1.0 - swing
    phases = affected_phases(fault_type)
    return tuple(sagged if p in phases else healthy for p in PHASES)


def _ground_transient(t: np.ndarray, timing: SimulationTiming, amplitude: float, tau: float,
                      phase_angle: float) -> np.ndarray:
    """Decaying ring-down starting at fault inception, signed by the pre-fault phase value."""
    elapsed = t - timing.fault_on
    polarity = math.copysign(1.0, math.sin(2.0 * math.pi * timing.frequency * timing.fault_on + phase_angle))
    ring = np.exp(-elapsed / tau) * np.cos(2.0 * math.pi * constants.TRANSIENT_FREQUENCY * elapsed)
    return polarity * amplitude * ring


def generate_waveform(spec: FaultSpec, timing: Optional[SimulationTiming] = None,
                      config: Optional[GenerationConfig] = None) -> ThreePhaseWaveform:
    """Synthesize the three-phase voltage seen at one bus for one fault.

    Args:
        spec: Fault parameters, including the record seed
        timing: Simulation timing (defaults to config.timing)
        config: Surrogate constants (noise, load jitter, transient, coupling)

    Returns:
        ThreePhaseWaveform with 2200 samples per phase for the default timing

    Raises:
        ConfigurationError: If the fault window lies outside the simulation
    """
    config = config or GenerationConfig()
    timing = timing or config.timing
    timing.validate()

    t = timing.time_axis()
    in_fault = timing.fault_mask()
    rng = np.random.default_rng(spec.rng_seed)

    # Draw order is fixed: load level first, then noise for A, B, C
    level = 1.0 + config.load_jitter * rng.uniform(-1.0, 1.0)
    noise = rng.normal(0.0, 1.0, size=(3, t.size)) * config.noise_std

    multipliers = sag_multiplier(spec.fault_type, spec.zone, spec.measurement_location,
                                 spec.resistance, config.coupling)
    phases = affected_phases(spec.fault_type)

    series = []
    for idx, name in enumerate(PHASES):
        angle = PHASE_ANGLES[name]
        wave = level * np.sin(2.0 * math.pi * timing.frequency * t + angle)
        wave[in_fault] *= multipliers[idx]
        if spec.fault_type.is_ground and name in phases and config.transient_amplitude > 0:
            # Transient scales with sag severity so it fades as R grows
            depth = 1.0 - multipliers[idx]
            wave[in_fault] += depth * _ground_transient(
                t[in_fault], timing, config.transient_amplitude, config.transient_tau, angle
            )
        series.append(wave + noise[idx])

    return ThreePhaseWaveform(phase_a=series[0], phase_b=series[1], phase_c=series[2],
                              spec=spec, timing=timing)


def enumerate_specs() -> Iterator[Tuple[int, FaultType, float, int]]:
    """Yield (zone, type, resistance, location) in dataset order."""
    return itertools.product(constants.ZONES, list(FaultType), constants.FAULT_RESISTANCES, constants.LOCATIONS)


def record_seed(master_seed: int, index: int) -> int:
    """Per-record seed derived from the master seed and the tuple index."""
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1)[0])


def _generate_record(index: int, zone: int, fault_type: FaultType, resistance: float, location: int,
                     config: GenerationConfig) -> ThreePhaseWaveform:
    spec = FaultSpec(fault_type=fault_type, zone=zone, resistance=resistance,
                     measurement_location=location, rng_seed=record_seed(config.master_seed, index))
    return generate_waveform(spec, config.timing, config)


def generate_dataset(config: Optional[GenerationConfig] = None, n_jobs: int = 1) -> WaveformDataset:
    """Generate one record per (zone, type, resistance, location) tuple.

    Args:
        config: Generation settings including the master seed
        n_jobs: Worker count for joblib; results do not depend on it

    Returns:
        WaveformDataset with 4 x 11 x 22 x 4 = 3872 records
    """
    config = config or GenerationConfig()
    config.validate()

    tuples = list(enumerate_specs())
    logger.info("Generating %d waveform records (seed=%d, n_jobs=%d)", len(tuples), config.master_seed, n_jobs)
    records = Parallel(n_jobs=n_jobs)(
        delayed(_generate_record)(i, zone, ftype, resistance, location, config)
        for i, (zone, ftype, resistance, location) in enumerate(tuples)
    )

    manifest = {
        "schema_version": constants.SCHEMA_VERSION,
        "surrogate_version": constants.SURROGATE_VERSION,
        "master_seed": config.master_seed,
        "config": config.to_dict(),
        "record_count": len(records),
    }
    return WaveformDataset(records=list(records), manifest=manifest)


def window_rms(series: np.ndarray, mask: np.ndarray) -> float:
    """Plain RMS of the masked samples."""
    return float(np.sqrt(np.mean(np.square(series[mask]))))


def normalized_window_rms(waveform: ThreePhaseWaveform, phase: str, mask: np.ndarray) -> float:
    """RMS of a phase over a window, in per unit of an ideal sinusoid on the same samples.

    Windows shorter than a cycle have an RMS that depends on where they cut the
    sinusoid; dividing by the ideal waveform's RMS on the same samples removes
    that dependence so healthy and faulted windows compare directly.
    """
    timing = waveform.timing
    ideal = np.sin(2.0 * math.pi * timing.frequency * timing.time_axis() + PHASE_ANGLES[phase])
    return window_rms(waveform.phase(phase), mask) / window_rms(ideal, mask)


def faulted_window_rms(waveform: ThreePhaseWaveform, phase: str) -> float:
    return normalized_window_rms(waveform, phase, waveform.timing.fault_mask())


def healthy_window_rms(waveform: ThreePhaseWaveform, phase: str) -> float:
    return normalized_window_rms(waveform, phase, waveform.timing.healthy_mask())


def dataset_index(dataset: WaveformDataset) -> List[Tuple[int, str, float, int, int]]:
    """(zone, type, resistance, location, seed) per record, in record order."""
    return [
        (r.spec.zone, r.spec.fault_type.value, r.spec.resistance, r.spec.measurement_location, r.spec.rng_seed)
        for r in dataset.records
    ]
