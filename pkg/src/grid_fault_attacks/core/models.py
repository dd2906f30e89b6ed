"""
Data models for grid-fault-attacks.

Class labels are 1-based at every public boundary: zones 1..4, fault types
1..11 (Table order AG..ABCG), joint labels 1..44 and model classes 1..K.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, FrozenSet, List, Optional, Tuple

import numpy as np

from grid_fault_attacks.core import constants
from grid_fault_attacks.core.errors import ConfigurationError


class FaultType(Enum):
    """Short-circuit fault types, in dataset label order."""
    AG = "AG"
    BG = "BG"
    CG = "CG"
    AB = "AB"
    AC = "AC"
    BC = "BC"
    ABG = "ABG"
    ACG = "ACG"
    BCG = "BCG"
    ABC = "ABC"
    ABCG = "ABCG"

    @property
    def label(self) -> int:
        """1-based fault-type class label."""
        return list(FaultType).index(self) + 1

    @classmethod
    def from_label(cls, label: int) -> "FaultType":
        members = list(cls)
        if not 1 <= label <= len(members):
            raise ConfigurationError(f"fault type label {label} outside 1..{len(members)}")
        return members[label - 1]

    @property
    def phases(self) -> FrozenSet[str]:
        """Phases named in the code; a trailing G does not add a phase."""
        return frozenset(ch for ch in self.value if ch in "ABC")

    @property
    def is_ground(self) -> bool:
        return self.value.endswith("G")

    @property
    def family(self) -> str:
        """LG, LL, LLG, LLL or LLLG."""
        n = len(self.phases)
        if n == 3:
            return "LLLG" if self.is_ground else "LLL"
        if n == 2:
            return "LLG" if self.is_ground else "LL"
        return "LG"


class Task(Enum):
    """Classification task and its output head size."""
    FZC = "fzc"       # fault zone, K=4
    FTC = "ftc"       # fault type, K=11
    JOINT = "joint"   # zone x type, K=44

    @property
    def num_classes(self) -> int:
        return {Task.FZC: len(constants.ZONES),
                Task.FTC: len(FaultType),
                Task.JOINT: len(constants.ZONES) * len(FaultType)}[self]

    @classmethod
    def parse(cls, value: str) -> "Task":
        try:
            return cls(value.lower())
        except ValueError:
            raise ConfigurationError(
                f"unknown task {value!r}; expected one of {[t.value for t in cls]}"
            ) from None


def joint_label(zone: int, fault_type_label: int) -> int:
    """Joint zone/type label in 1..44."""
    return (zone - 1) * len(FaultType) + fault_type_label


@dataclass(frozen=True)
class FaultSpec:
    """Parameters of one simulated fault event as seen from one measuring bus."""
    fault_type: FaultType         # one of the 11 short-circuit types
    zone: int                     # faulted zone, 1..4
    resistance: float             # fault resistance in ohms
    measurement_location: int     # measuring bus, 1..4
    rng_seed: int = 0             # seeds noise and load variation

    def __post_init__(self):
        if not isinstance(self.fault_type, FaultType):
            raise ConfigurationError(f"fault_type must be a FaultType, got {self.fault_type!r}")
        if self.zone not in constants.ZONES:
            raise ConfigurationError(f"zone {self.zone} outside 1..4")
        if self.measurement_location not in constants.LOCATIONS:
            raise ConfigurationError(f"measurement_location {self.measurement_location} outside 1..4")
        if self.resistance not in constants.FAULT_RESISTANCES:
            raise ConfigurationError(f"resistance {self.resistance} is not one of the 22 dataset values")

    @property
    def key(self) -> Tuple[int, str, float]:
        """Fault instance key shared by the four location records."""
        return (self.zone, self.fault_type.value, self.resistance)


@dataclass(frozen=True)
class SimulationTiming:
    """Simulation window, sampling and fault timing in seconds."""
    t_start: float = constants.T_START
    t_end: float = constants.T_END
    sample_period: float = constants.SAMPLE_PERIOD
    frequency: float = constants.FREQUENCY
    fault_on: float = constants.FAULT_ON
    fault_off: float = constants.FAULT_OFF

    @property
    def sample_count(self) -> int:
        return int(round((self.t_end - self.t_start) / self.sample_period))

    def validate(self) -> None:
        """Raise ConfigurationError unless 0 <= fault_on <= fault_off <= t_end."""
        if self.sample_period <= 0 or self.t_end <= self.t_start:
            raise ConfigurationError(
                f"invalid simulation window [{self.t_start}, {self.t_end}] with period {self.sample_period}"
            )
        if not (self.t_start <= self.fault_on <= self.fault_off <= self.t_end):
            raise ConfigurationError(
                f"fault window [{self.fault_on}, {self.fault_off}) lies outside [{self.t_start}, {self.t_end}]"
            )

    def time_axis(self) -> np.ndarray:
        return self.t_start + np.arange(self.sample_count) * self.sample_period

    def fault_mask(self) -> np.ndarray:
        """Boolean mask of samples inside [fault_on, fault_off)."""
        t = self.time_axis()
        return (t >= self.fault_on - 1e-12) & (t < self.fault_off - 1e-12)

    def healthy_mask(self) -> np.ndarray:
        """Boolean mask of pre-fault samples in [t_start, fault_on)."""
        t = self.time_axis()
        return t < self.fault_on - 1e-12


@dataclass
class ThreePhaseWaveform:
    """Sampled three-phase voltage (per unit) for one FaultSpec."""
    phase_a: np.ndarray
    phase_b: np.ndarray
    phase_c: np.ndarray
    spec: FaultSpec
    timing: SimulationTiming = field(default_factory=SimulationTiming)

    def __post_init__(self):
        n = self.timing.sample_count
        for name in ("phase_a", "phase_b", "phase_c"):
            if len(getattr(self, name)) != n:
                raise ConfigurationError(f"{name} has {len(getattr(self, name))} samples, expected {n}")

    def as_array(self) -> np.ndarray:
        """Stack phases into a (3, n) array."""
        return np.vstack([self.phase_a, self.phase_b, self.phase_c])

    def phase(self, name: str) -> np.ndarray:
        return {"A": self.phase_a, "B": self.phase_b, "C": self.phase_c}[name]


@dataclass
class WaveformDataset:
    """All generated waveform records plus the configuration that produced them."""
    records: List[ThreePhaseWaveform]
    manifest: Dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def filter(self, zone: Optional[int] = None, fault_type: Optional[FaultType] = None,
               location: Optional[int] = None) -> List[ThreePhaseWaveform]:
        """Records matching every given criterion."""
        return [
            r for r in self.records
            if (zone is None or r.spec.zone == zone)
            and (fault_type is None or r.spec.fault_type == fault_type)
            and (location is None or r.spec.measurement_location == location)
        ]


@dataclass
class FeatureVector:
    """48 features of one record: [6 time | 6 DFT | 36 DWT]."""
    values: np.ndarray
    source: Tuple[int, str, float, int]   # (zone, type, resistance, location)


@dataclass
class SuperVector:
    """Four stacked location feature vectors with the three task labels."""
    values: np.ndarray            # 192 reals, location order 1..4
    label_zone: int               # 1..4
    label_type: int               # 1..11
    resistance: float = 0.0

    @property
    def label_joint(self) -> int:
        return joint_label(self.label_zone, self.label_type)

    def label_for(self, task: Task) -> int:
        return {Task.FZC: self.label_zone,
                Task.FTC: self.label_type,
                Task.JOINT: self.label_joint}[task]


@dataclass
class Prediction:
    """Classifier output for one input."""
    logits: np.ndarray
    probabilities: np.ndarray
    predicted_class: int          # 1-based argmax


class AttackFamily(Enum):
    RANDOM = "random"
    FGSM = "fgsm"
    BIM = "bim"
    CW_L2 = "cw_l2"
    CW_LINF = "cw_linf"

    @property
    def is_budgeted(self) -> bool:
        """True for attacks bounded by an l-inf epsilon."""
        return self in (AttackFamily.RANDOM, AttackFamily.FGSM, AttackFamily.BIM)

    @property
    def is_cw(self) -> bool:
        return self in (AttackFamily.CW_L2, AttackFamily.CW_LINF)


class AttackGoal(Enum):
    UNTARGETED = "untargeted"
    TARGETED = "targeted"


class TargetRule(Enum):
    NEXT_CLASS_CYCLIC = "next_class_cyclic"
    LEAST_LIKELY = "least_likely"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class CwParams:
    """Carlini-Wagner solver settings."""
    confidence: float = 0.0           # kappa
    initial_const: float = 1.0        # initial c
    binary_search_steps: int = 9
    max_iterations: int = 200         # inner Adam iterations per c
    learning_rate: float = 0.01       # Adam step size on delta
    largest_const: float = 1e10       # upper bound sentinel for the c search
    initial_tau: float = 1.0          # l-inf variant starting bound
    tau_decrease: float = 0.9         # l-inf variant shrink factor
    tau_rounds: int = 8               # l-inf variant maximum shrink rounds

    def validate(self) -> None:
        if self.binary_search_steps < 1:
            raise ConfigurationError("binary_search_steps must be >= 1")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        if self.learning_rate <= 0 or self.initial_const <= 0:
            raise ConfigurationError("learning_rate and initial_const must be positive")
        if not 0.0 < self.tau_decrease < 1.0:
            raise ConfigurationError("tau_decrease must lie in (0, 1)")
        if self.confidence < 0:
            raise ConfigurationError("confidence must be >= 0")


@dataclass(frozen=True)
class AttackConfig:
    """One attack setting: family, goal, budget and solver parameters."""
    family: AttackFamily
    goal: AttackGoal = AttackGoal.UNTARGETED
    epsilon: float = 0.0                  # l-inf budget, ignored by C&W
    bim_step: Optional[float] = None      # defaults to epsilon / 4
    bim_iters: int = 10
    cw: CwParams = field(default_factory=CwParams)
    target_rule: TargetRule = TargetRule.NEXT_CLASS_CYCLIC
    target_label: Optional[int] = None    # used by TargetRule.EXPLICIT
    seed: int = 0

    def validate(self, num_classes: Optional[int] = None) -> None:
        """Raise ConfigurationError on an unusable configuration."""
        if not math.isfinite(self.epsilon) or self.epsilon < 0:
            raise ConfigurationError(f"epsilon must be finite and >= 0, got {self.epsilon}")
        if self.bim_iters < 1:
            raise ConfigurationError("bim_iters must be >= 1")
        if self.bim_step is not None and self.bim_step <= 0:
            raise ConfigurationError("bim_step must be > 0")
        self.cw.validate()
        if self.family is AttackFamily.RANDOM and self.goal is AttackGoal.TARGETED:
            raise ConfigurationError("random noise has no targeted variant")
        if self.goal is AttackGoal.TARGETED and self.target_rule is TargetRule.EXPLICIT:
            if self.target_label is None:
                raise ConfigurationError("EXPLICIT target rule needs target_label")
            if num_classes is not None and not 1 <= self.target_label <= num_classes:
                raise ConfigurationError(f"target_label {self.target_label} outside 1..{num_classes}")
        if num_classes is not None and num_classes < 2:
            raise ConfigurationError("attacks need at least two classes")

    @property
    def step(self) -> float:
        """Effective BIM step size."""
        return self.bim_step if self.bim_step is not None else self.epsilon / 4.0

    @property
    def name(self) -> str:
        return f"{self.family.value}/{self.goal.value}"


@dataclass
class AdversarialExample:
    """A perturbed input with its provenance and outcome."""
    original: SuperVector
    perturbed: np.ndarray
    attack: AttackConfig
    true_label: int
    target_label: Optional[int]
    achieved_class: int
    success: bool

    @property
    def delta(self) -> np.ndarray:
        return self.perturbed - self.original.values

    @property
    def delta_linf(self) -> float:
        return float(np.max(np.abs(self.delta))) if self.delta.size else 0.0

    @property
    def delta_l2(self) -> float:
        return float(np.linalg.norm(self.delta))
