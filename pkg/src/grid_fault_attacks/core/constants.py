"""
Versioned constants for the fault-waveform surrogate and the experiment grid.

Changing any value here changes generated datasets; bump SURROGATE_VERSION
whenever a value changes so old artifacts are recognisable.
"""

from typing import Dict, List, Tuple

SURROGATE_VERSION = 1
SCHEMA_VERSION = 1

# Fault resistance values in ohms (22 values, ascending)
FAULT_RESISTANCES: Tuple[float, ...] = (
    0.0010, 0.0273, 0.0535, 0.0798, 0.1061, 0.1323, 0.1586, 0.1848,
    0.2111, 0.2374, 0.2636, 0.2899, 0.3162, 0.3424, 0.3687, 0.3949,
    0.4212, 0.4475, 0.4737, 0.5, 1.0, 2.0,
)

ZONES: Tuple[int, ...] = (1, 2, 3, 4)
LOCATIONS: Tuple[int, ...] = (1, 2, 3, 4)

# Faulted branch per zone and measurement bus per location (IEEE 13-node feeder)
ZONE_BRANCHES: Dict[int, str] = {1: "632-671", 2: "632-633", 3: "692-675", 4: "671-680"}
LOCATION_BUSES: Dict[int, int] = {1: 671, 2: 633, 3: 675, 4: 680}

# Zone (row) to measurement location (column) attenuation of the sag depth.
# Diagonal is 1.0; off-diagonal values fall with electrical distance between
# the faulted branch and the measuring bus.
COUPLING_MATRIX: Tuple[Tuple[float, ...], ...] = (
    (1.00, 0.62, 0.74, 0.78),
    (0.58, 1.00, 0.46, 0.44),
    (0.76, 0.48, 1.00, 0.66),
    (0.80, 0.45, 0.64, 1.00),
)

# Sag surrogate
MIN_SAG_MULTIPLIER = 0.1
SIGMA_CEILING = 0.9              # sigma(R) never reaches 1 so R=2 ohm still sags
LOG10_R_LOW = -3.0               # log10(0.001)
LOG10_R_HIGH = 0.30103           # log10(2.0)
HEALTHY_PHASE_SWING = 0.02       # max deviation of non-faulted phases from 1.0

# Ground-fault transient
TRANSIENT_AMPLITUDE = 0.2        # per unit
TRANSIENT_TIME_CONSTANT = 2e-3   # seconds
TRANSIENT_FREQUENCY = 420.0      # Hz, 7th harmonic ring-down

# Measurement model
NOISE_STD = 0.01                 # per unit
LOAD_JITTER = 0.04               # +/- per-record pre-fault amplitude variation

# Simulation timing
T_START = 0.0
T_END = 0.022
SAMPLE_PERIOD = 1e-5
FREQUENCY = 60.0
FAULT_ON = 0.01
FAULT_OFF = 0.02

# Features
WAVELET = "db4"
WAVELET_LEVELS = 5
WAVELET_MODE = "symmetric"
STAT_NAMES: List[str] = ["energy", "max", "mean", "norm", "skewness", "kurtosis"]
DOMAIN_NAMES: List[str] = ["time", "dft", "cA5", "cD5", "cD4", "cD3", "cD2", "cD1"]
FEATURES_PER_LOCATION = 48
SUPERVECTOR_LENGTH = FEATURES_PER_LOCATION * len(LOCATIONS)

# Model / training
DEFAULT_HIDDEN_SIZES: Tuple[int, int] = (128, 64)
DEFAULT_EPOCHS = 500
DEFAULT_LEARNING_RATE = 1e-3
DEFAULT_BATCH_SIZE = 20
DEFAULT_TEST_FRACTION = 0.2
PROBABILITY_FLOOR = 1e-12

# Attacks / evaluation
EPSILON_GRID: Tuple[float, ...] = (0.001, 0.002, 0.005, 0.01, 0.02, 0.04, 0.06, 0.08, 0.1)
REFERENCE_EPSILON = 0.04
BUDGET_TOLERANCE = 1e-9
MONOTONICITY_TOLERANCE = 0.02
NOISE_GAP_MIN_EPSILON = 0.005
DEFAULT_SEED = 7
