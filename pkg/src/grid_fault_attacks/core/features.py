"""
Feature extraction: time, DFT and DWT statistics of a waveform record.

Each record is reduced to one channel (per-sample mean of the three phase
magnitudes) and summarised by six statistics in eight domains: the time
series, its one-sided DFT magnitude spectrum and the six sub-bands of a
5-level db4 wavelet decomposition. That gives 6 + 6 + 36 = 48 features per
measuring bus; the four buses of a fault instance are stacked into a
192-long supervector.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pywt
from joblib import Parallel, delayed
from scipy import fft, stats
from sklearn.model_selection import train_test_split
from sklearn.preprocessing import StandardScaler

from grid_fault_attacks.core import constants
from grid_fault_attacks.core.errors import IncompleteDatasetError, InvalidInputError
from grid_fault_attacks.core.models import (
    FaultType,
    FeatureVector,
    SuperVector,
    ThreePhaseWaveform,
    WaveformDataset,
)

logger = logging.getLogger(__name__)

_WAVELET = pywt.Wavelet(constants.WAVELET)


def feature_names() -> List[str]:
    """Column names of a supervector, in value order."""
    return [
        f"loc{location}_{domain}_{stat}"
        for location in constants.LOCATIONS
        for domain in constants.DOMAIN_NAMES
        for stat in constants.STAT_NAMES
    ]


def aggregate_stats(series: Sequence[float]) -> np.ndarray:
    """Six summary statistics of a series.

    Args:
        series: Real-valued samples, at least one

    Returns:
        [energy, max |x|, mean, L2 norm, skewness, kurtosis]; skewness and
        (non-excess) kurtosis use population moments and are 0 for a
        zero-variance series

    Raises:
        InvalidInputError: If the series is empty
    """
    x = np.asarray(series, dtype=float).ravel()
    if x.size == 0:
        raise InvalidInputError("aggregate_stats needs at least one sample")

    energy = float(np.dot(x, x))
    peak = float(np.max(np.abs(x)))
    mean = float(np.mean(x))
    norm = float(np.sqrt(energy))

    # Treat numerically flat series as zero variance
    if np.std(x) <= 1e-12 * max(1.0, peak):
        skewness, kurtosis = 0.0, 0.0
    else:
        skewness = float(stats.skew(x, bias=True))
        kurtosis = float(stats.kurtosis(x, fisher=False, bias=True))
    return np.array([energy, peak, mean, norm, skewness, kurtosis])


def dft_magnitudes(series: Sequence[float]) -> np.ndarray:
    """Magnitudes of DFT bins 0..floor(N/2) of a real series.

    Raises:
        InvalidInputError: If the series has fewer than two samples
    """
    x = np.asarray(series, dtype=float).ravel()
    if x.size < 2:
        raise InvalidInputError("dft_magnitudes needs at least two samples")
    return np.abs(fft.rfft(x))


def dwt_subbands(series: Sequence[float], levels: int = constants.WAVELET_LEVELS) -> List[np.ndarray]:
    """Daubechies-4 decomposition with symmetric boundary extension.

    Args:
        series: Real samples, at least as long as the db4 filter
        levels: Decomposition depth

    Returns:
        [cA_levels, cD_levels, ..., cD1] (six arrays for the default depth)

    Raises:
        InvalidInputError: If the series is shorter than the filter support
    """
    x = np.asarray(series, dtype=float).ravel()
    if x.size < _WAVELET.dec_len:
        raise InvalidInputError(
            f"dwt_subbands needs at least {_WAVELET.dec_len} samples, got {x.size}"
        )
    return pywt.wavedec(x, _WAVELET, mode=constants.WAVELET_MODE, level=levels)


def reconstruct_from_subbands(subbands: List[np.ndarray], length: int) -> np.ndarray:
    """Inverse of dwt_subbands, trimmed to the original length."""
    return pywt.waverec(subbands, _WAVELET, mode=constants.WAVELET_MODE)[:length]


def composite_channel(waveform: ThreePhaseWaveform) -> np.ndarray:
    """Per-sample mean of the three phase magnitudes."""
    return np.mean(np.abs(waveform.as_array()), axis=0)


def extract_features(waveform: ThreePhaseWaveform) -> FeatureVector:
    """The 48-feature vector of one waveform record.

    Order: time stats, DFT stats, then stats of cA5, cD5, cD4, cD3, cD2, cD1.
    """
    channel = composite_channel(waveform)
    blocks = [aggregate_stats(channel), aggregate_stats(dft_magnitudes(channel))]
    blocks.extend(aggregate_stats(band) for band in dwt_subbands(channel))
    values = np.concatenate(blocks)

    if values.size != constants.FEATURES_PER_LOCATION or not np.all(np.isfinite(values)):
        raise InvalidInputError("feature extraction produced a malformed vector")

    spec = waveform.spec
    return FeatureVector(
        values=values,
        source=(spec.zone, spec.fault_type.value, spec.resistance, spec.measurement_location),
    )


def extract_all(records: Iterable[ThreePhaseWaveform], n_jobs: int = 1) -> List[FeatureVector]:
    """extract_features over many records, in input order."""
    return list(Parallel(n_jobs=n_jobs)(delayed(extract_features)(r) for r in records))


def build_supervectors(dataset: Union[WaveformDataset, Iterable[FeatureVector]],
                       n_jobs: int = 1) -> List[SuperVector]:
    """Stack the four location vectors of every fault instance.

    Args:
        dataset: Waveform dataset, or already extracted feature vectors
        n_jobs: Workers for feature extraction

    Returns:
        One SuperVector per (zone, type, resistance), sorted by that key so
        the result does not depend on record order

    Raises:
        IncompleteDatasetError: If an instance lacks a location or has duplicates
    """
    if isinstance(dataset, WaveformDataset):
        vectors = extract_all(dataset.records, n_jobs=n_jobs)
    else:
        vectors = list(dataset)

    grouped: Dict[Tuple[int, str, float], Dict[int, np.ndarray]] = defaultdict(dict)
    for vector in vectors:
        zone, ftype, resistance, location = vector.source
        slot = grouped[(zone, ftype, resistance)]
        if location in slot:
            raise IncompleteDatasetError(f"duplicate location {location} for fault instance {(zone, ftype, resistance)}")
        slot[location] = vector.values

    supervectors = []
    for key in sorted(grouped, key=lambda k: (k[0], FaultType(k[1]).label, k[2])):
        zone, ftype, resistance = key
        missing = [loc for loc in constants.LOCATIONS if loc not in grouped[key]]
        if missing:
            raise IncompleteDatasetError(f"fault instance {key} is missing locations {missing}")
        values = np.concatenate([grouped[key][loc] for loc in constants.LOCATIONS])
        supervectors.append(SuperVector(values=values, label_zone=zone,
                                        label_type=FaultType(ftype).label, resistance=resistance))

    logger.info("Built %d supervectors from %d feature vectors", len(supervectors), len(vectors))
    return supervectors


def as_matrix(supervectors: Sequence[SuperVector]) -> np.ndarray:
    return np.vstack([sv.values for sv in supervectors])


@dataclass
class Standardizer:
    """Per-dimension z-score parameters fitted on the training split."""
    mean: np.ndarray
    std: np.ndarray               # 1.0 where the dimension is constant
    constant: np.ndarray          # True for zero-variance dimensions

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def inverse_transform(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.std + self.mean

    @property
    def flagged(self) -> List[int]:
        """Indices of constant dimensions."""
        return [int(i) for i in np.flatnonzero(self.constant)]


def fit_standardizer(train: Union[Sequence[SuperVector], np.ndarray]) -> Standardizer:
    """Fit z-score parameters on a non-empty training split.

    Dimensions with zero variance get std = 1 and are flagged.
    """
    x = train if isinstance(train, np.ndarray) else as_matrix(train)
    if x.shape[0] == 0:
        raise InvalidInputError("cannot fit a standardizer on an empty split")
    scaler = StandardScaler().fit(x)
    # StandardScaler leaves scale_ at 1.0 for constant features
    constant = (scaler.scale_ == 1.0) & (scaler.var_ < 1.0)
    if constant.any():
        logger.warning("%d constant feature dimensions passed through unscaled", int(constant.sum()))
    return Standardizer(mean=scaler.mean_.copy(), std=scaler.scale_.copy(), constant=constant)


def apply_standardizer(standardizer: Standardizer,
                       data: Union[SuperVector, Sequence[SuperVector], np.ndarray]):
    """Standardize a supervector, a list of them, or a raw matrix."""
    if isinstance(data, np.ndarray):
        return standardizer.transform(data)
    if isinstance(data, SuperVector):
        return SuperVector(values=standardizer.transform(data.values), label_zone=data.label_zone,
                           label_type=data.label_type, resistance=data.resistance)
    return [apply_standardizer(standardizer, sv) for sv in data]


def split_indices(supervectors: Sequence[SuperVector], test_fraction: float = constants.DEFAULT_TEST_FRACTION,
                  seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Stratified (on the joint label) train/test index split."""
    indices = np.arange(len(supervectors))
    strata = np.array([sv.label_joint for sv in supervectors])
    train_idx, test_idx = train_test_split(indices, test_size=test_fraction, random_state=seed, stratify=strata)
    return np.sort(train_idx), np.sort(test_idx)


def training_range(standardized_train: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-dimension (min, max) of the standardized training matrix."""
    return standardized_train.min(axis=0), standardized_train.max(axis=0)


def select(supervectors: Sequence[SuperVector], indices: Optional[Iterable[int]]) -> List[SuperVector]:
    if indices is None:
        return list(supervectors)
    return [supervectors[int(i)] for i in indices]
