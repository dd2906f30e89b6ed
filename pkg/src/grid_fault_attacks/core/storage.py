"""
On-disk artifact formats.

Every artifact carries ``schema_version``. JSON is written with sorted keys
and a trailing newline so re-writing the same content gives identical bytes;
floats go through ``repr`` and survive a load/save cycle exactly.
"""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
import pandas as pd

from grid_fault_attacks.core import constants
from grid_fault_attacks.core.attacks import AttackBatch
from grid_fault_attacks.core.errors import ArtifactError
from grid_fault_attacks.core.features import Standardizer, apply_standardizer, feature_names, select
from grid_fault_attacks.core.mlp import MlpModel, TrainingHistory
from grid_fault_attacks.core.models import (
    FaultSpec,
    FaultType,
    SuperVector,
    Task,
    ThreePhaseWaveform,
    WaveformDataset,
)
from grid_fault_attacks.core.waveform import GenerationConfig

logger = logging.getLogger(__name__)

DATASET_MANIFEST = "manifest.json"
WAVEFORMS_NPY = "waveforms.npy"
WAVEFORMS_CSV = "waveforms.csv"
INDEX_CSV = "index.csv"
FEATURES_CSV = "features.csv"
FEATURES_JSON = "features.json"
ATTACK_MANIFEST = "manifest.json"
INDEX_COLUMNS = ["zone", "fault_type", "resistance", "location", "seed"]


def dumps_json(data: Any) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(data, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path: Path, data: Any) -> Path:
    """Write canonical JSON, creating parent directories.

    Raises:
        ArtifactError: If the file cannot be written
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps_json(data), encoding="utf-8")
    except OSError as e:
        raise ArtifactError(f"cannot write {path}: {e}") from e
    return path


def read_json(path: Path) -> Dict[str, Any]:
    """Read a JSON artifact and check its schema version.

    Raises:
        ArtifactError: If the file is missing, malformed or from another schema
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ArtifactError(f"cannot read {path}: {e}") from e
    version = data.get("schema_version") if isinstance(data, dict) else None
    if version != constants.SCHEMA_VERSION:
        raise ArtifactError(f"{path} has schema version {version}, expected {constants.SCHEMA_VERSION}")
    return data


def write_csv(path: Path, frame: pd.DataFrame) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, lineterminator="\n")
    except OSError as e:
        raise ArtifactError(f"cannot write {path}: {e}") from e
    return path


def read_csv(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, float_precision="round_trip")
    except (OSError, ValueError) as e:
        raise ArtifactError(f"cannot read {path}: {e}") from e


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: Path) -> str:
    try:
        return sha256_bytes(Path(path).read_bytes())
    except OSError as e:
        raise ArtifactError(f"cannot read {path}: {e}") from e


def waveform_array(dataset: WaveformDataset) -> np.ndarray:
    """All records as one (N, 3, n_samples) float64 array."""
    return np.stack([r.as_array() for r in dataset.records]).astype(np.float64)


def dataset_checksum(dataset: WaveformDataset) -> str:
    """sha256 of the C-ordered waveform array, independent of the file format."""
    return sha256_bytes(np.ascontiguousarray(waveform_array(dataset)).tobytes())


# Dataset

def save_dataset(dataset: WaveformDataset, directory: Path, fmt: str = "npy") -> Path:
    """Write a dataset directory.

    Args:
        dataset: Generated dataset
        directory: Target directory, created if needed
        fmt: ``npy`` (waveforms.npy + index.csv) or ``csv`` (one waveforms.csv)

    Returns:
        Path of the manifest
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    array = waveform_array(dataset)
    index = pd.DataFrame(
        [(r.spec.zone, r.spec.fault_type.value, r.spec.resistance, r.spec.measurement_location, r.spec.rng_seed)
         for r in dataset.records],
        columns=INDEX_COLUMNS,
    )

    if fmt == "npy":
        try:
            np.save(directory / WAVEFORMS_NPY, array)
        except OSError as e:
            raise ArtifactError(f"cannot write {directory / WAVEFORMS_NPY}: {e}") from e
        write_csv(directory / INDEX_CSV, index)
    elif fmt == "csv":
        n = array.shape[2]
        columns = [f"{phase}{i}" for phase in "abc" for i in range(n)]
        samples = pd.DataFrame(array.reshape(len(array), -1), columns=columns)
        write_csv(directory / WAVEFORMS_CSV, pd.concat([index, samples], axis=1))
    else:
        raise ArtifactError(f"unknown dataset format {fmt!r}; expected 'npy' or 'csv'")

    manifest = dict(dataset.manifest)
    manifest.update({
        "schema_version": constants.SCHEMA_VERSION,
        "format": fmt,
        "record_count": len(dataset),
        "waveforms_sha256": sha256_bytes(np.ascontiguousarray(array).tobytes()),
    })
    logger.info("Saved %d records to %s (%s)", len(dataset), directory, fmt)
    return write_json(directory / DATASET_MANIFEST, manifest)


def load_dataset(directory: Path) -> WaveformDataset:
    """Read a dataset directory written by save_dataset.

    Raises:
        ArtifactError: On missing files, schema mismatch or checksum mismatch
    """
    directory = Path(directory)
    manifest = read_json(directory / DATASET_MANIFEST)
    config = GenerationConfig.from_dict(manifest.get("config", {}))

    if manifest.get("format") == "csv":
        frame = read_csv(directory / WAVEFORMS_CSV)
        index = frame[INDEX_COLUMNS]
        n = config.timing.sample_count
        array = frame.drop(columns=INDEX_COLUMNS).to_numpy(dtype=np.float64).reshape(len(frame), 3, n)
    else:
        try:
            array = np.load(directory / WAVEFORMS_NPY)
        except (OSError, ValueError) as e:
            raise ArtifactError(f"cannot read {directory / WAVEFORMS_NPY}: {e}") from e
        index = read_csv(directory / INDEX_CSV)

    checksum = sha256_bytes(np.ascontiguousarray(array).tobytes())
    if checksum != manifest.get("waveforms_sha256"):
        raise ArtifactError(f"waveform checksum mismatch in {directory}")

    records = []
    for row, samples in zip(index.itertuples(index=False), array):
        spec = FaultSpec(fault_type=FaultType(row.fault_type), zone=int(row.zone), resistance=float(row.resistance),
                         measurement_location=int(row.location), rng_seed=int(row.seed))
        records.append(ThreePhaseWaveform(phase_a=samples[0], phase_b=samples[1], phase_c=samples[2],
                                          spec=spec, timing=config.timing))
    return WaveformDataset(records=records, manifest=manifest)


# Features

@dataclass
class FeatureBundle:
    """Raw supervectors plus the split and standardizer fitted on it."""
    supervectors: List[SuperVector]
    train_indices: np.ndarray
    test_indices: np.ndarray
    standardizer: Standardizer
    metadata: Dict[str, Any] = field(default_factory=dict)

    def standardized(self, which: str) -> List[SuperVector]:
        """Standardized ``train``, ``test`` or ``all`` supervectors."""
        indices = {"train": self.train_indices, "test": self.test_indices, "all": None}[which]
        return apply_standardizer(self.standardizer, select(self.supervectors, indices))


def save_features(bundle: FeatureBundle, directory: Path) -> Path:
    """Write features.csv (raw values and labels) and the features.json sidecar."""
    directory = Path(directory)
    names = feature_names()
    frame = pd.DataFrame(np.vstack([sv.values for sv in bundle.supervectors]), columns=names)
    frame["resistance"] = [sv.resistance for sv in bundle.supervectors]
    frame["label_zone"] = [sv.label_zone for sv in bundle.supervectors]
    frame["label_type"] = [sv.label_type for sv in bundle.supervectors]
    frame["label_joint"] = [sv.label_joint for sv in bundle.supervectors]
    write_csv(directory / FEATURES_CSV, frame)

    sidecar = dict(bundle.metadata)
    sidecar.update({
        "schema_version": constants.SCHEMA_VERSION,
        "feature_names": names,
        "count": len(bundle.supervectors),
        "train_indices": [int(i) for i in bundle.train_indices],
        "test_indices": [int(i) for i in bundle.test_indices],
        "standardizer": {
            "mean": [float(v) for v in bundle.standardizer.mean],
            "std": [float(v) for v in bundle.standardizer.std],
            "constant": bundle.standardizer.flagged,
        },
        "features_sha256": sha256_file(directory / FEATURES_CSV),
    })
    logger.info("Saved %d supervectors to %s", len(bundle.supervectors), directory)
    return write_json(directory / FEATURES_JSON, sidecar)


def load_features(directory: Path) -> FeatureBundle:
    """Read a features directory written by save_features."""
    directory = Path(directory)
    sidecar = read_json(directory / FEATURES_JSON)
    frame = read_csv(directory / FEATURES_CSV)
    names = sidecar["feature_names"]
    if names != feature_names():
        raise ArtifactError(f"{directory / FEATURES_JSON} lists an unexpected feature ordering")

    values = frame[names].to_numpy(dtype=np.float64)
    supervectors = [
        SuperVector(values=values[i], label_zone=int(row.label_zone), label_type=int(row.label_type),
                    resistance=float(row.resistance))
        for i, row in enumerate(frame[["resistance", "label_zone", "label_type"]].itertuples(index=False))
    ]
    std = sidecar["standardizer"]
    constant = np.zeros(len(names), dtype=bool)
    constant[std["constant"]] = True
    standardizer = Standardizer(mean=np.array(std["mean"]), std=np.array(std["std"]), constant=constant)
    return FeatureBundle(
        supervectors=supervectors,
        train_indices=np.array(sidecar["train_indices"], dtype=int),
        test_indices=np.array(sidecar["test_indices"], dtype=int),
        standardizer=standardizer,
        metadata=sidecar,
    )


# Model checkpoints

@dataclass
class Checkpoint:
    """A trained model with its provenance."""
    model: MlpModel
    standardizer_ref: Dict[str, Any] = field(default_factory=dict)
    history: TrainingHistory = field(default_factory=TrainingHistory)
    train_config: Dict[str, Any] = field(default_factory=dict)
    metrics: Dict[str, Any] = field(default_factory=dict)


def model_path(directory: Path, task: Task) -> Path:
    return Path(directory) / f"model_{task.value}.json"


def checkpoint_to_dict(checkpoint: Checkpoint) -> Dict[str, Any]:
    model = checkpoint.model
    return {
        "schema_version": constants.SCHEMA_VERSION,
        "task": model.task.value,
        "layer_sizes": [int(s) for s in model.layer_sizes],
        "weights": [[float(v) for v in w.ravel(order="C")] for w in model.weights],
        "biases": [[float(v) for v in b] for b in model.biases],
        "standardizer": checkpoint.standardizer_ref,
        "history": asdict(checkpoint.history),
        "train_config": checkpoint.train_config,
        "metrics": checkpoint.metrics,
    }


def save_checkpoint(checkpoint: Checkpoint, path: Path) -> Path:
    """Write a model_<task>.json checkpoint; parameters are flattened row-major."""
    return write_json(path, checkpoint_to_dict(checkpoint))


def load_checkpoint(path: Path) -> Checkpoint:
    """Read a checkpoint written by save_checkpoint.

    Raises:
        ArtifactError: On a missing file, schema mismatch or inconsistent shapes
    """
    data = read_json(path)
    try:
        sizes = [int(s) for s in data["layer_sizes"]]
        weights = [np.array(w, dtype=np.float64).reshape(sizes[i], sizes[i + 1])
                   for i, w in enumerate(data["weights"])]
        biases = [np.array(b, dtype=np.float64) for b in data["biases"]]
        model = MlpModel(task=Task.parse(data["task"]), layer_sizes=sizes, weights=weights, biases=biases)
    except (KeyError, ValueError, IndexError) as e:
        raise ArtifactError(f"malformed checkpoint {path}: {e}") from e
    return Checkpoint(model=model, standardizer_ref=data.get("standardizer", {}),
                      history=TrainingHistory(**data.get("history", {})),
                      train_config=data.get("train_config", {}), metrics=data.get("metrics", {}))


# Attack dumps

def attack_file_name(task: Task, batch: AttackBatch) -> str:
    config = batch.config
    stem = f"{task.value}_{config.family.value}_{config.goal.value}"
    if config.family.is_budgeted:
        stem += f"_eps{config.epsilon:g}"
    return stem + ".csv"


def save_attack_batch(batch: AttackBatch, directory: Path, task: Task, model_sha256: str = "") -> Path:
    """Write one attack CSV and register it in the directory's manifest."""
    directory = Path(directory)
    frame = pd.DataFrame({
        "example_id": range(len(batch.examples)),
        "true_label": [e.true_label for e in batch.examples],
        "target_label": [e.target_label if e.target_label is not None else 0 for e in batch.examples],
        "achieved_class": [e.achieved_class for e in batch.examples],
        "success": [int(e.success) for e in batch.examples],
        "delta_l2": [e.delta_l2 for e in batch.examples],
        "delta_linf": [e.delta_linf for e in batch.examples],
    })
    name = attack_file_name(task, batch)
    path = write_csv(directory / name, frame)

    manifest_path = directory / ATTACK_MANIFEST
    manifest = read_json(manifest_path) if manifest_path.exists() else {
        "schema_version": constants.SCHEMA_VERSION, "runs": {}}
    # one entry per dump on disk, keyed by file name
    manifest["runs"] = {k: v for k, v in manifest["runs"].items() if (directory / k).exists()}
    config = batch.config
    manifest["runs"][name] = {
        "task": task.value,
        "family": config.family.value,
        "goal": config.goal.value,
        "epsilon": config.epsilon if config.family.is_budgeted else None,
        "seed": config.seed,
        "target_rule": config.target_rule.value,
        "bim_step": config.step,
        "bim_iters": config.bim_iters,
        "cw": asdict(config.cw),
        "model_sha256": model_sha256,
        "failures": [[int(i), reason] for i, reason in batch.failures],
    }
    write_json(manifest_path, manifest)
    return path

