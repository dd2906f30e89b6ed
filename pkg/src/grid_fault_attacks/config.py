"""
Run configuration: YAML plan files, environment defaults and seed fan-out.

Precedence is CLI flag > plan file > environment > built-in default. The CLI
applies its flags on top of what load_settings() returns.
"""

import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import yaml

from grid_fault_attacks.core.errors import ConfigurationError
from grid_fault_attacks.core.evaluation import ExperimentPlan
from grid_fault_attacks.core.mlp import TrainConfig
from grid_fault_attacks.core.waveform import GenerationConfig

logger = logging.getLogger(__name__)

ENV_OUTPUT = "GRID_FAULT_ATTACKS_OUTPUT"
ENV_THREADS = "GRID_FAULT_ATTACKS_THREADS"
DEFAULT_OUTPUT = "runs"

# Fixed entropy words per pipeline stage; never renumber existing entries
STAGE_KEYS: Dict[str, int] = {
    "data": 1,
    "split": 2,
    "init-fzc": 3,
    "init-ftc": 4,
    "init-joint": 5,
    "train-fzc": 6,
    "train-ftc": 7,
    "train-joint": 8,
}

PLAN_KEYS = {"seed", "tasks", "epsilon_grid", "reference_epsilon", "attacks", "train", "generation",
             "clip_to_training_range", "paths"}
TRAIN_KEYS = {"epochs", "learning_rate", "batch_size", "hidden_sizes", "test_fraction"}
GENERATION_KEYS = {"noise_std", "load_jitter", "transient_amplitude", "transient_tau"}


def derive_seed(master_seed: int, stage: str) -> int:
    """Stage seed from the master seed via SeedSequence([master, STAGE_KEYS[stage]])."""
    if stage not in STAGE_KEYS:
        raise ConfigurationError(f"unknown seed stage {stage!r}")
    return int(np.random.SeedSequence([master_seed, STAGE_KEYS[stage]]).generate_state(1)[0])


def default_output_root() -> Path:
    return Path(os.environ.get(ENV_OUTPUT) or DEFAULT_OUTPUT)


def default_threads() -> int:
    """Worker count from the environment, or -1 (all cores)."""
    raw = os.environ.get(ENV_THREADS)
    if not raw:
        return -1
    try:
        threads = int(raw)
    except ValueError:
        raise ConfigurationError(f"{ENV_THREADS} must be an integer, got {raw!r}") from None
    if threads == 0 or threads < -1:
        raise ConfigurationError(f"{ENV_THREADS} must be >= 1 or -1, got {threads}")
    return threads


@dataclass
class RunSettings:
    """Everything a pipeline run needs besides paths."""
    plan: ExperimentPlan = field(default_factory=ExperimentPlan)
    train: TrainConfig = field(default_factory=TrainConfig)
    generation: GenerationConfig = field(default_factory=GenerationConfig)

    @property
    def seed(self) -> int:
        return self.plan.seed

    def with_seed(self, seed: int) -> "RunSettings":
        return replace(self, plan=replace(self.plan, seed=seed))


def _check_keys(section: str, data: Dict[str, Any], allowed: set) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigurationError(f"unknown keys in {section}: {sorted(unknown)}")


def settings_from_dict(data: Dict[str, Any]) -> RunSettings:
    """Build RunSettings from a parsed plan file.

    Raises:
        ConfigurationError: On unknown keys or invalid values
    """
    if not isinstance(data, dict):
        raise ConfigurationError("plan file must contain a mapping")
    _check_keys("plan", data, PLAN_KEYS)

    plan = ExperimentPlan.from_dict({k: v for k, v in data.items() if k not in ("train", "generation")})

    train_data = data.get("train") or {}
    _check_keys("train", train_data, TRAIN_KEYS)
    if "hidden_sizes" in train_data:
        train_data = dict(train_data, hidden_sizes=tuple(int(h) for h in train_data["hidden_sizes"]))
    train = TrainConfig(**train_data)

    generation_data = data.get("generation") or {}
    _check_keys("generation", generation_data, GENERATION_KEYS)
    generation = GenerationConfig(**{k: float(v) for k, v in generation_data.items()})

    settings = RunSettings(plan=plan, train=train, generation=generation)
    validate_settings(settings)
    return settings


def validate_settings(settings: RunSettings) -> None:
    settings.plan.validate()
    settings.train.validate()
    if len(settings.train.hidden_sizes) != 2 or min(settings.train.hidden_sizes) < 1:
        raise ConfigurationError(f"hidden_sizes must be two positive widths, got {settings.train.hidden_sizes}")
    settings.generation.validate()


def load_settings(path: Optional[Path] = None) -> RunSettings:
    """Settings from a YAML plan file, or the defaults when path is None.

    Raises:
        ConfigurationError: If the file is unreadable or invalid
    """
    if path is None:
        return RunSettings()
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ConfigurationError(f"cannot read plan file {path}: {e}") from e
    logger.info("Loaded plan file %s", path)
    return settings_from_dict(data)