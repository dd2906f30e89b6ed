"""
End-to-end pipeline: dataset -> features -> models -> attacks -> report.

The Pipeline class binds RunSettings to an output directory and exposes one
method per CLI stage. Each stage reads the artifacts of the previous one
from disk, so stages can run in separate invocations.
"""

import logging
from dataclasses import asdict, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from grid_fault_attacks.config import RunSettings, derive_seed
from grid_fault_attacks.core import storage
from grid_fault_attacks.core.attacks import AttackBatch, attack_batch
from grid_fault_attacks.core.errors import ConfigurationError
from grid_fault_attacks.core.evaluation import (
    CellKey,
    EvaluationReport,
    cell_seed,
    emit_report,
    load_report,
    mean_degradation_by_goal,
    run_experiment,
)
from grid_fault_attacks.core.features import (
    as_matrix,
    build_supervectors,
    fit_standardizer,
    select,
    split_indices,
    training_range,
)
from grid_fault_attacks.core.mlp import evaluate_accuracy, init_mlp, train
from grid_fault_attacks.core.models import AttackFamily, AttackGoal, Task
from grid_fault_attacks.core.waveform import generate_dataset
from grid_fault_attacks.ui.console import accuracy_table, emit_result, render

logger = logging.getLogger(__name__)


class Pipeline:
    """Runs pipeline stages against one output directory.

    Layout under ``output``: ``data/``, ``features/``, ``models/``,
    ``attacks/`` and ``report/``. Explicit directories override the defaults.
    """

    def __init__(self, settings: RunSettings, output: Path, n_jobs: int = -1,
                 data_dir: Optional[Path] = None, features_dir: Optional[Path] = None,
                 models_dir: Optional[Path] = None, data_format: str = "npy"):
        """Bind settings to artifact directories.

        Args:
            settings: Plan, training and generation settings (seed included)
            output: Output root
            n_jobs: joblib worker count (-1 for all cores)
            data_dir: Dataset directory override
            features_dir: Features directory override
            models_dir: Checkpoint directory override
            data_format: ``npy`` or ``csv`` for gen-data
        """
        self.settings = settings
        self.output = Path(output)
        self.n_jobs = n_jobs
        self.data_dir = Path(data_dir) if data_dir else self.output / "data"
        self.features_dir = Path(features_dir) if features_dir else self.output / "features"
        self.models_dir = Path(models_dir) if models_dir else self.output / "models"
        self.attacks_dir = self.output / "attacks"
        self.report_dir = self.output / "report"
        self.data_format = data_format

    @property
    def seed(self) -> int:
        return self.settings.seed

    def gen_data(self) -> str:
        """Generate and save the waveform dataset.

        Returns:
            sha256 of the waveform array
        """
        config = replace(self.settings.generation, master_seed=derive_seed(self.seed, "data"))
        dataset = generate_dataset(config, n_jobs=self.n_jobs)
        dataset.manifest["run_seed"] = self.seed
        manifest_path = storage.save_dataset(dataset, self.data_dir, self.data_format)
        checksum = storage.read_json(manifest_path)["waveforms_sha256"]
        emit_result("gen-data", records=len(dataset), seed=self.seed, sha256=checksum, out=self.data_dir)
        return checksum

    def extract(self) -> storage.FeatureBundle:
        """Extract supervectors, split them and fit the standardizer on the training part."""
        dataset = storage.load_dataset(self.data_dir)
        supervectors = build_supervectors(dataset, n_jobs=self.n_jobs)
        train_idx, test_idx = split_indices(supervectors, self.settings.train.test_fraction,
                                            seed=derive_seed(self.seed, "split"))
        standardizer = fit_standardizer(select(supervectors, train_idx))
        bundle = storage.FeatureBundle(
            supervectors=supervectors, train_indices=train_idx, test_indices=test_idx,
            standardizer=standardizer,
            metadata={"run_seed": self.seed, "dataset_sha256": dataset.manifest.get("waveforms_sha256", "")},
        )
        storage.save_features(bundle, self.features_dir)
        emit_result("extract", supervectors=len(supervectors), length=supervectors[0].values.size,
                    train=len(train_idx), test=len(test_idx), constant_dims=len(standardizer.flagged))
        return bundle

    def features(self) -> storage.FeatureBundle:
        return storage.load_features(self.features_dir)

    def train(self, task: Task) -> storage.Checkpoint:
        """Train and save the model for one task."""
        bundle = self.features()
        train_set, test_set = bundle.standardized("train"), bundle.standardized("test")
        config = replace(self.settings.train, seed=derive_seed(self.seed, f"train-{task.value}"))
        model = init_mlp(task, config.hidden_sizes, seed=derive_seed(self.seed, f"init-{task.value}"))
        trained, history = train(model, train_set, config, test_set)

        x_test = as_matrix(test_set)
        test_accuracy = evaluate_accuracy(trained, x_test, [sv.label_for(task) for sv in test_set])
        checkpoint = storage.Checkpoint(
            model=trained,
            standardizer_ref={"features": storage.FEATURES_JSON,
                              "sha256": storage.sha256_file(self.features_dir / storage.FEATURES_JSON)},
            history=history,
            train_config=asdict(config),
            metrics={"test_accuracy": test_accuracy, "train_accuracy": history.train_accuracy[-1],
                     "first_loss": history.train_loss[0], "final_loss": history.train_loss[-1]},
        )
        storage.save_checkpoint(checkpoint, storage.model_path(self.models_dir, task))
        emit_result("train", task=task.value, epochs=config.epochs, test_accuracy=test_accuracy,
                    train_accuracy=history.train_accuracy[-1], final_loss=history.train_loss[-1])
        return checkpoint

    def load_models(self, tasks: Sequence[Task]) -> Dict[Task, storage.Checkpoint]:
        """Checkpoints for the given tasks.

        Raises:
            ConfigurationError: If a checkpoint is missing
        """
        missing = [t.value for t in tasks if not storage.model_path(self.models_dir, t).exists()]
        if missing:
            raise ConfigurationError(f"no trained model for tasks {missing} in {self.models_dir}")
        return {t: storage.load_checkpoint(storage.model_path(self.models_dir, t)) for t in tasks}

    def _bounds(self, bundle: storage.FeatureBundle):
        return training_range(as_matrix(bundle.standardized("train")))

    def _dump(self, task: Task, batch: AttackBatch) -> None:
        storage.save_attack_batch(batch, self.attacks_dir, task,
                                  storage.sha256_file(storage.model_path(self.models_dir, task)))

    def attack(self, task: Task, family: AttackFamily, goal: AttackGoal,
               epsilons: Sequence[float]) -> List[AttackBatch]:
        """Run one attack family and goal over the test split at each epsilon."""
        checkpoint = self.load_models([task])[task]
        bundle = self.features()
        test_set = bundle.standardized("test")
        plan = self.settings.plan
        bounds = self._bounds(bundle) if plan.clip_to_training_range else None
        template = plan.template(family, goal)

        batches = []
        for epsilon in (epsilons if family.is_budgeted else [0.0]):
            # Same seed as the matching evaluate cell, so both stages dump the same batch
            key = CellKey(task, family, goal, float(epsilon) if family.is_budgeted else None)
            config = replace(template, epsilon=float(epsilon), seed=cell_seed(plan.seed, key))
            batch = attack_batch(checkpoint.model, test_set, config, bounds)
            self._dump(task, batch)
            emit_result("attack", task=task.value, attack=family.value, goal=goal.value,
                        epsilon=epsilon if family.is_budgeted else "none", accuracy=batch.accuracy,
                        success_rate=batch.success_rate, mean_l2=batch.mean_l2, mean_linf=batch.mean_linf,
                        failures=len(batch.failures))
            batches.append(batch)
        return batches

    def evaluate(self) -> EvaluationReport:
        """Run the full plan, write the report, then fail on any hard-check violation.

        Raises:
            InvariantViolation: After the report is written, if a hard check failed
        """
        plan = self.settings.plan
        checkpoints = self.load_models(plan.tasks)
        bundle = self.features()
        report = run_experiment(
            plan, {t: c.model for t, c in checkpoints.items()}, bundle.standardized("test"),
            bounds=self._bounds(bundle) if plan.clip_to_training_range else None,
            n_jobs=self.n_jobs, on_batch=self._dump,
        )
        emit_report(report, self.report_dir)
        for task in plan.tasks:
            untargeted, targeted = mean_degradation_by_goal(report, task)
            emit_result("evaluate", task=task.value, base_accuracy=report.base_accuracy[task],
                        mean_degradation_untargeted=untargeted, mean_degradation_targeted=targeted)
        emit_result("evaluate", cells=len(report.cells), checks=len(report.checks),
                    violations=len(report.violations), out=self.report_dir)
        report.raise_for_violations()
        return report

    def report(self) -> EvaluationReport:
        """Render the accuracy tables of a written report."""
        report = load_report(self.report_dir / "report.json")
        for task in report.plan.tasks:
            render(accuracy_table(report, task))
            untargeted, targeted = mean_degradation_by_goal(report, task)
            emit_result("report", task=task.value, base_accuracy=report.base_accuracy[task],
                        mean_degradation_untargeted=untargeted, mean_degradation_targeted=targeted)
        return report

    def run_all(self) -> EvaluationReport:
        """gen-data -> extract -> train (every planned task) -> evaluate."""
        self.gen_data()
        self.extract()
        for task in self.settings.plan.tasks:
            self.train(task)
        return self.evaluate()
