"""
Small synthetic models and supervectors shared by the test modules.
"""

from typing import List, Sequence

import numpy as np

from grid_fault_attacks.core.evaluation import CellResult, EvaluationReport, ExperimentPlan
from grid_fault_attacks.core.mlp import MlpModel, TrainConfig, init_mlp, train
from grid_fault_attacks.core.models import AttackConfig, AttackFamily, AttackGoal, SuperVector, Task


def random_model(task: Task = Task.FZC, input_size: int = 8, hidden: Sequence[int] = (10, 10),
                 seed: int = 0) -> MlpModel:
    """Initialized model with non-zero biases so no unit is special."""
    model = init_mlp(task, hidden, seed=seed, input_size=input_size)
    rng = np.random.default_rng(seed + 1000)
    for b in model.biases:
        b[:] = rng.normal(0.0, 0.1, size=b.shape)
    return model


def labelled(values: np.ndarray, task: Task, label: int) -> SuperVector:
    """SuperVector whose label for the given task is ``label``."""
    if task is Task.FZC:
        return SuperVector(values=values, label_zone=label, label_type=1)
    if task is Task.FTC:
        return SuperVector(values=values, label_zone=1, label_type=label)
    zone, ftype = divmod(label - 1, 11)
    return SuperVector(values=values, label_zone=zone + 1, label_type=ftype + 1)


def blob_supervectors(task: Task = Task.FZC, per_class: int = 10, input_size: int = 8, spread: float = 0.3,
                      seed: int = 0) -> List[SuperVector]:
    """Gaussian blobs around random class centres, one blob per class."""
    rng = np.random.default_rng(seed)
    centres = rng.normal(0.0, 1.0, size=(task.num_classes, input_size))
    vectors = []
    for label in range(1, task.num_classes + 1):
        for _ in range(per_class):
            vectors.append(labelled(centres[label - 1] + rng.normal(0.0, spread, size=input_size), task, label))
    return vectors


def trained_blob_model(task: Task = Task.FZC, input_size: int = 8, epochs: int = 40, seed: int = 0):
    """A small model fitted on blob data, with the data it was fitted on."""
    data = blob_supervectors(task, input_size=input_size, seed=seed)
    model = init_mlp(task, (16, 16), seed=seed, input_size=input_size)
    config = TrainConfig(epochs=epochs, learning_rate=1e-2, batch_size=8, hidden_sizes=(16, 16), seed=seed)
    trained, _ = train(model, data, config)
    return trained, data


BASE = 0.7134


def cell(task, family, goal, epsilon, accuracy, n=100):
    return CellResult(task=task, family=family, goal=goal, epsilon=epsilon, accuracy=accuracy,
                      success_rate=1.0 - accuracy, mean_l2=0.1, mean_linf=epsilon or 0.2,
                      max_linf=epsilon or 0.3, mean_loss=1.0, n_examples=n)


def attacked_for(degradation: float) -> float:
    return BASE / (1.0 + degradation / 100.0)


def constructed_report(tasks=(Task.FZC,)) -> EvaluationReport:
    """Untargeted FGSM, BIM and C&W l2 cells at the reference budget only."""
    plan = ExperimentPlan(
        tasks=list(tasks),
        attacks=[AttackConfig(family=AttackFamily.FGSM), AttackConfig(family=AttackFamily.BIM),
                 AttackConfig(family=AttackFamily.CW_L2)],
        epsilon_grid=[0.04],
    )
    cells = []
    for task in tasks:
        cells += [
            cell(task, AttackFamily.FGSM, AttackGoal.UNTARGETED, 0.04, attacked_for(329.0)),
            cell(task, AttackFamily.BIM, AttackGoal.UNTARGETED, 0.04, attacked_for(345.0)),
            cell(task, AttackFamily.CW_L2, AttackGoal.UNTARGETED, None, attacked_for(153.0)),
        ]
    return EvaluationReport(plan=plan, base_accuracy={t: BASE for t in tasks},
                            base_loss={t: 0.5 for t in tasks}, cells=cells, manifest={"test_examples": 100})

