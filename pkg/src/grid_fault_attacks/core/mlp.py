"""
Two-hidden-layer perceptron with hand-written forward and backward passes.

The network is 192 -> H1 -> H2 -> K with ReLU hidden layers and a softmax
output. Backpropagation yields both parameter gradients (for Adam training)
and input gradients (for the attacks).
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from grid_fault_attacks.core import constants
from grid_fault_attacks.core.errors import ConfigurationError, InvalidInputError
from grid_fault_attacks.core.models import Prediction, SuperVector, Task
from grid_fault_attacks.core.optim import Adam

logger = logging.getLogger(__name__)


@dataclass
class MlpModel:
    """Weights and biases of the classifier for one task."""
    task: Task
    layer_sizes: List[int]              # [192, H1, H2, K]
    weights: List[np.ndarray]           # weights[i] has shape (layer_sizes[i], layer_sizes[i+1])
    biases: List[np.ndarray]

    def __post_init__(self):
        if len(self.layer_sizes) != 4:
            raise ConfigurationError(f"expected exactly two hidden layers, got sizes {self.layer_sizes}")
        if self.layer_sizes[-1] != self.task.num_classes:
            raise ConfigurationError(
                f"task {self.task.value} needs {self.task.num_classes} outputs, got {self.layer_sizes[-1]}"
            )
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_sizes[i], self.layer_sizes[i + 1]) or b.shape != (self.layer_sizes[i + 1],):
                raise ConfigurationError(f"layer {i} parameter shapes do not match {self.layer_sizes}")

    @property
    def num_classes(self) -> int:
        return self.layer_sizes[-1]

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    def parameters(self) -> List[np.ndarray]:
        """Parameter arrays in (W1, b1, W2, b2, W3, b3) order."""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters())

    def copy(self) -> "MlpModel":
        return MlpModel(task=self.task, layer_sizes=list(self.layer_sizes),
                        weights=[w.copy() for w in self.weights], biases=[b.copy() for b in self.biases])


def init_mlp(task: Task, hidden_sizes: Sequence[int] = constants.DEFAULT_HIDDEN_SIZES, seed: int = 0,
             input_size: int = constants.SUPERVECTOR_LENGTH) -> MlpModel:
    """Create a model with uniform +/- sqrt(6 / (fan_in + fan_out)) weights and zero biases."""
    if len(hidden_sizes) != 2:
        raise ConfigurationError(f"hidden_sizes must have length 2, got {list(hidden_sizes)}")
    sizes = [int(input_size), int(hidden_sizes[0]), int(hidden_sizes[1]), task.num_classes]
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(task=task, layer_sizes=sizes, weights=weights, biases=biases)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction."""
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps / np.sum(exps, axis=-1, keepdims=True)


def _as_batch(model: MlpModel, x: np.ndarray) -> np.ndarray:
    batch = np.atleast_2d(np.asarray(x, dtype=float))
    if batch.shape[1] != model.input_size:
        raise InvalidInputError(f"expected inputs of length {model.input_size}, got {batch.shape[1]}")
    if not np.all(np.isfinite(batch)):
        raise InvalidInputError("model input contains non-finite values")
    return batch


def forward_batch(model: MlpModel, x: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Logits for a batch plus the pre-activations needed by backward().

    Returns:
        (logits of shape (N, K), cache [input, z1, z2])
    """
    a = _as_batch(model, x)
    cache = [a]
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        if i == last:
            return z, cache
        cache.append(z)
        a = np.maximum(z, 0.0)
    raise AssertionError("unreachable")


def logits(model: MlpModel, x: np.ndarray) -> np.ndarray:
    return forward_batch(model, x)[0]


def predict_proba(model: MlpModel, x: np.ndarray) -> np.ndarray:
    return softmax(logits(model, x))


def predict_classes(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """1-based argmax classes for a batch."""
    return np.argmax(logits(model, x), axis=1) + 1


def forward(model: MlpModel, x: np.ndarray) -> Prediction:
    """Prediction for a single input vector.

    Raises:
        InvalidInputError: If x has the wrong length or non-finite entries
    """
    z = logits(model, x)[0]
    p = softmax(z)
    return Prediction(logits=z, probabilities=p, predicted_class=int(np.argmax(z)) + 1)


def _check_labels(model: MlpModel, labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=int).ravel()
    if labels.size and (labels.min() < 1 or labels.max() > model.num_classes):
        raise ConfigurationError(
            f"labels must lie in 1..{model.num_classes} for task {model.task.value}"
        )
    return labels


def _one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels - 1] = 1.0
    return out


def cross_entropy(pred: Prediction, label: int) -> float:
    """-log p(label), capped at -log(PROBABILITY_FLOOR)."""
    if not 1 <= label <= len(pred.probabilities):
        raise ConfigurationError(f"label {label} outside 1..{len(pred.probabilities)}")
    return float(-np.log(max(pred.probabilities[label - 1], constants.PROBABILITY_FLOOR)))


def batch_losses(model: MlpModel, x: np.ndarray, labels: Sequence[int]) -> np.ndarray:
    """Per-example cross-entropy."""
    labels = _check_labels(model, np.asarray(labels))
    p = predict_proba(model, x)
    picked = p[np.arange(labels.size), labels - 1]
    return -np.log(np.maximum(picked, constants.PROBABILITY_FLOOR))


def mean_loss(model: MlpModel, x: np.ndarray, labels: Sequence[int]) -> float:
    return float(np.mean(batch_losses(model, x, labels)))


def backward(model: MlpModel, cache: List[np.ndarray],
             dlogits: np.ndarray) -> Tuple[List[np.ndarray], List[np.ndarray], np.ndarray]:
    """Backpropagate a logit gradient.

    Args:
        model: The network
        cache: Output of forward_batch
        dlogits: dLoss/dlogits, shape (N, K)

    Returns:
        (weight gradients, bias gradients, input gradient of shape (N, input_size))
    """
    inputs, pre_activations = cache[0], cache[1:]
    activations = [inputs] + [np.maximum(z, 0.0) for z in pre_activations]
    grad_w: List[np.ndarray] = [None] * len(model.weights)
    grad_b: List[np.ndarray] = [None] * len(model.biases)

    delta = dlogits
    for i in reversed(range(len(model.weights))):
        grad_w[i] = activations[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        delta = delta @ model.weights[i].T
        if i > 0:
            delta = delta * (pre_activations[i - 1] > 0.0)
    return grad_w, grad_b, delta


def _loss_dlogits(model: MlpModel, z: np.ndarray, labels: np.ndarray) -> np.ndarray:
    return softmax(z) - _one_hot(labels, model.num_classes)


def grad_params(model: MlpModel, x: np.ndarray, labels: Sequence[int]) -> List[np.ndarray]:
    """Gradients of mean cross-entropy w.r.t. all parameters, in parameters() order."""
    labels = _check_labels(model, np.asarray(labels))
    if labels.size == 0:
        raise InvalidInputError("grad_params needs a non-empty batch")
    z, cache = forward_batch(model, x)
    grad_w, grad_b, _ = backward(model, cache, _loss_dlogits(model, z, labels) / labels.size)
    grads = []
    for gw, gb in zip(grad_w, grad_b):
        grads.extend([gw, gb])
    return grads


def grad_input_batch(model: MlpModel, x: np.ndarray, labels: Sequence[int]) -> np.ndarray:
    """Per-example gradient of cross-entropy w.r.t. each input row."""
    labels = _check_labels(model, np.asarray(labels))
    z, cache = forward_batch(model, x)
    _, _, dx = backward(model, cache, _loss_dlogits(model, z, labels))
    return dx


def grad_input(model: MlpModel, x: np.ndarray, label: int) -> np.ndarray:
    """Gradient of cross-entropy w.r.t. a single input vector."""
    return grad_input_batch(model, x, [label])[0]


def logit_gradient(model: MlpModel, x: np.ndarray, weights: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Logits and the input gradient of sum_k weights[:, k] * logits[:, k], per row."""
    z, cache = forward_batch(model, x)
    _, _, dx = backward(model, cache, weights)
    return z, dx


def evaluate_accuracy(model: MlpModel, x: np.ndarray, labels: Sequence[int]) -> float:
    """Fraction of argmax predictions equal to the labels."""
    labels = _check_labels(model, np.asarray(labels))
    if labels.size == 0:
        raise InvalidInputError("evaluate_accuracy needs a non-empty example set")
    return float(np.mean(predict_classes(model, x) == labels))


@dataclass(frozen=True)
class TrainConfig:
    """Training hyper-parameters."""
    epochs: int = constants.DEFAULT_EPOCHS
    learning_rate: float = constants.DEFAULT_LEARNING_RATE
    batch_size: int = constants.DEFAULT_BATCH_SIZE
    hidden_sizes: Tuple[int, int] = constants.DEFAULT_HIDDEN_SIZES
    test_fraction: float = constants.DEFAULT_TEST_FRACTION
    seed: int = 0
    log_every: int = 50

    def validate(self) -> None:
        if self.epochs <= 0:
            raise ConfigurationError("epochs must be > 0")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be > 0")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigurationError("test_fraction must lie in (0, 1)")


@dataclass
class TrainingHistory:
    """Per-epoch metrics."""
    train_loss: List[float] = field(default_factory=list)
    train_accuracy: List[float] = field(default_factory=list)
    test_accuracy: List[float] = field(default_factory=list)


class Trainer:
    """Mini-batch Adam training loop for one MlpModel."""

    def __init__(self, model: MlpModel, config: TrainConfig):
        """Bind a model (updated in place) to an optimizer.

        Args:
            model: Network to train
            config: Hyper-parameters and shuffling seed
        """
        config.validate()
        self.model = model
        self.config = config
        self.optimizer = Adam(model.parameters(), learning_rate=config.learning_rate)
        self.history = TrainingHistory()
        self.epoch = 0

    def step(self, x: np.ndarray, labels: np.ndarray) -> float:
        """One Adam update on a mini-batch.

        Returns:
            Mean loss of the batch before the update
        """
        loss = mean_loss(self.model, x, labels)
        self.optimizer.step(grad_params(self.model, x, labels))
        return loss

    def epoch_order(self, n: int) -> np.ndarray:
        """Shuffled example order for the current epoch, seeded by (seed, epoch)."""
        return np.random.default_rng([self.config.seed, self.epoch]).permutation(n)

    def run_epoch(self, x: np.ndarray, labels: np.ndarray) -> float:
        order = self.epoch_order(len(labels))
        size = self.config.batch_size
        for start in range(0, len(order), size):
            batch = order[start:start + size]
            self.step(x[batch], labels[batch])
        self.epoch += 1
        return mean_loss(self.model, x, labels)

    def fit(self, x: np.ndarray, labels: np.ndarray, x_test: Optional[np.ndarray] = None,
            labels_test: Optional[np.ndarray] = None) -> TrainingHistory:
        """Run all configured epochs, recording loss and accuracy after each."""
        labels = _check_labels(self.model, labels)
        if labels_test is not None:
            labels_test = _check_labels(self.model, labels_test)

        for _ in range(self.config.epochs):
            loss = self.run_epoch(x, labels)
            self.history.train_loss.append(loss)
            self.history.train_accuracy.append(evaluate_accuracy(self.model, x, labels))
            if x_test is not None and labels_test is not None and len(labels_test):
                self.history.test_accuracy.append(evaluate_accuracy(self.model, x_test, labels_test))
            if self.epoch % self.config.log_every == 0 or self.epoch == self.config.epochs:
                logger.debug("task=%s epoch=%d loss=%.4f train_acc=%.4f test_acc=%s",
                             self.model.task.value, self.epoch, loss, self.history.train_accuracy[-1],
                             f"{self.history.test_accuracy[-1]:.4f}" if self.history.test_accuracy else "n/a")
        return self.history


def train(model: MlpModel, supervectors: Sequence[SuperVector], config: TrainConfig,
          test: Optional[Sequence[SuperVector]] = None) -> Tuple[MlpModel, TrainingHistory]:
    """Train a copy of the model on standardized supervectors.

    Args:
        model: Initial network
        supervectors: Standardized training examples
        config: Training configuration
        test: Optional standardized held-out examples for the accuracy history

    Returns:
        (trained model, per-epoch history)

    Raises:
        ConfigurationError: If a label falls outside the task's class range
    """
    trained = model.copy()
    x = np.vstack([sv.values for sv in supervectors])
    y = np.array([sv.label_for(model.task) for sv in supervectors])
    x_test = y_test = None
    if test:
        x_test = np.vstack([sv.values for sv in test])
        y_test = np.array([sv.label_for(model.task) for sv in test])

    logger.info("Training %s: %d examples, %d epochs, batch %d, lr %g",
                model.task.value, len(y), config.epochs, config.batch_size, config.learning_rate)
    history = Trainer(trained, config).fit(x, y, x_test, y_test)
    if not trained.is_finite():
        raise InvalidInputError(f"training diverged for task {model.task.value}")
    return trained, history
