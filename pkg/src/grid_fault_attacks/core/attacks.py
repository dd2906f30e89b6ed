"""
White-box attacks on standardized supervectors.

Every attack has a batched kernel working on an (N, 192) matrix and a
single-example wrapper returning an AdversarialExample. attack_batch() runs
one AttackConfig over a test split, deriving targets and per-example seeds.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from grid_fault_attacks.core.errors import ConfigurationError, GridFaultError
from grid_fault_attacks.core.mlp import (
    MlpModel,
    backward,
    forward_batch,
    grad_input_batch,
    predict_classes,
    predict_proba,
)
from grid_fault_attacks.core.models import (
    AdversarialExample,
    AttackConfig,
    AttackFamily,
    AttackGoal,
    CwParams,
    SuperVector,
    TargetRule,
)
from grid_fault_attacks.core.optim import Adam

logger = logging.getLogger(__name__)

Bounds = Tuple[np.ndarray, np.ndarray]


def choose_target(label: int, num_classes: int, rule: TargetRule,
                  probabilities: Optional[np.ndarray] = None, explicit: Optional[int] = None) -> int:
    """Pick a target class different from the true label.

    Args:
        label: True class, 1..K
        num_classes: K, at least 2
        rule: Target selection rule
        probabilities: Clean-input class probabilities, needed by LEAST_LIKELY
        explicit: Target for the EXPLICIT rule

    Returns:
        Target class in 1..K, never equal to label. LEAST_LIKELY breaks ties
        by the lowest class index.

    Raises:
        ConfigurationError: On K < 2, a missing input for the rule, or an
            explicit target equal to the true label
    """
    if num_classes < 2:
        raise ConfigurationError("choose_target needs at least two classes")
    if not 1 <= label <= num_classes:
        raise ConfigurationError(f"label {label} outside 1..{num_classes}")

    if rule is TargetRule.NEXT_CLASS_CYCLIC:
        return label % num_classes + 1
    if rule is TargetRule.LEAST_LIKELY:
        if probabilities is None:
            raise ConfigurationError("LEAST_LIKELY needs the clean prediction")
        masked = np.array(probabilities, dtype=float)
        masked[label - 1] = np.inf
        return int(np.argmin(masked)) + 1
    if explicit is None or not 1 <= explicit <= num_classes:
        raise ConfigurationError(f"explicit target {explicit} outside 1..{num_classes}")
    if explicit == label:
        raise ConfigurationError(f"explicit target {explicit} equals the true label")
    return explicit


def _project(x_adv: np.ndarray, x: np.ndarray, epsilon: float, bounds: Optional[Bounds]) -> np.ndarray:
    """Project onto the l-inf ball around x, then into bounds widened to contain x."""
    out = np.clip(x_adv, x - epsilon, x + epsilon)
    if bounds is not None:
        lo = np.minimum(bounds[0], x)
        hi = np.maximum(bounds[1], x)
        out = np.clip(out, lo, hi)
    return out


def _signed_gradient(model: MlpModel, x: np.ndarray, labels: np.ndarray, goal: AttackGoal) -> np.ndarray:
    """Ascent direction on the loss of the true label, descent on the target's."""
    direction = np.sign(grad_input_batch(model, x, labels))
    return direction if goal is AttackGoal.UNTARGETED else -direction


def random_noise_batch(x: np.ndarray, epsilon: float, seeds: Sequence[Sequence[int]],
                       bounds: Optional[Bounds] = None) -> np.ndarray:
    """Add uniform [-epsilon, epsilon] noise, one RNG stream per row."""
    noise = np.vstack([
        np.random.default_rng(list(seed)).uniform(-epsilon, epsilon, size=x.shape[1]) for seed in seeds
    ]) if len(seeds) else np.zeros_like(x)
    return _project(x + noise, x, epsilon, bounds)


def fgsm_batch(model: MlpModel, x: np.ndarray, labels: np.ndarray, epsilon: float,
               goal: AttackGoal = AttackGoal.UNTARGETED, bounds: Optional[Bounds] = None) -> np.ndarray:
    """One signed-gradient step of size epsilon.

    labels are true labels for UNTARGETED and targets for TARGETED.
    """
    return _project(x + epsilon * _signed_gradient(model, x, labels, goal), x, epsilon, bounds)


def bim_batch(model: MlpModel, x: np.ndarray, labels: np.ndarray, epsilon: float, step: float, iters: int,
              goal: AttackGoal = AttackGoal.UNTARGETED, bounds: Optional[Bounds] = None) -> np.ndarray:
    """Iterated FGSM with projection onto the epsilon ball after every step."""
    if iters < 1 or step <= 0:
        raise ConfigurationError("bim needs iters >= 1 and step > 0")
    x_adv = x.copy()
    for _ in range(iters):
        x_adv = _project(x_adv + step * _signed_gradient(model, x_adv, labels, goal), x, epsilon, bounds)
    return x_adv


def _margin(z: np.ndarray, classes: np.ndarray, goal: AttackGoal) -> Tuple[np.ndarray, np.ndarray]:
    """Raw C&W margin and the index of the strongest competing class.

    TARGETED: max_{i != t} z_i - z_t. UNTARGETED: z_y - max_{i != y} z_i.
    The goal is met when the margin is negative.
    """
    rows = np.arange(z.shape[0])
    own = z[rows, classes - 1]
    others = z.copy()
    others[rows, classes - 1] = -np.inf
    rival = np.argmax(others, axis=1)
    best_other = others[rows, rival]
    margin = best_other - own if goal is AttackGoal.TARGETED else own - best_other
    return margin, rival


def _goal_met(predicted: np.ndarray, classes: np.ndarray, goal: AttackGoal) -> np.ndarray:
    return predicted == classes if goal is AttackGoal.TARGETED else predicted != classes


def _hinge_gradient(model: MlpModel, x_adv: np.ndarray, classes: np.ndarray, goal: AttackGoal,
                    const: np.ndarray, confidence: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Logits, raw margins and the input gradient of c * max(margin, -kappa)."""
    z, cache = forward_batch(model, x_adv)
    margin, rival = _margin(z, classes, goal)
    active = margin > -confidence
    rows = np.arange(z.shape[0])
    weights = np.zeros_like(z)
    sign = 1.0 if goal is AttackGoal.TARGETED else -1.0
    weights[rows, rival] = sign
    weights[rows, classes - 1] = -sign
    weights *= (const * active)[:, None]
    _, _, grad = backward(model, cache, weights)
    return z, margin, grad


def _success_mask(z: np.ndarray, margin: np.ndarray, classes: np.ndarray, goal: AttackGoal,
                  confidence: float) -> np.ndarray:
    predicted = np.argmax(z, axis=1) + 1
    return _goal_met(predicted, classes, goal) & (margin <= -confidence)


def cw_l2_batch(model: MlpModel, x: np.ndarray, classes: np.ndarray, goal: AttackGoal = AttackGoal.UNTARGETED,
                params: Optional[CwParams] = None, bounds: Optional[Bounds] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Carlini-Wagner l2 attack with a per-example binary search on c.

    Minimizes ||delta||^2 + c * max(margin, -kappa) with Adam. After each
    search step c is bisected for examples that succeeded and doubled (or
    bisected towards a known upper bound) for those that did not.

    Args:
        classes: True labels for UNTARGETED, targets for TARGETED

    Returns:
        (perturbed inputs, found-success mask); rows without success hold
        the perturbation that came closest to the goal
    """
    params = params or CwParams()
    params.validate()
    n = x.shape[0]
    const = np.full(n, params.initial_const)
    lower = np.zeros(n)
    upper = np.full(n, params.largest_const)

    best_l2 = np.full(n, np.inf)
    best = x.copy()
    closest_margin = np.full(n, np.inf)
    closest = x.copy()

    for search_step in range(params.binary_search_steps):
        delta = np.zeros_like(x)
        optimizer = Adam([delta], learning_rate=params.learning_rate)
        succeeded = np.zeros(n, dtype=bool)
        for _ in range(params.max_iterations):
            x_adv = x + delta if bounds is None else _project(x + delta, x, np.inf, bounds)
            z, margin, grad = _hinge_gradient(model, x_adv, classes, goal, const, params.confidence)

            l2 = np.sum(np.square(x_adv - x), axis=1)
            hit = _success_mask(z, margin, classes, goal, params.confidence)
            improved = hit & (l2 < best_l2)
            best_l2[improved] = l2[improved]
            best[improved] = x_adv[improved]
            succeeded |= hit

            nearer = ~hit & (margin < closest_margin)
            closest_margin[nearer] = margin[nearer]
            closest[nearer] = x_adv[nearer]

            optimizer.step([2.0 * delta + grad])

        upper = np.where(succeeded, np.minimum(upper, const), upper)
        lower = np.where(succeeded, lower, np.maximum(lower, const))
        known_upper = upper < params.largest_const
        const = np.where(known_upper, (lower + upper) / 2.0, np.minimum(const * 2.0, params.largest_const))
        logger.debug("cw_l2 step %d: %d/%d succeeded", search_step + 1, int(np.isfinite(best_l2).sum()), n)

    found = np.isfinite(best_l2)
    return np.where(found[:, None], best, closest), found


def cw_linf_batch(model: MlpModel, x: np.ndarray, classes: np.ndarray, goal: AttackGoal = AttackGoal.UNTARGETED,
                  params: Optional[CwParams] = None, bounds: Optional[Bounds] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Carlini-Wagner l-inf attack with a shrinking per-example bound tau.

    Each round minimizes sum(max(|delta| - tau, 0)) + c * max(margin, -kappa),
    warm-started from the previous round. A round that reaches the goal with
    every |delta_i| <= tau shrinks tau to 0.9 of the achieved l-inf norm; a
    round that fails doubles c.

    Returns:
        (perturbed inputs, found-success mask)
    """
    params = params or CwParams()
    params.validate()
    n = x.shape[0]
    tau = np.full(n, params.initial_tau)
    const = np.full(n, params.initial_const)
    delta = np.zeros_like(x)

    best_linf = np.full(n, np.inf)
    best = x.copy()
    closest_margin = np.full(n, np.inf)
    closest = x.copy()

    for round_index in range(params.tau_rounds):
        optimizer = Adam([delta], learning_rate=params.learning_rate)
        within = np.zeros(n, dtype=bool)
        for _ in range(params.max_iterations):
            x_adv = x + delta if bounds is None else _project(x + delta, x, np.inf, bounds)
            z, margin, grad = _hinge_gradient(model, x_adv, classes, goal, const, params.confidence)

            linf = np.max(np.abs(x_adv - x), axis=1)
            hit = _success_mask(z, margin, classes, goal, params.confidence)
            improved = hit & (linf < best_linf)
            best_linf[improved] = linf[improved]
            best[improved] = x_adv[improved]
            within |= hit & (linf <= tau)

            nearer = ~hit & (margin < closest_margin)
            closest_margin[nearer] = margin[nearer]
            closest[nearer] = x_adv[nearer]

            penalty = np.sign(delta) * (np.abs(delta) > tau[:, None])
            optimizer.step([penalty + grad])

        reached = np.isfinite(best_linf)
        tau = np.where(within & reached, np.minimum(tau, best_linf) * params.tau_decrease, tau)
        const = np.where(within, const, np.minimum(const * 2.0, params.largest_const))
        logger.debug("cw_linf round %d: %d/%d succeeded", round_index + 1, int(reached.sum()), n)

    found = np.isfinite(best_linf)
    return np.where(found[:, None], best, closest), found


def _example(model: MlpModel, original: SuperVector, perturbed: np.ndarray, config: AttackConfig,
             true_label: int, target: Optional[int]) -> AdversarialExample:
    achieved = int(predict_classes(model, perturbed)[0])
    success = achieved == target if config.goal is AttackGoal.TARGETED else achieved != true_label
    return AdversarialExample(original=original, perturbed=perturbed, attack=config, true_label=true_label,
                              target_label=target, achieved_class=achieved, success=bool(success))


def _attack_label(model: MlpModel, x: SuperVector, goal: AttackGoal, label_or_target: int) -> Tuple[int, Optional[int]]:
    true_label = x.label_for(model.task)
    if goal is AttackGoal.TARGETED:
        if label_or_target == true_label:
            raise ConfigurationError(f"target {label_or_target} equals the true label")
        return true_label, label_or_target
    return true_label, None


def random_noise(model: MlpModel, x: SuperVector, epsilon: float, seed: int = 0,
                 bounds: Optional[Bounds] = None) -> AdversarialExample:
    """Uniform noise baseline for one example; success means misclassification."""
    config = AttackConfig(family=AttackFamily.RANDOM, epsilon=epsilon, seed=seed)
    config.validate(model.num_classes)
    perturbed = random_noise_batch(x.values[None, :], epsilon, [[seed, 0]], bounds)[0]
    return _example(model, x, perturbed, config, x.label_for(model.task), None)


def fgsm(model: MlpModel, x: SuperVector, label_or_target: int, epsilon: float,
         goal: AttackGoal = AttackGoal.UNTARGETED, bounds: Optional[Bounds] = None) -> AdversarialExample:
    """Fast gradient sign attack on one example."""
    config = AttackConfig(family=AttackFamily.FGSM, goal=goal, epsilon=epsilon)
    config.validate(model.num_classes)
    true_label, target = _attack_label(model, x, goal, label_or_target)
    perturbed = fgsm_batch(model, x.values[None, :], np.array([label_or_target]), epsilon, goal, bounds)[0]
    return _example(model, x, perturbed, config, true_label, target)


def bim(model: MlpModel, x: SuperVector, label_or_target: int, epsilon: float, step: float, iters: int,
        goal: AttackGoal = AttackGoal.UNTARGETED, bounds: Optional[Bounds] = None) -> AdversarialExample:
    """Basic iterative method on one example."""
    config = AttackConfig(family=AttackFamily.BIM, goal=goal, epsilon=epsilon, bim_step=step, bim_iters=iters)
    config.validate(model.num_classes)
    true_label, target = _attack_label(model, x, goal, label_or_target)
    perturbed = bim_batch(model, x.values[None, :], np.array([label_or_target]), epsilon, step, iters,
                          goal, bounds)[0]
    return _example(model, x, perturbed, config, true_label, target)


def cw_l2(model: MlpModel, x: SuperVector, label_or_target: int, goal: AttackGoal = AttackGoal.UNTARGETED,
          params: Optional[CwParams] = None, bounds: Optional[Bounds] = None) -> AdversarialExample:
    """Carlini-Wagner l2 attack on one example."""
    config = AttackConfig(family=AttackFamily.CW_L2, goal=goal, cw=params or CwParams())
    config.validate(model.num_classes)
    true_label, target = _attack_label(model, x, goal, label_or_target)
    perturbed, _ = cw_l2_batch(model, x.values[None, :], np.array([label_or_target]), goal, config.cw, bounds)
    return _example(model, x, perturbed[0], config, true_label, target)


def cw_linf(model: MlpModel, x: SuperVector, label_or_target: int, goal: AttackGoal = AttackGoal.UNTARGETED,
            params: Optional[CwParams] = None, bounds: Optional[Bounds] = None) -> AdversarialExample:
    """Carlini-Wagner l-inf attack on one example."""
    config = AttackConfig(family=AttackFamily.CW_LINF, goal=goal, cw=params or CwParams())
    config.validate(model.num_classes)
    true_label, target = _attack_label(model, x, goal, label_or_target)
    perturbed, _ = cw_linf_batch(model, x.values[None, :], np.array([label_or_target]), goal, config.cw, bounds)
    return _example(model, x, perturbed[0], config, true_label, target)


@dataclass
class AttackBatch:
    """Outcome of one attack configuration over a set of examples."""
    config: AttackConfig
    examples: List[AdversarialExample]
    failures: List[Tuple[int, str]] = field(default_factory=list)   # (example index, reason)

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def perturbed(self) -> np.ndarray:
        return np.vstack([e.perturbed for e in self.examples])

    @property
    def accuracy(self) -> float:
        """Fraction of examples still classified as their true label."""
        if not self.examples:
            return 0.0
        return float(np.mean([e.achieved_class == e.true_label for e in self.examples]))

    @property
    def success_rate(self) -> float:
        if not self.examples:
            return 0.0
        return float(np.mean([e.success for e in self.examples]))

    @property
    def mean_l2(self) -> float:
        return float(np.mean([e.delta_l2 for e in self.examples])) if self.examples else 0.0

    @property
    def mean_linf(self) -> float:
        return float(np.mean([e.delta_linf for e in self.examples])) if self.examples else 0.0

    @property
    def max_linf(self) -> float:
        return float(max((e.delta_linf for e in self.examples), default=0.0))


def attack_batch(model: MlpModel, examples: Sequence[SuperVector], config: AttackConfig,
                 bounds: Optional[Bounds] = None) -> AttackBatch:
    """Apply one attack configuration to every example.

    Targets come from choose_target per example. An example whose target
    cannot be chosen is kept unperturbed, marked unsuccessful and listed in
    failures; the rest of the batch still runs.

    Args:
        model: Frozen classifier
        examples: Standardized supervectors, usually the test split
        config: Attack family, goal and parameters
        bounds: Optional per-dimension (min, max) clip box

    Returns:
        AttackBatch with one AdversarialExample per input, in input order

    Raises:
        ConfigurationError: If config is invalid for the model's class count
    """
    config.validate(model.num_classes)
    if not examples:
        return AttackBatch(config=config, examples=[])

    x = np.vstack([sv.values for sv in examples])
    true_labels = np.array([sv.label_for(model.task) for sv in examples])
    failures: List[Tuple[int, str]] = []

    targets: List[Optional[int]] = [None] * len(examples)
    valid = np.ones(len(examples), dtype=bool)
    if config.goal is AttackGoal.TARGETED:
        probabilities = predict_proba(model, x) if config.target_rule is TargetRule.LEAST_LIKELY else None
        for i, label in enumerate(true_labels):
            try:
                targets[i] = choose_target(int(label), model.num_classes, config.target_rule,
                                           None if probabilities is None else probabilities[i],
                                           config.target_label)
            except GridFaultError as e:
                failures.append((i, str(e)))
                valid[i] = False

    perturbed = x.copy()
    rows = np.flatnonzero(valid)
    if rows.size:
        if config.goal is AttackGoal.TARGETED:
            classes = np.array([targets[i] for i in rows])
        else:
            classes = true_labels[rows]
        perturbed[rows] = _run_family(model, x[rows], classes, config, rows, bounds)

    achieved = predict_classes(model, perturbed)
    result = []
    for i, sv in enumerate(examples):
        target = targets[i]
        if not valid[i]:
            success = False
        elif config.goal is AttackGoal.TARGETED:
            success = int(achieved[i]) == target
        else:
            success = int(achieved[i]) != int(true_labels[i])
        result.append(AdversarialExample(original=sv, perturbed=perturbed[i], attack=config,
                                         true_label=int(true_labels[i]), target_label=target,
                                         achieved_class=int(achieved[i]), success=bool(success)))

    batch = AttackBatch(config=config, examples=result, failures=failures)
    logger.debug("%s eps=%g on %d examples: accuracy %.4f, success %.4f, %d failures",
                 config.name, config.epsilon, len(result), batch.accuracy, batch.success_rate, len(failures))
    return batch


def _run_family(model: MlpModel, x: np.ndarray, classes: np.ndarray, config: AttackConfig, rows: np.ndarray,
                bounds: Optional[Bounds]) -> np.ndarray:
    if config.family.is_budgeted and config.epsilon == 0.0:
        return x.copy()
    if config.family is AttackFamily.RANDOM:
        return random_noise_batch(x, config.epsilon, [[config.seed, int(i)] for i in rows], bounds)
    if config.family is AttackFamily.FGSM:
        return fgsm_batch(model, x, classes, config.epsilon, config.goal, bounds)
    if config.family is AttackFamily.BIM:
        return bim_batch(model, x, classes, config.epsilon, config.step, config.bim_iters, config.goal, bounds)
    if config.family is AttackFamily.CW_L2:
        return cw_l2_batch(model, x, classes, config.goal, config.cw, bounds)[0]
    return cw_linf_batch(model, x, classes, config.goal, config.cw, bounds)[0]
