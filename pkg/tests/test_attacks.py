"""
Unit tests for target selection and the attack families.
"""

import unittest
from dataclasses import replace

import numpy as np

from grid_fault_attacks.core.attacks import (
    attack_batch,
    bim,
    bim_batch,
    choose_target,
    cw_l2,
    cw_linf,
    fgsm,
    fgsm_batch,
    random_noise,
)
from grid_fault_attacks.core.errors import ConfigurationError
from grid_fault_attacks.core.mlp import batch_losses, forward, predict_classes
from grid_fault_attacks.core.models import (
    AttackConfig,
    AttackFamily,
    AttackGoal,
    CwParams,
    SuperVector,
    TargetRule,
    Task,
)
from tests.fixtures import labelled, random_model, trained_blob_model

FAST_CW = CwParams(binary_search_steps=4, max_iterations=150, learning_rate=0.05, tau_rounds=4)


class TestChooseTarget(unittest.TestCase):
    """Test cases for choose_target."""

    def test_next_class_cyclic(self):
        """Test the cyclic rule wraps K to 1."""
        self.assertEqual(choose_target(4, 4, TargetRule.NEXT_CLASS_CYCLIC), 1)
        self.assertEqual(choose_target(2, 4, TargetRule.NEXT_CLASS_CYCLIC), 3)
        self.assertEqual(choose_target(44, 44, TargetRule.NEXT_CLASS_CYCLIC), 1)

    def test_least_likely(self):
        """Test the least probable other class wins, ties to the lowest index."""
        uniform = np.full(4, 0.25)
        self.assertEqual(choose_target(1, 4, TargetRule.LEAST_LIKELY, uniform), 2)
        self.assertEqual(choose_target(2, 4, TargetRule.LEAST_LIKELY, uniform), 1)
        skewed = np.array([0.05, 0.6, 0.3, 0.05])
        self.assertEqual(choose_target(1, 4, TargetRule.LEAST_LIKELY, skewed), 4)

    def test_least_likely_needs_probabilities(self):
        """Test the least-likely rule without a prediction is rejected."""
        with self.assertRaises(ConfigurationError):
            choose_target(1, 4, TargetRule.LEAST_LIKELY)

    def test_explicit(self):
        """Test explicit targets are used unless they equal the label."""
        self.assertEqual(choose_target(1, 4, TargetRule.EXPLICIT, explicit=3), 3)
        with self.assertRaises(ConfigurationError):
            choose_target(3, 4, TargetRule.EXPLICIT, explicit=3)
        with self.assertRaises(ConfigurationError):
            choose_target(1, 4, TargetRule.EXPLICIT, explicit=9)

    def test_single_class(self):
        """Test one class leaves no target."""
        with self.assertRaises(ConfigurationError):
            choose_target(1, 1, TargetRule.NEXT_CLASS_CYCLIC)

    def test_never_returns_label(self):
        """Test every rule avoids the true label."""
        probabilities = np.random.default_rng(0).dirichlet(np.ones(11))
        for label in range(1, 12):
            for rule in (TargetRule.NEXT_CLASS_CYCLIC, TargetRule.LEAST_LIKELY):
                self.assertNotEqual(choose_target(label, 11, rule, probabilities), label)


class TestBudgetedAttacks(unittest.TestCase):
    """Test cases for random noise, FGSM and BIM."""

    def setUp(self):
        """Set up test fixtures before each test method."""
        self.model = random_model(Task.FZC, input_size=8, seed=3)
        rng = np.random.default_rng(4)
        self.x = rng.normal(size=(25, 8))
        self.labels = predict_classes(self.model, self.x)
        self.example = labelled(self.x[0], Task.FZC, int(self.labels[0]))

    def test_zero_budget_is_identity(self):
        """Test epsilon 0 leaves the input unchanged for every budgeted family."""
        for result in (
            random_noise(self.model, self.example, 0.0, seed=1),
            fgsm(self.model, self.example, self.example.label_zone, 0.0),
            bim(self.model, self.example, self.example.label_zone, 0.0, step=0.01, iters=5),
        ):
            np.testing.assert_array_equal(result.perturbed, self.example.values)
            self.assertEqual(result.delta_linf, 0.0)

    def test_fgsm_sign_structure(self):
        """Test every FGSM coordinate moves by 0 or exactly epsilon."""
        eps = 0.05
        delta = fgsm_batch(self.model, self.x, self.labels, eps) - self.x
        magnitude = np.abs(delta)
        self.assertTrue(np.all(np.isclose(magnitude, eps, atol=1e-12) | (magnitude == 0.0)))

    def test_bim_single_step_equals_fgsm(self):
        """Test one BIM step of size epsilon reproduces FGSM."""
        for goal in AttackGoal:
            expected = fgsm_batch(self.model, self.x, self.labels, 0.03, goal)
            actual = bim_batch(self.model, self.x, self.labels, 0.03, 0.03, 1, goal)
            np.testing.assert_array_equal(actual, expected)

    def test_budget_respected(self):
        """Test l-inf perturbations never exceed epsilon."""
        for eps in (0.001, 0.04, 0.1):
            for adv in (fgsm_batch(self.model, self.x, self.labels, eps),
                        bim_batch(self.model, self.x, self.labels, eps, eps / 4, 10)):
                self.assertLessEqual(np.max(np.abs(adv - self.x)), eps + 1e-9)

    def test_random_noise_budget(self):
        """Test the noise baseline stays in the ball and is seeded."""
        first = random_noise(self.model, self.example, 0.05, seed=9)
        second = random_noise(self.model, self.example, 0.05, seed=9)
        self.assertLessEqual(first.delta_linf, 0.05)
        self.assertGreater(first.delta_linf, 0.0)
        np.testing.assert_array_equal(first.perturbed, second.perturbed)

    def test_fgsm_increases_loss(self):
        """Test a small untargeted step raises the total loss of the true labels."""
        adv = fgsm_batch(self.model, self.x, self.labels, 1e-3)
        self.assertGreater(np.sum(batch_losses(self.model, adv, self.labels)),
                           np.sum(batch_losses(self.model, self.x, self.labels)))

    def test_targeted_fgsm_lowers_target_loss(self):
        """Test a small targeted step lowers the total loss of the targets."""
        targets = self.labels % 4 + 1
        adv = fgsm_batch(self.model, self.x, targets, 1e-3, AttackGoal.TARGETED)
        self.assertLess(np.sum(batch_losses(self.model, adv, targets)),
                        np.sum(batch_losses(self.model, self.x, targets)))

    def test_clipping_keeps_budget(self):
        """Test projection into a training box that excludes x keeps the ball."""
        low, high = np.full(8, -0.5), np.full(8, 0.5)
        adv = bim_batch(self.model, self.x, self.labels, 0.1, 0.025, 10, bounds=(low, high))
        self.assertLessEqual(np.max(np.abs(adv - self.x)), 0.1 + 1e-9)
        self.assertTrue(np.all(adv >= np.minimum(low, self.x) - 1e-12))
        self.assertTrue(np.all(adv <= np.maximum(high, self.x) + 1e-12))

    def test_targeted_wrapper_rejects_true_label(self):
        """Test a targeted attack aimed at the true label is rejected."""
        with self.assertRaises(ConfigurationError):
            fgsm(self.model, self.example, self.example.label_zone, 0.01, AttackGoal.TARGETED)


class TestCarliniWagner(unittest.TestCase):
    """Test cases for the C&W l2 and l-inf attacks."""

    @classmethod
    def setUpClass(cls):
        """Train one small model for the class."""
        cls.model, cls.data = trained_blob_model(Task.FZC, input_size=8)

    def test_already_misclassified(self):
        """Test an input already off its label needs no perturbation."""
        x = self.data[0].values
        predicted = forward(self.model, x).predicted_class
        wrong = labelled(x, Task.FZC, predicted % 4 + 1)
        for attack in (cw_l2, cw_linf):
            result = attack(self.model, wrong, wrong.label_zone, params=FAST_CW)
            np.testing.assert_array_equal(result.delta, np.zeros(8))
            self.assertTrue(result.success)

    def test_targeted_success_verified(self):
        """Test every reported success classifies as the target."""
        for family in (AttackFamily.CW_L2, AttackFamily.CW_LINF):
            config = AttackConfig(family=family, goal=AttackGoal.TARGETED, cw=FAST_CW)
            batch = attack_batch(self.model, self.data[::4], config)
            self.assertGreater(batch.success_rate, 0.5)
            for example in batch.examples:
                achieved = forward(self.model, example.perturbed).predicted_class
                self.assertEqual(example.success, achieved == example.target_label)
                self.assertEqual(example.achieved_class, achieved)

    def correctly_classified(self):
        predicted = predict_classes(self.model, np.vstack([sv.values for sv in self.data]))
        return [sv for sv, p in zip(self.data, predicted) if p == sv.label_zone]

    def test_success_flags_match_predictions(self):
        """Test each success flag agrees with a fresh forward pass for both norms and goals."""
        examples = self.correctly_classified()[::2]
        for family in (AttackFamily.CW_L2, AttackFamily.CW_LINF):
            for goal in AttackGoal:
                batch = attack_batch(self.model, examples, AttackConfig(family=family, goal=goal, cw=FAST_CW))
                self.assertGreater(batch.success_rate, 0.5, f"{family.value}/{goal.value}")
                for example in batch.examples:
                    achieved = forward(self.model, example.perturbed).predicted_class
                    self.assertEqual(example.achieved_class, achieved)
                    if goal is AttackGoal.TARGETED:
                        self.assertEqual(example.success, achieved == example.target_label)
                    else:
                        self.assertEqual(example.success, achieved != example.true_label)
                    delta = example.perturbed - example.original.values
                    self.assertAlmostEqual(example.delta_linf, float(np.max(np.abs(delta))))
                    self.assertAlmostEqual(example.delta_l2, float(np.linalg.norm(delta)))

    def test_clip_bounds_respected(self):
        """Test C&W perturbations stay inside the training box."""
        x = np.vstack([sv.values for sv in self.data])
        low, high = x.min(axis=0), x.max(axis=0)
        for family in (AttackFamily.CW_L2, AttackFamily.CW_LINF):
            batch = attack_batch(self.model, self.data[::5], AttackConfig(family=family, cw=FAST_CW),
                                 bounds=(low, high))
            self.assertTrue(np.all(batch.perturbed >= low - 1e-12))
            self.assertTrue(np.all(batch.perturbed <= high + 1e-12))

    def test_l2_smaller_than_fgsm(self):
        """Test median C&W l2 size is below FGSM's at the first budget where FGSM succeeds half the time."""
        examples = self.correctly_classified()
        cw = attack_batch(self.model, examples, AttackConfig(family=AttackFamily.CW_L2, cw=FAST_CW))
        cw_sizes = [e.delta_l2 for e in cw.examples if e.success]
        for eps in np.arange(0.05, 3.01, 0.05):
            fgsm_run = attack_batch(self.model, examples, AttackConfig(family=AttackFamily.FGSM, epsilon=float(eps)))
            if fgsm_run.success_rate >= 0.5:
                fgsm_sizes = [e.delta_l2 for e in fgsm_run.examples if e.success]
                self.assertLess(np.median(cw_sizes), np.median(fgsm_sizes))
                return
        self.fail("FGSM never reaches 50% success")

    def test_l2_reports_norms(self):
        """Test the reported l2 norm matches the perturbation."""
        result = cw_l2(self.model, self.data[1], 3 if self.data[1].label_zone != 3 else 2,
                       AttackGoal.TARGETED, FAST_CW)
        self.assertTrue(np.isfinite(result.delta_l2))
        self.assertAlmostEqual(result.delta_l2, float(np.linalg.norm(result.perturbed - self.data[1].values)))


class TestAttackBatch(unittest.TestCase):
    """Test cases for running one configuration over a split."""

    def setUp(self):
        """Set up test fixtures before each test method."""
        self.model = random_model(Task.FZC, input_size=8, seed=6)
        rng = np.random.default_rng(7)
        self.examples = [labelled(rng.normal(size=8), Task.FZC, int(label))
                         for label in rng.integers(1, 5, size=30)]

    def test_order_and_length(self):
        """Test one output per input, in input order."""
        batch = attack_batch(self.model, self.examples, AttackConfig(family=AttackFamily.FGSM, epsilon=0.05))
        self.assertEqual(len(batch), 30)
        for example, original in zip(batch.examples, self.examples):
            self.assertIs(example.original, original)
            self.assertEqual(example.true_label, original.label_zone)

    def test_untargeted_accuracy_complements_success(self):
        """Test untargeted success is exactly misclassification."""
        batch = attack_batch(self.model, self.examples, AttackConfig(family=AttackFamily.BIM, epsilon=0.1))
        self.assertAlmostEqual(batch.accuracy, 1.0 - batch.success_rate)
        self.assertLessEqual(batch.max_linf, 0.1 + 1e-9)

    def test_random_reproducible(self):
        """Test the noise baseline depends only on the seed."""
        config = AttackConfig(family=AttackFamily.RANDOM, epsilon=0.05, seed=11)
        first = attack_batch(self.model, self.examples, config).perturbed
        np.testing.assert_array_equal(first, attack_batch(self.model, self.examples, config).perturbed)
        other = attack_batch(self.model, self.examples, replace(config, seed=12)).perturbed
        self.assertFalse(np.array_equal(first, other))

    def test_zero_budget_keeps_accuracy(self):
        """Test epsilon 0 reproduces clean accuracy."""
        clean = attack_batch(self.model, self.examples, AttackConfig(family=AttackFamily.FGSM, epsilon=0.0))
        labels = np.array([sv.label_zone for sv in self.examples])
        x = np.vstack([sv.values for sv in self.examples])
        self.assertEqual(clean.accuracy, float(np.mean(predict_classes(self.model, x) == labels)))
        self.assertEqual(clean.max_linf, 0.0)

    def test_explicit_target_failures(self):
        """Test examples whose label equals the explicit target are skipped, not fatal."""
        config = AttackConfig(family=AttackFamily.FGSM, goal=AttackGoal.TARGETED, epsilon=0.05,
                              target_rule=TargetRule.EXPLICIT, target_label=2)
        batch = attack_batch(self.model, self.examples, config)
        skipped = [i for i, sv in enumerate(self.examples) if sv.label_zone == 2]
        self.assertEqual(len(batch), 30)
        self.assertEqual([i for i, _ in batch.failures], skipped)
        for i in skipped:
            self.assertFalse(batch.examples[i].success)
            np.testing.assert_array_equal(batch.examples[i].perturbed, self.examples[i].values)

    def test_invalid_config(self):
        """Test a negative budget is rejected before any work."""
        with self.assertRaises(ConfigurationError):
            attack_batch(self.model, self.examples, AttackConfig(family=AttackFamily.FGSM, epsilon=-0.1))

    def test_targeted_random_rejected(self):
        """Test random noise refuses a targeted goal."""
        config = AttackConfig(family=AttackFamily.RANDOM, goal=AttackGoal.TARGETED, epsilon=0.05)
        with self.assertRaises(ConfigurationError):
            attack_batch(self.model, self.examples, config)

    def test_empty(self):
        """Test an empty split gives an empty batch."""
        batch = attack_batch(self.model, [], AttackConfig(family=AttackFamily.FGSM, epsilon=0.1))
        self.assertEqual(len(batch), 0)

    def test_supervector_labels(self):
        """Test the batch reads labels for the model's task."""
        model = random_model(Task.FTC, input_size=8)
        sv = SuperVector(values=np.zeros(8), label_zone=2, label_type=9)
        batch = attack_batch(model, [sv], AttackConfig(family=AttackFamily.FGSM, epsilon=0.01))
        self.assertEqual(batch.examples[0].true_label, 9)


if __name__ == "__main__":
    unittest.main()
