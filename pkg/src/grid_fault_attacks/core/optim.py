"""
Adam optimizer over a list of numpy arrays.
"""

from typing import List

import numpy as np


class Adam:
    """Adam with bias correction, updating arrays in place.

    Moment estimates are kept per array, so one instance can drive the MLP
    parameters during training or a batch of C&W perturbations.
    """

    def __init__(self, params: List[np.ndarray], learning_rate: float = 1e-3,
                 beta_1: float = 0.9, beta_2: float = 0.999, epsilon: float = 1e-8):
        """Initialize moment buffers for the given arrays.

        Args:
            params: Arrays that step() will update in place
            learning_rate: Step size
            beta_1: First moment decay
            beta_2: Second moment decay
            epsilon: Denominator floor
        """
        self.params = params
        self.learning_rate = learning_rate
        self.beta_1 = beta_1
        self.beta_2 = beta_2
        self.epsilon = epsilon
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: List[np.ndarray]) -> None:
        """Apply one update given gradients aligned with params."""
        self.t += 1
        correction_1 = 1.0 - self.beta_1 ** self.t
        correction_2 = 1.0 - self.beta_2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta_1
            m += (1.0 - self.beta_1) * g
            v *= self.beta_2
            v += (1.0 - self.beta_2) * np.square(g)
            p -= self.learning_rate * (m / correction_1) / (np.sqrt(v / correction_2) + self.epsilon)

