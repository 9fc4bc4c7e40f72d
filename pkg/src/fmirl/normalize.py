"""State normalization shared by the policy, discriminator and generator.

Statistics are computed once from the expert dataset and frozen: the
discriminator compares agent pairs against the expert distribution, so both
sides must pass through the same normalizer. Actions and rewards are left
untouched.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError


class NormStats:
    def __init__(self, mean, std):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.maximum(np.asarray(std, dtype=np.float64), 1e-6)

    @classmethod
    def fit(cls, states):
        states = np.asarray(states, dtype=np.float64)
        if states.size == 0:
            raise DataError("cannot fit normalization stats on an empty dataset")
        return cls(states.mean(axis=0), states.std(axis=0))

    @classmethod
    def identity(cls, dim):
        return cls(np.zeros(dim), np.ones(dim))

    def normalize(self, states):
        return (np.asarray(states, dtype=np.float64) - self.mean) / self.std

    def denormalize(self, states):
        return np.asarray(states, dtype=np.float64) * self.std + self.mean
