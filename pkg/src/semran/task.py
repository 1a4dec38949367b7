"""Synthetic task-source model: Gaussian class clusters in input space.

Each agent serves a cluster of devices that emit classification tasks. A task is a
point drawn from one of n_classes Gaussians; the downstream goal is recovering the
class label from whatever crosses the radio link. Class geometry is drawn once per
experiment seed and then frozen, except for the optional distribution-shift event
used by the drift scenario, which translates every class mean by a fixed vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SemanticSample:
    """One task instance: raw input x and its ground-truth class label."""

    x: np.ndarray
    label: int
    arrival_slot: int = 0


def draw_class_means(rng: np.random.Generator, n_classes: int, dim: int,
                     min_separation: float, max_tries: int = 1000) -> np.ndarray:
    """Draw class means with pairwise Euclidean distance >= min_separation.

    Means are sampled on a sphere whose radius gives random pairs an expected
    distance comfortably above the floor, then the whole set is redrawn on a
    violation. Rejection keeps the distribution simple and seed-reproducible.
    """
    radius = 0.85 * min_separation  # E[pairwise] ~ radius*sqrt(2) > min_separation
    for _ in range(max_tries):
        raw = rng.standard_normal((n_classes, dim))
        means = radius * raw / np.linalg.norm(raw, axis=1, keepdims=True)
        diffs = means[:, None, :] - means[None, :, :]
        dist = np.linalg.norm(diffs, axis=-1)
        dist[np.diag_indices(n_classes)] = np.inf
        if dist.min() >= min_separation:
            return means
    raise RuntimeError("could not place class means; separation too large for dim")


class TaskGenerator:
    """Seeded source of (x, label) samples with an optional mean shift."""

    def __init__(self, means: np.ndarray, noise_std: float):
        self._base_means = means.copy()
        self._means = means.copy()
        self.noise_std = float(noise_std)
        self.shift_vector = np.zeros(means.shape[1])

    @property
    def n_classes(self) -> int:
        return self._base_means.shape[0]

    @property
    def dim(self) -> int:
        return self._base_means.shape[1]

    @property
    def means(self) -> np.ndarray:
        return self._means

    def apply_shift(self, shift: np.ndarray) -> None:
        """Translate every class mean; models an upstream distribution shift."""
        self.shift_vector = np.asarray(shift, dtype=float)
        self._means = self._base_means + self.shift_vector

    def clear_shift(self) -> None:
        self.shift_vector = np.zeros(self.dim)
        self._means = self._base_means.copy()

    def sample(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Draw n tasks; returns (X: n x dim, labels: n)."""
        labels = rng.integers(0, self.n_classes, size=n)
        x = self._means[labels] + self.noise_std * rng.standard_normal((n, self.dim))
        return x, labels
