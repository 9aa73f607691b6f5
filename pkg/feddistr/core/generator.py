"""Pluggable distribution generators: fit a parameter vector, sample from it."""

from abc import ABC, abstractmethod

import numpy as np

from ..exceptions import InputError

STD_FLOOR = 1e-3


class DistributionGenerator(ABC):
    """Maps a cluster of latent points to a parameter vector and back to samples."""

    @abstractmethod
    def fit(self, points: np.ndarray) -> np.ndarray:
        """Fit a flat parameter vector to points of shape (n, d)."""

    @abstractmethod
    def sample(self, vector: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n points of shape (n, d) from the distribution encoded by ``vector``."""

    @abstractmethod
    def parameter_length(self, dim: int) -> int:
        """Length of the parameter vector for latent dimension ``dim``."""


class GaussianGenerator(DistributionGenerator):
    """Axis-aligned Gaussian, encoded as ``[mean ‖ log std]`` (length 2d)."""

    def __init__(self, std_floor: float = STD_FLOOR):
        self.std_floor = std_floor

    def fit(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[0] == 0:
            raise InputError(f"Cannot fit a Gaussian to points of shape {points.shape}")
        mean = points.mean(axis=0)
        std = np.maximum(points.std(axis=0), self.std_floor)
        return np.concatenate([mean, np.log(std)])

    def sample(self, vector: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
        mean, std = self.decode(vector)
        return mean + rng.standard_normal(size=(n, mean.size)) * std

    def parameter_length(self, dim: int) -> int:
        return 2 * dim

    @staticmethod
    def decode(vector: np.ndarray):
        """Split a parameter vector into (mean, std)."""
        vector = np.asarray(vector, dtype=float).reshape(-1)
        if vector.size % 2:
            raise InputError(f"Gaussian parameter vectors have even length, got {vector.size}")
        half = vector.size // 2
        return vector[:half], np.exp(vector[half:])
