"""Data regeneration from the payload and downstream softmax classifiers."""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import log_softmax, softmax

from .client import DistributionParameter
from .generator import DistributionGenerator, GaussianGenerator
from ..exceptions import ConfigurationError, InputError
from ..utils.logging_config import get_logger

logger = get_logger(__name__)

BATCH_SIZE = 64


@dataclass
class Classifier:
    """Multinomial logistic regression; the last weight column is the bias."""

    weights: np.ndarray
    num_labels: int
    loss_history: List[float] = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.num_labels < 2:
            raise ConfigurationError(f"A classifier needs at least 2 labels, got {self.num_labels}")
        if self.weights.ndim != 2 or self.weights.shape[0] != self.num_labels:
            raise InputError(f"Weights of shape {self.weights.shape} do not fit {self.num_labels} labels")
        if not np.all(np.isfinite(self.weights)):
            raise InputError("Classifier weights must be finite")

    @classmethod
    def zeros(cls, num_labels: int, dim: int) -> "Classifier":
        return cls(weights=np.zeros((num_labels, dim + 1)), num_labels=num_labels)

    @property
    def dim(self) -> int:
        return self.weights.shape[1] - 1

    @property
    def weight_count(self) -> int:
        return int(self.weights.size)

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        return softmax(_with_bias(features) @ self.weights.T, axis=1)

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.argmax(_with_bias(features) @ self.weights.T, axis=1)

    def copy(self) -> "Classifier":
        return Classifier(weights=self.weights.copy(), num_labels=self.num_labels)

    def to_frame(self) -> pd.DataFrame:
        """One row per label: w_0..w_{d-1}, bias."""
        columns = {f"w_{j}": self.weights[:, j] for j in range(self.dim)}
        columns["bias"] = self.weights[:, -1]
        frame = pd.DataFrame(columns)
        frame.insert(0, "label", np.arange(self.num_labels))
        return frame


@dataclass
class EvalResult:
    accuracy: float
    mean_loss: float
    n_test: int


def _with_bias(features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    return np.hstack([features, np.ones((features.shape[0], 1))])


def cross_entropy(weights: np.ndarray, features: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Mean cross-entropy of a softmax model and its gradient.

    Args:
        weights: Array of shape (num_labels, d + 1)
        features: Array of shape (n, d)
        labels: Integer labels of shape (n,)

    Returns:
        (loss, gradient with the shape of ``weights``)
    """
    design = _with_bias(features)
    labels = np.asarray(labels, dtype=int)
    log_probs = log_softmax(design @ weights.T, axis=1)
    n = labels.size
    loss = -float(log_probs[np.arange(n), labels].mean())

    residual = np.exp(log_probs)
    residual[np.arange(n), labels] -= 1.0
    gradient = residual.T @ design / n
    return loss, gradient


def sgd_epochs(
    model: Classifier,
    features: np.ndarray,
    labels: np.ndarray,
    epochs: int,
    lr: float,
    rng: np.random.Generator,
    batch_size: int = BATCH_SIZE,
) -> Classifier:
    """
    Mini-batch SGD on cross-entropy, shuffling once per epoch.

    Returns:
        A new Classifier; the input model is left untouched
    """
    weights = model.weights.copy()
    history = []
    n = labels.size
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = order[start:start + batch_size]
            _, gradient = cross_entropy(weights, features[batch], labels[batch])
            weights -= lr * gradient
        loss, _ = cross_entropy(weights, features, labels)
        history.append(loss)
        logger.debug(f"Epoch {epoch + 1}/{epochs}: loss {loss:.6f}")
    return Classifier(weights=weights, num_labels=model.num_labels, loss_history=history)


def generate(
    payload: Sequence[DistributionParameter],
    counts: Sequence[int],
    rng: np.random.Generator,
    generator: Optional[DistributionGenerator] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Regenerate a labeled dataset from broadcast parameters.

    Args:
        payload: Broadcast parameters
        counts: Samples to draw per parameter
        rng: Seeded generator
        generator: Parametric generator (Gaussian by default)

    Returns:
        (features, labels); every label equals its source parameter's label
    """
    if len(counts) != len(payload):
        raise InputError(f"{len(counts)} counts for {len(payload)} parameters")
    if any(count < 0 for count in counts):
        raise InputError(f"Generation counts must be nonnegative, got {list(counts)}")

    generator = generator or GaussianGenerator()
    dim = payload[0].latent_dim if payload else 0
    features = [np.empty((0, dim))]
    labels = [np.empty(0, dtype=int)]
    for param, count in zip(payload, counts):
        if count == 0:
            continue
        features.append(generator.sample(param.v, int(count), rng))
        labels.append(np.full(int(count), param.label, dtype=int))
    return np.vstack(features), np.concatenate(labels)


def budget_counts(counts: Sequence[int], budget: int) -> List[int]:
    """Scale counts down proportionally when their total exceeds ``budget``."""
    total = sum(counts)
    if budget <= 0 or total <= budget:
        return list(counts)
    return [max(1, int(count * budget / total)) for count in counts]


def train_classifier(
    features: np.ndarray,
    labels: np.ndarray,
    epochs: int,
    lr: float,
    rng: np.random.Generator,
    num_labels: Optional[int] = None,
) -> Classifier:
    """
    Train a softmax classifier from zero weights by mini-batch SGD.

    Args:
        features: Array of shape (n, d)
        labels: Integer labels of shape (n,)
        epochs: Number of passes, at least 1
        lr: Learning rate, positive
        rng: Seeded generator for shuffling
        num_labels: Size of the label space (defaults to max label + 1)

    Returns:
        Classifier with its per-epoch loss history
    """
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if epochs < 1:
        raise ConfigurationError(f"epochs must be at least 1, got {epochs}")
    if lr <= 0:
        raise ConfigurationError(f"Learning rate must be positive, got {lr}")
    if len(np.unique(labels)) < 2:
        raise ConfigurationError("Training data must contain at least two distinct labels")

    num_labels = num_labels or int(labels.max()) + 1
    model = Classifier.zeros(num_labels, features.shape[1])
    return sgd_epochs(model, features, labels, epochs, lr, rng)


def evaluate(model: Classifier, features: np.ndarray, labels: np.ndarray) -> EvalResult:
    """Accuracy and mean cross-entropy on a test set."""
    labels = np.asarray(labels, dtype=int)
    if labels.size == 0:
        raise InputError("Cannot evaluate on an empty test set")
    if labels.max() >= model.num_labels:
        raise InputError(f"Test label {labels.max()} outside the model's {model.num_labels} labels")
    correct = int((model.predict(features) == labels).sum())
    loss, _ = cross_entropy(model.weights, features, labels)
    return EvalResult(accuracy=correct / labels.size, mean_loss=loss, n_test=int(labels.size))


def utility_loss(model_hat: Classifier, model_star: Classifier, features: np.ndarray, labels: np.ndarray) -> float:
    """
    Empirical ε_u: excess test cross-entropy of ``model_hat`` over ``model_star``.

    Can be slightly negative from sampling noise; reported as is.
    """
    if model_hat.num_labels != model_star.num_labels or model_hat.dim != model_star.dim:
        raise InputError(
            f"Label spaces differ: {model_hat.num_labels}x{model_hat.dim} vs "
            f"{model_star.num_labels}x{model_star.dim}"
        )
    return evaluate(model_hat, features, labels).mean_loss - evaluate(model_star, features, labels).mean_loss
