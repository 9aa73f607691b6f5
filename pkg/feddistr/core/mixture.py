"""Base distributions, client mixtures and entanglement coefficients."""

import io
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from dotenv import dotenv_values

from ..exceptions import ConfigurationError, DomainError, InputError
from ..utils.formatters import NumberFormatter
from ..utils.logging_config import get_logger

logger = get_logger(__name__)

WEIGHT_TOLERANCE = 1e-9
XI_TOLERANCE = 0.01

LabeledData = Tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class BaseDistribution:
    """One labeled, axis-aligned Gaussian component of the global mixture."""

    id: int
    label: int
    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        scale = np.asarray(self.scale, dtype=float).reshape(-1)
        if mean.shape != scale.shape:
            raise InputError(
                f"Base {self.id}: mean has {mean.size} dims but scale has {scale.size}"
            )
        if not np.all(scale > 0):
            raise InputError(f"Base {self.id}: scale components must be strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale", scale)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass
class MixtureSpec:
    """The global mixture S: base distributions and their weights π."""

    bases: List[BaseDistribution]
    global_weights: np.ndarray

    def __post_init__(self):
        if not self.bases:
            raise ConfigurationError("A mixture needs at least one base distribution")
        ids = [base.id for base in self.bases]
        if len(set(ids)) != len(ids):
            raise InputError(f"Base ids must be unique, got {ids}")
        dims = {base.dim for base in self.bases}
        if len(dims) != 1:
            raise InputError(f"All bases must share one dimension, got {sorted(dims)}")
        self.global_weights = _check_probability_vector(
            self.global_weights, len(self.bases), "global_weights"
        )

    @property
    def m(self) -> int:
        return len(self.bases)

    @property
    def dim(self) -> int:
        return self.bases[0].dim

    @property
    def num_labels(self) -> int:
        return max(base.label for base in self.bases) + 1

    def with_weights(self, weights: np.ndarray) -> "MixtureSpec":
        """Return the same bases under different mixture weights."""
        return MixtureSpec(bases=list(self.bases), global_weights=np.asarray(weights, dtype=float))

    def to_config_text(self) -> str:
        """
        Serialize the mixture as flat KEY=value lines.

        Returns:
            Text parseable by :meth:`from_config_text`
        """
        fmt = NumberFormatter.format_exact
        lines = [
            "# [mixture]",
            f"BASES={self.m}",
            f"DIM={self.dim}",
            f"GLOBAL_WEIGHTS={','.join(fmt(w) for w in self.global_weights)}",
        ]
        for base in self.bases:
            lines.append(f"# [base {base.id}]")
            lines.append(f"BASE_{base.id}_LABEL={base.label}")
            lines.append(f"BASE_{base.id}_MEAN={','.join(fmt(v) for v in base.mean)}")
            lines.append(f"BASE_{base.id}_SCALE={','.join(fmt(v) for v in base.scale)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_config_text(cls, text: str) -> "MixtureSpec":
        """Parse a mixture written by :meth:`to_config_text`."""
        values = dotenv_values(stream=io.StringIO(text))
        try:
            m = int(values["BASES"])
            weights = _parse_floats(values["GLOBAL_WEIGHTS"])
            bases = [
                BaseDistribution(
                    id=i,
                    label=int(values[f"BASE_{i}_LABEL"]),
                    mean=_parse_floats(values[f"BASE_{i}_MEAN"]),
                    scale=_parse_floats(values[f"BASE_{i}_SCALE"]),
                )
                for i in range(m)
            ]
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"Malformed mixture config: {e}") from e
        return cls(bases=bases, global_weights=weights)


@dataclass
class ClientShard:
    """
    A client's private dataset.

    ``base_assignment`` holds the true base index of every point. It exists
    for evaluation only and never leaves the simulator's client side.
    """

    client_id: int
    features: np.ndarray
    labels: np.ndarray
    pi: np.ndarray
    base_assignment: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int).reshape(-1)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.size:
            raise InputError(
                f"Client {self.client_id}: features {self.features.shape} "
                f"do not match {self.labels.size} labels"
            )
        if self.labels.size < 1:
            raise InputError(f"Client {self.client_id}: a shard needs at least one point")
        self.pi = _check_probability_vector(self.pi, np.asarray(self.pi).size, "pi")

    @property
    def n(self) -> int:
        return self.labels.size

    @property
    def points(self) -> List[Tuple[np.ndarray, int]]:
        return [(x, int(y)) for x, y in zip(self.features, self.labels)]


@dataclass
class EntanglementReport:
    """Pairwise entangled coefficients across clients."""

    pairwise: np.ndarray
    average: float
    xi_max: float


def _parse_floats(text: Optional[str]) -> np.ndarray:
    return np.array([float(token) for token in (text or "").split(",") if token.strip()])


def _check_probability_vector(weights, size: int, name: str) -> np.ndarray:
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if weights.size != size:
        raise InputError(f"{name} has {weights.size} entries, expected {size}")
    if np.any(weights < 0):
        raise InputError(f"{name} has negative entries")
    if abs(weights.sum() - 1.0) > WEIGHT_TOLERANCE:
        raise InputError(f"{name} sums to {weights.sum():.12f}, expected 1")
    return weights


def entangle_coeff(pi_a: np.ndarray, pi_b: np.ndarray) -> float:
    """
    Entangled coefficient between two clients: the cosine of their weight vectors.

    Args:
        pi_a: Mixture weights of the first client
        pi_b: Mixture weights of the second client

    Returns:
        Coefficient in [0, 1] for nonnegative inputs

    Raises:
        InputError: If the vectors differ in length
        DomainError: If either vector has zero norm
    """
    a = np.asarray(pi_a, dtype=float).reshape(-1)
    b = np.asarray(pi_b, dtype=float).reshape(-1)
    if a.size != b.size:
        raise InputError(f"Weight vectors differ in length: {a.size} vs {b.size}")
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0 or norm_b == 0:
        raise DomainError("Entangled coefficient is undefined for a zero-norm weight vector")
    return float(np.dot(a, b) / (norm_a * norm_b))


def entanglement_report(shards: Sequence[ClientShard]) -> EntanglementReport:
    """
    Pairwise coefficients, their average s̄ and maximum ξ over client pairs.

    Args:
        shards: At least two client shards with equally long π vectors

    Returns:
        EntanglementReport
    """
    return entanglement_from_weights([shard.pi for shard in shards])


def entanglement_from_weights(weights: Sequence[np.ndarray]) -> EntanglementReport:
    """Same as :func:`entanglement_report` for bare weight vectors."""
    k = len(weights)
    if k < 2:
        raise ConfigurationError(f"Entanglement needs at least two clients, got {k}")

    pairwise = np.eye(k)
    for a in range(k):
        for b in range(a + 1, k):
            coeff = entangle_coeff(weights[a], weights[b])
            pairwise[a, b] = coeff
            pairwise[b, a] = coeff

    upper = pairwise[np.triu_indices(k, 1)]
    return EntanglementReport(
        pairwise=pairwise,
        average=float(upper.mean()),
        xi_max=float(upper.max()),
    )


def make_mixture_spec(
    m: int,
    d: int,
    rng: np.random.Generator,
    subclasses_per_label: int = 1,
    mean_spread: float = 1.3,
    scale: float = 1.0,
    min_separation: float = 2.0,
    max_attempts: int = 1000,
) -> MixtureSpec:
    """
    Draw m labeled Gaussians with uniform global weights and a minimum mean gap.

    Base i carries the superclass label ``i // subclasses_per_label``.

    Args:
        m: Number of base distributions
        d: Feature dimension
        rng: Seeded generator
        subclasses_per_label: Bases sharing one superclass label
        mean_spread: Standard deviation of the mean draws
        scale: Per-axis standard deviation of every base
        min_separation: Minimum pairwise mean distance, in units of ``scale``
        max_attempts: Rejection-sampling budget

    Returns:
        MixtureSpec

    Raises:
        ConfigurationError: If sizes are invalid or separation cannot be met
    """
    if m < 1 or d < 1 or subclasses_per_label < 1:
        raise ConfigurationError(
            f"Need m >= 1, d >= 1 and subclasses_per_label >= 1 (got {m}, {d}, {subclasses_per_label})"
        )
    if scale <= 0:
        raise ConfigurationError(f"BASE_SCALE must be positive, got {scale}")

    for attempt in range(1, max_attempts + 1):
        means = rng.normal(0.0, mean_spread, size=(m, d))
        if m == 1:
            break
        gaps = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=2)
        gaps[np.diag_indices(m)] = np.inf
        if gaps.min() >= min_separation * scale:
            break
    else:
        raise ConfigurationError(
            f"Could not place {m} bases {min_separation}x scale apart in {max_attempts} attempts; "
            f"raise MEAN_SPREAD or lower MIN_SEPARATION"
        )
    logger.debug(f"Placed {m} bases after {attempt} attempt(s)")

    bases = [
        BaseDistribution(id=i, label=i // subclasses_per_label, mean=means[i], scale=np.full(d, scale))
        for i in range(m)
    ]
    return MixtureSpec(bases=bases, global_weights=np.full(m, 1.0 / m))


def _draw(
    spec: MixtureSpec, weights: np.ndarray, n: int, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw n points under the given weights; returns features, labels, base indices."""
    components = rng.choice(spec.m, size=n, p=weights)
    means = np.stack([base.mean for base in spec.bases])
    scales = np.stack([base.scale for base in spec.bases])
    labels = np.array([base.label for base in spec.bases], dtype=int)
    noise = rng.standard_normal(size=(n, spec.dim))
    features = means[components] + noise * scales[components]
    return features, labels[components], components


def sample_mixture(spec: MixtureSpec, n: int, rng: np.random.Generator) -> LabeledData:
    """
    Draw n i.i.d. labeled points from the mixture.

    Args:
        spec: The mixture
        n: Number of points, at least 1
        rng: Seeded generator

    Returns:
        (features of shape (n, d), labels of shape (n,))
    """
    if n < 1:
        raise ConfigurationError(f"Sample size must be at least 1, got {n}")
    features, labels, _ = _draw(spec, spec.global_weights, n, rng)
    return features, labels


def block_weights(m: int, k: int, leak: float) -> np.ndarray:
    """
    Client weight vectors for the dominant-block construction.

    Client c owns bases ``[c*b, (c+1)*b)`` with ``b = m // k`` and total mass
    ``1 - leak``; ``leak`` is spread uniformly over every other base.

    Returns:
        Array of shape (k, m), one probability vector per row
    """
    block = m // k
    others = m - block
    weights = np.zeros((k, m))
    for c in range(k):
        if others > 0:
            weights[c, :] = leak / others
        weights[c, c * block:(c + 1) * block] = (1.0 - leak) / block if others > 0 else 1.0 / block
    return weights


def leak_for_xi(m: int, k: int, xi_target: float, iterations: int = 200) -> float:
    """
    Solve for the leak mass δ giving pairwise coefficient ``xi_target``.

    The coefficient of the block construction rises monotonically from 0 at
    δ = 0 to 1 at the uniform point δ = (m - b) / m, so bisection applies.
    """
    if xi_target <= 0 or k < 2 or m - m // k == 0:
        return 0.0

    def coeff(leak: float) -> float:
        weights = block_weights(m, k, leak)
        return entangle_coeff(weights[0], weights[1])

    low, high = 0.0, (m - m // k) / m
    for _ in range(iterations):
        mid = 0.5 * (low + high)
        if coeff(mid) < xi_target:
            low = mid
        else:
            high = mid
    return 0.5 * (low + high)


def partition_for_xi(
    m: int,
    k: int,
    xi_target: float,
    n_per_client: int,
    spec: MixtureSpec,
    rng: np.random.Generator,
) -> List[ClientShard]:
    """
    Build K client shards whose weight vectors are ξ-entangled at ``xi_target``.

    Args:
        m: Number of bases (must equal ``spec.m``)
        k: Number of clients
        xi_target: Target maximum pairwise coefficient in [0, 1)
        n_per_client: Points per client
        spec: Mixture supplying the bases
        rng: Seeded generator

    Returns:
        List of K ClientShard

    Raises:
        ConfigurationError: If m < K, sizes are invalid or xi_target is out of range
    """
    if m != spec.m:
        raise ConfigurationError(f"m={m} does not match the mixture's {spec.m} bases")
    if k < 1:
        raise ConfigurationError(f"Need at least one client, got K={k}")
    if m < k:
        raise ConfigurationError(f"Infeasible partition: m={m} bases for K={k} clients (need m >= K)")
    if not 0 <= xi_target < 1:
        raise ConfigurationError(f"xi_target must lie in [0, 1), got {xi_target}")
    if n_per_client < 1:
        raise ConfigurationError(f"n_per_client must be at least 1, got {n_per_client}")

    leak = leak_for_xi(m, k, xi_target)
    weights = block_weights(m, k, leak)
    if k >= 2:
        realized = entanglement_from_weights(list(weights)).xi_max
        if xi_target > 0 and abs(realized - xi_target) > XI_TOLERANCE:
            logger.warning(f"Realized xi {realized:.4f} is outside ±{XI_TOLERANCE} of {xi_target}")
        logger.info(f"Partitioned {m} bases over {k} clients: leak={leak:.6f}, realized xi={realized:.4f}")

    shards = []
    for client_id in range(k):
        features, labels, components = _draw(spec, weights[client_id], n_per_client, rng)
        shards.append(
            ClientShard(
                client_id=client_id,
                features=features,
                labels=labels,
                pi=weights[client_id],
                base_assignment=components,
            )
        )
    return shards


def pooled_spec(spec: MixtureSpec, shards: Sequence[ClientShard]) -> MixtureSpec:
    """The count-weighted pool of client mixtures, Σ n_k π_k / n."""
    total = sum(shard.n for shard in shards)
    if total == 0:
        raise InputError("Cannot pool clients holding no data")
    weights = sum(shard.n * shard.pi for shard in shards) / total
    return spec.with_weights(weights / weights.sum())


def shards_to_frame(shards: Sequence[ClientShard]) -> pd.DataFrame:
    """
    Flatten shards to rows with columns client_id, base_id, label, x_0..x_{d-1}.
    """
    frames = []
    for shard in shards:
        base_ids = shard.base_assignment if shard.base_assignment.size == shard.n else np.full(shard.n, -1)
        columns: Dict[str, np.ndarray] = {
            "client_id": np.full(shard.n, shard.client_id),
            "base_id": base_ids,
            "label": shard.labels,
        }
        for j in range(shard.features.shape[1]):
            columns[f"x_{j}"] = shard.features[:, j]
        frames.append(pd.DataFrame(columns))
    return pd.concat(frames, ignore_index=True)
