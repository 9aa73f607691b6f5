"""Client side of the protocol: encode, cluster, fit and privately release."""

from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.metrics import silhouette_score

from .generator import DistributionGenerator, GaussianGenerator
from .mixture import ClientShard
from ..exceptions import ConfigurationError, InputError, ProtocolError
from ..utils.formatters import UploadRecordFormatter
from ..utils.logging_config import get_logger

logger = get_logger(__name__)

MAX_LLOYD_ITERATIONS = 300
KMEANS_RESTARTS = 5
AUTO_MAX_CLUSTERS = 8
SILHOUETTE_THRESHOLD = 0.5
ORTHONORMAL_TOLERANCE = 1e-9

ClusterCounts = Union[int, Dict[int, int]]


@dataclass(frozen=True)
class LatentPoint:
    """Latent embedding z of one private point."""

    z: np.ndarray
    label: int
    source_index: int


@dataclass
class EncoderConfig:
    """
    Fixed encoder E. Identity unless ``projection`` is set.

    ``projection`` has shape (latent_dim, input_dim) with orthonormal rows.
    """

    input_dim: int
    projection: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.projection is not None:
            self.projection = np.asarray(self.projection, dtype=float)
            if self.projection.ndim != 2 or self.projection.shape[1] != self.input_dim:
                raise InputError(
                    f"Projection of shape {self.projection.shape} does not map {self.input_dim} dims"
                )
            gram = self.projection @ self.projection.T
            if not np.allclose(gram, np.eye(self.projection.shape[0]), atol=ORTHONORMAL_TOLERANCE):
                raise InputError("Projection rows must be orthonormal")

    @property
    def latent_dim(self) -> int:
        return self.input_dim if self.projection is None else self.projection.shape[0]

    @classmethod
    def random_projection(cls, input_dim: int, latent_dim: int, rng: np.random.Generator) -> "EncoderConfig":
        """Encoder projecting onto a random ``latent_dim``-dimensional subspace."""
        if not 1 <= latent_dim <= input_dim:
            raise ConfigurationError(f"LATENT_DIM must lie in [1, {input_dim}], got {latent_dim}")
        if latent_dim == input_dim:
            return cls(input_dim=input_dim)
        basis, _ = np.linalg.qr(rng.standard_normal(size=(input_dim, latent_dim)))
        return cls(input_dim=input_dim, projection=basis.T)

    def transform(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.shape[-1] != self.input_dim:
            raise InputError(f"Expected {self.input_dim}-dimensional input, got {features.shape[-1]}")
        if self.projection is None:
            return features.copy()
        return features @ self.projection.T


@dataclass
class Clustering:
    """Per-label k-means result, concatenated across labels."""

    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    cluster_labels: List[int] = field(default_factory=list)
    sse_history: Dict[int, List[float]] = field(default_factory=dict)

    @property
    def m_k(self) -> int:
        return len(self.centroids)


@dataclass
class DistributionParameter:
    """Learned representation v_{k,i} of one local base distribution."""

    v: np.ndarray
    label: int
    count: int
    owner: int
    local_index: int

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float).reshape(-1)
        if self.count < 1:
            raise InputError(f"Parameter ({self.owner}, {self.local_index}) has count {self.count} < 1")
        if self.v.size == 0 or self.v.size % 2:
            raise InputError(f"Parameter vectors have positive even length, got {self.v.size}")
        if not np.all(np.isfinite(self.v)):
            raise InputError(f"Parameter ({self.owner}, {self.local_index}) is not finite")

    @property
    def key(self) -> Tuple[int, int]:
        return (self.owner, self.local_index)

    @property
    def latent_dim(self) -> int:
        return self.v.size // 2


@dataclass
class UploadMessage:
    """The single uplink of one client: noised parameters plus privacy settings."""

    owner: int
    params: List[DistributionParameter]
    clip_bound: float
    noise_sigma: float

    def __post_init__(self):
        for param in self.params:
            if param.owner != self.owner:
                raise ProtocolError(f"Client {self.owner} uploaded a parameter owned by {param.owner}")

    @property
    def scalar_count(self) -> int:
        """Transmitted scalars: every vector plus one count per parameter."""
        return sum(param.v.size + 1 for param in self.params)

    def to_records(self) -> List[str]:
        return [
            UploadRecordFormatter.format_record(
                self.owner, param.label, param.count, self.clip_bound, self.noise_sigma, param.v
            )
            for param in self.params
        ]

    @staticmethod
    def from_records(lines: Iterable[str]) -> List["UploadMessage"]:
        """Rebuild messages from record lines; local indices follow line order per owner."""
        grouped: Dict[int, List[dict]] = defaultdict(list)
        for line in lines:
            if line.strip():
                record = UploadRecordFormatter.parse_record(line)
                grouped[record["owner"]].append(record)

        messages = []
        for owner in sorted(grouped):
            records = grouped[owner]
            params = [
                DistributionParameter(
                    v=np.array(record["vector"]),
                    label=record["label"],
                    count=record["count"],
                    owner=owner,
                    local_index=index,
                )
                for index, record in enumerate(records)
            ]
            messages.append(
                UploadMessage(
                    owner=owner,
                    params=params,
                    clip_bound=records[0]["clip_bound"],
                    noise_sigma=records[0]["noise_sigma"],
                )
            )
        return messages


@dataclass
class ClientConfig:
    """
    Client pipeline settings.

    ``mk_mode`` is ``fixed`` (``mk_fixed`` clusters per label, an int or a
    per-label dict), ``auto`` (silhouette selection) or ``oracle`` (distinct
    true bases per label, read from the shard's hidden assignment).
    """

    encoder: Optional[EncoderConfig] = None
    mk_mode: str = "fixed"
    mk_fixed: ClusterCounts = 1
    clip_bound: float = 50.0
    noise_sigma: float = 0.0
    generator: DistributionGenerator = field(default_factory=GaussianGenerator)

    def __post_init__(self):
        if self.mk_mode not in ("fixed", "auto", "oracle"):
            raise ConfigurationError(f"MK_MODE must be fixed, auto or oracle, got {self.mk_mode!r}")
        if self.clip_bound <= 0:
            raise ConfigurationError(f"CLIP_BOUND must be positive, got {self.clip_bound}")
        if self.noise_sigma < 0:
            raise ConfigurationError(f"NOISE_SIGMA must be nonnegative, got {self.noise_sigma}")


@dataclass
class ClientState:
    """Everything a client derives locally before release."""

    latents: List[LatentPoint]
    clustering: Clustering
    params: List[DistributionParameter]


@dataclass
class KMeansResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    sse_history: List[float]
    restart_inertias: List[float]


def encode(x: np.ndarray, encoder_cfg: EncoderConfig, label: int = 0, source_index: int = 0) -> LatentPoint:
    """
    Encode one feature vector, z = E(x).

    Args:
        x: Feature vector of the configured input dimension
        encoder_cfg: Encoder settings
        label: Superclass label carried along
        source_index: Index of the point in its shard

    Returns:
        LatentPoint
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    return LatentPoint(z=encoder_cfg.transform(x), label=int(label), source_index=source_index)


def encode_shard(shard: ClientShard, encoder_cfg: EncoderConfig) -> List[LatentPoint]:
    """Encode every point of a shard, batched."""
    latents = encoder_cfg.transform(shard.features)
    return [
        LatentPoint(z=latents[i], label=int(shard.labels[i]), source_index=i)
        for i in range(shard.n)
    ]


def _distance_inertia(points: np.ndarray, assignments: np.ndarray, centroids: np.ndarray) -> float:
    return float(np.linalg.norm(points - centroids[assignments], axis=1).sum())


def _sse(points: np.ndarray, assignments: np.ndarray, centroids: np.ndarray) -> float:
    return float(((points - centroids[assignments]) ** 2).sum())


def _kmeans_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(0, n)]
    for i in range(1, k):
        dist_sq = np.min(((points[:, None, :] - centroids[None, :i, :]) ** 2).sum(axis=2), axis=1)
        total = dist_sq.sum()
        probs = dist_sq / total if total > 0 else np.full(n, 1.0 / n)
        centroids[i] = points[rng.choice(n, p=probs)]
    return centroids


def _lloyd(points: np.ndarray, k: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, List[float]]:
    centroids = _kmeans_plus_plus(points, k, rng)
    previous = None
    history: List[float] = []

    for iteration in range(MAX_LLOYD_ITERATIONS):
        distances = np.linalg.norm(points[:, None, :] - centroids[None, :, :], axis=2)
        assignments = np.argmin(distances, axis=1)

        # Empty clusters take the point farthest from its centroid
        for j in range(k):
            if not np.any(assignments == j):
                spread = np.linalg.norm(points - centroids[assignments], axis=1)
                counts = np.bincount(assignments, minlength=k)
                spread[counts[assignments] <= 1] = -1.0
                donor = int(np.argmax(spread))
                assignments[donor] = j
                centroids[j] = points[donor]

        if previous is not None and np.array_equal(assignments, previous):
            logger.debug(f"Lloyd converged after {iteration} iterations (k={k})")
            break
        previous = assignments
        centroids = np.stack([points[assignments == j].mean(axis=0) for j in range(k)])
        history.append(_sse(points, assignments, centroids))

    return previous, centroids, history


def kmeans(points: np.ndarray, k: int, rng: np.random.Generator, restarts: int = KMEANS_RESTARTS) -> KMeansResult:
    """
    Lloyd's algorithm with k-means++ seeding, best of ``restarts`` by summed-distance inertia.

    Args:
        points: Array of shape (n, d)
        k: Number of clusters, at most n
        rng: Seeded generator
        restarts: Independent seedings to try

    Returns:
        KMeansResult
    """
    points = np.asarray(points, dtype=float)
    if k < 1:
        raise ConfigurationError(f"Number of clusters must be at least 1, got {k}")
    if points.shape[0] < k:
        raise ConfigurationError(f"Cannot form {k} clusters from {points.shape[0]} points")

    best: Optional[KMeansResult] = None
    inertias: List[float] = []
    for _ in range(restarts):
        assignments, centroids, history = _lloyd(points, k, rng)
        inertia = _distance_inertia(points, assignments, centroids)
        inertias.append(inertia)
        if best is None or inertia < best.inertia:
            best = KMeansResult(assignments, centroids, inertia, history, [])
    best.restart_inertias = inertias
    return best


def choose_cluster_count(points: np.ndarray, rng: np.random.Generator, max_clusters: int = AUTO_MAX_CLUSTERS) -> int:
    """
    Pick m_k in [1, max_clusters] by mean silhouette.

    One cluster is kept unless some m >= 2 scores at least SILHOUETTE_THRESHOLD.
    """
    best_k, best_score = 1, SILHOUETTE_THRESHOLD
    for k in range(2, min(max_clusters, points.shape[0] - 1) + 1):
        result = kmeans(points, k, rng)
        if len(np.unique(result.assignments)) < 2:
            continue
        score = float(silhouette_score(points, result.assignments))
        logger.debug(f"Silhouette for k={k}: {score:.4f}")
        if score > best_score:
            best_k, best_score = k, score
    return best_k


def cluster(points: Sequence[LatentPoint], m_k: ClusterCounts, rng: np.random.Generator) -> Clustering:
    """
    Cluster latent points into base-distribution groups, separately per label.

    Args:
        points: Latent points of one client
        m_k: Clusters per label, one int for all labels or a dict by label
        rng: Seeded generator

    Returns:
        Clustering with cluster indices contiguous per label, labels ascending
    """
    if not points:
        raise ConfigurationError("Cannot cluster an empty point set")
    latents = np.stack([point.z for point in points])
    labels = np.array([point.label for point in points])

    assignments = np.empty(len(points), dtype=int)
    centroids: List[np.ndarray] = []
    cluster_labels: List[int] = []
    history: Dict[int, List[float]] = {}
    inertia = 0.0

    for label in np.unique(labels):
        label = int(label)
        k = m_k.get(label, 1) if isinstance(m_k, dict) else int(m_k)
        members = np.flatnonzero(labels == label)
        result = kmeans(latents[members], k, rng)
        assignments[members] = result.assignments + len(centroids)
        centroids.extend(result.centroids)
        cluster_labels.extend([label] * k)
        history[label] = result.sse_history
        inertia += result.inertia

    return Clustering(
        assignments=assignments,
        centroids=np.stack(centroids),
        inertia=inertia,
        cluster_labels=cluster_labels,
        sse_history=history,
    )


def estimate_params(
    members: Sequence[LatentPoint],
    owner: int,
    local_index: int,
    generator: Optional[DistributionGenerator] = None,
) -> DistributionParameter:
    """
    Fit the distribution parameter of one cluster.

    Args:
        members: Points of one cluster, all sharing a label
        owner: Client id
        local_index: Cluster index i in [m_k]
        generator: Parametric generator (Gaussian by default)

    Returns:
        DistributionParameter with ``v = [mean ‖ log std]``
    """
    if not members:
        raise InputError(f"Client {owner} cluster {local_index} is empty")
    labels = {point.label for point in members}
    if len(labels) != 1:
        raise ProtocolError(f"Client {owner} cluster {local_index} mixes labels {sorted(labels)}")

    generator = generator or GaussianGenerator()
    vector = generator.fit(np.stack([point.z for point in members]))
    return DistributionParameter(
        v=vector,
        label=labels.pop(),
        count=len(members),
        owner=owner,
        local_index=local_index,
    )


def dp_release(
    param: DistributionParameter, C: float, sigma: float, rng: np.random.Generator
) -> DistributionParameter:
    """
    Gaussian mechanism: clip to norm C, then add N(0, σ²C²I).

    The count and label pass through unnoised.
    """
    if C <= 0:
        raise ConfigurationError(f"Clip bound must be positive, got {C}")
    if sigma < 0:
        raise ConfigurationError(f"Noise multiplier must be nonnegative, got {sigma}")

    norm = float(np.linalg.norm(param.v))
    factor = max(1.0, norm / C)
    if factor > 1.0:
        logger.debug(f"Clipped parameter {param.key}: norm {norm:.4f} > C={C}")
    released = param.v / factor
    if sigma > 0:
        released = released + rng.normal(0.0, sigma * C, size=released.shape)
    return replace(param, v=released)


def cluster_counts_for(shard: ClientShard, cfg: ClientConfig, latents: Sequence[LatentPoint], rng: np.random.Generator) -> Dict[int, int]:
    """Resolve m_k per label for one shard according to ``cfg.mk_mode``."""
    labels = sorted({int(label) for label in shard.labels})
    if cfg.mk_mode == "fixed":
        if isinstance(cfg.mk_fixed, dict):
            return {label: cfg.mk_fixed.get(label, 1) for label in labels}
        return {label: int(cfg.mk_fixed) for label in labels}

    if cfg.mk_mode == "oracle":
        if shard.base_assignment.size != shard.n:
            raise ConfigurationError(f"MK_MODE=oracle needs base assignments for client {shard.client_id}")
        return {
            label: len(np.unique(shard.base_assignment[shard.labels == label]))
            for label in labels
        }

    latent_array = np.stack([point.z for point in latents])
    point_labels = np.array([point.label for point in latents])
    return {
        label: choose_cluster_count(latent_array[point_labels == label], rng)
        for label in labels
    }


def disentangle(shard: ClientShard, cfg: ClientConfig, rng: np.random.Generator) -> ClientState:
    """Encode, cluster per label and fit one parameter per cluster (no release)."""
    encoder = cfg.encoder or EncoderConfig(input_dim=shard.features.shape[1])
    latents = encode_shard(shard, encoder)
    counts = cluster_counts_for(shard, cfg, latents, rng)
    clustering = cluster(latents, counts, rng)

    params = []
    for local_index in range(clustering.m_k):
        members = [latents[i] for i in np.flatnonzero(clustering.assignments == local_index)]
        params.append(estimate_params(members, shard.client_id, local_index, cfg.generator))

    logger.debug(f"Client {shard.client_id}: {clustering.m_k} clusters, inertia {clustering.inertia:.4f}")
    return ClientState(latents=latents, clustering=clustering, params=params)


def release(owner: int, params: Sequence[DistributionParameter], cfg: ClientConfig, rng: np.random.Generator) -> UploadMessage:
    """Apply the Gaussian mechanism to every parameter and wrap the single upload."""
    noised = [dp_release(param, cfg.clip_bound, cfg.noise_sigma, rng) for param in params]
    return UploadMessage(owner=owner, params=noised, clip_bound=cfg.clip_bound, noise_sigma=cfg.noise_sigma)


def client_upload(shard: ClientShard, cfg: ClientConfig, rng: np.random.Generator) -> UploadMessage:
    """
    Run the full client pipeline and emit its one upload.

    Args:
        shard: Private client data
        cfg: Client settings (m_k mode, C, σ, encoder)
        rng: Seeded generator owned by this client

    Returns:
        UploadMessage with Σ_labels m_k(label) parameters
    """
    state = disentangle(shard, cfg, rng)
    message = release(shard.client_id, state.params, cfg, rng)
    logger.info(f"Client {shard.client_id} uploads {len(message.params)} parameters ({message.scalar_count} scalars)")
    return message
