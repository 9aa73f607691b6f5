"""FedAvg reference loop and communication accounting."""

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .client import UploadMessage
from .downstream import Classifier, evaluate, sgd_epochs
from .mixture import ClientShard
from ..exceptions import ConfigurationError, InputError
from ..utils.logging_config import get_logger

logger = get_logger(__name__)


@dataclass
class CommLedger:
    """Communication rounds and transmitted scalars of one run."""

    rounds: int = 0
    uplink_scalars: int = 0
    downlink_scalars: int = 0

    def __post_init__(self):
        self._lock = threading.Lock()

    def record_round(self, clients: int, weight_count: int) -> None:
        """One FedAvg round: every client sends and receives the full model."""
        with self._lock:
            self.rounds += 1
            self.uplink_scalars += clients * weight_count
            self.downlink_scalars += clients * weight_count

    def record_one_shot(self, uploads: Sequence[UploadMessage], payload_scalars: int, clients: int) -> None:
        """The single FedDistr exchange: all uploads, then one broadcast to every client."""
        with self._lock:
            if self.rounds:
                raise ConfigurationError("A one-shot ledger cannot record a second round")
            self.rounds = 1
            self.uplink_scalars += sum(message.scalar_count for message in uploads)
            self.downlink_scalars += clients * payload_scalars

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{
            "rounds": self.rounds,
            "uplink_scalars": self.uplink_scalars,
            "downlink_scalars": self.downlink_scalars,
        }])


@dataclass
class FedAvgConfig:
    local_epochs: int = 1
    lr: float = 0.1
    max_rounds: int = 50
    target_accuracy: float = 0.9
    stop_at_target: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ConfigurationError(f"MAX_ROUNDS must be at least 1, got {self.max_rounds}")
        if self.local_epochs < 1:
            raise ConfigurationError(f"LOCAL_EPOCHS must be at least 1, got {self.local_epochs}")
        if self.lr <= 0:
            raise ConfigurationError(f"LEARNING_RATE must be positive, got {self.lr}")


@dataclass
class FedAvgResult:
    model: Classifier
    ledger: CommLedger
    rounds_to_target: Optional[int]
    history: List[Tuple[int, float]] = field(default_factory=list)

    def history_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.history, columns=["round", "accuracy"])


def fedavg_round(
    global_model: Classifier,
    shards: Sequence[ClientShard],
    local_epochs: int,
    lr: float,
    rng: np.random.Generator,
    ledger: Optional[CommLedger] = None,
    workers: int = 1,
) -> Classifier:
    """
    One FedAvg round: local SGD from the global model, then n_k-weighted averaging.

    Client k trains with the k-th child stream of ``rng.spawn(len(shards))``.

    Args:
        global_model: Current global classifier
        shards: Client datasets (features in the model's input space)
        local_epochs: Local SGD epochs per client
        lr: Learning rate
        rng: Seeded generator; spawns one child per client
        ledger: Optional ledger updated with this round
        workers: Threads for the local updates

    Returns:
        The averaged classifier
    """
    if not shards:
        raise InputError("fedavg_round needs at least one client")
    client_rngs = rng.spawn(len(shards))
    active = list(zip(shards, client_rngs))

    def local_update(item) -> Classifier:
        shard, client_rng = item
        return sgd_epochs(global_model, shard.features, shard.labels, local_epochs, lr, client_rng)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            local_models = list(pool.map(local_update, active))
    else:
        local_models = [local_update(item) for item in active]

    sizes = np.array([shard.n for shard, _ in active], dtype=float)
    weights = sizes / sizes.sum()
    averaged = sum(w * model.weights for w, model in zip(weights, local_models))

    if ledger is not None:
        ledger.record_round(len(active), global_model.weight_count)
    return Classifier(weights=averaged, num_labels=global_model.num_labels)


def run_fedavg(
    shards: Sequence[ClientShard],
    test: Tuple[np.ndarray, np.ndarray],
    num_labels: int,
    cfg: FedAvgConfig,
    rng: np.random.Generator,
) -> FedAvgResult:
    """
    Iterate FedAvg rounds, recording the first round reaching the target accuracy.

    Args:
        shards: Client datasets
        test: Held-out (features, labels)
        num_labels: Label-space size
        cfg: Round budget, target and optimizer settings
        rng: Seeded generator

    Returns:
        FedAvgResult; ``rounds_to_target`` is None if the target was never reached
    """
    dim = shards[0].features.shape[1]
    model = Classifier.zeros(num_labels, dim)
    ledger = CommLedger()
    rounds_to_target = None
    history: List[Tuple[int, float]] = []

    for round_index in range(1, cfg.max_rounds + 1):
        model = fedavg_round(model, shards, cfg.local_epochs, cfg.lr, rng, ledger, cfg.workers)
        accuracy = evaluate(model, *test).accuracy
        history.append((round_index, accuracy))
        logger.debug(f"FedAvg round {round_index}: accuracy {accuracy:.4f}")
        if rounds_to_target is None and accuracy >= cfg.target_accuracy:
            rounds_to_target = round_index
            logger.info(f"FedAvg reached {cfg.target_accuracy:.4f} after {round_index} rounds")
            if cfg.stop_at_target:
                break

    if rounds_to_target is None:
        logger.info(f"FedAvg did not reach {cfg.target_accuracy:.4f} within {cfg.max_rounds} rounds")
    return FedAvgResult(model=model, ledger=ledger, rounds_to_target=rounds_to_target, history=history)
