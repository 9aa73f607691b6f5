"""End-to-end orchestration: FedDistr runs, FedAvg runs, bound validation and sweeps."""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .baseline import CommLedger, FedAvgConfig, run_fedavg
from .client import ClientConfig, ClientState, EncoderConfig, UploadMessage, disentangle, release
from .downstream import Classifier, budget_counts, evaluate, generate, train_classifier, utility_loss
from .mixture import (
    ClientShard,
    LabeledData,
    MixtureSpec,
    entanglement_report,
    make_mixture_spec,
    partition_for_xi,
    pooled_spec,
    sample_mixture,
)
from .results_writer import ResultsWriter
from .run_config import RunConfig, SweepGrid, TheoryConfig, dp_epsilon
from .server import AlignmentResult, align, broadcast
from .theory import BoundSpec, bound_sweep, monte_carlo_hoeffding, entanglement_threshold, verify_dominance
from ..exceptions import ConfigurationError, FedDistrError, ProtocolError
from ..utils.logging_config import get_logger

logger = get_logger(__name__)

STREAMS = ("mixture", "partition", "test", "encoder", "clients", "generation", "downstream", "oracle", "fedavg")

METRIC_COLUMNS = [
    "mode", "seed", "clients", "bases", "xi_target", "realized_xi", "average_xi",
    "clip_bound", "noise_sigma", "epsilon", "tau", "payload_size",
    "mean_accuracy", "min_accuracy", "mean_utility_loss", "mean_eps_u", "oracle_accuracy",
    "rounds", "rounds_to_target", "uplink_scalars", "downlink_scalars",
]

SWEEP_COLUMNS = ["cell"] + METRIC_COLUMNS + ["fedavg_target", "error"]

DOMINANCE_CHECK_K = (2, 3, 5)


@dataclass
class ClientOutcome:
    client_id: int
    n_train: int
    n_generated: int
    accuracy: float
    mean_loss: float
    eps_u: Optional[float] = None
    m_k: Optional[int] = None
    inertia: Optional[float] = None


@dataclass
class RunMetrics:
    """Aggregated result of one run."""

    mode: str
    seed: int
    clients: List[ClientOutcome]
    ledger: CommLedger
    realized_xi: float
    average_xi: float
    clip_bound: float
    noise_sigma: float
    epsilon: float
    wall_time: float = 0.0
    oracle_accuracy: Optional[float] = None
    rounds_to_target: Optional[int] = None
    tau: Optional[float] = None
    payload_size: Optional[int] = None
    xi_target: float = 0.0
    bases: int = 0

    @property
    def accuracy(self) -> List[float]:
        return [outcome.accuracy for outcome in self.clients]

    @property
    def utility_loss(self) -> List[float]:
        """Per-client 1 - accuracy."""
        return [1.0 - outcome.accuracy for outcome in self.clients]

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.accuracy)) if self.clients else float("nan")

    def to_row(self) -> Dict[str, object]:
        """Flat metrics row; wall time is left out so reruns write identical files."""
        eps_u = [outcome.eps_u for outcome in self.clients if outcome.eps_u is not None]
        return {
            "mode": self.mode,
            "seed": self.seed,
            "clients": len(self.clients),
            "bases": self.bases,
            "xi_target": self.xi_target,
            "realized_xi": self.realized_xi,
            "average_xi": self.average_xi,
            "clip_bound": self.clip_bound,
            "noise_sigma": self.noise_sigma,
            "epsilon": self.epsilon,
            "tau": self.tau,
            "payload_size": self.payload_size,
            "mean_accuracy": self.mean_accuracy,
            "min_accuracy": min(self.accuracy) if self.clients else None,
            "mean_utility_loss": float(np.mean(self.utility_loss)) if self.clients else None,
            "mean_eps_u": float(np.mean(eps_u)) if eps_u else None,
            "oracle_accuracy": self.oracle_accuracy,
            "rounds": self.ledger.rounds,
            "rounds_to_target": self.rounds_to_target,
            "uplink_scalars": self.ledger.uplink_scalars,
            "downlink_scalars": self.ledger.downlink_scalars,
        }

    def clients_frame(self) -> pd.DataFrame:
        rows = [vars(outcome).copy() for outcome in self.clients]
        for row in rows:
            row["utility_loss"] = 1.0 - row["accuracy"]
        return pd.DataFrame(rows)


@dataclass
class SimulationData:
    """Mixture, client shards and held-out test set of one seed."""

    spec: MixtureSpec
    shards: List[ClientShard]
    test: LabeledData
    encoder: EncoderConfig


@dataclass
class TheoryReport:
    bounds: pd.DataFrame
    hoeffding: pd.DataFrame
    dominance: pd.DataFrame
    wall_time: float = 0.0

    @property
    def all_dominate(self) -> bool:
        return bool(self.bounds["dominates"].all() and self.hoeffding["dominates"].all())


def spawn_streams(seed: int) -> Dict[str, np.random.Generator]:
    """Independent named child generators of one root seed."""
    children = np.random.default_rng(seed).spawn(len(STREAMS))
    return dict(zip(STREAMS, children))


class Simulator:
    """Runs the protocol end to end for one RunConfig."""

    def __init__(self, config: RunConfig, writer: Optional[ResultsWriter] = None):
        """
        Initialize the simulator.

        Args:
            config: Validated run settings
            writer: Artifact writer; nothing is written when None
        """
        self.config = config
        self.writer = writer
        self._streams = spawn_streams(config.seed)

    def build_data(self) -> SimulationData:
        """Draw the mixture, partition it across clients and sample the test set."""
        cfg = self.config
        spec = make_mixture_spec(
            cfg.bases,
            cfg.dim,
            self._streams["mixture"],
            subclasses_per_label=cfg.subclasses_per_label,
            mean_spread=cfg.mean_spread,
            scale=cfg.base_scale,
            min_separation=cfg.min_separation,
        )
        shards = partition_for_xi(
            cfg.bases, cfg.clients, cfg.xi_target, cfg.samples_per_client, spec, self._streams["partition"]
        )
        test = sample_mixture(pooled_spec(spec, shards), cfg.test_size, self._streams["test"])
        if cfg.latent_dim is None:
            encoder = EncoderConfig(input_dim=cfg.dim)
        else:
            encoder = EncoderConfig.random_projection(cfg.dim, cfg.latent_dim, self._streams["encoder"])
        logger.info(f"Built {len(shards)} shards of {cfg.samples_per_client} points and {cfg.test_size} test points")
        return SimulationData(spec=spec, shards=shards, test=test, encoder=encoder)

    def run(self, fedavg_target: Optional[float] = None) -> RunMetrics:
        """
        Execute the configured mode.

        Args:
            fedavg_target: Accuracy target replacing TARGET_ACCURACY in fedavg mode

        Returns:
            RunMetrics; theory runs go through :meth:`run_theory`
        """
        if self.config.mode == "feddistr":
            return self.run_feddistr()
        if self.config.mode == "fedavg":
            return self.run_fedavg(target=fedavg_target)
        raise ConfigurationError(f"mode: {self.config.mode!r} is not a single-run mode")

    def _client_states(self, data: SimulationData, client_cfg: ClientConfig) -> Tuple[List[ClientState], List[UploadMessage]]:
        client_rngs = self._streams["clients"].spawn(len(data.shards))

        def work(item) -> Tuple[ClientState, UploadMessage]:
            shard, rng = item
            state = disentangle(shard, client_cfg, rng)
            message = release(shard.client_id, state.params, client_cfg, rng)
            logger.info(f"Client {shard.client_id} uploads {len(message.params)} parameters")
            return state, message

        items = list(zip(data.shards, client_rngs))
        if self.config.workers > 1:
            with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
                results = list(pool.map(work, items))
        else:
            results = [work(item) for item in items]
        return [state for state, _ in results], [message for _, message in results]

    def _train_oracle(self, data: SimulationData, num_labels: int) -> Classifier:
        features = data.encoder.transform(np.vstack([shard.features for shard in data.shards]))
        labels = np.concatenate([shard.labels for shard in data.shards])
        return train_classifier(
            features, labels, self.config.epochs, self.config.learning_rate, self._streams["oracle"], num_labels
        )

    def run_feddistr(self) -> RunMetrics:
        """One-round protocol: uploads, alignment, broadcast, regeneration and local training."""
        cfg = self.config
        started = time.perf_counter()
        data = self.build_data()
        num_labels = data.spec.num_labels
        test_features = data.encoder.transform(data.test[0])
        test_labels = data.test[1]

        client_cfg = ClientConfig(
            encoder=data.encoder,
            mk_mode=cfg.mk_mode,
            mk_fixed=cfg.mk_fixed,
            clip_bound=cfg.clip_bound,
            noise_sigma=cfg.noise_sigma,
        )
        states, uploads = self._client_states(data, client_cfg)

        alignment = align(uploads, cfg.tau)
        payload = broadcast(alignment)
        counts = budget_counts(alignment.payload_counts, cfg.generation_budget)

        ledger = CommLedger()
        ledger.record_one_shot(uploads, sum(param.v.size + 1 for param in payload), len(data.shards))
        if ledger.rounds != 1:
            raise ProtocolError(f"FedDistr must use exactly one round, ledger shows {ledger.rounds}")

        oracle = self._train_oracle(data, num_labels)
        oracle_accuracy = evaluate(oracle, test_features, test_labels).accuracy

        generation_rngs = self._streams["generation"].spawn(len(data.shards))
        training_rngs = self._streams["downstream"].spawn(len(data.shards))
        outcomes: List[ClientOutcome] = []
        models: List[Classifier] = []
        for shard, state, gen_rng, train_rng in zip(data.shards, states, generation_rngs, training_rngs):
            features, labels = generate(payload, counts, gen_rng, client_cfg.generator)
            model = train_classifier(features, labels, cfg.epochs, cfg.learning_rate, train_rng, num_labels)
            result = evaluate(model, test_features, test_labels)
            outcomes.append(ClientOutcome(
                client_id=shard.client_id,
                n_train=shard.n,
                n_generated=int(labels.size),
                accuracy=result.accuracy,
                mean_loss=result.mean_loss,
                eps_u=utility_loss(model, oracle, test_features, test_labels),
                m_k=state.clustering.m_k,
                inertia=state.clustering.inertia,
            ))
            models.append(model)
            logger.info(f"Client {shard.client_id}: accuracy {result.accuracy:.4f}")

        metrics = self._metrics(data, outcomes, ledger, started)
        metrics.oracle_accuracy = oracle_accuracy
        metrics.tau = alignment.tau
        metrics.payload_size = len(payload)
        logger.info(
            f"FedDistr finished in {metrics.wall_time:.2f}s: mean accuracy {metrics.mean_accuracy:.4f} "
            f"(oracle {oracle_accuracy:.4f})"
        )

        if self.writer is not None:
            self._write_feddistr(metrics, data, states, uploads, alignment, models, oracle)
        return metrics

    def run_fedavg(self, target: Optional[float] = None) -> RunMetrics:
        """FedAvg over the same shards, stopping at the target accuracy."""
        cfg = self.config
        started = time.perf_counter()
        data = self.build_data()
        encoded = [replace(shard, features=data.encoder.transform(shard.features)) for shard in data.shards]
        test = (data.encoder.transform(data.test[0]), data.test[1])

        fedavg_cfg = FedAvgConfig(
            local_epochs=cfg.local_epochs,
            lr=cfg.learning_rate,
            max_rounds=cfg.max_rounds,
            target_accuracy=cfg.target_accuracy if target is None else target,
            workers=cfg.workers,
        )
        result = run_fedavg(encoded, test, data.spec.num_labels, fedavg_cfg, self._streams["fedavg"])
        evaluation = evaluate(result.model, *test)
        outcomes = [
            ClientOutcome(
                client_id=shard.client_id,
                n_train=shard.n,
                n_generated=0,
                accuracy=evaluation.accuracy,
                mean_loss=evaluation.mean_loss,
            )
            for shard in data.shards
        ]

        metrics = self._metrics(data, outcomes, result.ledger, started)
        metrics.rounds_to_target = result.rounds_to_target
        logger.info(f"FedAvg finished in {metrics.wall_time:.2f}s after {result.ledger.rounds} rounds")

        if self.writer is not None:
            self.writer.write_frame("metrics.csv", pd.DataFrame([metrics.to_row()], columns=METRIC_COLUMNS))
            self.writer.write_frame("clients.csv", metrics.clients_frame())
            self.writer.write_frame("ledger.csv", result.ledger.to_frame())
            self.writer.write_frame("fedavg_rounds.csv", result.history_frame())
            self.writer.write_frame("weights.csv", result.model.to_frame())
        return metrics

    def _metrics(self, data: SimulationData, outcomes: List[ClientOutcome], ledger: CommLedger, started: float) -> RunMetrics:
        cfg = self.config
        if len(data.shards) >= 2:
            report = entanglement_report(data.shards)
            realized, average = report.xi_max, report.average
        else:
            realized = average = 0.0
        return RunMetrics(
            mode=cfg.mode,
            seed=cfg.seed,
            clients=outcomes,
            ledger=ledger,
            realized_xi=realized,
            average_xi=average,
            clip_bound=cfg.clip_bound,
            noise_sigma=cfg.noise_sigma,
            epsilon=cfg.epsilon,
            wall_time=time.perf_counter() - started,
            xi_target=cfg.xi_target,
            bases=cfg.bases,
        )

    def _write_feddistr(
        self,
        metrics: RunMetrics,
        data: SimulationData,
        states: Sequence[ClientState],
        uploads: Sequence[UploadMessage],
        alignment: AlignmentResult,
        models: Sequence[Classifier],
        oracle: Classifier,
    ) -> None:
        writer = self.writer
        writer.write_frame("metrics.csv", pd.DataFrame([metrics.to_row()], columns=METRIC_COLUMNS))
        writer.write_frame("clients.csv", metrics.clients_frame())
        writer.write_lines("uploads.txt", [line for message in uploads for line in message.to_records()])
        writer.write_frame("alignment.csv", alignment.to_frame())
        writer.write_frame("ledger.csv", metrics.ledger.to_frame())

        weight_frames = []
        curve_rows = []
        for client_id, model in [(shard.client_id, m) for shard, m in zip(data.shards, models)] + [(-1, oracle)]:
            frame = model.to_frame()
            frame.insert(0, "client_id", client_id)
            weight_frames.append(frame)
            curve_rows.extend(
                {"client_id": client_id, "epoch": epoch + 1, "loss": loss}
                for epoch, loss in enumerate(model.loss_history)
            )
        writer.write_frame("weights.csv", pd.concat(weight_frames, ignore_index=True))
        writer.write_frame("loss_curve.csv", pd.DataFrame(curve_rows, columns=["client_id", "epoch", "loss"]))
        writer.write_frame("embeddings.csv", embeddings_frame(data.shards, states))

    def run_theory(self, theory: TheoryConfig) -> TheoryReport:
        """Monte Carlo validation of the utility bounds plus the coordinate-dominance check."""
        started = time.perf_counter()
        rng = np.random.default_rng(self.config.seed)
        bound_rng, hoeffding_rng, dominance_rng = rng.spawn(3)
        base = BoundSpec(L=theory.L, K=theory.K, m=theory.m, a=theory.a, b=theory.b)

        bounds = bound_sweep(theory.n_values, theory.eps_values, base, theory.xi_values, theory.trials, bound_rng)

        hoeffding_rows = []
        for n in theory.n_values:
            for eps in theory.eps_values:
                result = monte_carlo_hoeffding(theory.trials, n, eps, base, hoeffding_rng.spawn(1)[0])
                hoeffding_rows.append({
                    "n": n, "eps": eps, "bound": result.bound,
                    "empirical": result.empirical, "dominates": int(result.dominates),
                })

        dominance_rows = []
        for k in DOMINANCE_CHECK_K:
            feasible = [xi for xi in theory.xi_values if xi < entanglement_threshold(k)]
            if k == 2:
                feasible.append(0.5)
            for xi in feasible:
                passed = verify_dominance(theory.dominance_instances, k, xi, dominance_rng.spawn(1)[0])
                dominance_rows.append({"K": k, "xi": xi, "instances": theory.dominance_instances, "passed": passed})

        report = TheoryReport(
            bounds=bounds,
            hoeffding=pd.DataFrame(hoeffding_rows),
            dominance=pd.DataFrame(dominance_rows),
            wall_time=time.perf_counter() - started,
        )
        logger.info(
            f"Bound validation finished in {report.wall_time:.2f}s: "
            f"{'all cells dominate' if report.all_dominate else 'some cells fail'}"
        )
        if self.writer is not None:
            self.writer.write_frame("theory.csv", report.bounds)
            self.writer.write_frame("hoeffding.csv", report.hoeffding)
            self.writer.write_frame("dominance_check.csv", report.dominance)
        return report


def embeddings_frame(shards: Sequence[ClientShard], states: Sequence[ClientState]) -> pd.DataFrame:
    """Latent points with client, label, cluster and true base, one row each."""
    frames = []
    for shard, state in zip(shards, states):
        latents = np.stack([point.z for point in state.latents])
        columns: Dict[str, np.ndarray] = {
            "client_id": np.full(len(state.latents), shard.client_id),
            "source_index": np.array([point.source_index for point in state.latents]),
            "label": np.array([point.label for point in state.latents]),
            "cluster": state.clustering.assignments,
            "base_id": shard.base_assignment[[point.source_index for point in state.latents]],
        }
        for j in range(latents.shape[1]):
            columns[f"z_{j}"] = latents[:, j]
        frames.append(pd.DataFrame(columns))
    return pd.concat(frames, ignore_index=True)


def run(config: RunConfig, writer: Optional[ResultsWriter] = None) -> RunMetrics:
    """Seeded end-to-end run of ``config.mode`` (feddistr or fedavg)."""
    return Simulator(config, writer).run()


def _cell_bases(base: RunConfig, clients: int) -> int:
    """m scales with K so bases per client stay constant."""
    if clients == base.clients:
        return base.bases
    return max(clients, round(clients * base.bases / base.clients), base.subclasses_per_label + 1)


def _cell_config(base: RunConfig, xi: float, clients: int, sigma: float, mode: str, seed: int) -> RunConfig:
    return base.with_overrides(
        xi_target=xi,
        clients=clients,
        bases=_cell_bases(base, clients),
        noise_sigma=sigma,
        mode=mode,
        seed=seed,
        workers=1,
    )


def _error_row(
    cell: int, base: RunConfig, xi: float, clients: int, sigma: float, mode: str, seed: int, error: Exception
) -> dict:
    """Error row carrying the cell's own grid coordinates."""
    try:
        epsilon = dp_epsilon(sigma, base.dp_delta)
    except FedDistrError:
        epsilon = None
    row = {column: None for column in SWEEP_COLUMNS}
    row.update({
        "cell": cell,
        "mode": mode,
        "seed": seed,
        "clients": clients,
        "bases": _cell_bases(base, clients),
        "xi_target": xi,
        "clip_bound": base.clip_bound,
        "noise_sigma": sigma,
        "epsilon": epsilon,
        "error": f"{type(error).__name__}: {error}",
    })
    return row


def sweep(base: RunConfig, grid: SweepGrid, writer: Optional[ResultsWriter] = None) -> pd.DataFrame:
    """
    Run every grid cell and collect one metrics row per cell.

    Cells sharing (ξ, K, σ) share a seed and run their modes in order, so a
    FedAvg cell can target the FedDistr accuracy of the same data. Groups run
    concurrently on ``base.workers`` threads; rows are written in cell order.

    Args:
        base: Settings common to every cell
        grid: Sweep axes
        writer: Receives ``sweep.csv`` when given

    Returns:
        DataFrame with SWEEP_COLUMNS, one row per cell
    """
    sigmas = grid.sigma_values or (base.noise_sigma,)
    client_counts = grid.client_values or (base.clients,)
    group_keys = [(xi, k, sigma) for xi in grid.xi_values for k in client_counts for sigma in sigmas]
    group_seeds = [
        int(child.generate_state(1)[0])
        for child in np.random.SeedSequence(base.seed).spawn(len(group_keys))
    ]
    modes = sorted(grid.modes, key=lambda mode: mode != "feddistr")
    rows: Dict[int, dict] = {}

    def run_group(index: int) -> List[Tuple[int, dict]]:
        xi, k, sigma = group_keys[index]
        group_rows = []
        feddistr_accuracy = None
        for offset, mode in enumerate(modes):
            cell = index * len(modes) + offset
            try:
                config = _cell_config(base, xi, k, sigma, mode, group_seeds[index])
            except FedDistrError as e:
                logger.error(f"Sweep cell {cell} has invalid settings: {e}")
                group_rows.append((cell, _error_row(cell, base, xi, k, sigma, mode, group_seeds[index], e)))
                continue
            target = feddistr_accuracy if mode == "fedavg" else None
            try:
                metrics = Simulator(config).run(fedavg_target=target)
                row = {"cell": cell, **metrics.to_row(), "fedavg_target": target, "error": None}
                if mode == "feddistr":
                    feddistr_accuracy = metrics.mean_accuracy
            except Exception as e:
                logger.error(f"Sweep cell {cell} ({mode}, xi={xi}, K={k}, sigma={sigma}) failed: {e}")
                row = _error_row(cell, base, xi, k, sigma, mode, group_seeds[index], e)
            group_rows.append((cell, row))
            logger.info(f"Sweep cell {cell + 1}/{grid.size} done ({mode}, xi={xi}, K={k}, sigma={sigma})")
        return group_rows

    logger.info(f"Sweeping {grid.size} cells on {base.workers} worker(s)")
    if base.workers > 1:
        with ThreadPoolExecutor(max_workers=base.workers) as pool:
            results = list(pool.map(run_group, range(len(group_keys))))
    else:
        results = [run_group(index) for index in range(len(group_keys))]

    for group_rows in results:
        for cell, row in group_rows:
            rows[cell] = row
            if writer is not None:
                writer.add_row(cell, row)

    frame = pd.DataFrame([rows[cell] for cell in sorted(rows)], columns=SWEEP_COLUMNS)
    if writer is not None:
        writer.flush_rows("sweep.csv", columns=SWEEP_COLUMNS)
    return frame
