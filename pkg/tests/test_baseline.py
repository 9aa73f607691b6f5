"""Tests for the FedAvg baseline and the communication ledger."""

import numpy as np
import pytest

from feddistr.core.baseline import CommLedger, FedAvgConfig, fedavg_round, run_fedavg
from feddistr.core.downstream import Classifier, sgd_epochs
from feddistr.core.mixture import ClientShard
from feddistr.exceptions import ConfigurationError, InputError
from tests.helpers import make_param, make_upload


def _shard(client_id, features, labels):
    return ClientShard(client_id=client_id, features=np.asarray(features, dtype=float), labels=np.asarray(labels), pi=[1.0])


def _blob_shard(client_id, rng, n=200):
    labels = rng.integers(0, 2, size=n)
    features = np.where(labels[:, None] == 0, -3.0, 3.0) + rng.normal(size=(n, 2))
    return _shard(client_id, features, labels)


class TestFedAvgRound:
    """Test cases for one averaging round."""

    def test_single_client_equals_local_training(self, rng):
        """Test that K = 1 reduces to plain local SGD."""
        shard = _blob_shard(0, rng)
        start = Classifier.zeros(2, 2)
        averaged = fedavg_round(start, [shard], 2, 0.1, np.random.default_rng(5))
        child = np.random.default_rng(5).spawn(1)[0]
        local = sgd_epochs(start, shard.features, shard.labels, 2, 0.1, child)
        assert np.allclose(averaged.weights, local.weights)

    def test_weighted_mean_of_equal_shards(self, rng):
        """Test that equal-size shards average to the entrywise mean."""
        shards = [_blob_shard(k, rng) for k in range(3)]
        start = Classifier.zeros(2, 2)
        averaged = fedavg_round(start, shards, 1, 0.1, np.random.default_rng(9))
        children = np.random.default_rng(9).spawn(3)
        locals_ = [sgd_epochs(start, s.features, s.labels, 1, 0.1, c).weights for s, c in zip(shards, children)]
        assert np.allclose(averaged.weights, np.mean(locals_, axis=0))

    def test_ledger_bills_every_client(self, rng):
        """Test K × weight_count uplink for one round."""
        shards = [_blob_shard(k, rng) for k in range(2)]
        ledger = CommLedger()
        fedavg_round(Classifier.zeros(2, 2), shards, 1, 0.1, rng, ledger)
        assert ledger.uplink_scalars == 2 * 6

    def test_no_clients(self, rng):
        """Test that an empty client list is an input error."""
        with pytest.raises(InputError):
            fedavg_round(Classifier.zeros(2, 2), [], 1, 0.1, rng)

    def test_empty_shard_unrepresentable(self):
        """Test that a client without data cannot join a round."""
        with pytest.raises(InputError, match="at least one point"):
            _shard(1, np.empty((0, 2)), np.empty(0, dtype=int))

    def test_threaded_matches_serial(self, rng):
        """Test that worker threads do not change the result."""
        shards = [_blob_shard(k, rng) for k in range(4)]
        start = Classifier.zeros(2, 2)
        serial = fedavg_round(start, shards, 1, 0.1, np.random.default_rng(3))
        threaded = fedavg_round(start, shards, 1, 0.1, np.random.default_rng(3), workers=4)
        assert np.array_equal(serial.weights, threaded.weights)


class TestRunFedAvg:
    """Test cases for the FedAvg loop."""

    def test_zero_target_reached_in_one_round(self, rng):
        """Test that a target of 0 is met after the first round."""
        shards = [_blob_shard(k, rng) for k in range(2)]
        test = (shards[0].features, shards[0].labels)
        result = run_fedavg(shards, test, 2, FedAvgConfig(target_accuracy=0.0), rng)
        assert result.rounds_to_target == 1
        assert result.ledger.rounds == 1

    def test_ledger_arithmetic(self, rng):
        """Test K × weight_count scalars per round in each direction."""
        shards = [_blob_shard(k, rng) for k in range(3)]
        cfg = FedAvgConfig(max_rounds=4, target_accuracy=1.1)
        result = run_fedavg(shards, (shards[0].features, shards[0].labels), 2, cfg, rng)
        assert result.rounds_to_target is None
        assert result.ledger.rounds == 4
        assert result.ledger.uplink_scalars == 4 * 3 * 6
        assert result.ledger.downlink_scalars == 4 * 3 * 6
        assert list(result.history_frame()["round"]) == [1, 2, 3, 4]

    def test_learns_blobs(self, rng):
        """Test that FedAvg reaches 0.95 on separable blobs."""
        shards = [_blob_shard(k, rng) for k in range(3)]
        test = (shards[0].features, shards[0].labels)
        result = run_fedavg(shards, test, 2, FedAvgConfig(target_accuracy=0.95, max_rounds=20), rng)
        assert result.rounds_to_target is not None

    def test_invalid_config(self):
        """Test the FedAvg settings checks."""
        with pytest.raises(ConfigurationError, match="MAX_ROUNDS"):
            FedAvgConfig(max_rounds=0)
        with pytest.raises(ConfigurationError, match="LOCAL_EPOCHS"):
            FedAvgConfig(local_epochs=0)


class TestCommLedger:
    """Test cases for the ledger."""

    def test_one_shot(self):
        """Test the single-exchange accounting."""
        uploads = [make_upload(k, [make_param([0.0] * 4, owner=k, local_index=i) for i in range(2)]) for k in range(3)]
        ledger = CommLedger()
        ledger.record_one_shot(uploads, payload_scalars=4 * 5, clients=3)
        assert ledger.rounds == 1
        assert ledger.uplink_scalars == 3 * 2 * 5
        assert ledger.downlink_scalars == 3 * 20

    def test_one_shot_only_once(self):
        """Test that a second one-shot exchange is refused."""
        ledger = CommLedger()
        ledger.record_one_shot([], 0, 1)
        with pytest.raises(ConfigurationError):
            ledger.record_one_shot([], 0, 1)

    def test_frame(self):
        """Test the ledger export."""
        ledger = CommLedger()
        ledger.record_round(2, 10)
        assert ledger.to_frame().to_dict(orient="records") == [
            {"rounds": 1, "uplink_scalars": 20, "downlink_scalars": 20}
        ]
