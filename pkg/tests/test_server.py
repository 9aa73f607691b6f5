"""Tests for server-side alignment."""

import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from feddistr.core.client import ClientConfig, client_upload
from feddistr.core.generator import GaussianGenerator
from feddistr.core.server import align, broadcast, default_tau, pairwise_cost
from feddistr.exceptions import InputError
from tests.helpers import make_param, make_upload


def _upload_all(shards, seed=0):
    rng = np.random.default_rng(seed)
    cfg = ClientConfig(mk_mode="oracle")
    return [client_upload(shard, cfg, child) for shard, child in zip(shards, rng.spawn(len(shards)))]


def _covered_keys(result):
    keys = [param.key for group in result.groups for param in group.members]
    return keys


class TestPairwiseCost:
    """Test cases for the cost matrix."""

    def test_euclidean_distance(self):
        """Test a 3-4-5 pair."""
        assert pairwise_cost([make_param([0, 0])], [make_param([3, 4])]).tolist() == [[5.0]]

    def test_label_mismatch_forbidden(self):
        """Test that different labels cost +inf."""
        cost = pairwise_cost([make_param([0, 0], label=0)], [make_param([0, 0], label=1)])
        assert np.isinf(cost[0, 0])

    def test_dimension_mismatch(self):
        """Test that vectors of different length are rejected."""
        with pytest.raises(InputError):
            pairwise_cost([make_param([0, 0])], [make_param([0, 0, 0, 0])])

    def test_empty_side(self):
        """Test that an empty list is rejected."""
        with pytest.raises(InputError):
            pairwise_cost([], [make_param([0, 0])])


class TestAlign:
    """Test cases for parallel / orthogonal alignment."""

    def test_disjoint_labels_stay_orthogonal(self):
        """Test that clients sharing no label produce no parallel group."""
        uploads = [
            make_upload(0, [make_param([0, 0], label=0, owner=0)]),
            make_upload(1, [make_param([0, 0], label=1, owner=1)]),
        ]
        result = align(uploads, tau=10.0)
        assert result.parallel_groups == []
        assert sorted(result.orthogonal) == [(0, 0), (1, 0)]
        assert len(result.payload) == 2

    def test_identical_clients_fully_parallel(self):
        """Test that identical uploads give a payload of m_1 dominants."""
        vectors = [[0, 0], [20, 0], [0, 20]]
        uploads = [
            make_upload(k, [make_param(v, owner=k, local_index=i) for i, v in enumerate(vectors)])
            for k in range(3)
        ]
        result = align(uploads)
        assert len(result.parallel) == 3
        assert result.orthogonal == []
        assert len(result.payload) == 3
        assert sorted(len(keys) for keys in result.parallel_groups) == [3, 3, 3]

    def test_dominant_has_largest_count(self):
        """Test counts 10/50/20 with two orthogonal parameters per client."""
        uploads = []
        near = [[0.0, 0.0], [0.1, 0.0], [0.0, 0.1]]
        for k, count in enumerate([10, 50, 20]):
            params = [make_param(near[k], count=count, owner=k, local_index=0)]
            far = 100.0 * (k + 1)
            params.append(make_param([far, 0.0], owner=k, local_index=1))
            params.append(make_param([0.0, far], owner=k, local_index=2))
            uploads.append(make_upload(k, params))

        result = align(uploads, tau=1.0)
        assert result.parallel_groups == [{(0, 0), (1, 0), (2, 0)}]
        assert result.dominants == [(1, 0)]
        assert len(result.payload) == 1 + 6
        assert result.payload[0].key == (1, 0)
        assert result.payload_counts[0] == 80

    def test_dominant_tie_breaks_on_lowest_client(self):
        """Test that equal counts keep the lowest client id."""
        uploads = [make_upload(k, [make_param([0.0, 0.0], count=5, owner=k)]) for k in (2, 0, 1)]
        result = align(uploads, tau=1.0)
        assert result.dominants == [(0, 0)]

    def test_partition_covers_every_parameter(self, disjoint_shards, overlapping_shards):
        """Test that each uploaded parameter lands in exactly one group."""
        for shards in (disjoint_shards, overlapping_shards):
            uploads = _upload_all(shards)
            result = align(uploads)
            keys = _covered_keys(result)
            expected = [param.key for message in uploads for param in message.params]
            assert sorted(keys) == sorted(expected)
            assert len(set(keys)) == len(keys)
            assert len(result.parallel) + len(result.orthogonal) == len(result.payload)

    def test_invariant_to_local_order(self):
        """Test that reordering parameters inside an upload keeps the groups."""
        vectors = [[0, 0], [30, 0], [0, 30], [30, 30]]
        params = {
            k: [make_param(np.array(v) + 0.1 * k, owner=k, local_index=i) for i, v in enumerate(vectors)]
            for k in range(3)
        }
        forward = align([make_upload(k, params[k]) for k in range(3)])
        backward = align([make_upload(k, params[k][::-1]) for k in range(3)], tau=forward.tau)
        assert sorted(map(sorted, forward.parallel_groups)) == sorted(map(sorted, backward.parallel_groups))

    def test_default_tau(self):
        """Test half the median label-compatible distance, and 0 without pairs."""
        params = [make_param([0, 0]), make_param([2, 0]), make_param([6, 0]), make_param([0, 0], label=1)]
        assert default_tau(params) == pytest.approx(0.5 * 4.0)
        assert default_tau([make_param([0, 0], label=0), make_param([0, 0], label=1)]) == 0.0

    def test_empty_uploads(self):
        """Test that aligning nothing is an input error."""
        with pytest.raises(InputError):
            align([])

    def test_broadcast_is_payload(self):
        """Test that the downlink is exactly the payload."""
        uploads = [make_upload(k, [make_param([k, 0], owner=k)]) for k in range(2)]
        result = align(uploads, tau=5.0)
        assert [param.key for param in broadcast(result)] == [param.key for param in result.payload]

    def test_alignment_frame(self):
        """Test the alignment export."""
        uploads = [make_upload(k, [make_param([0.0, 0.1 * k], owner=k)]) for k in range(2)]
        frame = align(uploads, tau=1.0).to_frame()
        assert frame["dominant"].sum() == 1
        assert set(frame["parallel"]) == {1}


class TestAlignmentOnMixtures:
    """End-to-end alignment on sampled shards."""

    def test_disentangled_gives_only_orthogonal(self, disjoint_shards, small_spec):
        """Test that ξ = 0 gives m orthogonal groups."""
        result = align(_upload_all(disjoint_shards))
        assert result.parallel == []
        assert len(result.orthogonal) == small_spec.m

    def test_overlap_recovers_bases(self, overlapping_shards, small_spec):
        """Test that shared bases form m parallel groups matching the truth."""
        result = align(_upload_all(overlapping_shards))
        assert len(result.parallel) == small_spec.m
        assert result.orthogonal == []

        means = np.stack([base.mean for base in small_spec.bases])
        group_ids, base_ids = [], []
        for group_id, group in enumerate(result.groups):
            for param in group.members:
                mean, _ = GaussianGenerator.decode(param.v)
                group_ids.append(group_id)
                base_ids.append(int(np.argmin(np.linalg.norm(means - mean, axis=1))))
        assert adjusted_rand_score(base_ids, group_ids) == 1.0
