"""Tests for the mixture module."""

import numpy as np
import pytest

from feddistr.core.mixture import (
    BaseDistribution,
    ClientShard,
    MixtureSpec,
    block_weights,
    entangle_coeff,
    entanglement_from_weights,
    entanglement_report,
    leak_for_xi,
    make_mixture_spec,
    partition_for_xi,
    pooled_spec,
    sample_mixture,
    shards_to_frame,
)
from feddistr.exceptions import ConfigurationError, DomainError, InputError


def _shard(client_id, pi):
    return ClientShard(client_id=client_id, features=np.zeros((1, 1)), labels=np.zeros(1), pi=pi)


class TestEntangleCoeff:
    """Test cases for the entangled coefficient."""

    def test_orthogonal_supports(self):
        """Test that disjoint supports give 0."""
        assert entangle_coeff([1, 0], [0, 1]) == 0.0

    def test_identical_vectors(self):
        """Test that identical vectors give 1."""
        assert entangle_coeff([0.5, 0.5], [0.5, 0.5]) == pytest.approx(1.0)

    def test_hand_evaluated_value(self):
        """Test (0.8,0.2) against (0.2,0.8)."""
        assert entangle_coeff([0.8, 0.2], [0.2, 0.8]) == pytest.approx(0.32 / 0.68)

    def test_symmetry_and_scale_invariance(self, rng):
        """Test symmetry and invariance to positive scaling."""
        for _ in range(50):
            a, b = rng.random(5), rng.random(5)
            assert entangle_coeff(a, b) == pytest.approx(entangle_coeff(b, a))
            assert entangle_coeff(3.7 * a, b) == pytest.approx(entangle_coeff(a, b))
            assert 0.0 <= entangle_coeff(a, b) <= 1.0 + 1e-12

    def test_zero_norm_raises_domain_error(self):
        """Test that a zero vector is rejected."""
        with pytest.raises(DomainError, match="zero-norm"):
            entangle_coeff([0, 0], [1, 0])

    def test_length_mismatch_raises(self):
        """Test that vectors of different length are rejected."""
        with pytest.raises(InputError, match="differ in length"):
            entangle_coeff([1, 0], [1, 0, 0])


class TestEntanglementReport:
    """Test cases for pairwise entanglement reports."""

    def test_disjoint_clients(self):
        """Test that disjoint supports give average and max 0."""
        report = entanglement_report([_shard(0, [1, 0]), _shard(1, [0, 1])])
        assert report.average == 0.0
        assert report.xi_max == 0.0

    def test_identical_clients(self):
        """Test that IID clients give average 1."""
        shards = [_shard(k, [0.25, 0.25, 0.5]) for k in range(4)]
        assert entanglement_report(shards).average == pytest.approx(1.0)

    def test_three_client_average(self):
        """Test the hand-evaluated three-client example."""
        report = entanglement_from_weights([np.array([1, 0, 0]), np.array([0, 1, 0]), np.array([0.6, 0.8, 0])])
        assert report.average == pytest.approx((0 + 0.6 + 0.8) / 3)
        assert report.xi_max == pytest.approx(0.8)

    def test_matrix_symmetric_with_unit_diagonal(self, rng):
        """Test the structure of the pairwise matrix."""
        weights = [w / w.sum() for w in rng.random((5, 6))]
        report = entanglement_from_weights(weights)
        assert np.array_equal(report.pairwise, report.pairwise.T)
        assert np.allclose(np.diag(report.pairwise), 1.0)

    def test_single_client_rejected(self):
        """Test that fewer than two clients is a configuration error."""
        with pytest.raises(ConfigurationError):
            entanglement_from_weights([np.array([1.0])])


class TestMixtureTypes:
    """Test cases for mixture data types."""

    def test_scale_must_be_positive(self):
        """Test that a nonpositive scale is rejected."""
        with pytest.raises(InputError, match="strictly positive"):
            BaseDistribution(id=0, label=0, mean=[0, 0], scale=[1, 0])

    def test_weights_must_sum_to_one(self):
        """Test that global weights are validated."""
        base = BaseDistribution(id=0, label=0, mean=[0], scale=[1])
        with pytest.raises(InputError, match="sums to"):
            MixtureSpec(bases=[base], global_weights=[0.5])

    def test_duplicate_ids_rejected(self):
        """Test that base ids must be unique."""
        bases = [BaseDistribution(id=0, label=0, mean=[0], scale=[1]) for _ in range(2)]
        with pytest.raises(InputError, match="unique"):
            MixtureSpec(bases=bases, global_weights=[0.5, 0.5])

    def test_shard_needs_a_point(self):
        """Test that a client shard with n_k = 0 is rejected."""
        with pytest.raises(InputError, match="at least one point"):
            ClientShard(client_id=2, features=np.zeros((0, 3)), labels=np.zeros(0), pi=[1.0])

    def test_config_text_round_trip(self, small_spec):
        """Test that a mixture survives its text serialization exactly."""
        parsed = MixtureSpec.from_config_text(small_spec.to_config_text())
        assert parsed.m == small_spec.m
        assert np.array_equal(parsed.global_weights, small_spec.global_weights)
        for original, restored in zip(small_spec.bases, parsed.bases):
            assert restored.label == original.label
            assert np.array_equal(restored.mean, original.mean)
            assert np.array_equal(restored.scale, original.scale)

    def test_malformed_config_text(self):
        """Test that missing keys raise a configuration error."""
        with pytest.raises(ConfigurationError, match="Malformed"):
            MixtureSpec.from_config_text("BASES=2\nGLOBAL_WEIGHTS=0.5,0.5\n")


class TestSampling:
    """Test cases for mixture construction and sampling."""

    def test_superclass_labels(self, small_spec):
        """Test that base i carries label i // subclasses_per_label."""
        assert [base.label for base in small_spec.bases] == [0, 0, 1, 1, 2, 2]
        assert small_spec.num_labels == 3

    def test_means_are_separated(self, small_spec):
        """Test the minimum pairwise mean distance."""
        means = np.stack([base.mean for base in small_spec.bases])
        gaps = np.linalg.norm(means[:, None] - means[None, :], axis=2)
        assert gaps[~np.eye(6, dtype=bool)].min() >= 10.0

    def test_impossible_separation(self, rng):
        """Test that unreachable separation is a configuration error."""
        with pytest.raises(ConfigurationError, match="Could not place"):
            make_mixture_spec(20, 1, rng, mean_spread=0.1, min_separation=10.0, max_attempts=5)

    def test_sample_mean(self):
        """Test the law-of-large-numbers check on one base."""
        base = BaseDistribution(id=0, label=0, mean=[0, 0], scale=[1, 1])
        features, labels = sample_mixture(MixtureSpec([base], [1.0]), 10000, np.random.default_rng(0))
        assert np.all(np.abs(features.mean(axis=0)) < 0.05)
        assert np.all(labels == 0)

    def test_zero_samples_rejected(self, small_spec, rng):
        """Test that n = 0 is a configuration error."""
        with pytest.raises(ConfigurationError):
            sample_mixture(small_spec, 0, rng)

    def test_degenerate_weights(self):
        """Test that weights (1, 0) yield only the first base's label."""
        bases = [
            BaseDistribution(id=0, label=0, mean=[0], scale=[1]),
            BaseDistribution(id=1, label=1, mean=[9], scale=[1]),
        ]
        _, labels = sample_mixture(MixtureSpec(bases, [1.0, 0.0]), 500, np.random.default_rng(1))
        assert np.all(labels == 0)

    def test_sampling_is_reproducible(self, small_spec):
        """Test bit-identical draws under one seed."""
        first = sample_mixture(small_spec, 100, np.random.default_rng(5))
        second = sample_mixture(small_spec, 100, np.random.default_rng(5))
        assert np.array_equal(first[0], second[0])
        assert np.array_equal(first[1], second[1])


class TestPartition:
    """Test cases for ξ-targeted partitions."""

    def test_xi_zero_disjoint_blocks(self, rng):
        """Test that ξ = 0 with m=10, K=5 gives each client exactly two bases."""
        spec = make_mixture_spec(10, 8, rng)
        shards = partition_for_xi(10, 5, 0.0, 200, spec, rng)
        for shard in shards:
            assert np.count_nonzero(shard.pi) == 2
            assert set(np.unique(shard.base_assignment)) <= set(np.flatnonzero(shard.pi))
        assert entanglement_report(shards).xi_max == 0.0

    @pytest.mark.parametrize("xi_target", [0.003, 0.057, 0.3])
    def test_realized_xi_within_tolerance(self, rng, xi_target):
        """Test that the realized ξ lands within 0.01 of the target."""
        spec = make_mixture_spec(10, 8, rng)
        shards = partition_for_xi(10, 5, xi_target, 50, spec, rng)
        assert abs(entanglement_report(shards).xi_max - xi_target) <= 0.01

    def test_leak_monotone(self):
        """Test that a larger target needs a larger leak."""
        assert leak_for_xi(10, 5, 0.003) < leak_for_xi(10, 5, 0.057) < leak_for_xi(10, 5, 0.5)

    def test_block_weights_are_probability_vectors(self):
        """Test that every row of the construction sums to 1."""
        weights = block_weights(10, 3, 0.2)
        assert np.allclose(weights.sum(axis=1), 1.0)
        assert np.all(weights >= 0)

    def test_infeasible_partition(self, rng):
        """Test that m < K is a configuration error."""
        spec = make_mixture_spec(3, 2, rng)
        with pytest.raises(ConfigurationError, match="need m >= K"):
            partition_for_xi(3, 5, 0.0, 10, spec, rng)

    def test_partition_is_reproducible(self, small_spec):
        """Test that one seed gives identical shards."""
        first = partition_for_xi(6, 3, 0.057, 100, small_spec, np.random.default_rng(2))
        second = partition_for_xi(6, 3, 0.057, 100, small_spec, np.random.default_rng(2))
        for a, b in zip(first, second):
            assert np.array_equal(a.features, b.features)
            assert np.array_equal(a.base_assignment, b.base_assignment)

    def test_pooled_spec_weights(self, disjoint_shards, small_spec):
        """Test that the pool of equal-size disjoint clients is uniform."""
        pooled = pooled_spec(small_spec, disjoint_shards)
        assert np.allclose(pooled.global_weights, 1.0 / 6)

    def test_shards_to_frame_columns(self, disjoint_shards):
        """Test the CSV export layout."""
        frame = shards_to_frame(disjoint_shards)
        assert list(frame.columns) == ["client_id", "base_id", "label", "x_0", "x_1"]
        assert len(frame) == sum(shard.n for shard in disjoint_shards)
