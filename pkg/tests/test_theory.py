"""Tests for the utility-loss bounds."""

import math
from unittest.mock import patch

import numpy as np
import pytest

from feddistr.core.theory import (
    BoundSpec,
    MonteCarloResult,
    bound_sweep,
    dominance_check,
    entangled_bound,
    entanglement_threshold,
    hoeffding_tail,
    monte_carlo_hoeffding,
    monte_carlo_utility,
    sample_dominance_instance,
    utility_bound,
    verify_dominance,
)
from feddistr.exceptions import BoundViolationError, ConfigurationError, InputError


class TestClosedForms:
    """Test cases for the analytic bounds."""

    def test_hoeffding_value(self):
        """Test n=200, ε=0.1 on [0, 1]."""
        assert hoeffding_tail(200, 0.1, 0.0, 1.0) == pytest.approx(math.exp(-4))

    def test_hoeffding_invalid_interval(self):
        """Test that a ≥ b is rejected."""
        with pytest.raises(InputError):
            hoeffding_tail(10, 0.1, 1.0, 1.0)

    def test_utility_bound_value(self):
        """Test n=1000, ε=0.1, L=1."""
        assert utility_bound(1000, 0.1, 1.0) == pytest.approx(1 - math.exp(-5))

    def test_utility_bound_monotone_in_n(self):
        """Test that more data never loosens the bound."""
        values = [utility_bound(n, 0.1, 1.0) for n in (10, 100, 1000, 10000)]
        assert values == sorted(values)
        assert all(0.0 <= value <= 1.0 for value in values)

    def test_threshold_k5(self):
        """Test that K=5 gives 1/16."""
        assert entanglement_threshold(5) == 0.0625

    def test_entangled_reduces_to_disentangled(self):
        """Test that ξ=0 with m=1 equals the disentangled bound."""
        assert entangled_bound(1000, 0.1, 1.0, 5, 0.0, 1) == pytest.approx(utility_bound(1000, 0.1, 1.0))

    def test_entangled_near_threshold(self):
        """Test that ξ just below the threshold gives a positive but smaller bound."""
        near = entangled_bound(1000, 0.1, 1.0, 5, 0.0624, 10)
        assert 0.0 < near < entangled_bound(1000, 0.1, 1.0, 5, 0.0, 10)

    def test_entangled_infeasible(self):
        """Test that ξ at or above the threshold yields None."""
        assert entangled_bound(1000, 0.1, 1.0, 5, 0.0625, 10) is None
        assert entangled_bound(1000, 0.1, 1.0, 5, 0.5, 10) is None

    def test_invalid_arguments(self):
        """Test the input checks of the bounds."""
        with pytest.raises(InputError):
            utility_bound(0, 0.1, 1.0)
        with pytest.raises(InputError):
            entangled_bound(100, 0.1, 1.0, 5, 0.0, 0)
        with pytest.raises(InputError):
            entanglement_threshold(1)
        with pytest.raises(InputError):
            BoundSpec(a=1.0, b=0.0)


class TestDominanceCheck:
    """Test cases for the coordinate-dominance verifier."""

    @pytest.mark.parametrize("k,xi", [(2, 0.0), (2, 0.5), (3, 0.1), (5, 0.05)])
    def test_random_instances_pass(self, k, xi):
        """Test 500 random valid instances per (K, ξ)."""
        rng = np.random.default_rng(k * 100 + int(xi * 100))
        assert verify_dominance(500, k, xi, rng) == 500

    def test_circle_family_is_valid(self):
        """Test that the K=2 circle family meets every precondition."""
        rng = np.random.default_rng(3)
        for _ in range(50):
            vectors = sample_dominance_instance(2, 0.5, rng)
            assert np.allclose(np.linalg.norm(vectors, axis=1), 1.0)
            assert np.allclose(vectors.sum(axis=0), 1.0)
            assert dominance_check(vectors, 0.5)

    def test_perturbed_instance_rejected(self):
        """Test that breaking a precondition is an input error, not a failed check."""
        vectors = np.eye(3)
        vectors[0, 0] = 0.9
        with pytest.raises(InputError):
            dominance_check(vectors, 0.1)

    def test_negative_entries_rejected(self):
        """Test the nonnegativity precondition."""
        with pytest.raises(InputError, match="nonnegative"):
            dominance_check(np.array([[1.0, -0.5], [0.0, 1.5]]), 0.1)

    def test_xi_above_threshold_rejected(self):
        """Test that ξ ≥ 1/(K-1)² is a precondition failure."""
        with pytest.raises(InputError):
            dominance_check(np.eye(3), 0.25)


class TestMonteCarlo:
    """Test cases for the Monte Carlo validation."""

    def test_result_slack(self):
        """Test the binomial slack and both comparison directions."""
        lower = MonteCarloResult(empirical=0.9, bound=0.95, trials=400)
        assert lower.slack == pytest.approx(0.1)
        assert lower.dominates
        upper = MonteCarloResult(empirical=0.3, bound=0.1, trials=400, lower=False)
        assert not upper.dominates

    def test_large_n_dominates(self):
        """Test n=10⁴, ε=0.2 at 100 trials."""
        result = monte_carlo_utility(100, 10_000, 0.2, BoundSpec(), np.random.default_rng(0))
        assert result.empirical == 1.0
        assert result.dominates

    def test_strict_passes_when_bound_holds(self):
        """Test that strict mode returns normally on a dominating cell."""
        result = monte_carlo_utility(100, 10_000, 0.2, BoundSpec(), np.random.default_rng(0), strict=True)
        assert result.dominates

    def test_strict_raises_on_violation(self):
        """Test that strict mode raises when the frequency misses the bound."""
        with patch("feddistr.core.theory.utility_bound", return_value=1.0):
            with pytest.raises(BoundViolationError, match="below bound"):
                monte_carlo_utility(100, 1, 1e-4, BoundSpec(), np.random.default_rng(0), strict=True)

    def test_lenient_mode_only_reports(self):
        """Test that the default mode returns the failing comparison."""
        with patch("feddistr.core.theory.utility_bound", return_value=1.0):
            result = monte_carlo_utility(100, 1, 1e-4, BoundSpec(), np.random.default_rng(0))
        assert not result.dominates

    def test_eps_beyond_interval(self):
        """Test that ε larger than b - a is always met."""
        result = monte_carlo_utility(100, 5, 1.5, BoundSpec(), np.random.default_rng(1))
        assert result.empirical == 1.0

    def test_too_few_trials(self):
        """Test that fewer than 100 trials is a configuration error."""
        with pytest.raises(ConfigurationError, match="at least 100"):
            monte_carlo_utility(99, 100, 0.1, BoundSpec(), np.random.default_rng(0))

    def test_reproducible(self):
        """Test that one seed gives one frequency."""
        first = monte_carlo_utility(200, 20, 0.05, BoundSpec(), np.random.default_rng(9))
        second = monte_carlo_utility(200, 20, 0.05, BoundSpec(), np.random.default_rng(9))
        assert first.empirical == second.empirical

    def test_hoeffding_tail_dominates(self):
        """Test that the empirical tail stays under the Hoeffding bound."""
        result = monte_carlo_hoeffding(500, 50, 0.1, BoundSpec(), np.random.default_rng(2))
        assert not result.lower
        assert result.dominates

    def test_bound_sweep_layout(self):
        """Test the bound table shape and its ξ-dependent column."""
        frame = bound_sweep([100, 1000], [0.1, 0.2], BoundSpec(), [0.0, 0.1], 100, np.random.default_rng(4))
        assert list(frame.columns) == [
            "n", "eps", "L", "K", "xi", "m", "bound", "entangled_bound", "empirical", "dominates",
        ]
        assert len(frame) == 8
        assert frame["dominates"].all()
        assert frame.loc[frame["xi"] == 0.1, "entangled_bound"].isna().all()
