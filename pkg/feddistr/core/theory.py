"""Utility-loss probability bounds and their Monte Carlo validation."""

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid
from scipy.stats import truncnorm

from ..exceptions import BoundViolationError, ConfigurationError, InputError
from ..utils.logging_config import get_logger

logger = get_logger(__name__)

DOMINANCE_TOLERANCE = 1e-6
GRID_POINTS = 4001


@dataclass
class BoundSpec:
    """
    Parameters shared by the bounds.

    The truncated normal lives on [a, b] with location ``mu`` and scale
    ``sigma``; both default to the interval midpoint and a quarter width.
    """

    n: int = 1000
    eps: float = 0.1
    L: float = 1.0
    K: int = 5
    xi: float = 0.0
    m: int = 10
    a: float = 0.0
    b: float = 1.0
    mu: Optional[float] = None
    sigma: Optional[float] = None

    def __post_init__(self):
        if self.eps <= 0 or self.L <= 0:
            raise InputError(f"eps and L must be positive (got eps={self.eps}, L={self.L})")
        if not self.a < self.b:
            raise InputError(f"Truncation interval needs a < b, got [{self.a}, {self.b}]")
        if self.xi < 0:
            raise InputError(f"xi must be nonnegative, got {self.xi}")
        if self.mu is None:
            self.mu = 0.5 * (self.a + self.b)
        if self.sigma is None:
            self.sigma = 0.25 * (self.b - self.a)


@dataclass
class MonteCarloResult:
    """Empirical frequency against an analytic bound.

    ``lower`` marks the bound as a lower bound on a success probability
    (utility bounds); otherwise it is an upper bound on a tail probability.
    """

    empirical: float
    bound: float
    trials: int
    lower: bool = True

    @property
    def slack(self) -> float:
        return 2.0 / math.sqrt(self.trials)

    @property
    def dominates(self) -> bool:
        if self.lower:
            return self.empirical >= self.bound - self.slack
        return self.empirical <= self.bound + self.slack


def _clamp(p: float) -> float:
    return min(1.0, max(0.0, p))


def hoeffding_tail(n: int, eps: float, a: float, b: float) -> float:
    """
    One-sided Hoeffding tail exp(-2nε²/(b-a)²) for variables bounded in [a, b].
    """
    if n < 1:
        raise InputError(f"n must be at least 1, got {n}")
    if eps <= 0:
        raise InputError(f"eps must be positive, got {eps}")
    if not b > a:
        raise InputError(f"Invalid interval [{a}, {b}]")
    return _clamp(math.exp(-2.0 * n * eps ** 2 / (b - a) ** 2))


def utility_bound(n_min: int, eps: float, L: float) -> float:
    """Disentangled case: Pr(ε_u ≤ ε) ≥ 1 - exp(-n_min ε² / (2L²))."""
    if n_min < 1 or eps <= 0 or L <= 0:
        raise InputError(f"Need n_min >= 1, eps > 0, L > 0 (got {n_min}, {eps}, {L})")
    return _clamp(1.0 - math.exp(-n_min * eps ** 2 / (2.0 * L ** 2)))


def entanglement_threshold(K: int) -> float:
    """Near-disentangled feasibility limit 1/(K-1)²."""
    if K < 2:
        raise InputError(f"K must be at least 2, got {K}")
    return 1.0 / (K - 1) ** 2


def entangled_bound(n: int, eps: float, L: float, K: int, xi: float, m: int) -> Optional[float]:
    """
    Near-disentangled case: 1 - exp(-(1-(K-1)√ξ) n ε² / (2mL²)).

    Returns:
        The bound, or None when ξ ≥ 1/(K-1)² (infeasible)
    """
    if m < 1:
        raise InputError(f"m must be at least 1, got {m}")
    if n < 1 or eps <= 0 or L <= 0 or xi < 0:
        raise InputError(f"Need n >= 1, eps > 0, L > 0, xi >= 0 (got {n}, {eps}, {L}, {xi})")
    if xi >= entanglement_threshold(K):
        return None
    effective = (1.0 - (K - 1) * math.sqrt(xi)) * n
    return _clamp(1.0 - math.exp(-effective * eps ** 2 / (2.0 * m * L ** 2)))


def dominance_check(vectors: np.ndarray, xi: float) -> bool:
    """
    Verify that every coordinate's largest entry is at least 1 - (K-1)√ξ.

    Args:
        vectors: Array of shape (K, m); nonnegative unit rows whose columns sum to 1
        xi: Bound on pairwise inner products, below 1/(K-1)²

    Returns:
        Whether the conclusion holds (always True on valid inputs)

    Raises:
        InputError: If any precondition fails
    """
    vectors = np.asarray(vectors, dtype=float)
    if vectors.ndim != 2 or vectors.shape[0] < 2:
        raise InputError(f"Expected K >= 2 vectors as rows, got shape {vectors.shape}")
    k = vectors.shape[0]
    if np.any(vectors < -DOMINANCE_TOLERANCE):
        raise InputError("Vectors must be nonnegative")
    if np.any(np.abs(np.linalg.norm(vectors, axis=1) - 1.0) > DOMINANCE_TOLERANCE):
        raise InputError("Vectors must have unit norm")
    if np.any(np.abs(vectors.sum(axis=0) - 1.0) > DOMINANCE_TOLERANCE):
        raise InputError("Entries must sum to 1 across vectors at every coordinate")
    if xi >= entanglement_threshold(k):
        raise InputError(f"xi={xi} is not below 1/(K-1)^2 = {entanglement_threshold(k)}")
    gram = vectors @ vectors.T
    if np.any(gram[~np.eye(k, dtype=bool)] > xi + DOMINANCE_TOLERANCE):
        raise InputError(f"Some pairwise inner product exceeds xi={xi}")

    floor = 1.0 - (k - 1) * math.sqrt(xi)
    return bool(np.all(vectors.max(axis=0) >= floor - DOMINANCE_TOLERANCE))


def sample_dominance_instance(K: int, xi: float, rng: np.random.Generator) -> np.ndarray:
    """
    Draw a random instance satisfying the dominance_check preconditions.

    The constraints force m ≤ K + K(K-1)ξ. Permutation matrices are valid for
    any ξ ≥ 0; for K = 2 and ξ ≥ 0.5 the three-coordinate circle family
    (entries summing to 1.5 with unit norm, inner product 0.5) is used.
    """
    if K < 2:
        raise InputError(f"K must be at least 2, got {K}")
    if K == 2 and xi >= 0.5 and rng.random() < 0.5:
        center = np.full(3, 0.5)
        basis = np.array([[1.0, -1.0, 0.0], [1.0, 1.0, -2.0]])
        basis /= np.linalg.norm(basis, axis=1, keepdims=True)
        angle = rng.uniform(0.0, 2.0 * math.pi)
        first = center + 0.5 * (math.cos(angle) * basis[0] + math.sin(angle) * basis[1])
        return np.stack([first, 1.0 - first])
    return np.eye(K)[rng.permutation(K)]


def _excess_loss_table(spec: BoundSpec):
    """Grid and excess absolute-loss risk 2∫_median^ω (F(z) - ½) dz of the truncated normal."""
    alpha = (spec.a - spec.mu) / spec.sigma
    beta = (spec.b - spec.mu) / spec.sigma
    dist = truncnorm(alpha, beta, loc=spec.mu, scale=spec.sigma)
    grid = np.linspace(spec.a, spec.b, GRID_POINTS)
    integral = cumulative_trapezoid(2.0 * (dist.cdf(grid) - 0.5), grid, initial=0.0)
    median = float(dist.median())
    return dist, grid, integral - np.interp(median, grid, integral)


def monte_carlo_utility(
    trials: int,
    n: int,
    eps: float,
    bound_cfg: BoundSpec,
    rng: np.random.Generator,
    strict: bool = False,
) -> MonteCarloResult:
    """
    Estimate Pr(ε_u ≤ ε) for mean estimation under the loss f(ω, z) = L|ω - z|.

    Each trial draws n points from the truncated normal on [a, b], plugs in
    the sample mean ω̂ and measures the exact excess risk over the optimum.

    Args:
        trials: Independent trials, at least 100
        n: Sample size per trial
        eps: Utility-loss threshold
        bound_cfg: Loss and distribution settings
        rng: Seeded generator
        strict: Raise instead of warning when empirical < bound - 2/√trials

    Returns:
        MonteCarloResult comparing the frequency with utility_bound(n, ε, L)

    Raises:
        BoundViolationError: In strict mode, if the frequency misses the bound
    """
    if trials < 100:
        raise ConfigurationError(f"Monte Carlo needs at least 100 trials, got {trials}")
    if n < 1:
        raise ConfigurationError(f"n must be at least 1, got {n}")
    dist, grid, excess = _excess_loss_table(bound_cfg)

    hits = 0
    for trial_rng in rng.spawn(trials):
        estimate = float(dist.rvs(size=n, random_state=trial_rng).mean())
        utility = bound_cfg.L * float(np.interp(estimate, grid, excess))
        hits += utility <= eps

    result = MonteCarloResult(empirical=hits / trials, bound=utility_bound(n, eps, bound_cfg.L), trials=trials)
    if not result.dominates:
        message = f"Empirical {result.empirical:.4f} below bound {result.bound:.4f} - {result.slack:.4f} (n={n}, eps={eps})"
        if strict:
            raise BoundViolationError(message)
        logger.warning(message)
    return result


def monte_carlo_hoeffding(trials: int, n: int, eps: float, bound_cfg: BoundSpec, rng: np.random.Generator) -> MonteCarloResult:
    """
    Estimate Pr(X̄ - μ ≥ ε) for the truncated normal and compare with hoeffding_tail.

    The result is an upper-bound comparison: empirical ≤ bound + slack.
    """
    if trials < 100:
        raise ConfigurationError(f"Monte Carlo needs at least 100 trials, got {trials}")
    dist, _, _ = _excess_loss_table(bound_cfg)
    mean = float(dist.mean())
    exceed = sum(
        float(dist.rvs(size=n, random_state=trial_rng).mean()) - mean >= eps
        for trial_rng in rng.spawn(trials)
    )
    bound = hoeffding_tail(n, eps, bound_cfg.a, bound_cfg.b)
    return MonteCarloResult(empirical=exceed / trials, bound=bound, trials=trials, lower=False)


def bound_sweep(
    n_values: Sequence[int],
    eps_values: Sequence[float],
    base: BoundSpec,
    xi_values: Sequence[float],
    trials: int,
    rng: np.random.Generator,
    strict: bool = False,
) -> pd.DataFrame:
    """
    Bound table with columns n, eps, L, K, xi, m, bound, entangled_bound, empirical, dominates.

    The Monte Carlo frequency depends only on (n, eps), so each cell is
    simulated once and shared across ξ rows.
    With ``strict`` the first violating cell raises BoundViolationError.
    """
    rows: List[dict] = []
    for n in n_values:
        for eps in eps_values:
            cell_rng = rng.spawn(1)[0]
            result = monte_carlo_utility(trials, n, eps, base, cell_rng, strict=strict)
            for xi in xi_values:
                rows.append({
                    "n": n,
                    "eps": eps,
                    "L": base.L,
                    "K": base.K,
                    "xi": xi,
                    "m": base.m,
                    "bound": result.bound,
                    "entangled_bound": entangled_bound(n, eps, base.L, base.K, xi, base.m),
                    "empirical": result.empirical,
                    "dominates": int(result.dominates),
                })
            logger.info(f"Bound cell n={n} eps={eps}: empirical {result.empirical:.4f} vs bound {result.bound:.4f}")
    return pd.DataFrame(rows)


def verify_dominance(instances: int, K: int, xi: float, rng: np.random.Generator) -> int:
    """Run dominance_check on random valid instances; returns how many passed."""
    passed = sum(dominance_check(sample_dominance_instance(K, xi, rng), xi) for _ in range(instances))
    if passed != instances:
        logger.warning(f"Coordinate-dominance check failed on {instances - passed}/{instances} instances")
    return passed
