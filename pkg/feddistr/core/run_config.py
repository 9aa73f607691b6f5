"""Validated settings of one simulator run."""

import math
from dataclasses import asdict, dataclass, replace
from typing import Any, Dict, Optional, Tuple

from ..exceptions import ConfigurationError

MODES = ("feddistr", "fedavg", "theory", "sweep")
MK_MODES = ("fixed", "auto", "oracle")


def dp_epsilon(sigma: float, delta: float) -> float:
    """
    Single-release Gaussian-mechanism ε for noise multiplier σ at level δ.

    Returns:
        √(2 ln(1.25/δ)) / σ, or inf when σ = 0
    """
    if not 0 < delta < 1:
        raise ConfigurationError(f"DP_DELTA must lie in (0, 1), got {delta}")
    if sigma < 0:
        raise ConfigurationError(f"NOISE_SIGMA must be nonnegative, got {sigma}")
    if sigma == 0:
        return math.inf
    return math.sqrt(2.0 * math.log(1.25 / delta)) / sigma


@dataclass(frozen=True)
class RunConfig:
    """Immutable run settings; construction fails naming the offending field."""

    seed: int
    mode: str = "feddistr"
    clients: int = 5
    bases: int = 10
    subclasses_per_label: int = 1
    dim: int = 8
    samples_per_client: int = 2000
    test_size: int = 2000
    xi_target: float = 0.0
    mean_spread: float = 1.3
    base_scale: float = 1.0
    min_separation: float = 2.0
    latent_dim: Optional[int] = None
    mk_mode: str = "fixed"
    mk_fixed: int = 1
    clip_bound: float = 50.0
    noise_sigma: float = 0.0
    dp_delta: float = 1e-5
    tau: Optional[float] = None
    epochs: int = 20
    learning_rate: float = 0.1
    generation_budget: int = 20000
    local_epochs: int = 1
    max_rounds: int = 50
    target_accuracy: float = 0.9
    workers: int = 1

    def __post_init__(self):
        if self.seed is None:
            raise ConfigurationError("seed: a seed is mandatory")
        if self.seed < 0:
            raise ConfigurationError(f"seed: must be nonnegative, got {self.seed}")
        if self.mode not in MODES:
            raise ConfigurationError(f"mode: expected one of {', '.join(MODES)}, got {self.mode!r}")
        if self.mk_mode not in MK_MODES:
            raise ConfigurationError(f"mk_mode: expected one of {', '.join(MK_MODES)}, got {self.mk_mode!r}")

        for name in (
            "clients", "bases", "subclasses_per_label", "dim", "samples_per_client", "test_size",
            "mk_fixed", "epochs", "local_epochs", "max_rounds", "workers",
        ):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name}: must be at least 1, got {getattr(self, name)}")
        if self.bases < self.clients:
            raise ConfigurationError(f"bases: need at least one base per client ({self.bases} < {self.clients})")
        if self.bases <= self.subclasses_per_label:
            raise ConfigurationError(
                f"subclasses_per_label: {self.bases} bases in groups of {self.subclasses_per_label} "
                f"give fewer than two labels"
            )
        if self.latent_dim is not None and not 1 <= self.latent_dim <= self.dim:
            raise ConfigurationError(f"latent_dim: must lie in [1, {self.dim}], got {self.latent_dim}")
        if not 0 <= self.xi_target < 1:
            raise ConfigurationError(f"xi_target: must lie in [0, 1), got {self.xi_target}")
        if self.noise_sigma < 0:
            raise ConfigurationError(f"noise_sigma: must be nonnegative, got {self.noise_sigma}")
        if self.tau is not None and self.tau < 0:
            raise ConfigurationError(f"tau: must be nonnegative, got {self.tau}")
        if not 0 < self.dp_delta < 1:
            raise ConfigurationError(f"dp_delta: must lie in (0, 1), got {self.dp_delta}")
        for name in ("clip_bound", "learning_rate", "mean_spread", "base_scale"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name}: must be positive, got {getattr(self, name)}")
        if self.min_separation < 0:
            raise ConfigurationError(f"min_separation: must be nonnegative, got {self.min_separation}")
        if self.generation_budget < 0:
            raise ConfigurationError(f"generation_budget: must be nonnegative, got {self.generation_budget}")
        if not 0 < self.target_accuracy <= 1:
            raise ConfigurationError(f"target_accuracy: must lie in (0, 1], got {self.target_accuracy}")

    @property
    def num_labels(self) -> int:
        return math.ceil(self.bases / self.subclasses_per_label)

    @property
    def effective_latent_dim(self) -> int:
        return self.latent_dim or self.dim

    @property
    def epsilon(self) -> float:
        return dp_epsilon(self.noise_sigma, self.dp_delta)

    def with_overrides(self, **changes: Any) -> "RunConfig":
        """Copy with some fields replaced (validated again)."""
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class SweepGrid:
    """Axes of a sweep; empty optional axes keep the base config's value."""

    xi_values: Tuple[float, ...] = (0.0, 0.003, 0.057)
    modes: Tuple[str, ...] = ("feddistr", "fedavg")
    sigma_values: Tuple[float, ...] = ()
    client_values: Tuple[int, ...] = ()

    def __post_init__(self):
        if not self.xi_values:
            raise ConfigurationError("SWEEP_XI: the sweep grid is empty")
        if not self.modes:
            raise ConfigurationError("SWEEP_MODES: the sweep grid is empty")
        for mode in self.modes:
            if mode not in ("feddistr", "fedavg"):
                raise ConfigurationError(f"SWEEP_MODES: cannot sweep mode {mode!r}")
        if any(sigma < 0 for sigma in self.sigma_values):
            raise ConfigurationError(f"SWEEP_SIGMA: values must be nonnegative, got {self.sigma_values}")
        if any(k < 1 for k in self.client_values):
            raise ConfigurationError(f"SWEEP_CLIENTS: values must be at least 1, got {self.client_values}")

    @property
    def size(self) -> int:
        return (
            len(self.xi_values)
            * len(self.modes)
            * max(1, len(self.sigma_values))
            * max(1, len(self.client_values))
        )


@dataclass(frozen=True)
class TheoryConfig:
    """Grid and distribution settings of the bound validation."""

    trials: int = 1000
    n_values: Tuple[int, ...] = (100, 1000, 10000)
    eps_values: Tuple[float, ...] = (0.05, 0.1, 0.2)
    L: float = 1.0
    a: float = 0.0
    b: float = 1.0
    K: int = 5
    m: int = 10
    xi_values: Tuple[float, ...] = (0.0, 0.003, 0.057)
    dominance_instances: int = 500

    def __post_init__(self):
        if self.trials < 100:
            raise ConfigurationError(f"THEORY_TRIALS: need at least 100 trials, got {self.trials}")
        if not self.n_values or not self.eps_values:
            raise ConfigurationError("THEORY_N / THEORY_EPS: the bound grid is empty")
        if any(n < 1 for n in self.n_values):
            raise ConfigurationError(f"THEORY_N: values must be at least 1, got {self.n_values}")
        if any(eps <= 0 for eps in self.eps_values):
            raise ConfigurationError(f"THEORY_EPS: values must be positive, got {self.eps_values}")
        if self.L <= 0:
            raise ConfigurationError(f"THEORY_L: must be positive, got {self.L}")
        if not self.a < self.b:
            raise ConfigurationError(f"THEORY_A / THEORY_B: need a < b, got [{self.a}, {self.b}]")
        if self.K < 2:
            raise ConfigurationError(f"THEORY_K: must be at least 2, got {self.K}")
