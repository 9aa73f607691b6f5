"""Configuration management for the FedDistr simulator."""

import os
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, TypeVar

from dotenv import dotenv_values

from ..core.run_config import RunConfig, SweepGrid, TheoryConfig
from ..exceptions import ConfigurationError
from .logging_config import get_logger

logger = get_logger(__name__)

T = TypeVar("T")

ENV_PREFIX = "FEDDISTR_"
DEFAULT_CONFIG_FILE = "feddistr.env"

DEFAULTS: Dict[str, Optional[str]] = {
    # [run]
    "MODE": "feddistr",
    "SEED": "0",
    "OUTPUT_DIR": "results",
    "LOG_LEVEL": "INFO",
    "LOG_FILE": None,
    "WORKERS": "1",
    # [mixture]
    "CLIENTS": "5",
    "BASES": "10",
    "SUBCLASSES_PER_LABEL": "1",
    "DIM": "8",
    "SAMPLES_PER_CLIENT": "2000",
    "TEST_SIZE": "2000",
    "XI_TARGET": "0.0",
    "MEAN_SPREAD": "1.3",
    "BASE_SCALE": "1.0",
    "MIN_SEPARATION": "2.0",
    # [client]
    "LATENT_DIM": None,
    "MK_MODE": "fixed",
    "MK_FIXED": "1",
    "CLIP_BOUND": "50.0",
    "NOISE_SIGMA": "0.0",
    "DP_DELTA": "1e-5",
    # [server]
    "TAU": None,
    # [downstream]
    "EPOCHS": "20",
    "LEARNING_RATE": "0.1",
    "GENERATION_BUDGET": "20000",
    # [baseline]
    "LOCAL_EPOCHS": "1",
    "MAX_ROUNDS": "50",
    "TARGET_ACCURACY": "0.9",
    # [sweep]
    "SWEEP_XI": "0,0.003,0.057",
    "SWEEP_MODES": "feddistr,fedavg",
    "SWEEP_SIGMA": None,
    "SWEEP_CLIENTS": None,
    # [theory]
    "THEORY_TRIALS": "1000",
    "THEORY_N": "100,1000,10000",
    "THEORY_EPS": "0.05,0.1,0.2",
    "THEORY_L": "1.0",
    "THEORY_A": "0.0",
    "THEORY_B": "1.0",
    "THEORY_K": "5",
    "THEORY_XI": "0,0.003,0.057",
}


class Config:
    """Flat KEY=value configuration with file, environment and explicit overrides."""

    def __init__(self, config_file: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None):
        """
        Initialize configuration.

        Values are layered: defaults, then the config file, then
        ``FEDDISTR_<KEY>`` environment variables, then ``overrides``.

        Args:
            config_file: Path to a KEY=value file. If None, ``feddistr.env`` in
                the working directory is used when present.
            overrides: Explicit values, typically from CLI flags
        """
        self._values: Dict[str, Optional[str]] = dict(DEFAULTS)
        self._load_file(config_file)
        self._load_environment()
        for key, value in (overrides or {}).items():
            if value is not None:
                self._values[key.upper()] = str(value)

    def _load_file(self, config_file: Optional[str]) -> None:
        if config_file:
            path = Path(config_file)
            if not path.exists():
                raise ConfigurationError(f"Config file not found: {path}")
        else:
            path = Path.cwd() / DEFAULT_CONFIG_FILE
            if not path.exists():
                logger.debug(f"No {DEFAULT_CONFIG_FILE} in {Path.cwd()}; using defaults")
                return

        loaded = dotenv_values(path)
        unknown = sorted(key for key in loaded if key not in DEFAULTS)
        if unknown:
            logger.warning(f"Ignoring unknown config keys in {path}: {', '.join(unknown)}")
        for key, value in loaded.items():
            if key in DEFAULTS:
                self._values[key] = value
        logger.info(f"Loaded configuration from {path}")

    def _load_environment(self) -> None:
        for key in DEFAULTS:
            value = os.getenv(ENV_PREFIX + key)
            if value is not None:
                self._values[key] = value

    def get(self, key: str, default: Optional[str] = None, required: bool = False) -> str:
        """
        Get a raw configuration value.

        Args:
            key: Configuration key
            default: Returned when the key is unset or empty
            required: Whether the value is required

        Returns:
            Configuration value ("" when unset and no default)

        Raises:
            ConfigurationError: If a required value is missing
        """
        value = self._values.get(key)
        if value is None or value == "":
            value = default
        if required and not value:
            raise ConfigurationError(f"Required configuration key '{key}' not set")
        return value or ""

    def _typed(self, key: str, cast: Callable[[str], T]) -> T:
        raw = self.get(key, required=True)
        try:
            return cast(raw)
        except ValueError:
            raise ConfigurationError(f"{key}: cannot parse {raw!r} as {cast.__name__}") from None

    def get_int(self, key: str) -> int:
        return self._typed(key, int)

    def get_float(self, key: str) -> float:
        return self._typed(key, float)

    def get_optional_int(self, key: str) -> Optional[int]:
        return self.get_int(key) if self.get(key) else None

    def get_optional_float(self, key: str) -> Optional[float]:
        return self.get_float(key) if self.get(key) else None

    def get_list(self, key: str, cast: Callable[[str], T] = str) -> List[T]:
        """Comma-separated list; an unset key gives an empty list."""
        raw = self.get(key)
        try:
            return [cast(token.strip()) for token in raw.split(",") if token.strip()]
        except ValueError:
            raise ConfigurationError(f"{key}: cannot parse {raw!r} as a list of {cast.__name__}") from None

    @property
    def mode(self) -> str:
        return self.get("MODE", "feddistr")

    @property
    def seed(self) -> int:
        return self.get_int("SEED")

    @property
    def output_dir(self) -> str:
        return self.get("OUTPUT_DIR", "results")

    @property
    def log_level(self) -> str:
        return self.get("LOG_LEVEL", "INFO").upper()

    @property
    def log_file(self) -> Optional[str]:
        value = self.get("LOG_FILE")
        return value if value else None

    @property
    def workers(self) -> int:
        return self.get_int("WORKERS")

    def to_run_config(self) -> RunConfig:
        """Build the validated RunConfig."""
        return RunConfig(
            seed=self.seed,
            mode=self.mode,
            clients=self.get_int("CLIENTS"),
            bases=self.get_int("BASES"),
            subclasses_per_label=self.get_int("SUBCLASSES_PER_LABEL"),
            dim=self.get_int("DIM"),
            samples_per_client=self.get_int("SAMPLES_PER_CLIENT"),
            test_size=self.get_int("TEST_SIZE"),
            xi_target=self.get_float("XI_TARGET"),
            mean_spread=self.get_float("MEAN_SPREAD"),
            base_scale=self.get_float("BASE_SCALE"),
            min_separation=self.get_float("MIN_SEPARATION"),
            latent_dim=self.get_optional_int("LATENT_DIM"),
            mk_mode=self.get("MK_MODE", "fixed"),
            mk_fixed=self.get_int("MK_FIXED"),
            clip_bound=self.get_float("CLIP_BOUND"),
            noise_sigma=self.get_float("NOISE_SIGMA"),
            dp_delta=self.get_float("DP_DELTA"),
            tau=self.get_optional_float("TAU"),
            epochs=self.get_int("EPOCHS"),
            learning_rate=self.get_float("LEARNING_RATE"),
            generation_budget=self.get_int("GENERATION_BUDGET"),
            local_epochs=self.get_int("LOCAL_EPOCHS"),
            max_rounds=self.get_int("MAX_ROUNDS"),
            target_accuracy=self.get_float("TARGET_ACCURACY"),
            workers=self.workers,
        )

    def to_sweep_grid(self) -> SweepGrid:
        return SweepGrid(
            xi_values=tuple(self.get_list("SWEEP_XI", float)),
            modes=tuple(self.get_list("SWEEP_MODES")),
            sigma_values=tuple(self.get_list("SWEEP_SIGMA", float)),
            client_values=tuple(self.get_list("SWEEP_CLIENTS", int)),
        )

    def to_theory_config(self) -> TheoryConfig:
        return TheoryConfig(
            trials=self.get_int("THEORY_TRIALS"),
            n_values=tuple(self.get_list("THEORY_N", int)),
            eps_values=tuple(self.get_list("THEORY_EPS", float)),
            L=self.get_float("THEORY_L"),
            a=self.get_float("THEORY_A"),
            b=self.get_float("THEORY_B"),
            K=self.get_int("THEORY_K"),
            m=self.get_int("BASES"),
            xi_values=tuple(self.get_list("THEORY_XI", float)),
        )

    def get_all(self) -> Dict[str, Optional[str]]:
        """Get all configuration values as a dictionary."""
        return dict(self._values)
