"""
Run configuration loaded from YAML.

Keys may sit at the top level or inside sections (params, keys, protocol,
network, experiment, output); sections are flattened on load. Command-line
flags override file values, and the PQ_SEED environment variable overrides
both for the seed.
"""

import logging
import os
from dataclasses import asdict, dataclass, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import numpy as np
import yaml

from src.ntcf_rlwe import Params, build_params
from src.random_oracle import DEFAULT_HASH, OracleMode, RandomOracle
from src.ring_core import ProtocolError


logger = logging.getLogger(__name__)

SEED_ENV = "PQ_SEED"
_ALIASES = {"lambda": "lam"}


class ConfigurationError(ProtocolError):
    """Strategy, oracle or file settings do not fit together."""
    pass


class Strategy(str, Enum):
    """Prover strategies a run can select; prover_sim implements them."""

    HONEST = "honest"
    RANDOM_GUESS = "random_guess"
    HALF_CLAW = "half_claw"
    TRAPDOOR_CHEAT = "trapdoor_cheat"

    @property
    def needs_trapdoor(self) -> bool:
        return self in (Strategy.HONEST, Strategy.TRAPDOOR_CHEAT)

    @classmethod
    def parse(cls, name: str) -> "Strategy":
        try:
            return cls(name)
        except ValueError:
            choices = ", ".join(s.value for s in cls)
            raise ConfigurationError(f"Unknown strategy '{name}' (choose from {choices})") from None


@dataclass(frozen=True)
class RunConfig:
    """Every setting a CLI run needs; the seed determines all randomness."""

    n: int = 64
    m_bar: int = 3
    B_V: int = 1
    lam: int = 120
    C_T: int = 8
    params_file: Optional[str] = None
    public_key: str = "results/key.pub"
    secret_key: str = "results/key.sec"
    oracle_mode: str = OracleMode.DETERMINISTIC.value
    hash_name: str = DEFAULT_HASH
    strategy: str = Strategy.HONEST.value
    variant: int = 1
    trials: int = 100
    host: str = "127.0.0.1"
    port: int = 7878
    timeout: float = 30.0
    seed: int = 0
    output_dir: str = "results"
    csv: bool = False

    def __post_init__(self):
        Strategy.parse(self.strategy)
        try:
            OracleMode(self.oracle_mode)
        except ValueError:
            raise ConfigurationError(f"Unknown oracle mode '{self.oracle_mode}'") from None
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if not 0 <= self.port < 65536:
            raise ConfigurationError(f"port out of range: {self.port}")
        if self.timeout <= 0:
            raise ConfigurationError("timeout must be positive")

    def params(self) -> Params:
        """Params from params_file when set, else built from (n, m_bar, B_V, lambda, C_T)."""
        if self.params_file:
            return load_params(self.params_file)
        return build_params(self.n, self.m_bar, self.B_V, self.lam, self.C_T)

    def generator(self, stream: int = 0) -> np.random.Generator:
        """Independent replayable generator for one named use of the seed."""
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(stream,)))

    def network_oracle(self) -> RandomOracle:
        """Oracle for TCP sessions; both ends must evaluate the same H."""
        if OracleMode(self.oracle_mode) is not OracleMode.DETERMINISTIC:
            raise ConfigurationError("Network sessions need the deterministic oracle")
        return RandomOracle.deterministic(self.hash_name)

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        """Copy with every non-None override applied."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _flatten(raw: Mapping[str, Any]) -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in raw.items():
        if isinstance(value, Mapping):
            flat.update(_flatten(value))
        else:
            flat[_ALIASES.get(key, key)] = value
    return flat


def config_from_mapping(raw: Optional[Mapping[str, Any]]) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    flat = _flatten(raw or {})
    unknown = sorted(set(flat) - known)
    if unknown:
        raise ConfigurationError(f"Unknown configuration keys: {', '.join(unknown)}")
    try:
        return RunConfig(**flat)
    except TypeError as e:
        raise ConfigurationError(str(e)) from e


def apply_seed_env(config: RunConfig, environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    """PQ_SEED (decimal 64-bit) overrides any configured seed."""
    environ = os.environ if environ is None else environ
    value = environ.get(SEED_ENV)
    if value is None:
        return config
    try:
        seed = int(value, 10)
    except ValueError:
        raise ConfigurationError(f"{SEED_ENV} must be a decimal integer, got '{value}'") from None
    logger.info("Seed %d taken from %s", seed, SEED_ENV)
    return replace(config, seed=seed)


def load_config(path: Optional[str] = None, environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Load a YAML config (defaults when path is None) and apply PQ_SEED.

    Raises:
        ConfigurationError: Unreadable YAML, unknown keys, or invalid values
    """
    raw: Dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "r") as file:
                raw = yaml.safe_load(file) or {}
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Error parsing configuration file {path}: {e}") from e
        if not isinstance(raw, Mapping):
            raise ConfigurationError(f"Configuration file {path} must hold a mapping")
    return apply_seed_env(config_from_mapping(raw), environ)


def save_params(params: Params, path: Path) -> Path:
    """Write params (plus derived q, m, w and the Hellinger bound) as YAML."""
    path = Path(path)
    with open(path, "w") as file:
        yaml.safe_dump({"params": params.summary()}, file, sort_keys=False)
    return path


def load_params(path: Path) -> Params:
    """Read a params file written by save_params and validate it."""
    try:
        with open(path, "r") as file:
            raw = yaml.safe_load(file) or {}
    except yaml.YAMLError as e:
        raise ConfigurationError(f"Error parsing params file {path}: {e}") from e
    section = raw.get("params", raw) if isinstance(raw, Mapping) else None
    if not isinstance(section, Mapping):
        raise ConfigurationError(f"Params file {path} must hold a mapping")
    try:
        values = {name: int(section[_key_name(name)]) for name in ("n", "k_g", "m_bar", "B_V", "B_P", "C_T", "lam")}
        return Params(**values).validate()
    except KeyError as e:
        raise ConfigurationError(f"Params file {path} lacks {e}") from e
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"Params file {path} is invalid: {e}") from e


def _key_name(name: str) -> str:
    return "lambda" if name == "lam" else name
