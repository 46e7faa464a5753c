"""
Configuration for training runs.
Cascade: defaults -> preset -> JSON config file -> explicit overrides.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Optional

from dpl.core.errors import ConfigError
from dpl.core.files import PathLike, load_json_file, save_json_file

logger = logging.getLogger(__name__)

PRESETS: Dict[str, Dict[str, Any]] = {
    "full": {},
    # Desk scale: finishes in minutes on one core.
    "desk": {"steps": 5000, "d": 16, "d_in": 64, "log_interval": 100},
}
SAMPLE_SCHEDULES = ("uniform", "log_frequency")


@dataclass
class RunConfig:
    """Training run configuration with validation and defaults"""

    # Dimensions (None: taken from the dataset)
    d_in: Optional[int] = None
    d: int = 128
    num_classes: Optional[int] = None
    hidden: Optional[int] = None  # variance-net width, defaults to d

    # Objective
    alpha: float = 10.0
    N: int = 20
    R: float = 1.0
    sigma2_floor: float = 1e-3
    detach_prototype_in_sampling: bool = False
    use_match_loss: bool = True
    use_ortho_loss: bool = True
    n_schedule: str = "uniform"
    n_per_class: Optional[List[int]] = None

    # Optimiser
    lr: float = 0.01
    momentum: float = 0.0
    batch_size: int = 3
    steps: int = 60000
    seed: int = 0

    # Reporting
    log_interval: int = 1000
    eval_topk: List[int] = field(default_factory=list)

    def __post_init__(self):
        """Validate configuration after initialization"""
        self._validate_config()

    def _validate_config(self):
        """Validate configuration values"""
        for name in ("d_in", "num_classes", "hidden"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigError(f"Invalid {name}: {value}. Must be >= 1")
        if self.num_classes is not None and self.num_classes < 2:
            raise ConfigError(f"Invalid num_classes: {self.num_classes}. Need at least 2")
        for name in ("d", "N", "batch_size", "log_interval"):
            if getattr(self, name) < 1:
                raise ConfigError(f"Invalid {name}: {getattr(self, name)}. Must be >= 1")
        for name in ("R", "lr"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"Invalid {name}: {getattr(self, name)}. Must be > 0")
        for name in ("alpha", "momentum", "sigma2_floor"):
            if getattr(self, name) < 0:
                raise ConfigError(f"Invalid {name}: {getattr(self, name)}. Must be >= 0")
        if self.steps < 0:
            raise ConfigError(f"Invalid steps: {self.steps}. Must be >= 0")
        if self.seed < 0:
            raise ConfigError(f"Invalid seed: {self.seed}. Must be >= 0")
        if self.n_schedule not in SAMPLE_SCHEDULES:
            raise ConfigError(
                f"Invalid n_schedule: {self.n_schedule}. Must be one of {SAMPLE_SCHEDULES}")
        if self.n_per_class is not None:
            if any(int(k) < 1 for k in self.n_per_class):
                raise ConfigError("Every n_per_class entry must be >= 1")
            if self.num_classes is not None and len(self.n_per_class) != self.num_classes:
                raise ConfigError(
                    f"n_per_class has {len(self.n_per_class)} entries for "
                    f"{self.num_classes} classes")
        if any(int(k) < 1 for k in self.eval_topk):
            raise ConfigError("Every eval_topk entry must be >= 1")

    @classmethod
    def preset(cls, name: str, **overrides) -> "RunConfig":
        if name not in PRESETS:
            raise ConfigError(f"Unknown preset: {name}. Choose from {sorted(PRESETS)}")
        return cls(**{**PRESETS[name], **overrides})

    @property
    def hidden_width(self) -> int:
        return self.d if self.hidden is None else self.hidden

    def with_dataset_dims(self, feature_dim: int, num_classes: int) -> "RunConfig":
        """Fill d_in / num_classes from a dataset, checking explicit values."""
        if self.d_in is not None and self.d_in != feature_dim:
            raise ConfigError(f"Config d_in={self.d_in} but dataset features have {feature_dim}")
        if self.num_classes is not None and num_classes > self.num_classes:
            raise ConfigError(
                f"Dataset has {num_classes} classes, config allows {self.num_classes}")
        return replace(self, d_in=feature_dim,
                       num_classes=self.num_classes if self.num_classes is not None
                       else num_classes)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class ConfigManager:
    """Loads RunConfig with cascade: defaults -> preset -> JSON file -> overrides"""

    def __init__(self, config_file: Optional[PathLike] = None, preset: str = "full"):
        self.config_file = config_file
        self.preset = preset
        self._config: Optional[RunConfig] = None

    def load_config(self, **overrides) -> RunConfig:
        """Load configuration with cascade priority"""
        if self._config is not None and not overrides:
            return self._config

        if self.preset not in PRESETS:
            raise ConfigError(f"Unknown preset: {self.preset}. Choose from {sorted(PRESETS)}")
        config_data: Dict[str, Any] = dict(PRESETS[self.preset])

        # 1. JSON config file
        config_data.update(self._load_json_config())

        # 2. Explicit overrides (None means "not given")
        config_data.update({k: v for k, v in overrides.items() if v is not None})

        known = {f.name for f in fields(RunConfig)}
        unknown = sorted(set(config_data) - known)
        if unknown:
            raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")

        try:
            self._config = RunConfig(**config_data)
        except TypeError as e:
            raise ConfigError(f"Configuration error: {e}") from e
        logger.info("Configuration loaded (preset=%s, file=%s)", self.preset, self.config_file)
        return self._config

    def _load_json_config(self) -> Dict[str, Any]:
        """Load configuration from JSON file"""
        if self.config_file is None:
            return {}
        data = load_json_file(self.config_file, error_cls=_config_file_error)
        if not isinstance(data, dict):
            raise ConfigError(f"{self.config_file}: config must be a JSON object")
        return data

    def save_config(self, config: RunConfig, path: Optional[PathLike] = None) -> None:
        """Save configuration to JSON file"""
        target = path or self.config_file
        if target is None:
            raise ConfigError("No path to save the configuration to")
        save_json_file(target, config.to_dict())
        logger.info("Configuration saved to %s", target)

    def reload_config(self) -> RunConfig:
        """Reload configuration from files"""
        self._config = None
        return self.load_config()


def _config_file_error(message: str, path: Optional[str] = None, row=None) -> ConfigError:
    return ConfigError(f"{path}: {message}" if path else message)


def load_run_config(path: Optional[PathLike] = None, preset: str = "full",
                    **overrides) -> RunConfig:
    return ConfigManager(path, preset=preset).load_config(**overrides)
