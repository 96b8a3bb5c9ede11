"""Training configuration: TOML file < environment < explicit overrides."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .errors import ConfigurationError
from .losses import LossWeights

ENV_PREFIX = "PYRAMID_STYLE_"

# flat keys accepted for the loss weights (file, env and CLI)
WEIGHT_KEYS = {
    "self_similarity_weight": "self_similarity",
    "remd_weight": "remd",
    "style_weight": "style",
    "adversarial_weight": "adversarial",
}


@dataclass
class TrainingConfig:
    content_dir: str = ""
    style_image: str = ""
    extractor_weights: str = ""
    stage: str = "draft"
    resolution: int = 128
    iterations: int = 30000
    batch_size: int = 5
    learning_rate: float = 1e-4
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    checkpoint_every: int = 1000
    checkpoint_dir: str | None = None
    keep_checkpoints: int = 3
    log_path: str | None = None
    max_positions: int = 1024

    def __post_init__(self):
        self.validate()

    @property
    def level(self) -> int:
        """0 for the drafting stage, k for ``revision-k``."""
        if self.stage == "draft":
            return 0
        if self.stage.startswith("revision-"):
            try:
                k = int(self.stage.split("-", 1)[1])
            except ValueError:
                k = 0
            if k >= 1:
                return k
        raise ConfigurationError(f"stage must be 'draft' or 'revision-<k>' (k >= 1), got {self.stage!r}")

    def validate(self) -> None:
        div = 16 * 2**self.level
        if self.resolution <= 0 or self.resolution % div:
            raise ConfigurationError(
                f"resolution {self.resolution} must be a positive multiple of {div} for stage {self.stage}"
            )
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.iterations < 0:
            raise ConfigurationError(f"iterations must be >= 0, got {self.iterations}")
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.checkpoint_every < 1 or self.keep_checkpoints < 1:
            raise ConfigurationError("checkpoint_every and keep_checkpoints must be >= 1")

    def snapshot(self) -> dict:
        return asdict(self)


_FIELD_TYPES = {f.name: f.type for f in fields(TrainingConfig)}


def _coerce(key: str, value):
    kind = _FIELD_TYPES.get(key)
    if value is None:
        return None
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    if kind in ("str", "str | None"):
        return str(value)
    return value


def _apply(values: dict, raw: dict, source: str) -> None:
    for key, value in raw.items():
        key = key.replace("-", "_")
        if value is None:
            continue
        if key == "weights" and isinstance(value, dict):
            for wk, wv in value.items():
                values.setdefault("weights", {})[wk] = float(wv)
        elif key in WEIGHT_KEYS:
            values.setdefault("weights", {})[WEIGHT_KEYS[key]] = float(value)
        elif key in _FIELD_TYPES:
            try:
                values[key] = _coerce(key, value)
            except (TypeError, ValueError) as exc:
                raise ConfigurationError(f"{source}: bad value for {key}: {value!r}") from exc
        else:
            raise ConfigurationError(f"{source}: unknown config key {key!r}")


def load_config(path=None, overrides: dict | None = None, environ=None,
                defaults: dict | None = None) -> TrainingConfig:
    """Merge defaults < TOML file < ``PYRAMID_STYLE_*`` environment < overrides.

    Loss weights may be given as a ``[weights]`` table or flat ``*_weight`` keys.
    """
    values: dict = {}
    _apply(values, defaults or {}, "defaults")
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        _apply(values, raw, str(path))
    environ = os.environ if environ is None else environ
    env = {k[len(ENV_PREFIX):].lower(): v for k, v in environ.items() if k.startswith(ENV_PREFIX)}
    _apply(values, env, "environment")
    _apply(values, overrides or {}, "overrides")
    try:
        weights = LossWeights(**values.pop("weights", {}))
    except TypeError as exc:
        raise ConfigurationError(f"unknown loss weight: {exc}") from exc
    for key in ("content_dir", "style_image", "extractor_weights"):
        if key in values:
            values[key] = str(Path(values[key]))
    return TrainingConfig(weights=weights, **values)
