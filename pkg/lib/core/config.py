"""
Experiment configuration.

Config files hold one `key = value` per line; `#` starts a comment and
blank lines are ignored. Keys are dotted paths into ExperimentConfig,
e.g. `optimizer.lr = 0.05`, `model.c_new = 32`, `loss.lambda = 0.1`,
`tau = 0.5`, `variant = full`. Comma-separated values fill tuple fields
and `none` clears optional ones.
"""

import hashlib
import json
import os
from collections.abc import Iterable, Mapping
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from lib.core.align import DistanceConfig, Variant
from lib.core.errors import ConfigError
from lib.core.losses import LossWeights
from lib.core.model import ModelConfig
from lib.core.synthdata import AugmentConfig

OUTPUT_ROOT_ENV = "ESA_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "runs"


class DataConfig(BaseModel):
    """
    Dataset source.

    Attributes:
        root: Existing dataset directory; None generates one inside the
            run directory with the parameters below
        n_identities: Identities to generate
        images_per_identity: Images rendered per identity
        workers: Rendering threads
    """

    model_config = ConfigDict(frozen=True)

    root: Path | None = None
    n_identities: int = Field(default=50, ge=4)
    images_per_identity: int = Field(default=20, ge=4)
    workers: int = Field(default=1, ge=1)


class OptimizerConfig(BaseModel):
    """Plain SGD with a single step decay of the learning rate."""

    model_config = ConfigDict(frozen=True)

    lr: float = Field(default=0.05, gt=0)
    momentum: float = Field(default=0.0, ge=0, lt=1)
    decay_epoch: int = Field(default=20, ge=1)
    decay_factor: float = Field(default=0.1, gt=0, le=1)
    epochs: int = Field(default=30, ge=1)


class BatchConfig(BaseModel):
    """
    P x K batch composition.

    Attributes:
        identities: P, identities per batch
        images: K, images per identity
    """

    model_config = ConfigDict(frozen=True)

    identities: int = Field(default=4, ge=2)
    images: int = Field(default=4, ge=2)

    @property
    def size(self) -> int:
        return self.identities * self.images


class ExperimentConfig(BaseModel):
    """
    Everything one training + evaluation run depends on.

    `seed` drives dataset generation, parameter initialization, batch
    sampling and augmentation; `model.seed` is replaced by it at train
    time, and `model.num_identities` by the number of train identities.
    """

    model_config = ConfigDict(frozen=True)

    model: ModelConfig = ModelConfig()
    data: DataConfig = DataConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    batch: BatchConfig = BatchConfig()
    loss: LossWeights = LossWeights()
    distance: DistanceConfig = DistanceConfig()
    augment: AugmentConfig = AugmentConfig()
    tau: float = Field(default=0.5, gt=0, lt=1)
    variant: Variant = Variant.FULL
    max_rank: int = Field(default=20, ge=1)
    seed: int = 0


def parse_config_text(text: str) -> dict[str, str]:
    """
    Parses `key = value` lines.

    Raises:
        ConfigError: On a line without `=` or a repeated key.
    """
    entries: dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"line {number}: expected `key = value`")
        key = key.strip()
        if key in entries:
            raise ConfigError(f"line {number}: duplicate key {key!r}")
        entries[key] = value.strip()
    return entries


def parse_override(item: str) -> tuple[str, str]:
    key, sep, value = item.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override {item!r} is not `key=value`")
    return key.strip(), value.strip()


def _coerce(value: str) -> Any:
    if value.lower() in ("none", "null"):
        return None
    if "," in value:
        return [part.strip() for part in value.split(",")]
    return value


def _config_dict(config: ExperimentConfig) -> dict[str, Any]:
    return config.model_dump(mode="json", by_alias=True)


def apply_entries(
    config: ExperimentConfig, entries: Mapping[str, str]
) -> ExperimentConfig:
    """
    Returns `config` with dotted-key entries applied and revalidated.

    Raises:
        ConfigError: On unknown keys or values failing validation.
    """
    data = _config_dict(config)
    for key, value in entries.items():
        *parents, leaf = key.split(".")
        node = data
        for part in parents:
            child = node.get(part)
            if not isinstance(child, dict):
                raise ConfigError(f"unknown config key {key!r}")
            node = child
        if leaf not in node or isinstance(node[leaf], dict):
            raise ConfigError(f"unknown config key {key!r}")
        node[leaf] = _coerce(value)
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(
    path: str | Path | None = None,
    overrides: Iterable[str] = (),
    seed: int | None = None,
) -> ExperimentConfig:
    """
    Builds the experiment config from defaults, an optional file, then
    `--set key=value` overrides and finally `--seed`.
    """
    entries: dict[str, str] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        entries.update(parse_config_text(text))
    entries.update(parse_override(item) for item in overrides)
    if seed is not None:
        entries["seed"] = str(seed)
    return apply_entries(ExperimentConfig(), entries)


def with_value(
    config: ExperimentConfig, key: str, value: object
) -> ExperimentConfig:
    return apply_entries(config, {key: str(value)})


def _flatten(prefix: str, node: Any, lines: list[str]) -> None:
    if isinstance(node, dict):
        for key, child in node.items():
            _flatten(f"{prefix}{key}.", child, lines)
        return
    if node is None:
        value = "none"
    elif isinstance(node, list):
        value = ",".join(str(item) for item in node)
    else:
        value = str(node)
    lines.append(f"{prefix[:-1]} = {value}")


def to_config_text(config: ExperimentConfig) -> str:
    """Serializes `config` in the config file format."""
    lines: list[str] = []
    _flatten("", _config_dict(config), lines)
    return "\n".join(lines) + "\n"


def config_hash(config: ExperimentConfig) -> str:
    """First 12 hex digits of SHA-256 over the seedless config JSON."""
    data = _config_dict(config)
    data.pop("seed")
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def output_root() -> Path:
    return Path(os.getenv(OUTPUT_ROOT_ENV) or DEFAULT_OUTPUT_ROOT)


def run_dir(config: ExperimentConfig, root: str | Path | None = None) -> Path:
    """`<root>/<config-hash>-s<seed>`; root defaults to `output_root()`."""
    base = Path(root) if root is not None else output_root()
    return base / f"{config_hash(config)}-s{config.seed}"
