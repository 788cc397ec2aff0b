"""Pipeline configuration: one YAML file with a section per module.

Relative paths resolve against the config file's directory, so a config plus
its data directory is a self-contained, versionable run description. CLI flags
override file values; file values override the defaults below (which match the
full-scale training hyperparameters).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigurationError
from .pairgen import NegativeBudget
from .trainer import TrainConfig

MOCK = "mock"
HTTP = "http"


@dataclass
class PathsConfig:
    """Input files plus the working directory all artifacts land in."""

    contexts: str = "contexts.jsonl"
    texts: str = "texts.jsonl"
    topic_map: str = "topic_map.jsonl"
    truth: str = "truth.jsonl"
    blocklists: str = "blocklists.jsonl"
    synth_pools: str = "synth_pools.jsonl"
    workdir: str = "out"


@dataclass
class ProviderConfig:
    kind: str = MOCK
    endpoint: str = ""
    model: str = "gpt-4o-mini"

    def __post_init__(self) -> None:
        if self.kind not in (MOCK, HTTP):
            raise ConfigurationError(f"provider.kind must be 'mock' or 'http', got {self.kind!r}")
        if self.kind == HTTP and not self.endpoint:
            raise ConfigurationError("provider.kind 'http' requires provider.endpoint")


@dataclass
class GenerationConfig:
    kind: str = MOCK
    endpoint: str = ""
    model: str = "gpt-4o-mini"
    implicit_per_topic: int = 12
    hard_negatives_per_topic: int = 4
    leak_rate: float = 0.2
    max_rejections: int = 60

    def __post_init__(self) -> None:
        if self.kind not in (MOCK, HTTP):
            raise ConfigurationError(
                f"generation.kind must be 'mock' or 'http', got {self.kind!r}"
            )
        if self.implicit_per_topic < 0 or self.hard_negatives_per_topic < 0:
            raise ConfigurationError("generation counts must be >= 0")


@dataclass
class LabelingConfig:
    parallelism: int = 4
    max_attempts: int = 3
    initial_delay: float = 1.0
    backoff_factor: float = 2.0
    jitter: float = 0.2

    def __post_init__(self) -> None:
        if self.parallelism < 1:
            raise ConfigurationError("labeling.parallelism must be >= 1")
        if self.max_attempts < 1:
            raise ConfigurationError("labeling.max_attempts must be >= 1")


@dataclass
class TrainSection:
    """Trainer hyperparameters plus backend construction settings."""

    backend: str = "desk"
    epochs: int = 5
    learning_rate: float = 2e-5
    batch_size: int = 16
    max_sequence_length: int = 256
    patience: int = 2
    val_fraction: float = 0.15
    class_weighting: str = "inverse_frequency"
    threshold: float = 0.5
    vocab_size: int = 8192
    embedding_dim: int = 48
    hidden_dim: int = 64
    model_name_or_path: str = ""

    def __post_init__(self) -> None:
        if self.backend not in ("desk", "transformer"):
            raise ConfigurationError(
                f"train.backend must be 'desk' or 'transformer', got {self.backend!r}"
            )
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigurationError("train.threshold must be in [0, 1]")

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_sequence_length=self.max_sequence_length,
            patience=self.patience,
            val_fraction=self.val_fraction,
            class_weighting=self.class_weighting,
            seed=seed,
        )


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    budget: NegativeBudget = field(default_factory=NegativeBudget)
    labeling: LabelingConfig = field(default_factory=LabelingConfig)
    train: TrainSection = field(default_factory=TrainSection)
    seed: int = 0
    base_dir: Path = field(default_factory=Path.cwd)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def workdir(self) -> Path:
        return self.resolve(self.paths.workdir)

    def artifact(self, name: str) -> Path:
        return self.workdir / name

    def require_inputs(self, *names: str) -> None:
        """Fail fast when a subcommand's input files are missing."""
        for name in names:
            raw = getattr(self.paths, name)
            path = self.resolve(raw)
            if not path.exists():
                raise ConfigurationError(f"paths.{name}: {path} does not exist")


def _build_section(cls, raw: Mapping[str, Any], section: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigurationError(
            f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}"
        )
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigurationError(f"bad [{section}] section: {exc}") from exc


def load_pipeline_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file {path} does not exist")
    raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    if not isinstance(raw, Mapping):
        raise ConfigurationError(f"config file {path} must hold a mapping of sections")

    known = {"paths", "provider", "generation", "budget", "labeling", "train", "seed"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(f"unknown config section(s): {', '.join(sorted(unknown))}")

    return PipelineConfig(
        paths=_build_section(PathsConfig, raw.get("paths", {}), "paths"),
        provider=_build_section(ProviderConfig, raw.get("provider", {}), "provider"),
        generation=_build_section(GenerationConfig, raw.get("generation", {}), "generation"),
        budget=_build_section(NegativeBudget, raw.get("budget", {}), "budget"),
        labeling=_build_section(LabelingConfig, raw.get("labeling", {}), "labeling"),
        train=_build_section(TrainSection, raw.get("train", {}), "train"),
        seed=int(raw.get("seed", 0)),
        base_dir=path.resolve().parent,
    )
