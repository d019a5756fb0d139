"""Pipeline-wide constants bundled into one serializable record.

Every tunable the command-line tools expose lives here, with the shipped
default values.  Configs round-trip through JSON; unknown keys in a
config file are rejected so that typos fail fast instead of silently
using a default.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class PipelineConfig:
    # Tokenization grid
    resolution_ms: int = 8
    max_shift_ms: int = 1000
    # Chord labeling
    chord_dropout: float = 0.2
    velocity_boost: int = 20
    simultaneity_eps_ms: int = 8
    # Boundary scheduling
    sensitivity_s: float = 1.0
    max_offset_s: float = 4.0
    # Scene ingestion
    min_gap_s: float = 4.0
    scene_threshold: float = 0.4
    # Emotion mapping
    target_max: float = 0.8
    # Generation / model constants
    temperature: float = 1.0
    top_k: int = 32
    feature_dim: int = 512
    #: Loss weight applied to CHORD tokens when a model is trained on
    #: prepared data; recorded here so training and inference share it.
    chord_token_loss_weight: float = 10.0
    default_velocity: int = 80

    def __post_init__(self) -> None:
        positive = (
            "resolution_ms",
            "max_shift_ms",
            "velocity_boost",
            "sensitivity_s",
            "max_offset_s",
            "scene_threshold",
            "target_max",
            "temperature",
            "top_k",
            "feature_dim",
            "chord_token_loss_weight",
            "default_velocity",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.min_gap_s < 0 or self.simultaneity_eps_ms < 0:
            raise ValueError("min_gap_s and simultaneity_eps_ms must be >= 0")
        if not 0.0 <= self.chord_dropout <= 1.0:
            raise ValueError(f"chord_dropout must be in [0, 1], got {self.chord_dropout}")
        if self.max_shift_ms % self.resolution_ms:
            raise ValueError(
                f"max_shift_ms ({self.max_shift_ms}) must be a multiple of "
                f"resolution_ms ({self.resolution_ms})"
            )
        if not 0.0 < self.target_max <= 1.0:
            raise ValueError(f"target_max must be in (0, 1], got {self.target_max}")

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ValueError("config JSON must hold an object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_json(Path(path).read_text())
