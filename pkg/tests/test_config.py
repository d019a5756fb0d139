from __future__ import annotations

import dataclasses
import json

import pytest

from midisync.config import PipelineConfig


def test_defaults():
    cfg = PipelineConfig()
    assert cfg.resolution_ms == 8
    assert cfg.max_shift_ms == 1000
    assert cfg.chord_dropout == 0.2
    assert cfg.velocity_boost == 20
    assert cfg.simultaneity_eps_ms == 8
    assert cfg.sensitivity_s == 1.0
    assert cfg.max_offset_s == 4.0
    assert cfg.min_gap_s == 4.0
    assert cfg.scene_threshold == 0.4
    assert cfg.target_max == 0.8
    assert cfg.temperature == 1.0
    assert cfg.top_k == 32
    assert cfg.feature_dim == 512
    assert cfg.chord_token_loss_weight == 10.0
    assert cfg.default_velocity == 80


def test_json_round_trip():
    cfg = PipelineConfig(chord_dropout=0.35, top_k=16, min_gap_s=2.5)
    assert PipelineConfig.from_json(cfg.to_json()) == cfg


def test_file_round_trip(tmp_path):
    cfg = PipelineConfig(temperature=0.7)
    path = tmp_path / "config.json"
    cfg.save(path)
    assert PipelineConfig.load(path) == cfg


def test_unknown_keys_rejected():
    payload = json.dumps({"chord_dropout": 0.1, "chord_droput": 0.1})
    with pytest.raises(ValueError, match="chord_droput"):
        PipelineConfig.from_json(payload)


def test_non_object_json_rejected():
    with pytest.raises(ValueError):
        PipelineConfig.from_json("[1, 2, 3]")


def test_partial_json_uses_defaults():
    cfg = PipelineConfig.from_json('{"top_k": 8}')
    assert cfg.top_k == 8
    assert cfg.chord_dropout == 0.2


@pytest.mark.parametrize(
    "overrides",
    [
        {"resolution_ms": 0},
        {"sensitivity_s": -1.0},
        {"chord_dropout": 1.5},
        {"chord_dropout": -0.1},
        {"max_shift_ms": 1001},  # not a multiple of the grid
        {"target_max": 0.0},
        {"target_max": 1.2},
        {"min_gap_s": -0.5},
        {"top_k": 0},
    ],
)
def test_validation_rejects_bad_values(overrides):
    with pytest.raises(ValueError):
        PipelineConfig(**overrides)


def test_frozen():
    cfg = PipelineConfig()
    with pytest.raises(dataclasses.FrozenInstanceError):
        cfg.top_k = 5
