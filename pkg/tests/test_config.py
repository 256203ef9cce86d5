"""Config records: validation rules, JSON round trip, dotted overrides."""

from __future__ import annotations

import json

import pytest

from retinalizer.config import (
    CorpusConfig,
    ExperimentConfig,
    ModelConfig,
    TaskParams,
    TrainConfig,
    apply_overrides,
    config_from_dict,
    config_to_dict,
    load_config,
    save_config,
    write_effective_config,
)
from retinalizer.errors import ConfigurationError


def test_defaults_validate():
    ExperimentConfig().validate()


@pytest.mark.parametrize(
    "section",
    [
        CorpusConfig(image_size=15),
        CorpusConfig(samples_per_dataset=3),
        CorpusConfig(healthy_fraction_dme=1.5),
        CorpusConfig(split_ratios=(0.5, 0.5, 0.5)),
        ModelConfig(levels=0),
        ModelConfig(levels=3, image_size=20),  # 20 not divisible by 8
        ModelConfig(kernel_size=4),
        ModelConfig(nonlinearity="tanh"),
        TaskParams(gauss_sigma=-1.0),
        TaskParams(superres_factor=3),
        TaskParams(inpaint_fraction=0.9),
        TaskParams(outpaint_fraction=0.5),
        TrainConfig(batch_size=0),
        TrainConfig(min_nonempty_context_masks=9, context_size=6),
        TrainConfig(beta1=1.0),
    ],
)
def test_invalid_sections_raise(section):
    with pytest.raises(ConfigurationError):
        section.validate()


def test_json_round_trip(tmp_path):
    cfg = ExperimentConfig(train=TrainConfig(batch_size=3, steps=7))
    path = tmp_path / "cfg.json"
    save_config(cfg, path)
    again = load_config(path)
    assert config_to_dict(again) == config_to_dict(cfg)


def test_load_config_rejects_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{nope")
    with pytest.raises(ConfigurationError):
        load_config(path)


def test_config_from_dict_rejects_unknown_keys():
    with pytest.raises(ConfigurationError):
        config_from_dict({"nope": {}})
    with pytest.raises(ConfigurationError):
        config_from_dict({"train": {"nope": 1}})


def test_overrides_parse_types():
    cfg = ExperimentConfig()
    out = apply_overrides(
        cfg,
        [
            "train.batch_size=3",
            "train.learning_rate=0.001",
            "train.recolor_enabled=true",
            "model.nonlinearity=relu",
            "corpus.split_ratios=[0.8, 0.1, 0.1]",
        ],
    )
    assert out.train.batch_size == 3
    assert out.train.learning_rate == pytest.approx(1e-3)
    assert out.train.recolor_enabled is True
    assert out.model.nonlinearity == "relu"
    assert out.corpus.split_ratios == (0.8, 0.1, 0.1)
    # original untouched
    assert cfg.train.batch_size == 5


@pytest.mark.parametrize(
    "override", ["no_equals", "too.many.parts=1", "ghost.field=1", "train.ghost=1"]
)
def test_bad_overrides_raise(override):
    with pytest.raises(ConfigurationError):
        apply_overrides(ExperimentConfig(), [override])


def test_effective_config_snapshot(tmp_path):
    cfg = ExperimentConfig()
    path = write_effective_config(cfg, tmp_path, extra={"command": "test"})
    doc = json.loads(path.read_text())
    assert doc["_run"]["command"] == "test"
    rebuilt = config_from_dict({k: v for k, v in doc.items() if k != "_run"})
    assert config_to_dict(rebuilt) == config_to_dict(cfg)
