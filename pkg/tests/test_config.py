import json

import pytest

from csattn.block import CSAttnConfig
from csattn.config import (
    LossWeights,
    RainSynthSpec,
    TrainConfig,
    desk_net,
    from_dict,
    load_config,
    save_config,
    to_dict,
)
from csattn.errors import ConfigError


def test_defaults_validate():
    TrainConfig().validate()
    assert desk_net().base_channels == 8
    assert TrainConfig().lr_init == 1e-3 and TrainConfig().lr_final == 1e-7


def test_save_load_round_trip(tmp_path, tiny_train_config):
    path = tmp_path / "cfg.json"
    save_config(tiny_train_config, path)
    loaded = load_config(path)
    assert loaded == tiny_train_config
    assert isinstance(loaded.net.csattn, CSAttnConfig)
    assert isinstance(loaded.synth.streak_count, tuple)


def test_partial_document_uses_defaults(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"total_steps": 7, "net": {"csattn": {"use_aggregation": False}}}))
    cfg = load_config(path)
    assert cfg.total_steps == 7
    assert cfg.net.csattn.use_aggregation is False
    assert cfg.net.base_channels == 32


@pytest.mark.parametrize(
    "doc, message",
    [
        ({"total_step": 5}, "unknown key"),
        ({"loss": {"lambda": 0.1}}, "unknown key"),
        ({"total_steps": "5"}, "integer"),
        ({"total_steps": 5.0}, "integer"),
        ({"flip": 1}, "true/false"),
        ({"betas": [0.9]}, "2 values"),
        ({"net": []}, "object"),
    ],
)
def test_malformed_documents(doc, message):
    with pytest.raises(ConfigError, match=message):
        from_dict(TrainConfig, doc)


def test_invalid_json(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(path)


@pytest.mark.parametrize(
    "changes",
    [
        {"lr_init": 1e-7, "lr_final": 5e-4},
        {"lr_final": 0.0},
        {"patch": 24},
        {"total_steps": 0},
        {"betas": (0.9, 1.0)},
        {"degraded_dir": "x"},
        {"loss": LossWeights(freq_method="dct")},
        {"loss": LossWeights(lambda_freq=-1.0)},
        {"synth": RainSynthSpec(size=16)},
    ],
)
def test_validation_errors(changes):
    cfg = TrainConfig(**changes)
    with pytest.raises(ConfigError):
        cfg.validate()


def test_to_dict_is_json_ready(tiny_train_config):
    doc = json.loads(json.dumps(to_dict(tiny_train_config)))
    assert doc["net"]["csattn"]["channels"] == 4
    assert from_dict(TrainConfig, doc) == tiny_train_config
