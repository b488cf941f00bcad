import dataclasses
from pathlib import Path

import numpy as np
import pytest

from csattn import checkpoint
from csattn.block import CSAttnConfig
from csattn.checkpoint import (
    MAGIC,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    load_into,
    load_network,
    read_net_config,
    save_checkpoint,
    sidecar_path,
)
from csattn.errors import CheckpointError
from csattn.net import NetConfig, build, forward_multiscale
from csattn.nn_ops import iter_named_tensors
from csattn.tensor import Tensor


def tiny_net() -> NetConfig:
    return NetConfig(base_channels=4, blocks_per_level=(1, 1, 1), csattn=CSAttnConfig(channels=4))


def test_round_trip_is_bitwise(rng):
    arrays = {
        "a": rng.standard_normal((2, 3)).astype(np.float32),
        "b.c": rng.standard_normal(5),
        "scalar": np.array(1.5, dtype=np.float32),
    }
    decoded = decode_checkpoint(encode_checkpoint(arrays))
    assert list(decoded) == list(arrays)
    for name, arr in arrays.items():
        assert decoded[name].dtype == arr.dtype
        assert decoded[name].shape == arr.shape
        assert decoded[name].tobytes() == arr.tobytes()


def test_header_layout():
    data = encode_checkpoint({"w": np.zeros(2, dtype=np.float32)})
    assert data[:4] == MAGIC
    assert data[4:8] == (1).to_bytes(4, "little")
    assert data[8:12] == (1).to_bytes(4, "little")


def test_any_flipped_byte_is_detected(rng):
    data = bytearray(encode_checkpoint({"w": rng.standard_normal((3, 3)).astype(np.float32)}))
    for offset in (4, 20, len(data) // 2, len(data) - 1):
        broken = bytearray(data)
        broken[offset] ^= 0x01
        with pytest.raises(CheckpointError):
            decode_checkpoint(bytes(broken))


def test_bad_magic_and_truncation():
    data = encode_checkpoint({"w": np.ones(4, dtype=np.float32)})
    with pytest.raises(CheckpointError, match="magic"):
        decode_checkpoint(b"XXXX" + data[4:])
    with pytest.raises(CheckpointError):
        decode_checkpoint(data[:-6])
    with pytest.raises(CheckpointError):
        decode_checkpoint(data[:6])


def test_unsupported_dtype_rejected():
    with pytest.raises(CheckpointError):
        encode_checkpoint({"i": np.arange(3)})


def test_save_writes_sidecar_and_rebuilds_network(tmp_path, rng):
    cfg = tiny_net()
    params = build(cfg, seed=4)
    path = save_checkpoint(tmp_path / "ckpt.csat", params, cfg)
    assert sidecar_path(path).name == "ckpt.csat.json"
    assert read_net_config(path) == cfg
    assert not list(tmp_path.glob("*.tmp"))

    loaded = load_network(path)
    x = Tensor(rng.random((1, 3, 16, 16)))
    for a, b in zip(forward_multiscale(params, x), forward_multiscale(loaded, x)):
        assert a.data.tobytes() == b.data.tobytes()


def test_sidecar_is_replaced_atomically(tmp_path, monkeypatch):
    first = tiny_net()
    path = save_checkpoint(tmp_path / "ckpt.csat", build(first, seed=0), first)
    renamed = []
    real_replace = checkpoint.os.replace

    def failing_sidecar_replace(src, dst):
        renamed.append(Path(dst).name)
        if str(dst).endswith(".json"):
            raise OSError("disk full")
        real_replace(src, dst)

    monkeypatch.setattr(checkpoint.os, "replace", failing_sidecar_replace)
    wider = dataclasses.replace(first, base_channels=8, csattn=CSAttnConfig(channels=8))
    with pytest.raises(OSError, match="disk full"):
        save_checkpoint(path, build(wider, seed=0), wider)
    assert renamed == ["ckpt.csat", "ckpt.csat.json"]
    assert read_net_config(path) == first
    assert not list(tmp_path.glob("*.tmp"))


def test_missing_sidecar(tmp_path):
    path = save_checkpoint(tmp_path / "bare.csat", build(tiny_net(), seed=0))
    with pytest.raises(CheckpointError, match="not found"):
        load_network(path)
    assert load_network(path, tiny_net()) is not None


def test_load_into_requires_exact_match(tmp_path):
    params = build(tiny_net(), seed=1)
    stored = load_checkpoint(save_checkpoint(tmp_path / "a.csat", params))
    target = build(tiny_net(), seed=2)
    load_into(target, stored)
    for (_, a), (_, b) in zip(iter_named_tensors(params), iter_named_tensors(target)):
        assert a.data.tobytes() == b.data.tobytes()

    wider = build(dataclasses.replace(tiny_net(), base_channels=8, csattn=CSAttnConfig(channels=8)), seed=0)
    with pytest.raises(CheckpointError):
        load_into(wider, stored)
    with pytest.raises(CheckpointError, match="missing"):
        load_into(target, {k: v for k, v in list(stored.items())[1:]})
