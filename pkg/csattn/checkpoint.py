"""
csattn/checkpoint.py

Named-tensor archive.

Layout (all integers little-endian):
    b"CSAT"                magic
    u32                    format version (1)
    u32                    tensor count
    per tensor:
        u32 + bytes        UTF-8 name
        u32                rank
        u32 * rank         extents
        u8                 dtype code (0 = f32, 1 = f64)
        bytes              raw little-endian payload, C order
    u32                    CRC32 of every preceding byte

A sidecar <checkpoint>.json holds the NetConfig the tensors belong to, so a
network can be rebuilt from the checkpoint alone.
"""

from __future__ import annotations

import json
import logging
import os
import struct
import zlib
from pathlib import Path
from typing import Mapping, Union

import numpy as np

from csattn.config import from_dict, to_dict
from csattn.errors import CheckpointError
from csattn.net import NetConfig, build
from csattn.nn_ops import iter_named_tensors
from csattn.tensor import Tensor, precision

log = logging.getLogger(__name__)

MAGIC = b"CSAT"
VERSION = 1
DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
CODE_FOR_DTYPE = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}

PathLike = Union[str, Path]


def sidecar_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def _as_arrays(tensors) -> dict[str, np.ndarray]:
    if isinstance(tensors, Mapping):
        return {name: (t.data if isinstance(t, Tensor) else np.asarray(t)) for name, t in tensors.items()}
    return {name: t.data for name, t in iter_named_tensors(tensors)}


def encode_checkpoint(tensors) -> bytes:
    """Serialize a name -> array mapping (or any parameter tree) to bytes."""
    arrays = _as_arrays(tensors)
    parts = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name, arr in arrays.items():
        code = CODE_FOR_DTYPE.get(arr.dtype)
        if code is None:
            raise CheckpointError(f"tensor {name!r}: unsupported dtype {arr.dtype!r}")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(struct.pack("<B", code))
        parts.append(np.ascontiguousarray(arr, dtype=DTYPE_CODES[code]).tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"truncated checkpoint: need {n} bytes at offset {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def decode_checkpoint(data: bytes) -> dict[str, np.ndarray]:
    if len(data) < len(MAGIC) + 12:
        raise CheckpointError(f"checkpoint too short ({len(data)} bytes)")
    body, trailer = data[:-4], data[-4:]
    if body[:4] != MAGIC:
        raise CheckpointError(f"bad magic {body[:4]!r}")
    expected = struct.unpack("<I", trailer)[0]
    actual = zlib.crc32(body)
    if actual != expected:
        raise CheckpointError(f"CRC mismatch: stored {expected:#010x}, computed {actual:#010x}")

    reader = _Reader(body)
    reader.take(4)
    version = reader.u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version!r}")
    count = reader.u32()
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        try:
            name = reader.take(reader.u32()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError("tensor name is not valid UTF-8") from exc
        rank = reader.u32()
        shape = struct.unpack(f"<{rank}I", reader.take(4 * rank))
        code = reader.take(1)[0]
        dtype = DTYPE_CODES.get(code)
        if dtype is None:
            raise CheckpointError(f"tensor {name!r}: unknown dtype code {code!r}")
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        payload = np.frombuffer(reader.take(nbytes), dtype=dtype).reshape(shape)
        tensors[name] = payload.astype(dtype.newbyteorder("="))
    if reader.pos != len(body):
        raise CheckpointError(f"{len(body) - reader.pos} trailing bytes after last tensor")
    return tensors


def _write_atomic(path: Path, data: bytes) -> None:
    """Readers see the old file or the new one, never a partial write."""
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    try:
        os.replace(tmp, path)
    except OSError:
        tmp.unlink(missing_ok=True)
        raise


def save_checkpoint(path: PathLike, tensors, net_config=None) -> Path:
    """Write atomically; with net_config also write the JSON sidecar, atomically too."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_atomic(path, encode_checkpoint(tensors))
    if net_config is not None:
        _write_atomic(sidecar_path(path), json.dumps(to_dict(net_config), indent=2).encode("utf-8"))
    log.debug("saved checkpoint %s", path)
    return path


def load_checkpoint(path: PathLike) -> dict[str, np.ndarray]:
    return decode_checkpoint(Path(path).read_bytes())


def load_into(tree, tensors: Mapping[str, np.ndarray]) -> None:
    """Copy stored arrays into a parameter tree; names and shapes must match exactly."""
    named = dict(iter_named_tensors(tree))
    missing = sorted(set(named) - set(tensors))
    extra = sorted(set(tensors) - set(named))
    if missing or extra:
        raise CheckpointError(f"checkpoint does not match network: missing {missing[:5]!r}, unexpected {extra[:5]!r}")
    for name, t in named.items():
        arr = tensors[name]
        if arr.shape != t.shape:
            raise CheckpointError(f"tensor {name!r}: stored shape {arr.shape!r} != expected {t.shape!r}")
        t.data = arr.astype(t.dtype, copy=True)


def read_net_config(path: PathLike):
    side = sidecar_path(path)
    if not side.exists():
        raise CheckpointError(f"{side} not found; pass --config to describe the network")
    with open(side, "r", encoding="utf-8") as f:
        return from_dict(NetConfig, json.load(f))


def load_network(path: PathLike, net_config=None):
    """Rebuild a network from a checkpoint at the precision it was saved in."""
    tensors = load_checkpoint(path)
    cfg = net_config if net_config is not None else read_net_config(path)
    dtype = next(iter(tensors.values())).dtype.type if tensors else np.float32
    with precision(dtype):
        params = build(cfg, seed=0)
    load_into(params, tensors)
    return params
