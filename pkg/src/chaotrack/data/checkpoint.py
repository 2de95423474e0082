"""Binary model checkpoints.

Layout (little endian): magic ``CTCK``, format version u32, header length
u64, UTF-8 JSON header, then raw f64 arrays in header order (normalizer
mean, normalizer std, then every parameter array).
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import FormatVersionError, GridFormatError, ShapeError
from ..model import ModelConfig, ModelParams
from .normalize import Normalizer

CHECKPOINT_MAGIC = b"CTCK"
CHECKPOINT_VERSION = 1


class CheckpointError(GridFormatError):
    pass


@dataclass
class Checkpoint:
    model_config: ModelConfig
    params: ModelParams
    normalizer: Normalizer
    train_config_digest: str = ""
    meta: dict = field(default_factory=dict)
    format_version: int = CHECKPOINT_VERSION


def checkpoint_bytes(cp: Checkpoint) -> bytes:
    arrays = {"normalizer.mean": cp.normalizer.mean, "normalizer.std": cp.normalizer.std}
    arrays.update(cp.params.named())
    header = {
        "model_config": dataclasses.asdict(cp.model_config),
        "train_config_digest": cp.train_config_digest,
        "meta": cp.meta,
        "arrays": [[name, list(a.shape)] for name, a in arrays.items()],
    }
    raw_header = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<IQ", cp.format_version, len(raw_header)),
        raw_header,
    ]
    parts.extend(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays.values())
    return b"".join(parts)


def save_checkpoint(cp: Checkpoint, path: str | Path) -> None:
    Path(path).write_bytes(checkpoint_bytes(cp))


def parse_checkpoint(data: bytes) -> Checkpoint:
    if data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError("bad magic bytes (not a CTCK checkpoint)")
    if len(data) < 16:
        raise CheckpointError("truncated checkpoint header")
    version, hlen = struct.unpack("<IQ", data[4:16])
    if version != CHECKPOINT_VERSION:
        raise FormatVersionError(
            f"unsupported checkpoint format_version {version} (this build reads {CHECKPOINT_VERSION})"
        )
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    pos = 16 + hlen
    arrays = {}
    for name, shape in header["arrays"]:
        n = int(np.prod(shape, dtype=np.int64))
        if pos + 8 * n > len(data):
            raise CheckpointError(f"truncated checkpoint while reading {name}")
        arrays[name] = np.frombuffer(data[pos:pos + 8 * n], dtype="<f8").astype(np.float64).reshape(shape)
        pos += 8 * n
    if pos != len(data):
        raise CheckpointError("trailing bytes after checkpoint arrays")
    config = ModelConfig(**header["model_config"])
    try:
        params = ModelParams.from_named(config, arrays)
    except KeyError as exc:
        raise ShapeError(f"checkpoint is missing parameter {exc} required by its config") from None
    normalizer = Normalizer(arrays["normalizer.mean"], arrays["normalizer.std"])
    if normalizer.mean.shape != (config.n_locations,):
        raise ShapeError("normalizer size does not match model n_locations")
    return Checkpoint(config, params, normalizer, header["train_config_digest"], header["meta"], version)


def load_checkpoint(path: str | Path) -> Checkpoint:
    return parse_checkpoint(Path(path).read_bytes())
