"""``PFCK`` checkpoints: run record plus every parameter and moment tensor.

Layout (little-endian)::

    b"PFCK" | u16 version | u32 crc32(rest) | u32 record_len | JSON record | PFTS blobs...

The JSON record holds both configs, the optimizer step, RNG states, the
loss/lr history and the ordered blob names.
"""
from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from . import tensorfile
from .model import ModelConfig, ModelParams, init_model
from .train import OptimizerState, TrainConfig, Trainer

MAGIC = b"PFCK"
VERSION = 1
_HEAD = struct.Struct("<4sHI")


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class ConfigMismatchError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    model_cfg: ModelConfig
    train_cfg: TrainConfig
    params: ModelParams
    state: OptimizerState
    rng_state: dict
    history: dict
    epoch: int = 0
    version: int = VERSION

    @classmethod
    def from_trainer(cls, tr: Trainer) -> "Checkpoint":
        return cls(tr.model_cfg, tr.train_cfg, tr.params, tr.state, tr.rng_state(),
                   {k: list(v) for k, v in tr.history.items()}, tr.epoch)

    def restore(self, context: np.ndarray, target: np.ndarray) -> Trainer:
        """Trainer that continues exactly where this checkpoint left off."""
        tr = Trainer(self.model_cfg, self.train_cfg, context, target, params=self.params,
                     dtype=self.params.embed_w.dtype.type, state=self.state,
                     history={k: list(v) for k, v in self.history.items()}, epoch=self.epoch)
        tr.set_rng_state(self.rng_state)
        return tr


def _encode(ck: Checkpoint) -> bytes:
    named = ck.params.named()
    blobs, names = [], []
    for n, t in named:
        names.append(f"param/{n}")
        blobs.append(tensorfile.encode(t.data))
    for (n, _), m, v in zip(named, ck.state.m, ck.state.v):
        names += [f"m/{n}", f"v/{n}"]
        blobs += [tensorfile.encode(m), tensorfile.encode(v)]
    record = {
        "model": ck.model_cfg.to_dict(),
        "train": ck.train_cfg.to_dict(),
        "step": ck.state.step,
        "epoch": ck.epoch,
        "rng": ck.rng_state,
        "history": ck.history,
        "tensors": names,
    }
    rec = json.dumps(record, sort_keys=True).encode()
    body = struct.pack("<I", len(rec)) + rec + b"".join(blobs)
    return _HEAD.pack(MAGIC, VERSION, zlib.crc32(body)) + body


def save_checkpoint(path, ck: Checkpoint | Trainer) -> None:
    if isinstance(ck, Trainer):
        ck = Checkpoint.from_trainer(ck)
    data = _encode(ck)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def load_checkpoint(path, expect: ModelConfig | None = None) -> Checkpoint:
    """Read a checkpoint; with ``expect`` set, reject one written for a different model."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < _HEAD.size:
        raise CorruptCheckpointError("file is shorter than the header")
    magic, version, crc = _HEAD.unpack_from(buf)
    if magic != MAGIC:
        raise CorruptCheckpointError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointVersionError(f"checkpoint version {version}, reader supports {VERSION}")
    body = memoryview(buf)[_HEAD.size:]
    if zlib.crc32(body) != crc:
        raise CorruptCheckpointError("checksum mismatch")
    try:
        (n,) = struct.unpack_from("<I", body)
        rec = json.loads(bytes(body[4:4 + n]))
        model_cfg = ModelConfig.from_dict(rec["model"])
        train_cfg = TrainConfig(**rec["train"])
        arrays = {}
        pos = 4 + n
        for name in rec["tensors"]:
            arrays[name], pos = tensorfile.decode(body, pos)
    except (KeyError, TypeError, ValueError, struct.error) as e:
        raise CorruptCheckpointError(f"unreadable payload: {e}") from e
    if pos != len(body):
        raise CorruptCheckpointError(f"{len(body) - pos} trailing bytes")
    if expect is not None and expect != model_cfg:
        raise ConfigMismatchError("checkpoint was written for a different model config")

    dtype = arrays["param/embed_w"].dtype.type if "param/embed_w" in arrays else np.float32
    params = init_model(model_cfg, np.random.default_rng(0), dtype)
    named = params.named()
    ms, vs = [], []
    for name, t in named:
        try:
            a, m, v = arrays[f"param/{name}"], arrays[f"m/{name}"], arrays[f"v/{name}"]
        except KeyError as e:
            raise CorruptCheckpointError(f"missing tensor {e}") from None
        if a.shape != t.shape:
            raise CorruptCheckpointError(f"{name}: stored shape {a.shape}, model expects {t.shape}")
        t.data = a
        ms.append(m)
        vs.append(v)
    if len(arrays) != 3 * len(named):
        raise CorruptCheckpointError("checkpoint holds tensors the model does not know")
    return Checkpoint(model_cfg, train_cfg, params, OptimizerState(ms, vs, rec["step"]),
                      rec["rng"], rec["history"], rec.get("epoch", 0), version)
