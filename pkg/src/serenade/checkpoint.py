"""Versioned binary checkpoint container (format tag SRND1).

Layout: the 5-byte magic, a length-prefixed UTF-8 JSON block echoing the
configuration and training history, a tensor count, then each tensor as
(length-prefixed name, rows, cols, row-major little-endian float32 data).
Weights are rounded to float32 at checkpoint construction, so a save/load
cycle reproduces bit-identical inference.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict

import numpy as np

from .extractor import ExtractorConfig
from .model import SerenadeModel

MAGIC = b"SRND1"


class CheckpointFormatError(ValueError):
    """Corrupt or unrecognised checkpoint file."""


class Checkpoint:
    """A trained model plus the configuration echo and loss history."""

    def __init__(self, model: SerenadeModel, train_config: dict, epoch: int,
                 history: list):
        self.model = model.quantize()
        self.train_config = dict(train_config)
        self.epoch = int(epoch)
        self.history = list(history)

    def save(self, path) -> None:
        meta = {
            "model": asdict(self.model.config),
            "train": self.train_config,
            "epoch": self.epoch,
            "history": self.history,
        }
        blob = json.dumps(meta, sort_keys=True).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(struct.pack("<I", len(self.model.tensors)))
            for name in sorted(self.model.tensors):
                data = self.model.tensors[name]
                encoded = name.encode("utf-8")
                fh.write(struct.pack("<H", len(encoded)))
                fh.write(encoded)
                fh.write(struct.pack("<II", *data.shape))
                fh.write(data.astype("<f4").tobytes())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, "rb") as fh:
            raw = fh.read()
        if raw[:5] != MAGIC:
            raise CheckpointFormatError(f"{path}: bad magic, not an SRND1 file")
        try:
            offset = 5
            (meta_len,) = struct.unpack_from("<I", raw, offset)
            offset += 4
            meta = json.loads(raw[offset:offset + meta_len].decode("utf-8"))
            offset += meta_len
            (count,) = struct.unpack_from("<I", raw, offset)
            offset += 4
            tensors = {}
            for _ in range(count):
                (name_len,) = struct.unpack_from("<H", raw, offset)
                offset += 2
                name = raw[offset:offset + name_len].decode("utf-8")
                offset += name_len
                rows, cols = struct.unpack_from("<II", raw, offset)
                offset += 8
                size = rows * cols * 4
                data = np.frombuffer(raw[offset:offset + size], dtype="<f4")
                if data.size != rows * cols:
                    raise CheckpointFormatError(f"{path}: truncated tensor {name}")
                offset += size
                tensors[name] = data.astype(np.float64).reshape(rows, cols)
        except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointFormatError(f"{path}: corrupt checkpoint ({exc})")
        config = ExtractorConfig(**meta["model"])
        model = SerenadeModel(config, tensors)
        return cls(model, meta.get("train", {}), meta.get("epoch", -1),
                   meta.get("history", []))
