"""Checkpoint file format.

Layout: the magic ``b"DGF1"``, a little-endian uint32 header length, a
UTF-8 JSON header ``{version, iteration, config, records: [{name, shape,
offset}]}`` and the little-endian float32 payloads in record order
(offsets in bytes from the start of the payload).
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"DGF1"
VERSION = 1


class CheckpointError(Exception):
    pass


class NotACheckpointError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class ShapeMismatchError(CheckpointError):
    def __init__(self, message, name=None):
        super().__init__(message)
        self.name = name


@dataclass
class Checkpoint:
    tensors: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)
    config: dict = field(default_factory=dict)
    iteration: int = 0
    version: int = VERSION

    def subset(self, prefix: str) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, v) for k, v in self.tensors.items() if k.startswith(prefix))


def save_checkpoint(ckpt: Checkpoint, path):
    """Write atomically (temporary file in the same directory, then rename)."""
    records, blobs, offset = [], [], 0
    for name, arr in ckpt.tensors.items():
        data = np.asarray(arr, dtype="<f4")  # tobytes() below is C order; keeps 0-d shapes
        records.append({"name": name, "shape": list(data.shape), "offset": offset})
        blobs.append(data.tobytes())
        offset += data.nbytes
    header = json.dumps({"version": ckpt.version, "iteration": int(ckpt.iteration), "config": ckpt.config,
                         "records": records}, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            for blob in blobs:
                fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise NotACheckpointError(f"{path}: not a checkpoint (bad magic bytes)")
    if len(raw) < 8:
        raise TruncatedCheckpointError(f"{path}: truncated before header length")
    (hlen,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + hlen:
        raise TruncatedCheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise NotACheckpointError(f"{path}: unreadable header ({exc})") from exc
    if header.get("version") != VERSION:
        raise CheckpointVersionError(f"{path}: checkpoint version {header.get('version')}, expected {VERSION}")
    payload = memoryview(raw)[8 + hlen:]
    tensors = OrderedDict()
    for rec in header["records"]:
        n = int(np.prod(rec["shape"], dtype=np.int64)) if rec["shape"] else 1
        start, stop = rec["offset"], rec["offset"] + 4 * n
        if stop > len(payload):
            raise TruncatedCheckpointError(f"{path}: payload for {rec['name']!r} is truncated")
        arr = np.frombuffer(payload[start:stop], dtype="<f4").reshape(tuple(rec["shape"]))
        tensors[rec["name"]] = arr.astype(np.float32)
    return Checkpoint(tensors, header.get("config", {}), int(header.get("iteration", 0)), header["version"])
