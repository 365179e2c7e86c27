"""Binary checkpoint container.

Layout::

    b"QSBD" | u16 version | u16 reserved | u32 header length
    header: canonical JSON {config, meta, tensors: [{name, shape, offset, nbytes}]}
    tensor blobs, little-endian float32, in directory order
    u32 CRC-32 of every preceding byte
"""
from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from ..errors import ChecksumMismatch, ConfigMismatch

MAGIC = b"QSBD"
VERSION = 1
_PREFIX = struct.Struct("<4sHHI")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


@dataclass
class Checkpoint:
    tensors: dict
    config: dict
    meta: dict = field(default_factory=dict)


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    directory = []
    blobs = []
    offset = 0
    for name, arr in ckpt.tensors.items():
        b = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        directory.append({"name": name, "shape": list(np.shape(arr)), "offset": offset, "nbytes": len(b)})
        blobs.append(b)
        offset += len(b)
    header = canonical_json({"config": ckpt.config, "meta": ckpt.meta, "tensors": directory}).encode("ascii")
    body = _PREFIX.pack(MAGIC, VERSION, 0, len(header)) + header + b"".join(blobs)
    return body + struct.pack("<I", zlib.crc32(body))


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    data = checkpoint_bytes(ckpt)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def parse_checkpoint(data: bytes, path=None) -> Checkpoint:
    where = f"{path}: " if path is not None else ""
    if len(data) < _PREFIX.size + 4:
        raise ChecksumMismatch(f"{where}file too short to be a checkpoint")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise ChecksumMismatch(f"{where}CRC-32 mismatch (file truncated or corrupted)")
    magic, version, _, hlen = _PREFIX.unpack_from(body)
    if magic != MAGIC:
        raise ChecksumMismatch(f"{where}bad magic {magic!r}")
    if version != VERSION:
        raise ConfigMismatch(f"{where}unsupported checkpoint version {version}")
    header = json.loads(body[_PREFIX.size:_PREFIX.size + hlen].decode("ascii"))
    base = _PREFIX.size + hlen
    tensors = {}
    for ent in header["tensors"]:
        start = base + ent["offset"]
        raw = body[start:start + ent["nbytes"]]
        if len(raw) != ent["nbytes"]:
            raise ChecksumMismatch(f"{where}tensor {ent['name']!r} extends past end of file")
        tensors[ent["name"]] = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(ent["shape"])
    return Checkpoint(tensors, header["config"], header.get("meta", {}))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return parse_checkpoint(fh.read(), path)


def check_compatible(ckpt: Checkpoint, config: dict, expected: dict) -> None:
    """Raise ConfigMismatch unless the config and the name -> shape map agree."""
    if canonical_json(ckpt.config) != canonical_json(config):
        diff = sorted(k for k in set(ckpt.config) | set(config) if ckpt.config.get(k) != config.get(k))
        raise ConfigMismatch(f"checkpoint architecture differs in {diff}")
    have = {k: tuple(v.shape) for k, v in ckpt.tensors.items()}
    want = {k: tuple(v) for k, v in expected.items()}
    if have != want:
        missing = sorted(set(want) - set(have))
        extra = sorted(set(have) - set(want))
        bad = sorted(k for k in set(have) & set(want) if have[k] != want[k])
        raise ConfigMismatch(f"checkpoint tensors differ: missing {missing[:5]}, "
                             f"unexpected {extra[:5]}, wrong shape {bad[:5]}")
