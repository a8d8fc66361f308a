"""Binary checkpoint format.

Layout::

    GSNCKPT <version> <model_tag>\\n
    <config as sorted-key JSON>\\n
    <block count: uint32>
    repeated blocks:
        <name length: uint16><name: utf-8><rows: uint32><cols: uint32>
        <rows*cols float64, little-endian, row-major>

All integers little-endian.  Writing is deterministic: identical parameters
give identical bytes.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"GSNCKPT"
VERSION = 1


def save_checkpoint(path, model_tag, config, params):
    cfg = config if isinstance(config, dict) else config.to_dict()
    chunks = [f"{MAGIC.decode()} {VERSION} {model_tag}\n".encode(),
              (json.dumps(cfg, sort_keys=True) + "\n").encode(),
              struct.pack("<I", len(params))]
    for name, arr in params.items():
        arr = np.asarray(arr, dtype="<f8")
        if arr.ndim != 2:
            raise CheckpointError(f"{name}: only 2-D blocks are stored, got shape {arr.shape}")
        raw = name.encode()
        chunks.append(struct.pack("<H", len(raw)) + raw + struct.pack("<II", *arr.shape))
        chunks.append(np.ascontiguousarray(arr).tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_checkpoint(path):
    """Return ``(model_tag, config_dict, params)``."""
    buf = Path(path).read_bytes()
    try:
        nl = buf.index(b"\n")
        magic, version, tag = buf[:nl].decode().split(" ")
        nl2 = buf.index(b"\n", nl + 1)
        config = json.loads(buf[nl + 1:nl2])
    except (ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: malformed header ({exc})") from None
    if magic.encode() != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if int(version) != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    pos = nl2 + 1
    try:
        (count,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        params = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", buf, pos)
            name = buf[pos + 2:pos + 2 + n].decode()
            pos += 2 + n
            rows, cols = struct.unpack_from("<II", buf, pos)
            pos += 8
            nbytes = 8 * rows * cols
            if pos + nbytes > len(buf):
                raise CheckpointError(f"{path}: truncated block {name}")
            params[name] = np.frombuffer(buf, dtype="<f8", count=rows * cols, offset=pos) \
                .reshape(rows, cols).astype(np.float64)
            pos += nbytes
    except struct.error:
        raise CheckpointError(f"{path}: truncated file") from None
    if pos != len(buf):
        raise CheckpointError(f"{path}: trailing bytes after last block")
    return tag, config, params


def load_model(path, expected_config=None, expected_tag=None):
    """Rebuild a model; reject tag or config mismatches."""
    from .baseline import DenseGCN, DenseGCNConfig
    from .model import GSNet, GSNetConfig

    tag, config, params = read_checkpoint(path)
    if expected_tag is not None and tag != expected_tag:
        raise CheckpointError(f"checkpoint holds a {tag} model, expected {expected_tag}")
    if expected_config is not None:
        want = expected_config if isinstance(expected_config, dict) else expected_config.to_dict()
        if want != config:
            diff = sorted(k for k in set(want) | set(config) if want.get(k) != config.get(k))
            raise CheckpointError(f"config mismatch on fields {diff}")
    kinds = {GSNet.tag: (GSNet, GSNetConfig), DenseGCN.tag: (DenseGCN, DenseGCNConfig)}
    if tag not in kinds:
        raise CheckpointError(f"unknown model tag {tag!r}")
    cls, cfg_cls = kinds[tag]
    return cls(cfg_cls(**config), params)
