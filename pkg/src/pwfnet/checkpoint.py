"""Checkpoint persistence.

Layout: magic ``PWFN1``, little-endian uint32 header length, UTF-8 JSON
header, then every parameter as contiguous little-endian float32. The
header holds the model and training configs, the iteration, and a
manifest of ``{name, offset, shape}`` with byte offsets into the payload.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import ModelConfig, build

__all__ = ["MAGIC", "CheckpointError", "save_checkpoint", "load_checkpoint", "read_header"]

MAGIC = b"PWFN1"


class CheckpointError(ValueError):
    pass


def save_checkpoint(m, path, train_cfg=None, iteration=0, extra=None):
    manifest = []
    chunks = []
    offset = 0
    for name, p in m.params.items():
        buf = np.ascontiguousarray(p.data, dtype="<f4").tobytes()
        manifest.append({"name": name, "offset": offset, "shape": list(p.shape)})
        chunks.append(buf)
        offset += len(buf)
    header = {
        "model": m.cfg.to_dict(),
        "train": None if train_cfg is None else (train_cfg if isinstance(train_cfg, dict) else train_cfg.to_dict()),
        "iteration": int(iteration),
        "manifest": manifest,
        "payload_bytes": offset,
    }
    if extra:
        header["extra"] = extra
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(hb)))
        f.write(hb)
        for c in chunks:
            f.write(c)
    tmp.replace(path)
    return path


def _split(data):
    if data[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not a PWFN1 checkpoint (bad magic)")
    pos = len(MAGIC)
    if len(data) < pos + 4:
        raise CheckpointError("truncated checkpoint header")
    (n,) = struct.unpack("<I", data[pos:pos + 4])
    pos += 4
    if len(data) < pos + n:
        raise CheckpointError("truncated checkpoint header")
    try:
        header = json.loads(data[pos:pos + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint header: {e}") from None
    return header, data[pos + n:]


def read_header(path):
    return _split(Path(path).read_bytes())[0]


def load_checkpoint(path, expect=None, dtype=np.float32):
    """Rebuild the model from the stored config and fill in parameters.

    ``expect`` (a ModelConfig or dict) makes the loader refuse checkpoints
    written for a different architecture.
    """
    header, payload = _split(Path(path).read_bytes())
    cfg = ModelConfig.from_dict(header["model"])
    if expect is not None:
        want = expect if isinstance(expect, ModelConfig) else ModelConfig.from_dict(expect)
        if want.to_dict() != cfg.to_dict():
            raise CheckpointError(f"checkpoint config {cfg.to_dict()} does not match expected {want.to_dict()}")
    if len(payload) != header.get("payload_bytes", -1):
        raise CheckpointError(f"payload is {len(payload)} bytes, header says {header.get('payload_bytes')}")
    m = build(cfg, dtype=dtype)
    entries = header["manifest"]
    if [e["name"] for e in entries] != list(m.params):
        raise CheckpointError("manifest parameter names do not match the rebuilt architecture")
    expected_off = 0
    for e in entries:
        p = m.params[e["name"]]
        if tuple(e["shape"]) != p.shape:
            raise CheckpointError(f"{e['name']}: stored shape {e['shape']} != architecture {p.shape}")
        if e["offset"] != expected_off:
            raise CheckpointError(f"{e['name']}: manifest offsets are not contiguous")
        nbytes = 4 * p.data.size
        raw = payload[e["offset"]:e["offset"] + nbytes]
        if len(raw) != nbytes:
            raise CheckpointError("truncated checkpoint payload")
        p.data[...] = np.frombuffer(raw, dtype="<f4").reshape(p.shape)
        expected_off += nbytes
    return m, header
