"""Versioned binary checkpoints.

Layout (all integers little-endian unsigned 32-bit)::

    8 bytes   magic  b"ITNCKPT\\x00"
    u32       format version
    u32       header length H, then H bytes of UTF-8 JSON
              (architecture, n_features, n_classes, seed, metadata)
    u32       record count R, then R records of
              u32 name length, name (UTF-8), u32 rows, u32 cols,
              rows*cols little-endian float64 values in row-major order

Records hold every parameter and every running statistic by dotted name.
"""
import json
import struct

import numpy as np

from .errors import ConfigError, DataError
from .model import ArchConfig, InterpreTabNet

MAGIC = b"ITNCKPT\x00"
VERSION = 1


def save_checkpoint(model, path, metadata=None):
    header = {
        "arch": model.config.to_dict(),
        "n_features": model.n_features,
        "n_classes": model.n_classes,
        "seed": model.seed,
        "metadata": metadata or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    state = model.state_arrays()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(state)))
        for name, arr in state.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<II", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path):
    """Return (model, metadata) rebuilt from ``path``."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from None
    if raw[:8] != MAGIC:
        raise DataError(f"{path} is not an InterpreTabNet checkpoint")
    version, hlen = struct.unpack_from("<II", raw, 8)
    if version != VERSION:
        raise ConfigError(f"checkpoint format version {version} is not supported (expected {VERSION})")
    pos = 16
    header = json.loads(raw[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    (count,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    state = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        name = raw[pos:pos + nlen].decode("utf-8")
        pos += nlen
        rows, cols = struct.unpack_from("<II", raw, pos)
        pos += 8
        nbytes = rows * cols * 8
        state[name] = np.frombuffer(raw[pos:pos + nbytes], dtype="<f8").reshape(rows, cols).astype(np.float64)
        pos += nbytes
    arch = ArchConfig(**header["arch"])
    model = InterpreTabNet(header["n_features"], header["n_classes"], arch, seed=header["seed"])
    model.load_state_arrays(state)
    model.eval()
    return model, header.get("metadata", {})
