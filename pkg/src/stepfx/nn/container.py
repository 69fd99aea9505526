"""Binary weight container: JSON header + raw little-endian float payload.

Layout: ``SFXW`` magic, u32 version, u32 header length, UTF-8 JSON header,
then the arrays' float32 bytes concatenated in header order. The header
carries the caller's manifest dict plus array names/shapes and a SHA-256
of the payload, verified on load.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SFXW"
VERSION = 1


class CorruptModelError(RuntimeError):
    """Payload failed checksum or structural validation."""


def save_weights(path: str | Path, manifest: dict, arrays: dict[str, np.ndarray]) -> None:
    order = list(arrays)
    blobs = [np.ascontiguousarray(arrays[name], dtype="<f4").tobytes() for name in order]
    payload = b"".join(blobs)
    header = {
        "manifest": manifest,
        "arrays": [
            {"name": name, "shape": list(arrays[name].shape)} for name in order
        ],
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header_bytes)))
        fh.write(header_bytes)
        fh.write(payload)


def load_weights(path: str | Path):
    """Returns (manifest, {name: float32 array}); raises CorruptModelError."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise CorruptModelError(f"{path}: bad magic {magic!r}")
        version, header_len = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise CorruptModelError(f"{path}: unsupported container version {version}")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        payload = fh.read()
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise CorruptModelError(f"{path}: payload checksum mismatch")
    arrays = {}
    offset = 0
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 4
        chunk = payload[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise CorruptModelError(f"{path}: truncated payload at {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(chunk, dtype="<f4").reshape(shape).copy()
        offset += nbytes
    return header["manifest"], arrays
