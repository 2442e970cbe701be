"""Flat named-array container for parameters.

File layout::

    8 bytes   magic  b"CPCFGCK1"
    8 bytes   little-endian uint64, length L of the JSON manifest
    L bytes   UTF-8 JSON manifest
    ...       concatenated array payloads, little-endian float64, C order

The manifest holds ``{"arrays": [{"name", "shape", "offset", "count"}],
"meta": {...}}`` where ``offset`` and ``count`` are in float64 elements from
the start of the payload.  Values round-trip bit-exactly.
"""

import json
import os
import struct

import numpy as np

MAGIC = b"CPCFGCK1"


def dumps(arrays, meta=None):
    entries, chunks, offset = [], [], 0
    for name, value in arrays.items():
        a = np.array(value, dtype="<f8", order="C")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset, "count": int(a.size)})
        chunks.append(a.tobytes())
        offset += a.size
    manifest = json.dumps({"arrays": entries, "meta": meta or {}}, sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(manifest)) + manifest + b"".join(chunks)


def loads(blob):
    if blob[:8] != MAGIC:
        raise ValueError("not a checkpoint container (bad magic)")
    (length,) = struct.unpack("<Q", blob[8:16])
    manifest = json.loads(blob[16 : 16 + length].decode("utf-8"))
    payload = np.frombuffer(blob, dtype="<f8", offset=16 + length)
    arrays = {}
    for e in manifest["arrays"]:
        chunk = payload[e["offset"] : e["offset"] + e["count"]]
        arrays[e["name"]] = chunk.reshape(tuple(e["shape"])).astype(np.float64)
    return arrays, manifest["meta"]


def atomic_write(path, data):
    tmp = f"{path}.tmp{os.getpid()}"
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(tmp, mode) as f:
        f.write(data)
    os.replace(tmp, path)


def save(path, arrays, meta=None):
    atomic_write(path, dumps(arrays, meta))


def load(path):
    with open(path, "rb") as f:
        return loads(f.read())
