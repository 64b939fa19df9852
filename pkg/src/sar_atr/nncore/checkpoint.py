"""Self-describing parameter container.

Layout: a magic line, one JSON header line (config plus a tensor table of
name, role, shape and byte offset), then the raw little-endian float32
values of every tensor in table order.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = b"SARATR-CKPT 1\n"


def save(path, tensors: dict[str, np.ndarray], config: dict, roles: dict[str, str] | None = None):
    roles = roles or {}
    table, blobs, offset = [], [], 0
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        table.append({"name": name, "role": roles.get(name, ""), "shape": list(arr.shape),
                      "dtype": "<f4", "offset": offset, "nbytes": len(data)})
        blobs.append(data)
        offset += len(data)
    header = json.dumps({"config": config, "tensors": table}, sort_keys=True).encode()
    with open(Path(path), "wb") as fh:
        fh.write(MAGIC)
        fh.write(header + b"\n")
        for blob in blobs:
            fh.write(blob)


def load(path) -> tuple[dict, dict[str, np.ndarray], dict[str, str]]:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ValueError(f"{path}: not a checkpoint file")
    nl = raw.index(b"\n", len(MAGIC))
    header = json.loads(raw[len(MAGIC):nl])
    body = raw[nl + 1:]
    tensors, roles = {}, {}
    for entry in header["tensors"]:
        start = entry["offset"]
        arr = np.frombuffer(body, dtype=entry["dtype"], count=int(np.prod(entry["shape"], dtype=np.int64)),
                            offset=start)
        tensors[entry["name"]] = arr.reshape(entry["shape"]).astype(np.float32)
        roles[entry["name"]] = entry["role"]
    return header["config"], tensors, roles
