"""Named-tensor archive used for checkpoints.

Layout::

    b"DCGCKPT\\0"                 8-byte magic
    uint32 little-endian          header length in bytes
    header (UTF-8 JSON)           {"version", "meta", "digest", "tensors": [
                                    {"name", "dtype", "shape", "offset", "nbytes"}, ...]}
    data blob                     row-major little-endian tensor data

``digest`` is the SHA-256 of the data blob.  Tensor names are dotted module
paths such as ``g1.blocks.0.conv.v``; optimizer moments are stored under
``adam_g.<param>.exp_avg`` and similar.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import IntegrityError, UnsupportedVersionError

MAGIC = b"DCGCKPT\0"
VERSION = 1


def write_archive(path, tensors: dict[str, np.ndarray], meta: dict) -> None:
    """Write tensors and JSON-serializable metadata atomically."""
    entries, chunks, offset = [], [], 0
    for name, arr in tensors.items():
        arr = np.asarray(arr, order="C")
        dtype = arr.dtype.newbyteorder("<")
        raw = arr.astype(dtype, copy=False).tobytes(order="C")
        entries.append({"name": name, "dtype": dtype.str, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    blob = b"".join(chunks)
    header = json.dumps({"version": VERSION, "meta": meta, "tensors": entries,
                         "digest": hashlib.sha256(blob).hexdigest()}).encode()
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(blob)
    os.replace(tmp, path)


def read_archive(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read an archive written by :func:`write_archive`.

    Raises:
        IntegrityError: missing, truncated or corrupt file.
        UnsupportedVersionError: written by another format version.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IntegrityError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(data) < len(MAGIC) + 4 or data[: len(MAGIC)] != MAGIC:
        raise IntegrityError(f"{path} is not a checkpoint archive")
    (hlen,) = struct.unpack("<I", data[len(MAGIC): len(MAGIC) + 4])
    start = len(MAGIC) + 4
    try:
        header = json.loads(data[start:start + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IntegrityError(f"{path}: corrupt header") from exc
    if header.get("version") != VERSION:
        raise UnsupportedVersionError(
            f"{path}: checkpoint format version {header.get('version')} is not supported (expected {VERSION})"
        )
    blob = data[start + hlen:]
    if hashlib.sha256(blob).hexdigest() != header["digest"]:
        raise IntegrityError(f"{path}: digest mismatch (truncated or corrupt)")
    tensors = {}
    for e in header["tensors"]:
        raw = blob[e["offset"]: e["offset"] + e["nbytes"]]
        tensors[e["name"]] = np.frombuffer(raw, dtype=np.dtype(e["dtype"])).reshape(e["shape"]).copy()
    return tensors, header["meta"]
