"""Flat parameter blob: magic, header length, JSON index, raw little-endian data.

The index maps each name to ``[offset, shape, dtype]`` with offsets in
bytes from the start of the data section. Extra header fields ride along
under ``"meta"``.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .tensor import Tensor

_MAGIC = b"NLBP"
_PREFIX = struct.Struct("<4sII")


def save_params(path, params: dict[str, Tensor], meta: dict | None = None) -> None:
    index, chunks, off = {}, [], 0
    for name, p in params.items():
        arr = np.ascontiguousarray(p.data, dtype=p.data.dtype.newbyteorder("<"))
        index[name] = [off, list(arr.shape), arr.dtype.str]
        chunks.append(arr.tobytes())
        off += arr.nbytes
    header = json.dumps({"index": index, "meta": meta or {}}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(_MAGIC, 1, len(header)))
        fh.write(header)
        for c in chunks:
            fh.write(c)


def load_params(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        buf = fh.read()
    magic, version, hlen = _PREFIX.unpack_from(buf, 0)
    if magic != _MAGIC or version != 1:
        raise ValueError(f"{path}: not a parameter blob")
    header = json.loads(buf[_PREFIX.size:_PREFIX.size + hlen])
    base = _PREFIX.size + hlen
    out = {}
    for name, (off, shape, dtype) in header["index"].items():
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(buf, dtype=np.dtype(dtype), count=n, offset=base + off)
        out[name] = arr.reshape(shape).astype(np.dtype(dtype).newbyteorder("="))
    return out, header["meta"]
