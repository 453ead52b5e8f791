"""Binary container: u32 LE header length, UTF-8 JSON header, raw LE arrays.

The header's ``arrays`` list gives ``name``, ``dtype`` and ``shape`` of each
array in file order.
"""
import json
import struct
from pathlib import Path

import numpy as np


def _le(dtype):
    return np.dtype(dtype).newbyteorder("<")


def dumps(header: dict, arrays: dict) -> bytes:
    meta = dict(header)
    meta["arrays"] = [
        {"name": name, "dtype": np.dtype(arr.dtype).str.lstrip("<>|="), "shape": list(arr.shape)}
        for name, arr in arrays.items()
    ]
    head = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [struct.pack("<I", len(head)), head]
    for arr in arrays.values():
        parts.append(np.ascontiguousarray(arr, dtype=_le(arr.dtype)).tobytes())
    return b"".join(parts)


def loads(blob: bytes):
    if len(blob) < 4:
        raise ValueError("container truncated")
    (n,) = struct.unpack("<I", blob[:4])
    header = json.loads(blob[4:4 + n].decode("utf-8"))
    pos = 4 + n
    arrays = {}
    for entry in header.pop("arrays"):
        dt = _le(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        size = count * dt.itemsize
        if pos + size > len(blob):
            raise ValueError(f"container truncated in array {entry['name']!r}")
        arr = np.frombuffer(blob, dtype=dt, count=count, offset=pos).reshape(entry["shape"])
        arrays[entry["name"]] = arr.astype(dt.newbyteorder("="), copy=True)
        pos += size
    if pos != len(blob):
        raise ValueError("trailing bytes after container arrays")
    return header, arrays


def save(path, header, arrays):
    Path(path).write_bytes(dumps(header, arrays))


def load(path):
    return loads(Path(path).read_bytes())
