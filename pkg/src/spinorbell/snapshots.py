"""Binary container for condensate, kernel and state snapshots.

Layout: 8 magic bytes, uint32 little-endian header length, UTF-8 JSON header,
then the raw little-endian arrays back to back in header order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SPBSNAP1"
_DTYPES = {"c16": "<c16", "f8": "<f8", "i8": "<i8"}


def write_container(path, meta: dict, arrays: dict) -> None:
    entries = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        if np.iscomplexobj(arr):
            code = "c16"
        elif np.issubdtype(arr.dtype, np.integer):
            code = "i8"
        else:
            code = "f8"
        data = np.ascontiguousarray(arr, dtype=_DTYPES[code])
        entries.append({"name": name, "dtype": code, "shape": list(data.shape)})
        blobs.append(data.tobytes())
    header = json.dumps({"meta": meta, "arrays": entries}, sort_keys=True).encode()
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)
    tmp.replace(path)


def read_container(path, names=None) -> tuple[dict, dict]:
    """Return (meta, arrays); ``names`` restricts which arrays are loaded."""
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path} is not a snapshot container")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen))
        arrays = {}
        for entry in header["arrays"]:
            dtype = np.dtype(_DTYPES[entry["dtype"]])
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            nbytes = count * dtype.itemsize
            if names is not None and entry["name"] not in names:
                fh.seek(nbytes, 1)
                continue
            arrays[entry["name"]] = np.frombuffer(fh.read(nbytes), dtype=dtype).reshape(entry["shape"])
    return header["meta"], arrays
