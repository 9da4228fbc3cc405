"""Binary container shared by coefficient, field and decomposition files.

Layout (all integers little-endian)::

    8 bytes   magic  b"CAUCHYOP"
    4 bytes   uint32 format version (currently 1)
    8 bytes   uint64 length H of the header
    H bytes   UTF-8 JSON header, keys sorted
    ...       array payloads, concatenated in header order

The header carries user metadata plus an ``arrays`` list of
``{"name", "dtype", "shape", "offset", "nbytes"}`` records; ``offset`` is
relative to the first payload byte.  Payloads are C-ordered (row-major)
and stored little-endian (``<c16``, ``<c8``, ``<f8``, ``<i8``), so files
are bit-identical across platforms.  Coefficient and field arrays are
laid out over ``(t, x..., matrix-row, matrix-col)`` resp. ``(t, x..., component)``.
"""
import json
import struct

import numpy as np

MAGIC = b"CAUCHYOP"
VERSION = 1
_ALLOWED = {"<c16", "<c8", "<f8", "<f4", "<i8"}


def write_container(path, header, arrays):
    """Write ``arrays`` (name -> ndarray) with metadata ``header``."""
    records = []
    payloads = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dt = arr.dtype.newbyteorder("<").str
        if dt not in _ALLOWED:
            raise TypeError(f"unsupported dtype {arr.dtype} for {name!r}")
        data = np.ascontiguousarray(arr, dtype=dt).tobytes()
        records.append({"name": name, "dtype": dt, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(data)})
        payloads.append(data)
        offset += len(data)
    meta = dict(header)
    meta["arrays"] = records
    head = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for data in payloads:
            fh.write(data)


def read_container(path):
    """Return ``(header, arrays)`` from a container file."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a cauchyop container")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported container version {version}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        body = fh.read()
    arrays = {}
    for rec in header["arrays"]:
        raw = body[rec["offset"]: rec["offset"] + rec["nbytes"]]
        arrays[rec["name"]] = np.frombuffer(raw, dtype=rec["dtype"]).reshape(rec["shape"]).copy()
    return header, arrays
