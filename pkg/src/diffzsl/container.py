"""One-line-JSON-header + raw-binary-blocks container.

Shared by feature files, encoder snapshots, and model checkpoints. The
header is a single UTF-8 JSON line (sorted keys, so identical content is
byte-identical); each array listed in header["arrays"] follows in order
as little-endian raw bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

_DTYPES = {"f4": "<f4", "f8": "<f8", "i4": "<i4", "u1": "|u1"}


class ContainerError(ValueError):
    pass


def write_container(path, header: dict, arrays: list) -> None:
    """arrays: list of (name, ndarray); dtype must be f4/f8/i4/u1."""
    header = dict(header)
    manifest = []
    blocks = []
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr)
        code = {np.dtype(np.float32): "f4", np.dtype(np.float64): "f8",
                np.dtype(np.int32): "i4", np.dtype(np.uint8): "u1"}.get(arr.dtype)
        if code is None:
            raise ContainerError(f"unsupported dtype {arr.dtype} for array {name!r}")
        manifest.append({"name": name, "shape": list(arr.shape), "dtype": code})
        blocks.append(arr.astype(_DTYPES[code]).tobytes())
    header["arrays"] = manifest
    line = json.dumps(header, sort_keys=True).encode("utf-8") + b"\n"
    with open(path, "wb") as fh:
        fh.write(line)
        for block in blocks:
            fh.write(block)


def read_container(path):
    """Returns (header dict, {name: ndarray}). Truncation errors name the offset."""
    path = Path(path)
    raw = path.read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise ContainerError(f"{path}: no header line found")
    try:
        header = json.loads(raw[: nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{path}: malformed header: {exc}") from exc
    if not isinstance(header, dict) or "arrays" not in header:
        raise ContainerError(f"{path}: malformed header: missing 'arrays' manifest")
    offset = nl + 1
    out = {}
    for entry in header["arrays"]:
        shape = tuple(int(s) for s in entry["shape"])
        dtype = np.dtype(_DTYPES[entry["dtype"]])
        nbytes = int(np.prod(shape)) * dtype.itemsize if shape else dtype.itemsize
        end = offset + nbytes
        if end > len(raw):
            raise ContainerError(
                f"{path}: truncated payload for array {entry['name']!r}: "
                f"need bytes [{offset}, {end}) but file has {len(raw)}"
            )
        out[entry["name"]] = np.frombuffer(raw[offset:end], dtype=dtype).reshape(shape).copy()
        offset = end
    return header, out
