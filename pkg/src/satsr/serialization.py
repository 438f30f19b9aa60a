"""Checkpoint payload format: JSON header line + raw little-endian arrays.

Same layout idea as the sample containers, reused for adapter and trainer
checkpoints so nothing in the package depends on pickle.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

_DTYPES = {
    "<f4": np.dtype("<f4"),
    "<f8": np.dtype("<f8"),
    "<i8": np.dtype("<i8"),
    "<u1": np.dtype("<u1"),
    "<u4": np.dtype("<u4"),
    "<u8": np.dtype("<u8"),
}


class PayloadError(Exception):
    """Raised when a payload file cannot be decoded."""


def _dtype_code(arr: np.ndarray) -> str:
    for code, dt in _DTYPES.items():
        if arr.dtype == dt:
            return code
    raise PayloadError(f"unsupported dtype {arr.dtype}")


def write_payload(path: str | Path, meta: dict,
                  arrays: list[tuple[str, np.ndarray]]) -> None:
    """Write metadata plus named arrays to one file, bit exactly."""
    specs = []
    blobs = []
    for name, arr in arrays:
        shape = list(np.shape(arr))  # before ascontiguousarray: it turns 0-d into 1-d
        arr = np.ascontiguousarray(arr)
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        specs.append({"name": name, "dtype": _dtype_code(arr),
                      "shape": shape})
        blobs.append(arr.tobytes())
    header = {"meta": meta, "arrays": specs}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":"), sort_keys=True)
                 .encode("utf-8"))
        fh.write(b"\n")
        for blob in blobs:
            fh.write(blob)


def read_payload(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read back (meta, name -> array).  Raises PayloadError on damage."""
    with open(path, "rb") as fh:
        raw = fh.read()
    newline = raw.find(b"\n")
    if newline < 0:
        raise PayloadError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
        meta = header["meta"]
        specs = header["arrays"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise PayloadError(f"{path}: bad header: {exc}") from exc
    arrays: dict[str, np.ndarray] = {}
    offset = newline + 1
    for spec in specs:
        try:
            name = spec["name"]
            dtype = _DTYPES[spec["dtype"]]
            shape = tuple(int(v) for v in spec["shape"])
        except (KeyError, TypeError, ValueError) as exc:
            raise PayloadError(f"{path}: bad array spec: {exc}") from exc
        count = int(np.prod(shape)) if shape else 1
        nbytes = dtype.itemsize * count
        if offset + nbytes > len(raw):
            raise PayloadError(
                f"{path}: array {name!r} truncated "
                f"({len(raw) - offset} of {nbytes} bytes)"
            )
        arrays[name] = (np.frombuffer(raw, dtype=dtype, count=count,
                                      offset=offset).reshape(shape).copy())
        offset += nbytes
    if offset != len(raw):
        raise PayloadError(f"{path}: {len(raw) - offset} trailing bytes")
    return meta, arrays
