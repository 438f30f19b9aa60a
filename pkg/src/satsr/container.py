"""Single-file sample containers for paired low/high resolution scenes.

A container is one file: a UTF-8 JSON header on the first line (terminated
by a newline) followed by the raw little-endian bytes of each array, in the
order the header lists them.  No pickling, no compression; a round trip
through disk is bit exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bands import SAR_DB_MAX, SAR_DB_MIN

FORMAT_NAME = "satsr-sample"
FORMAT_VERSION = 1
CONTAINER_EXT = ".lssr"

SCALE_FACTOR = 3

# Land-cover codes follow the 9-class Dynamic World taxonomy.
LANDCOVER_CLASSES = (
    "water",
    "trees",
    "grass",
    "flooded_vegetation",
    "crops",
    "shrub_and_scrub",
    "built",
    "bare",
    "snow_and_ice",
)
N_LANDCOVER = len(LANDCOVER_CLASSES)

# dtype string -> numpy little-endian dtype, the only payload types allowed
_DTYPES = {"<f4": np.dtype("<f4"), "<u1": np.dtype("<u1")}

# name -> (dtype string, shape template); h/w refer to the LR grid,
# H/W = SCALE_FACTOR * h/w to the HR grid
_ARRAY_SCHEMA = (
    ("lr", "<f4", ("h", "w", 6)),
    ("hr", "<f4", ("H", "W", 6)),
    ("dem", "<f4", ("H", "W")),
    ("landcover", "<u1", ("H", "W")),
    ("sar", "<f4", ("H", "W", 2)),
)


class ContainerError(Exception):
    """Base class for container read failures."""


class MalformedHeaderError(ContainerError):
    """First line is not valid JSON or required fields are missing."""


class SchemaMismatchError(ContainerError):
    """Header parses but declares the wrong format, dtypes, or shapes."""


class TruncatedPayloadError(ContainerError):
    """File ends before all declared array bytes are present."""


@dataclass
class SamplePair:
    """One training/evaluation sample.

    lr:        (h, w, 6) float32 reflectance in [0, 1]
    hr:        (3h, 3w, 6) float32 reflectance in [0, 1]
    dem:       (3h, 3w) float32 elevation in meters, finite
    landcover: (3h, 3w) uint8 class codes in [0, 8]
    sar:       (3h, 3w, 2) float32 backscatter in dB, VV then VH,
               within [-50, 10]
    month:     calendar month, 1..12
    acquisition_gap_days: days between optical and radar acquisition, 0..7
    """

    sample_id: str
    lr: np.ndarray
    hr: np.ndarray
    dem: np.ndarray
    landcover: np.ndarray
    sar: np.ndarray
    month: int
    acquisition_gap_days: int

    def validate(self) -> None:
        """Raise ValueError on any violated invariant."""
        if not self.sample_id:
            raise ValueError("sample_id must be non-empty")
        lr, hr = self.lr, self.hr
        if lr.ndim != 3 or lr.shape[2] != 6:
            raise ValueError(f"lr must be (h, w, 6), got {lr.shape}")
        h, w = lr.shape[:2]
        H, W = SCALE_FACTOR * h, SCALE_FACTOR * w
        if hr.shape != (H, W, 6):
            raise ValueError(
                f"hr must be ({H}, {W}, 6) for lr {lr.shape[:2]}, got {hr.shape}"
            )
        if self.dem.shape != (H, W):
            raise ValueError(f"dem must be ({H}, {W}), got {self.dem.shape}")
        if self.landcover.shape != (H, W):
            raise ValueError(
                f"landcover must be ({H}, {W}), got {self.landcover.shape}"
            )
        if self.sar.shape != (H, W, 2):
            raise ValueError(f"sar must be ({H}, {W}, 2), got {self.sar.shape}")
        for name, arr, dt in (
            ("lr", lr, np.float32),
            ("hr", hr, np.float32),
            ("dem", self.dem, np.float32),
            ("sar", self.sar, np.float32),
        ):
            if arr.dtype != dt:
                raise ValueError(f"{name} must be {dt.__name__}, got {arr.dtype}")
        if self.landcover.dtype != np.uint8:
            raise ValueError(f"landcover must be uint8, got {self.landcover.dtype}")
        for name, arr in (("lr", lr), ("hr", hr)):
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains non-finite values")
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise ValueError(f"{name} reflectance must lie in [0, 1]")
        if not np.isfinite(self.dem).all():
            raise ValueError("dem contains non-finite values")
        if self.landcover.max(initial=0) >= N_LANDCOVER:
            raise ValueError(
                f"landcover codes must be < {N_LANDCOVER}, "
                f"got max {int(self.landcover.max())}"
            )
        if not np.isfinite(self.sar).all():
            raise ValueError("sar contains non-finite values")
        if self.sar.min() < SAR_DB_MIN or self.sar.max() > SAR_DB_MAX:
            raise ValueError(
                f"sar backscatter must lie in [{SAR_DB_MIN}, {SAR_DB_MAX}] dB"
            )
        if not 1 <= int(self.month) <= 12:
            raise ValueError(f"month must be in 1..12, got {self.month}")
        if not 0 <= int(self.acquisition_gap_days) <= 7:
            raise ValueError(
                f"acquisition_gap_days must be in 0..7, got {self.acquisition_gap_days}"
            )

    def _arrays(self) -> list[tuple[str, np.ndarray]]:
        return [
            ("lr", self.lr),
            ("hr", self.hr),
            ("dem", self.dem),
            ("landcover", self.landcover),
            ("sar", self.sar),
        ]


def write_sample(path: str | Path, sample: SamplePair) -> None:
    """Serialize a validated sample to a single container file."""
    sample.validate()
    arrays = []
    header_arrays = []
    for (name, dtype_str, _), (_, arr) in zip(_ARRAY_SCHEMA, sample._arrays()):
        arr_le = np.ascontiguousarray(arr, dtype=_DTYPES[dtype_str])
        arrays.append(arr_le)
        header_arrays.append(
            {"name": name, "dtype": dtype_str, "shape": list(arr_le.shape)}
        )
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "byte_order": "little",
        "id": sample.sample_id,
        "month": int(sample.month),
        "acquisition_gap_days": int(sample.acquisition_gap_days),
        "arrays": header_arrays,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":")).encode("utf-8"))
        fh.write(b"\n")
        for arr in arrays:
            fh.write(arr.tobytes())


def _expected_shape(template: tuple, h: int, w: int) -> tuple[int, ...]:
    subst = {"h": h, "w": w, "H": SCALE_FACTOR * h, "W": SCALE_FACTOR * w}
    return tuple(subst.get(dim, dim) for dim in template)


def read_sample(path: str | Path) -> SamplePair:
    """Parse a container file back into a SamplePair.

    Raises MalformedHeaderError, SchemaMismatchError, or
    TruncatedPayloadError for structural problems, and ValueError when the
    payload decodes but violates a sample invariant.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    newline = raw.find(b"\n")
    if newline < 0:
        raise MalformedHeaderError(f"{path}: no header line found")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedHeaderError(f"{path}: header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise MalformedHeaderError(f"{path}: header must be a JSON object")
    for key in ("format", "version", "id", "month", "acquisition_gap_days", "arrays"):
        if key not in header:
            raise MalformedHeaderError(f"{path}: header missing field {key!r}")
    if header["format"] != FORMAT_NAME or header["version"] != FORMAT_VERSION:
        raise SchemaMismatchError(
            f"{path}: expected {FORMAT_NAME} v{FORMAT_VERSION}, "
            f"got {header['format']!r} v{header['version']!r}"
        )
    declared = header["arrays"]
    if not isinstance(declared, list) or len(declared) != len(_ARRAY_SCHEMA):
        raise SchemaMismatchError(
            f"{path}: header must declare exactly {len(_ARRAY_SCHEMA)} arrays"
        )
    # LR spatial size anchors every other shape.
    lr_decl = declared[0]
    try:
        lr_shape = tuple(int(v) for v in lr_decl["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedHeaderError(f"{path}: bad array declaration: {exc}") from exc
    if len(lr_shape) != 3:
        raise SchemaMismatchError(f"{path}: lr must be rank 3, got shape {lr_shape}")
    h, w = lr_shape[0], lr_shape[1]

    arrays: dict[str, np.ndarray] = {}
    offset = newline + 1
    for (name, dtype_str, template), decl in zip(_ARRAY_SCHEMA, declared):
        if decl.get("name") != name or decl.get("dtype") != dtype_str:
            raise SchemaMismatchError(
                f"{path}: expected array {name!r} with dtype {dtype_str!r}, "
                f"got {decl.get('name')!r}/{decl.get('dtype')!r}"
            )
        shape = tuple(int(v) for v in decl["shape"])
        expected = _expected_shape(template, h, w)
        if shape != expected:
            raise SchemaMismatchError(
                f"{path}: array {name!r} must have shape {expected}, got {shape}"
            )
        dtype = _DTYPES[dtype_str]
        nbytes = dtype.itemsize * int(np.prod(shape))
        if offset + nbytes > len(raw):
            raise TruncatedPayloadError(
                f"{path}: array {name!r} needs {nbytes} bytes at offset {offset}, "
                f"file has {len(raw) - offset}"
            )
        flat = np.frombuffer(raw, dtype=dtype, count=int(np.prod(shape)), offset=offset)
        arrays[name] = flat.reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise SchemaMismatchError(
            f"{path}: {len(raw) - offset} trailing bytes after declared payload"
        )

    sample = SamplePair(
        sample_id=str(header["id"]),
        lr=arrays["lr"],
        hr=arrays["hr"],
        dem=arrays["dem"],
        landcover=arrays["landcover"],
        sar=arrays["sar"],
        month=int(header["month"]),
        acquisition_gap_days=int(header["acquisition_gap_days"]),
    )
    sample.validate()
    return sample
