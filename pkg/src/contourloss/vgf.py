"""VGF: a minimal volume file format.

Layout: one line of JSON, newline-terminated, followed by raw voxel data.

    {"magic":"VGF1","dims":[d,h,w],"dtype":"u8","channels":1,"kind":"labels"}\\n
    <payload: channels * d * h * w values, little-endian, row-major
     (width fastest), channel-major for multi-channel data>

dtype is "u8" or "f32"; kind is one of labels / image / probs / weights.
The labels kind requires u8 and a single channel. Writes are atomic
(temp file + rename) and round-trip bit-exactly at the stored dtype.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .volumes import (
    BinaryMask,
    Dims,
    DomainError,
    LabelVolume,
    ProbVolume,
    ScalarVolume,
)

MAGIC = "VGF1"
KINDS = ("labels", "image", "probs", "weights")
_DTYPES = {"u8": np.dtype("<u1"), "f32": np.dtype("<f4")}
_MAX_VOXELS = 1 << 40


def _header_bytes(dims: tuple[int, int, int], dtype: str, channels: int, kind: str) -> bytes:
    header = {"magic": MAGIC, "dims": list(dims), "dtype": dtype,
              "channels": channels, "kind": kind}
    return (json.dumps(header, separators=(",", ":")) + "\n").encode("ascii")


def write_vgf(path: str, array: np.ndarray, kind: str, dtype: str) -> None:
    """Write a (d, h, w) or (channels, d, h, w) array.

    Values are cast to the stored dtype; the caller is responsible for
    any range checks before the cast.
    """
    if kind not in KINDS:
        raise DomainError(f"kind must be one of {KINDS}")
    if dtype not in _DTYPES:
        raise DomainError(f"dtype must be one of {tuple(_DTYPES)}")
    arr = np.asarray(array)
    if arr.ndim == 3:
        arr = arr[np.newaxis]
    if arr.ndim != 4:
        raise DomainError(f"expected a 3-d or 4-d array, got shape {array.shape}")
    channels = int(arr.shape[0])
    dims = tuple(int(s) for s in arr.shape[1:])
    if kind == "labels" and (dtype != "u8" or channels != 1):
        raise DomainError("labels kind requires dtype u8 and a single channel")
    payload = np.ascontiguousarray(arr).astype(_DTYPES[dtype]).tobytes(order="C")
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(_header_bytes(dims, dtype, channels, kind))
        f.write(payload)
    os.replace(tmp, path)


def read_vgf(path: str) -> tuple[dict, np.ndarray]:
    """Read header and payload; returns (header dict, (channels,d,h,w) array)."""
    with open(path, "rb") as f:
        line = f.readline(1 << 16)
        payload = f.read()
    if not line.endswith(b"\n"):
        raise DomainError(f"{path}: missing or oversized header line")
    try:
        header = json.loads(line.decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DomainError(f"{path}: malformed header ({exc})") from exc
    if not isinstance(header, dict) or header.get("magic") != MAGIC:
        raise DomainError(f"{path}: not a {MAGIC} file")
    try:
        dims = [int(v) for v in header["dims"]]
        dtype = header["dtype"]
        channels = int(header["channels"])
        kind = header["kind"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DomainError(f"{path}: incomplete header ({exc})") from exc
    if len(dims) != 3 or any(v <= 0 for v in dims):
        raise DomainError(f"{path}: bad dims {dims}")
    if dtype not in _DTYPES:
        raise DomainError(f"{path}: unknown dtype {dtype!r}")
    if kind not in KINDS:
        raise DomainError(f"{path}: unknown kind {kind!r}")
    if channels <= 0:
        raise DomainError(f"{path}: bad channel count {channels}")
    n = dims[0] * dims[1] * dims[2]
    if n > _MAX_VOXELS:
        raise DomainError(f"{path}: dims {dims} overflow the supported volume size")
    if kind == "labels" and (dtype != "u8" or channels != 1):
        raise DomainError(f"{path}: labels kind requires dtype u8 and a single channel")
    expected = channels * n * _DTYPES[dtype].itemsize
    if len(payload) != expected:
        raise DomainError(f"{path}: payload is {len(payload)} bytes, header implies {expected}")
    arr = np.frombuffer(payload, dtype=_DTYPES[dtype]).reshape((channels, *dims)).copy()
    return header, arr


def write_labels(path: str, volume: LabelVolume) -> None:
    write_vgf(path, volume.voxels, "labels", "u8")


def read_labels(path: str, num_classes: int | None = None) -> LabelVolume:
    """Read a labels file. num_classes defaults to max label + 1 (at least 2)."""
    header, arr = read_vgf(path)
    if header["kind"] != "labels":
        raise DomainError(f"{path}: expected kind labels, got {header['kind']!r}")
    return LabelVolume.from_array(arr[0], num_classes)


def write_mask(path: str, mask: BinaryMask) -> None:
    write_vgf(path, mask.bits, "labels", "u8")


def write_image(path: str, volume: ScalarVolume) -> None:
    write_vgf(path, volume.values, "image", "f32")


def read_image(path: str) -> ScalarVolume:
    header, arr = read_vgf(path)
    if header["kind"] != "image":
        raise DomainError(f"{path}: expected kind image, got {header['kind']!r}")
    return ScalarVolume.from_array(arr[0].astype(np.float64))


def write_probs(path: str, volume: ProbVolume) -> None:
    write_vgf(path, volume.values, "probs", "f32")


def read_probs(path: str, normalized: bool = False) -> ProbVolume:
    header, arr = read_vgf(path)
    if header["kind"] != "probs":
        raise DomainError(f"{path}: expected kind probs, got {header['kind']!r}")
    if header["channels"] < 2:
        raise DomainError(f"{path}: probability volumes need at least 2 channels")
    return ProbVolume.from_array(arr.astype(np.float64), normalized)


def write_weights(path: str, volume: ScalarVolume) -> None:
    write_vgf(path, volume.values, "weights", "f32")


def read_weights(path: str) -> ScalarVolume:
    header, arr = read_vgf(path)
    if header["kind"] != "weights":
        raise DomainError(f"{path}: expected kind weights, got {header['kind']!r}")
    return ScalarVolume.from_array(arr[0].astype(np.float64))
