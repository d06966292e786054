"""Volumetric grid primitives: typed 3-d volumes and deterministic reductions.

All voxel data is stored as C-contiguous numpy arrays in (depth, height,
width) order, so the flattened view is row-major with the width index
varying fastest. Every volume type copies and freezes its array on
construction; instances are immutable and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """An argument violates an operation's contract."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dims:
    """Grid extents in voxels: depth (slowest axis), height, width (fastest)."""

    depth: int
    height: int
    width: int

    def __post_init__(self) -> None:
        for name in ("depth", "height", "width"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v <= 0:
                raise DomainError(f"{name} must be a positive integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.n > np.iinfo(np.intp).max:
            raise DomainError("voxel count exceeds the platform index range")

    @property
    def n(self) -> int:
        """Total voxel count."""
        return self.depth * self.height * self.width

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.depth, self.height, self.width)

    @classmethod
    def of(cls, arr: np.ndarray) -> "Dims":
        if arr.ndim != 3:
            raise DomainError(f"expected a 3-d array, got shape {arr.shape}")
        return cls(int(arr.shape[0]), int(arr.shape[1]), int(arr.shape[2]))


@dataclass(frozen=True, eq=False)
class LabelVolume:
    """Integer class indices on a 3-d grid. Class 0 is reserved for background."""

    dims: Dims
    voxels: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        if not isinstance(self.num_classes, (int, np.integer)) or self.num_classes < 2:
            raise DomainError("num_classes must be an integer >= 2 (background plus targets)")
        if self.num_classes > 256:
            raise DomainError("at most 256 classes are supported")
        object.__setattr__(self, "num_classes", int(self.num_classes))
        vox = np.asarray(self.voxels)
        if vox.shape != self.dims.shape:
            raise DomainError(f"voxels shape {vox.shape} does not match dims {self.dims.shape}")
        if not np.issubdtype(vox.dtype, np.integer):
            raise DomainError(f"labels must be integers, got dtype {vox.dtype}")
        if vox.size and (int(vox.min()) < 0 or int(vox.max()) >= self.num_classes):
            raise DomainError("voxel labels must lie in [0, num_classes)")
        object.__setattr__(self, "voxels", _frozen(vox.astype(np.uint8, order="C", copy=True)))

    @classmethod
    def from_array(cls, arr: np.ndarray, num_classes: int | None = None) -> "LabelVolume":
        arr = np.asarray(arr)
        if num_classes is None:
            num_classes = max(2, int(arr.max()) + 1 if arr.size else 2)
        return cls(Dims.of(arr), arr, num_classes)

    def present_classes(self) -> list[int]:
        """Class ids that occur in the volume, ascending."""
        return [int(c) for c in np.unique(self.voxels)]

    def foreground_classes(self) -> list[int]:
        """Present class ids excluding background, ascending."""
        return [c for c in self.present_classes() if c != 0]


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """One class's {0,1} occupancy on a 3-d grid."""

    dims: Dims
    bits: np.ndarray

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits)
        if bits.shape != self.dims.shape:
            raise DomainError(f"bits shape {bits.shape} does not match dims {self.dims.shape}")
        if bits.dtype != np.bool_:
            if not np.issubdtype(bits.dtype, np.integer):
                raise DomainError(f"mask bits must be integer or bool, got dtype {bits.dtype}")
            if bits.size and not np.isin(bits, (0, 1)).all():
                raise DomainError("mask bits must be exactly 0 or 1")
        object.__setattr__(self, "bits", _frozen(bits.astype(np.uint8, order="C", copy=True)))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "BinaryMask":
        arr = np.asarray(arr)
        return cls(Dims.of(arr), arr)

    def count(self) -> int:
        """Number of set voxels."""
        return int(self.bits.sum(dtype=np.int64))

    def as_bool(self) -> np.ndarray:
        return self.bits != 0


@dataclass(frozen=True, eq=False)
class ProbVolume:
    """Per-class probabilities, shape (num_classes, depth, height, width).

    `normalized` asserts that channel sums are 1 per voxel (within 1e-5),
    as produced by a softmax head. Plain probability fields need not be
    normalized.
    """

    dims: Dims
    num_classes: int
    values: np.ndarray
    normalized: bool = False

    def __post_init__(self) -> None:
        if not isinstance(self.num_classes, (int, np.integer)) or self.num_classes < 2:
            raise DomainError("num_classes must be an integer >= 2")
        object.__setattr__(self, "num_classes", int(self.num_classes))
        vals = np.asarray(self.values, dtype=np.float64)
        expected = (self.num_classes,) + self.dims.shape
        if vals.shape != expected:
            raise DomainError(f"values shape {vals.shape} does not match {expected}")
        if vals.size and not ((vals >= 0.0) & (vals <= 1.0)).all():
            raise DomainError("probabilities must lie in [0, 1]")
        if self.normalized and vals.size:
            sums = vals.sum(axis=0)
            if np.abs(sums - 1.0).max() > 1e-5:
                raise DomainError("normalized volume has channel sums off 1 by more than 1e-5")
        object.__setattr__(self, "values", _frozen(np.ascontiguousarray(vals).copy()))

    @classmethod
    def from_array(cls, arr: np.ndarray, normalized: bool = False) -> "ProbVolume":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 4:
            raise DomainError(f"expected a (classes, depth, height, width) array, got shape {arr.shape}")
        dims = Dims(int(arr.shape[1]), int(arr.shape[2]), int(arr.shape[3]))
        return cls(dims, int(arr.shape[0]), arr, normalized)

    def channel(self, class_id: int) -> np.ndarray:
        if not 0 <= class_id < self.num_classes:
            raise DomainError(f"class_id {class_id} out of range [0, {self.num_classes})")
        return self.values[class_id]


@dataclass(frozen=True, eq=False)
class ScalarVolume:
    """A real-valued field on a 3-d grid (images, weight maps)."""

    dims: Dims
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != self.dims.shape:
            raise DomainError(f"values shape {vals.shape} does not match dims {self.dims.shape}")
        if vals.size and not np.isfinite(vals).all():
            raise DomainError("scalar volume contains NaN or Inf")
        object.__setattr__(self, "values", _frozen(np.ascontiguousarray(vals).copy()))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ScalarVolume":
        arr = np.asarray(arr, dtype=np.float64)
        return cls(Dims.of(arr), arr)


def one_hot(labels: LabelVolume, class_id: int) -> BinaryMask:
    """Binary occupancy of one class: 1 exactly where the label equals class_id."""
    if not isinstance(class_id, (int, np.integer)) or not 0 <= class_id < labels.num_classes:
        raise DomainError(f"class_id {class_id!r} out of range [0, {labels.num_classes})")
    return BinaryMask(labels.dims, labels.voxels == class_id)


def zscore_normalize(img: ScalarVolume) -> ScalarVolume:
    """Standardize intensities to zero mean and unit standard deviation.

    Uses the population standard deviation over all voxels. A constant
    volume (sigma below 1e-12) maps to all zeros instead of raising, so
    padded or cropped constant regions do not abort processing.
    """
    vals = img.values
    mu = float(vals.mean())
    sigma = float(vals.std())
    if sigma < 1e-12:
        return ScalarVolume(img.dims, np.zeros(img.dims.shape))
    return ScalarVolume(img.dims, (vals - mu) / sigma)


def reduce_sum(values) -> float:
    """Deterministic sum: exact extended-precision accumulation in a fixed order.

    Repeated calls on an identical sequence return bit-identical results
    regardless of how callers parallelize around it. NaN inputs are
    rejected.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.size and np.isnan(arr).any():
        raise DomainError("reduce_sum: NaN in input")
    return math.fsum(arr.ravel().tolist())
