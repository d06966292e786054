"""Binary 3-d morphology: box erosion, contour extraction, contour weight maps.

The contour of an object is the set difference between the object and its
erosion, computed per class and iterated a configurable number of times
(default 6 passes of a 3x3x3 box). Contour voxels receive an elevated
weight in the weighted cross-entropy; the weight map is two-level,
{1, contour_gain}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import ndimage

from .volumes import BinaryMask, Dims, DomainError, LabelVolume, ScalarVolume, one_hot

BOUNDARY_POLICIES = ("zero", "replicate")


@dataclass(frozen=True)
class StructuringElement:
    """Full-box neighborhood. Extents are per-axis and must be odd."""

    extents: tuple[int, int, int] = (3, 3, 3)

    def __post_init__(self) -> None:
        if len(self.extents) != 3:
            raise DomainError("structuring element needs one extent per axis")
        ext = tuple(int(e) for e in self.extents)
        for e in ext:
            if e < 1 or e % 2 == 0:
                raise DomainError(f"extents must be odd and >= 1, got {self.extents}")
        object.__setattr__(self, "extents", ext)

    @classmethod
    def cube(cls, extent: int) -> "StructuringElement":
        return cls((extent, extent, extent))

    def effective_extents(self, dims: Dims) -> tuple[int, int, int]:
        """Collapse the element along unit axes so single-slice grids keep
        their in-plane structure instead of eroding to nothing."""
        return tuple(1 if s == 1 else e for s, e in zip(dims.shape, self.extents))


@dataclass(frozen=True)
class ContourSpec:
    """How contours are extracted: element, erosion passes, border handling.

    With the default "zero" policy everything outside the volume counts
    as background, so objects touching the border erode there too and any
    nonempty object has a nonempty contour. "replicate" extends edge
    voxels outward instead.
    """

    element: StructuringElement = StructuringElement()
    iterations: int = 6
    boundary_policy: str = "zero"

    def __post_init__(self) -> None:
        if not isinstance(self.iterations, (int, np.integer)) or self.iterations < 1:
            raise DomainError(f"iterations must be >= 1, got {self.iterations!r}")
        object.__setattr__(self, "iterations", int(self.iterations))
        if self.boundary_policy not in BOUNDARY_POLICIES:
            raise DomainError(f"boundary_policy must be one of {BOUNDARY_POLICIES}")


def erode(mask: BinaryMask, spec: ContourSpec) -> BinaryMask:
    """Iterated binary erosion: a voxel survives one pass iff every voxel
    under the element centered there is set."""
    arr = mask.as_bool()
    ext = spec.element.effective_extents(mask.dims)
    structure = np.ones(ext, dtype=bool)
    if spec.boundary_policy == "zero":
        out = ndimage.binary_erosion(
            arr, structure=structure, iterations=spec.iterations, border_value=0
        )
    else:
        # Replicate-edge: pad by the element radius with edge values each
        # pass, erode, crop back. Padding covers the full reach, so the
        # border value never enters the cropped region.
        pad = tuple((e // 2, e // 2) for e in ext)
        crop = tuple(slice(p, p + s) for (p, _), s in zip(pad, arr.shape))
        out = arr
        for _ in range(spec.iterations):
            padded = np.pad(out, pad, mode="edge")
            out = ndimage.binary_erosion(padded, structure=structure, border_value=1)[crop]
    return BinaryMask(mask.dims, out)


def extract_contour(mask: BinaryMask, spec: ContourSpec) -> tuple[BinaryMask, BinaryMask]:
    """Split a mask into (contour, interior).

    interior is the eroded mask; contour is the mask minus its interior.
    The two partitions are disjoint and their union is the input mask,
    exactly.
    """
    interior = erode(mask, spec)
    contour = BinaryMask(mask.dims, mask.as_bool() & ~interior.as_bool())
    return contour, interior


@lru_cache(maxsize=1024)
def contour_partition(labels: LabelVolume, class_id: int, spec: ContourSpec) -> tuple[BinaryMask, BinaryMask]:
    """Cached (contour, interior) of one class of a label volume.

    Keyed on volume identity; label volumes are immutable, so reusing the
    result for repeated loss evaluations on the same ground truth is safe.
    """
    return extract_contour(one_hot(labels, class_id), spec)


@lru_cache(maxsize=64)
def build_weight_map(labels: LabelVolume, spec: ContourSpec, contour_gain: float = 2.0) -> ScalarVolume:
    """Per-voxel weights for the weighted cross-entropy.

    Voxels on the contour of any foreground class get `contour_gain`,
    everything else gets 1. With contour_gain=1 the map is uniform and
    the weighted cross-entropy degenerates to the plain one.
    """
    contour_gain = float(contour_gain)
    if not math.isfinite(contour_gain):
        raise DomainError("contour_gain must be finite")
    if contour_gain < 1.0:
        raise DomainError(f"contour_gain must be >= 1, got {contour_gain}")
    union = np.zeros(labels.dims.shape, dtype=bool)
    for class_id in labels.foreground_classes():
        contour, _ = contour_partition(labels, class_id, spec)
        union |= contour.as_bool()
    return ScalarVolume(labels.dims, np.where(union, contour_gain, 1.0))
