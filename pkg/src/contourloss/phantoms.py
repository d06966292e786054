"""Synthetic phantom volumes: a solid rounded blob with a thin embedded shell.

The geometry deliberately reproduces the class imbalance that motivates
contour weighting: background dominates the grid, and the shell class is
a sliver of the foreground (<5% by construction with the defaults).

The blob is a fourth-power superellipsoid rather than a Euclidean ball:
at desk scale that is what keeps a nonempty interior under the default
six box-erosion passes (the eroded set needs a 13-voxel box inside the
object, which no ball fitting a 32-grid with margins can contain).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .volumes import Dims, DomainError, LabelVolume, ScalarVolume

log = logging.getLogger(__name__)

CLASS_NAMES = ("background", "blob", "shell")
CLASS_INTENSITY = (0.20, 0.55, 0.85)


@dataclass(frozen=True)
class PhantomSpec:
    """Geometry and sampling parameters for one batch of phantoms.

    margin keeps every shape at least that many voxels away from the
    volume border; it should be at least the erosion footprint (contour
    iterations) so contours never interact with the border. The shell is
    a thin spherical ring carved inside the blob.
    """

    dims: Dims = field(default_factory=lambda: Dims(32, 32, 32))
    num_classes: int = 3
    blob_radius_range: tuple[int, int] = (9, 9)
    shell_radius: float = 2.5
    shell_thickness: int = 1
    noise_sigma: float = 0.10
    count: int = 20
    seed: int = 1
    margin: int = 6

    def __post_init__(self) -> None:
        if self.num_classes not in (2, 3):
            raise DomainError("phantom geometry supports 2 classes (blob) or 3 (blob + shell)")
        lo, hi = self.blob_radius_range
        if not 1 <= lo <= hi:
            raise DomainError(f"bad blob_radius_range {self.blob_radius_range}")
        if self.shell_radius < 1 or self.shell_thickness < 1:
            raise DomainError("shell radius and thickness must be >= 1")
        if self.margin < 0 or self.count < 0:
            raise DomainError("margin and count must be non-negative")
        if self.noise_sigma < 0:
            raise DomainError("noise_sigma must be non-negative")
        if self.num_classes == 3 and self.shell_radius + self.shell_thickness + 1 > lo:
            raise DomainError("shell does not fit inside the smallest blob")


def class_volume_fractions(labels: LabelVolume) -> dict[int, float]:
    """Fraction of voxels per class id."""
    counts = np.bincount(labels.voxels.reshape(-1), minlength=labels.num_classes)
    return {c: float(counts[c]) / labels.dims.n for c in range(labels.num_classes)}


def generate_phantoms(spec: PhantomSpec) -> list[tuple[ScalarVolume, LabelVolume]]:
    """Deterministically sample ``spec.count`` (image, truth) pairs.

    Each phantom is a solid rounded blob (class 1, a 4-norm ball) with,
    for 3 classes, a thin spherical shell (class 2) carved inside it at a
    jittered offset. Images are flat per-class intensities plus Gaussian
    noise.
    """
    rng = np.random.default_rng(spec.seed)
    dims = spec.dims
    r_hi = spec.blob_radius_range[1]
    for axis_len in dims.shape:
        if r_hi + spec.margin > (axis_len - 1) // 2:
            raise DomainError(
                f"blob radius {r_hi} with margin {spec.margin} does not fit in dims {dims.shape}"
            )
    grid = np.indices(dims.shape)
    intensity = np.asarray(CLASS_INTENSITY[:spec.num_classes])

    pairs = []
    for k in range(spec.count):
        r = int(rng.integers(spec.blob_radius_range[0], spec.blob_radius_range[1] + 1))
        center = np.array([
            int(rng.integers(r + spec.margin, s - 1 - r - spec.margin + 1))
            for s in dims.shape
        ])
        offsets = grid - center.reshape(3, 1, 1, 1)
        d4 = np.sum(offsets.astype(np.float64) ** 4, axis=0)
        labels = np.zeros(dims.shape, dtype=np.uint8)
        labels[d4 <= float(r) ** 4] = 1

        if spec.num_classes == 3:
            # Shell center jitter bounded so the ring stays strictly inside
            # the blob (the 4-norm ball contains the 2-norm ball of the
            # same radius, so the Euclidean bound suffices).
            head = r - (spec.shell_radius + spec.shell_thickness) - 1
            per_axis = int(head / np.sqrt(3.0))
            off = rng.integers(-per_axis, per_axis + 1, size=3) if per_axis > 0 else np.zeros(3, dtype=int)
            sd2 = np.sum((grid - (center + off).reshape(3, 1, 1, 1)) ** 2, axis=0)
            inner = spec.shell_radius
            outer = spec.shell_radius + spec.shell_thickness
            labels[(sd2 >= inner * inner) & (sd2 < outer * outer)] = 2

        image = intensity[labels] + rng.normal(0.0, spec.noise_sigma, dims.shape)
        truth = LabelVolume(dims, labels, spec.num_classes)
        pairs.append((ScalarVolume(dims, image), truth))
        log.debug("phantom %d: fractions %s", k, class_volume_fractions(truth))
    return pairs
