"""Finite-difference gradient oracle and the self-check suite.

The finite-difference path shares no code with the analytical gradients;
it only re-evaluates loss values. ``brute_force_erode`` is the matching
independent oracle for the morphology: it enumerates every neighborhood
offset of the box element explicitly instead of calling the library
erosion.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .losses import VARIANTS, LossConfig, evaluate_variant
from .morphology import ContourSpec, erode, extract_contour
from .volumes import BinaryMask, Dims, LabelVolume, ProbVolume


@dataclass(frozen=True)
class CheckConfig:
    step: float = 1e-4
    rel_tol: float = 1e-4
    abs_floor: float = 1e-8
    trials: int = 20
    seed: int = 7

    def __post_init__(self) -> None:
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not self.rel_tol >= 0:
            raise ValueError("rel_tol must be non-negative")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass(frozen=True)
class CheckReport:
    """Aggregated result: worst relative error over all trials and variants.

    worst_coordinate is (channel, flat voxel index) in the prediction
    array; per_trial holds (seed, variant, max_rel_error) records.
    passed requires both the gradient tolerance and exact morphology
    oracle agreement.
    """

    max_rel_error: float
    worst_coordinate: tuple[int, int]
    worst_variant: str
    worst_seed: int
    passed: bool
    morphology_ok: bool
    per_trial: tuple[tuple[int, str, float], ...]


def finite_diff_gradient(loss_fn, pred: ProbVolume, truth: LabelVolume,
                         cfg: CheckConfig) -> np.ndarray:
    """Central-difference gradient of ``loss_fn(pred, truth)`` w.r.t. pred.

    Coordinates whose perturbation would leave [0, 1] are skipped and
    reported as NaN in the returned array.
    """
    base = np.array(pred.values)
    grad = np.full(base.shape, np.nan)
    h = cfg.step
    for idx in np.ndindex(base.shape):
        v = base[idx]
        if v + h > 1.0 or v - h < 0.0:
            continue
        base[idx] = v + h
        f_plus = loss_fn(ProbVolume(pred.dims, pred.num_classes, base), truth)
        base[idx] = v - h
        f_minus = loss_fn(ProbVolume(pred.dims, pred.num_classes, base), truth)
        base[idx] = v
        grad[idx] = (f_plus - f_minus) / (2.0 * h)
    return grad


def gradient_errors(analytical: np.ndarray, numerical: np.ndarray,
                    cfg: CheckConfig) -> tuple[float, tuple[int, int]]:
    """Max relative error over coordinates above the magnitude floor.

    Relative error is |a - f| / max(|a|, |f|); a coordinate is checked
    when that max exceeds abs_floor and the numerical value is not a
    skipped (NaN) entry. Ties break to the lowest coordinate index.
    """
    a = analytical.reshape(analytical.shape[0], -1)
    f = numerical.reshape(numerical.shape[0], -1)
    scale = np.maximum(np.abs(a), np.abs(f))
    checked = np.isfinite(f) & (scale > cfg.abs_floor)
    if not checked.any():
        return 0.0, (-1, -1)
    rel = np.zeros_like(scale)
    rel[checked] = np.abs(a[checked] - f[checked]) / scale[checked]
    flat = int(np.argmax(rel))
    worst = np.unravel_index(flat, rel.shape)
    return float(rel[worst]), (int(worst[0]), int(worst[1]))


def brute_force_erode(bits: np.ndarray, extents: tuple[int, int, int] = (3, 3, 3),
                      iterations: int = 1, boundary_policy: str = "zero") -> np.ndarray:
    """Reference erosion by explicit neighborhood enumeration.

    Pads per the boundary policy, then ANDs every offset of the box
    element. Deliberately independent of the library implementation.
    """
    arr = np.asarray(bits) != 0
    d, h, w = arr.shape
    pad = tuple((e // 2, e // 2) for e in extents)
    mode = "constant" if boundary_policy == "zero" else "edge"
    for _ in range(iterations):
        padded = np.pad(arr, pad, mode=mode)
        out = np.ones_like(arr)
        for dz in range(extents[0]):
            for dy in range(extents[1]):
                for dx in range(extents[2]):
                    out &= padded[dz:dz + d, dy:dy + h, dx:dx + w]
        arr = out
    return arr


def random_instance(rng: np.random.Generator, min_extent: int = 3, max_extent: int = 8,
                    max_classes: int = 4) -> tuple[ProbVolume, LabelVolume]:
    """A random (prediction, truth) pair for gradient checking.

    The truth gets one axis-aligned box per foreground class (later boxes
    overwrite earlier ones, so some classes may vanish and thin boxes may
    have empty interiors, exercising the skip paths). Probabilities are
    uniform on [0.05, 0.95] so every coordinate stays perturbable.
    """
    dims = Dims(*(int(rng.integers(min_extent, max_extent + 1)) for _ in range(3)))
    num_classes = int(rng.integers(2, max_classes + 1))
    labels = np.zeros(dims.shape, dtype=np.uint8)
    for class_id in range(1, num_classes):
        size = [int(rng.integers(2, min(5, s) + 1)) for s in dims.shape]
        corner = [int(rng.integers(0, s - sz + 1)) for s, sz in zip(dims.shape, size)]
        labels[corner[0]:corner[0] + size[0],
               corner[1]:corner[1] + size[1],
               corner[2]:corner[2] + size[2]] = class_id
    truth = LabelVolume(dims, labels, num_classes)
    pred = ProbVolume(dims, num_classes,
                      rng.uniform(0.05, 0.95, (num_classes,) + dims.shape))
    return pred, truth


def _random_mask(rng: np.random.Generator, max_extent: int = 16) -> BinaryMask:
    dims = Dims(*(int(rng.integers(4, max_extent + 1)) for _ in range(3)))
    arr = rng.random(dims.shape) < 0.45
    # Drop a solid box on top so eroded interiors are regularly nonempty.
    size = [int(rng.integers(3, min(6, s) + 1)) for s in dims.shape]
    corner = [int(rng.integers(0, s - sz + 1)) for s, sz in zip(dims.shape, size)]
    arr[corner[0]:corner[0] + size[0],
        corner[1]:corner[1] + size[1],
        corner[2]:corner[2] + size[2]] = True
    return BinaryMask(dims, arr)


def _morphology_trial_ok(rng: np.random.Generator) -> bool:
    mask = _random_mask(rng)
    spec = ContourSpec(
        iterations=int(rng.integers(1, 3)),
        boundary_policy="zero" if rng.random() < 0.5 else "replicate",
    )
    expected = brute_force_erode(mask.bits, spec.element.extents, spec.iterations,
                                 spec.boundary_policy)
    eroded = erode(mask, spec)
    if not np.array_equal(eroded.as_bool(), expected):
        return False
    contour, interior = extract_contour(mask, spec)
    union_ok = np.array_equal(contour.as_bool() | interior.as_bool(), mask.as_bool())
    disjoint = not (contour.as_bool() & interior.as_bool()).any()
    return union_ok and disjoint and np.array_equal(interior.as_bool(), expected)


def run_suite(cfg: CheckConfig, variants: tuple[str, ...] = VARIANTS) -> CheckReport:
    """Gradient-check every requested variant plus the morphology oracle.

    Loss gradients are checked on random instances with a 1-iteration
    contour spec so both partitions of the separable dice are regularly
    nonempty at these small volume sizes. (seed, cfg) fully determines
    every instance, so identical calls return identical reports.
    """
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}")
    base_cfg = LossConfig(contour_spec=ContourSpec(iterations=1))
    per_trial: list[tuple[int, str, float]] = []
    worst_err = 0.0
    worst_coord = (-1, -1)
    worst_variant = ""
    worst_seed = cfg.seed
    morphology_ok = True

    for trial in range(cfg.trials):
        seed = cfg.seed + trial
        rng = np.random.default_rng(seed)
        pred, truth = random_instance(rng)
        for variant in variants:
            loss_cfg = replace(base_cfg, variant=variant)
            analytical = evaluate_variant(pred, truth, loss_cfg, with_gradient=True).gradient

            def value_only(p, t, _cfg=loss_cfg):
                return evaluate_variant(p, t, _cfg).total

            numerical = finite_diff_gradient(value_only, pred, truth, cfg)
            err, coord = gradient_errors(analytical, numerical, cfg)
            per_trial.append((seed, variant, err))
            if err > worst_err:
                worst_err, worst_coord, worst_variant, worst_seed = err, coord, variant, seed
        if not _morphology_trial_ok(rng):
            morphology_ok = False

    passed = morphology_ok and worst_err < cfg.rel_tol
    return CheckReport(
        max_rel_error=worst_err,
        worst_coordinate=worst_coord,
        worst_variant=worst_variant,
        worst_seed=worst_seed,
        passed=passed,
        morphology_ok=morphology_ok,
        per_trial=tuple(per_trial),
    )
