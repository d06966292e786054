"""Segmentation losses with analytical gradients w.r.t. predicted probabilities.

Implemented family:

- ``dsc``: overlap metric 2*sum(p*g) / (sum(p^2) + sum(g^2) + eps).
- ``dice_loss`` (DL): 1 - soft dice, averaged over foreground classes
  present in the ground truth, sums running over the whole volume.
- ``separable_dice_loss`` (SDL): each class's object is split into contour
  and interior; a dice term is computed on each partition with sums
  restricted to the partition's support, and the two are blended by
  ``lam`` (contour) and ``1 - lam`` (interior).
- ``cross_entropy`` (CE / CWCE): per-voxel negative log likelihood of the
  true class, optionally scaled by a per-voxel weight map, normalized by
  (num_classes * num_voxels).
- ``compound_loss`` (CWCD): SDL plus contour-weighted CE.

Gradients are taken with respect to probabilities, not logits; see
``model.softmax_backprop`` for the bridge to a softmax head.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .morphology import ContourSpec, build_weight_map, contour_partition
from .volumes import (
    BinaryMask,
    DomainError,
    LabelVolume,
    ProbVolume,
    ScalarVolume,
    reduce_sum,
)

VARIANTS = ("CE", "CWCE", "DL", "SDL", "CWCD")
NUMERATOR_FORMS = ("standard-pg", "paper-literal-p2g2")


@dataclass(frozen=True)
class LossConfig:
    """Shared knobs for the loss family.

    lam blends contour vs interior dice terms; contour_gain is the weight
    on contour voxels in the weighted cross-entropy; prob_clamp bounds
    probabilities away from {0, 1} before taking logs.

    numerator_form selects the partition-dice numerator: "standard-pg"
    uses 2*sum(p*g); "paper-literal-p2g2" uses 2*sum(p^2*g^2), which for
    binary g differs only in squaring p.
    """

    epsilon: float = 1e-5
    lam: float = 0.5
    contour_gain: float = 2.0
    contour_spec: ContourSpec = field(default_factory=ContourSpec)
    numerator_form: str = "standard-pg"
    prob_clamp: float = 1e-7
    variant: str = "CWCD"

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")
        if not 0.0 <= self.lam <= 1.0:
            raise DomainError("lam must lie in [0, 1]")
        if not self.contour_gain >= 1.0:
            raise DomainError("contour_gain must be >= 1")
        if not 0.0 < self.prob_clamp < 0.5:
            raise DomainError("prob_clamp must lie in (0, 0.5)")
        if self.numerator_form not in NUMERATOR_FORMS:
            raise DomainError(f"numerator_form must be one of {NUMERATOR_FORMS}")
        if self.variant not in VARIANTS:
            raise DomainError(f"variant must be one of {VARIANTS}")


@dataclass(frozen=True, eq=False)
class LossReport:
    """Loss value plus per-class components.

    class_ids lists the foreground classes present in the ground truth;
    per_class_contour / per_class_noncontour are parallel to it (0.0 for
    entries listed in skipped_classes, which collects classes absent from
    the truth or with an empty partition). contour_term / noncontour_term
    are the class-averaged aggregates entering sdl_term. gradient, when
    requested, has the prediction's (classes, depth, height, width) shape.
    """

    total: float
    sdl_term: float = 0.0
    ce_term: float = 0.0
    contour_term: float = 0.0
    noncontour_term: float = 0.0
    class_ids: tuple[int, ...] = ()
    per_class_contour: tuple[float, ...] = ()
    per_class_noncontour: tuple[float, ...] = ()
    skipped_classes: tuple[int, ...] = ()
    gradient: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "sdl_term": self.sdl_term,
            "ce_term": self.ce_term,
            "contour_term": self.contour_term,
            "noncontour_term": self.noncontour_term,
            "class_ids": list(self.class_ids),
            "per_class_contour": list(self.per_class_contour),
            "per_class_noncontour": list(self.per_class_noncontour),
            "skipped_classes": list(self.skipped_classes),
            "gradient": None if self.gradient is None else self.gradient.tolist(),
        }


def _check_pair(pred: ProbVolume, truth: LabelVolume) -> None:
    if pred.dims != truth.dims:
        raise DomainError(f"prediction dims {pred.dims} do not match truth dims {truth.dims}")
    if pred.num_classes != truth.num_classes:
        raise DomainError(
            f"prediction has {pred.num_classes} classes, truth has {truth.num_classes}"
        )


def _absent_foreground(truth: LabelVolume, present: list[int]) -> list[int]:
    present_set = set(present)
    return [c for c in range(1, truth.num_classes) if c not in present_set]


def dsc(pred, truth: BinaryMask, epsilon: float = 1e-5) -> float:
    """Dice similarity coefficient between a prediction and a binary mask.

    pred may be a BinaryMask or a raw probability array of the same shape.
    """
    if isinstance(pred, BinaryMask):
        p = pred.bits.astype(np.float64)
    else:
        p = np.asarray(pred, dtype=np.float64)
    g = truth.bits.astype(np.float64)
    if p.shape != g.shape:
        raise DomainError(f"prediction shape {p.shape} does not match truth shape {g.shape}")
    num = 2.0 * float(np.sum(p * g))
    den = float(np.sum(p * p)) + float(np.sum(g * g)) + epsilon
    return num / den


def _full_dice_class(p: np.ndarray, g: np.ndarray, n_g: int, epsilon: float):
    """Soft dice loss term of one class over the whole volume: (term, S, D)."""
    s = float(np.sum(p[g]))
    sum_p2 = float(np.sum(p * p))
    d = sum_p2 + n_g + epsilon
    return 1.0 - 2.0 * s / d, s, d


def dice_loss(pred: ProbVolume, truth: LabelVolume, cfg: LossConfig,
              with_gradient: bool = False) -> LossReport:
    """1 - soft dice, averaged over foreground classes present in the truth.

    Per class j: dL/dp_i = -(2/M) * (g_i*D - 2*p_i*S) / D^2 with
    S = sum(p*g), D = sum(p^2) + sum(g^2) + eps over the whole volume.
    """
    _check_pair(pred, truth)
    classes = truth.foreground_classes()
    if not classes:
        raise DomainError("no target regions")
    m = len(classes)
    grad = np.zeros_like(pred.values) if with_gradient else None
    terms = []
    for j in classes:
        g = truth.voxels == j
        p = pred.channel(j)
        term, s, d = _full_dice_class(p, g, int(g.sum()), cfg.epsilon)
        terms.append(term)
        if grad is not None:
            grad[j] = (-2.0 / m) * (g.astype(np.float64) * d - 2.0 * p * s) / (d * d)
    total = reduce_sum(terms) / m
    return LossReport(
        total=total,
        class_ids=tuple(classes),
        skipped_classes=tuple(_absent_foreground(truth, classes)),
        gradient=grad,
    )


def _partition_dice(psub: np.ndarray, n_support: int, cfg: LossConfig, want_grad: bool):
    """Dice loss term on one partition, sums restricted to its support.

    g is identically 1 on the support, so sum(g^2) = n_support and the
    standard numerator reduces to 2*sum(p). Returns (term, grad_on_support).
    """
    sum_p2 = float(np.sum(psub * psub))
    if cfg.numerator_form == "standard-pg":
        s = float(np.sum(psub))
    else:
        s = sum_p2
    d = sum_p2 + n_support + cfg.epsilon
    term = 1.0 - 2.0 * s / d
    grad = None
    if want_grad:
        if cfg.numerator_form == "standard-pg":
            grad = -2.0 * (d - 2.0 * psub * s) / (d * d)
        else:
            grad = -4.0 * psub * (d - s) / (d * d)
    return term, grad


def separable_dice_loss(pred: ProbVolume, truth: LabelVolume, cfg: LossConfig,
                        with_gradient: bool = False) -> LossReport:
    """Contour/interior-split dice loss.

    Each present foreground class is partitioned by ``cfg.contour_spec``;
    predictions are masked by the ground-truth partition supports (the
    partition is fixed by the truth, keeping the loss differentiable).
    Classes whose partition is empty are skipped in that partition's
    average; an average over zero classes contributes 0.
    """
    _check_pair(pred, truth)
    classes = truth.foreground_classes()
    if not classes:
        raise DomainError("no target regions")
    grad = np.zeros_like(pred.values) if with_gradient else None

    contour_terms: list[float] = []
    interior_terms: list[float] = []
    per_contour: list[float] = []
    per_interior: list[float] = []
    skipped = set(_absent_foreground(truth, classes))
    pending = []  # (class_id, support, grad_on_support, weight slot) per partition

    for j in classes:
        contour, interior = contour_partition(truth, j, cfg.contour_spec)
        p = pred.channel(j)
        for mask, terms, per_class, slot in (
            (contour, contour_terms, per_contour, 0),
            (interior, interior_terms, per_interior, 1),
        ):
            support = mask.as_bool()
            n = mask.count()
            if n == 0:
                per_class.append(0.0)
                skipped.add(j)
                continue
            term, g_sub = _partition_dice(p[support], n, cfg, with_gradient)
            terms.append(term)
            per_class.append(term)
            if grad is not None:
                pending.append((j, support, g_sub, slot, len(terms)))

    l_c = reduce_sum(contour_terms) / len(contour_terms) if contour_terms else 0.0
    l_noc = reduce_sum(interior_terms) / len(interior_terms) if interior_terms else 0.0
    total = cfg.lam * l_c + (1.0 - cfg.lam) * l_noc

    if grad is not None:
        n_c = max(len(contour_terms), 1)
        n_i = max(len(interior_terms), 1)
        for j, support, g_sub, slot, _ in pending:
            scale = cfg.lam / n_c if slot == 0 else (1.0 - cfg.lam) / n_i
            grad[j][support] += scale * g_sub

    return LossReport(
        total=total,
        sdl_term=total,
        contour_term=l_c,
        noncontour_term=l_noc,
        class_ids=tuple(classes),
        per_class_contour=tuple(per_contour),
        per_class_noncontour=tuple(per_interior),
        skipped_classes=tuple(sorted(skipped)),
        gradient=grad,
    )


def cross_entropy(pred: ProbVolume, truth: LabelVolume, weight: ScalarVolume | None,
                  cfg: LossConfig, with_gradient: bool = False) -> LossReport:
    """(Weighted) cross-entropy: -mean over classes and voxels of w*g*log(p).

    Probabilities are clamped to [prob_clamp, 1 - prob_clamp] before the
    log; the gradient -w*g/p is evaluated at the clamped value. A missing
    weight means uniform weights; weights must be strictly positive.
    """
    _check_pair(pred, truth)
    n = truth.dims.n
    num_classes = pred.num_classes
    if weight is not None:
        if weight.dims != truth.dims:
            raise DomainError(f"weight dims {weight.dims} do not match truth dims {truth.dims}")
        w_flat = weight.values.reshape(-1)
        if w_flat.size and float(w_flat.min()) <= 0.0:
            raise DomainError("cross-entropy weights must be strictly positive")
    else:
        w_flat = np.ones(n)

    clamped = np.clip(pred.values.reshape(num_classes, n), cfg.prob_clamp, 1.0 - cfg.prob_clamp)
    labels_flat = truth.voxels.reshape(-1)
    voxel_index = np.arange(n)
    p_true = clamped[labels_flat, voxel_index]
    norm = float(num_classes * n)
    total = -reduce_sum(w_flat * np.log(p_true)) / norm

    grad = None
    if with_gradient:
        flat = np.zeros((num_classes, n))
        flat[labels_flat, voxel_index] = -(w_flat / p_true) / norm
        grad = flat.reshape(pred.values.shape)

    return LossReport(
        total=total,
        ce_term=total,
        class_ids=tuple(truth.foreground_classes()),
        gradient=grad,
    )


def compound_loss(pred: ProbVolume, truth: LabelVolume, cfg: LossConfig,
                  with_gradient: bool = False) -> LossReport:
    """Separable dice plus contour-weighted cross-entropy; gradients add."""
    sdl = separable_dice_loss(pred, truth, cfg, with_gradient)
    wmap = build_weight_map(truth, cfg.contour_spec, cfg.contour_gain)
    ce = cross_entropy(pred, truth, wmap, cfg, with_gradient)
    grad = None
    if with_gradient:
        grad = sdl.gradient + ce.gradient
    return LossReport(
        total=sdl.total + ce.total,
        sdl_term=sdl.total,
        ce_term=ce.total,
        contour_term=sdl.contour_term,
        noncontour_term=sdl.noncontour_term,
        class_ids=sdl.class_ids,
        per_class_contour=sdl.per_class_contour,
        per_class_noncontour=sdl.per_class_noncontour,
        skipped_classes=sdl.skipped_classes,
        gradient=grad,
    )


def evaluate_variant(pred: ProbVolume, truth: LabelVolume, cfg: LossConfig,
                     with_gradient: bool = False) -> LossReport:
    """Dispatch on cfg.variant: CE, CWCE, DL, SDL, or CWCD."""
    if cfg.variant == "CE":
        return cross_entropy(pred, truth, None, cfg, with_gradient)
    if cfg.variant == "CWCE":
        wmap = build_weight_map(truth, cfg.contour_spec, cfg.contour_gain)
        return cross_entropy(pred, truth, wmap, cfg, with_gradient)
    if cfg.variant == "DL":
        return dice_loss(pred, truth, cfg, with_gradient)
    if cfg.variant == "SDL":
        return separable_dice_loss(pred, truth, cfg, with_gradient)
    if cfg.variant == "CWCD":
        return compound_loss(pred, truth, cfg, with_gradient)
    raise DomainError(f"unknown variant {cfg.variant!r}")
