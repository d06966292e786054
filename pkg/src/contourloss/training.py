"""Gradient-descent training of the tiny model with a selectable loss.

The trainer runs full-volume batches of one, in a fixed volume order,
with an Adam optimizer (beta1=0.9, beta2=0.999, eps=1e-8) and stepwise
learning-rate halving. Everything is deterministic given (seed, config,
data). The model with the best validation DSC is returned.

Besides the five library variants, the "CEDL" baseline (plain
cross-entropy plus plain dice) is available for comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .losses import (
    LossConfig,
    LossReport,
    VARIANTS,
    cross_entropy,
    dice_loss,
    dsc,
    evaluate_variant,
)
from .model import TinyModel, local_feature_stack, softmax_backprop
from .morphology import ContourSpec, contour_partition
from .volumes import (
    DomainError,
    LabelVolume,
    ProbVolume,
    ScalarVolume,
    one_hot,
    reduce_sum,
)

TRAIN_VARIANTS = VARIANTS + ("CEDL",)

Pair = tuple[ScalarVolume, LabelVolume]


class TrainingDiverged(RuntimeError):
    """Loss became NaN/Inf; training aborted."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 3e-4
    lr_halving_epochs: tuple[int, ...] = (20, 40)
    loss_variant: str = "CWCD"
    seed: int = 0
    hidden: int = 16
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise DomainError("epochs must be non-negative")
        # learning_rate 0 is allowed: it freezes parameters, useful as a control.
        if self.learning_rate < 0:
            raise DomainError("learning_rate must be non-negative")
        if self.loss_variant not in TRAIN_VARIANTS:
            raise DomainError(f"loss_variant must be one of {TRAIN_VARIANTS}")


@dataclass
class TrainResult:
    log: list[dict]
    model: TinyModel        # best by validation DSC
    final_model: TinyModel
    best_epoch: int
    best_val_dsc: float


class Adam:
    def __init__(self, params: list[np.ndarray], beta1: float, beta2: float, eps: float):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray], lr: float) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def training_loss(pred: ProbVolume, truth: LabelVolume, loss_cfg: LossConfig,
                  variant: str, with_gradient: bool = False) -> LossReport:
    """Variant dispatch including the CEDL baseline (CE + DL, both plain)."""
    if variant == "CEDL":
        ce = cross_entropy(pred, truth, None, loss_cfg, with_gradient)
        dl = dice_loss(pred, truth, loss_cfg, with_gradient)
        grad = ce.gradient + dl.gradient if with_gradient else None
        return LossReport(
            total=ce.total + dl.total,
            ce_term=ce.total,
            class_ids=dl.class_ids,
            skipped_classes=dl.skipped_classes,
            gradient=grad,
        )
    return evaluate_variant(pred, truth, replace(loss_cfg, variant=variant), with_gradient)


def _mean(values: list[float]) -> float:
    return reduce_sum(values) / len(values) if values else 0.0


def train(model: TinyModel, train_pairs: list[Pair], val_pairs: list[Pair],
          cfg: TrainConfig, loss_cfg: LossConfig | None = None) -> TrainResult:
    """Train in place; returns the log and the best-validation snapshot.

    One epoch record per line-oriented log entry: epoch, variant, total,
    l_c, l_noc, ce_term, val_dsc, lr. Raises TrainingDiverged on NaN.
    """
    if not train_pairs:
        raise DomainError("no training volumes")
    loss_cfg = loss_cfg if loss_cfg is not None else LossConfig()

    feats = [local_feature_stack(img) for img, _ in train_pairs]
    opt = Adam(model.parameters(), cfg.beta1, cfg.beta2, cfg.adam_eps)
    log: list[dict] = []
    best_model = model.copy()
    best_val = -math.inf
    best_epoch = 0

    for epoch in range(1, cfg.epochs + 1):
        halvings = sum(1 for h in cfg.lr_halving_epochs if epoch >= h)
        lr = cfg.learning_rate * 0.5 ** halvings
        totals: list[float] = []
        l_cs: list[float] = []
        l_nocs: list[float] = []
        ces: list[float] = []
        for (image, truth), x in zip(train_pairs, feats):
            probs, hidden_act = model.forward(x)
            if not np.isfinite(probs).all():
                raise TrainingDiverged(
                    f"non-finite model output at epoch {epoch} "
                    f"(variant {cfg.loss_variant}, lr {lr})"
                )
            pred = ProbVolume(truth.dims, model.num_classes,
                              probs.T.reshape((model.num_classes,) + truth.dims.shape),
                              normalized=True)
            report = training_loss(pred, truth, loss_cfg, cfg.loss_variant, with_gradient=True)
            if not math.isfinite(report.total):
                raise TrainingDiverged(
                    f"non-finite loss {report.total} at epoch {epoch} "
                    f"(variant {cfg.loss_variant}, lr {lr})"
                )
            grad_logits = softmax_backprop(pred, report.gradient)
            grad_rows = grad_logits.reshape(model.num_classes, -1).T
            opt.step(model.parameters(), model.backward(x, hidden_act, grad_rows), lr)
            totals.append(report.total)
            l_cs.append(report.contour_term)
            l_nocs.append(report.noncontour_term)
            ces.append(report.ce_term)

        val_dsc = evaluate_dsc(model, val_pairs).mean_foreground if val_pairs else float("nan")
        log.append({
            "epoch": epoch,
            "variant": cfg.loss_variant,
            "total": _mean(totals),
            "l_c": _mean(l_cs),
            "l_noc": _mean(l_nocs),
            "ce_term": _mean(ces),
            "val_dsc": val_dsc,
            "lr": lr,
        })
        if val_pairs and val_dsc > best_val:
            best_val = val_dsc
            best_model = model.copy()
            best_epoch = epoch

    if not val_pairs or best_epoch == 0:
        best_model = model.copy()
        best_val = log[-1]["val_dsc"] if log else float("nan")
        best_epoch = len(log)
    return TrainResult(log, best_model, model, best_epoch, best_val)


@dataclass(frozen=True)
class DscRow:
    volume_index: int
    class_id: int
    value: float


@dataclass(frozen=True)
class DscEvaluation:
    """Per-(volume, class) DSC rows for classes present in each truth.

    mean_foreground averages all foreground rows; per_class_mean averages
    each class over the volumes where it occurs.
    """

    rows: tuple[DscRow, ...]
    per_class_mean: dict[int, float]
    mean_foreground: float


def evaluate_dsc(model, pairs: list[Pair], epsilon: float = 1e-5) -> DscEvaluation:
    """Hard-argmax predictions scored per class against each truth."""
    rows: list[DscRow] = []
    for index, (image, truth) in enumerate(pairs):
        pred = model.predict(image)
        hard = np.argmax(pred.values, axis=0).astype(np.uint8)
        hard_labels = LabelVolume(truth.dims, hard, truth.num_classes)
        for class_id in truth.foreground_classes():
            value = dsc(one_hot(hard_labels, class_id), one_hot(truth, class_id), epsilon)
            rows.append(DscRow(index, class_id, value))
    by_class: dict[int, list[float]] = {}
    for row in rows:
        by_class.setdefault(row.class_id, []).append(row.value)
    per_class_mean = {c: _mean(vals) for c, vals in sorted(by_class.items())}
    return DscEvaluation(tuple(rows), per_class_mean, _mean([r.value for r in rows]))


def contour_region_dsc(model, pairs: list[Pair], spec: ContourSpec | None = None,
                       epsilon: float = 1e-5) -> float:
    """Mean DSC restricted to ground-truth contour voxels.

    Within a class's contour support the truth is identically 1, so the
    restricted DSC reduces to 2*hits / (hits + contour size + eps); it
    measures how well boundaries specifically are recovered.
    """
    spec = spec if spec is not None else ContourSpec()
    values: list[float] = []
    for image, truth in pairs:
        pred = model.predict(image)
        hard = np.argmax(pred.values, axis=0)
        for class_id in truth.foreground_classes():
            contour, _ = contour_partition(truth, class_id, spec)
            support = contour.as_bool()
            n_support = contour.count()
            if n_support == 0:
                continue
            hits = int(np.count_nonzero(hard[support] == class_id))
            values.append(2.0 * hits / (hits + n_support + epsilon))
    return _mean(values)
