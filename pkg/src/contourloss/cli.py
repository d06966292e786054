"""Command-line interface.

Subcommands: extract-contour, loss-eval, gradcheck, phantom, train, eval.
Exit codes: 0 success, 1 validation or check failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import vgf
from .gradcheck import CheckConfig, run_suite
from .losses import LossConfig, LossReport, VARIANTS, evaluate_variant
from .model import TinyModel, load_model, save_model
from .morphology import ContourSpec, StructuringElement, contour_partition, extract_contour
from .phantoms import PhantomSpec, class_volume_fractions, generate_phantoms
from .training import TRAIN_VARIANTS, TrainConfig, evaluate_dsc, train
from .volumes import Dims, DomainError, LabelVolume, ScalarVolume, one_hot

_NUMERATOR_FLAGS = {"standard": "standard-pg", "paper-literal": "paper-literal-p2g2"}


def _contour_spec(args) -> ContourSpec:
    return ContourSpec(
        element=StructuringElement.cube(args.kernel),
        iterations=args.iterations,
        boundary_policy=args.boundary,
    )


def _add_contour_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--iterations", type=int, default=6,
                        help="erosion passes for contour extraction (default 6)")
    parser.add_argument("--kernel", type=int, default=3,
                        help="box structuring element extent, odd (default 3)")
    parser.add_argument("--boundary", choices=("zero", "replicate"), default="zero",
                        help="treatment of voxels outside the volume (default zero)")


def _add_loss_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lambda", type=float, default=0.5, dest="lam",
                        help="contour blend weight of the separable dice (default 0.5)")
    parser.add_argument("--contour-gain", type=float, default=2.0,
                        help="cross-entropy weight on contour voxels (default 2.0)")
    parser.add_argument("--epsilon", type=float, default=1e-5,
                        help="dice denominator stabilizer (default 1e-5)")
    parser.add_argument("--numerator", choices=tuple(_NUMERATOR_FLAGS), default="standard",
                        help="partition-dice numerator form (default standard)")
    _add_contour_flags(parser)


def _loss_config(args, variant: str) -> LossConfig:
    return LossConfig(
        epsilon=args.epsilon,
        lam=args.lam,
        contour_gain=args.contour_gain,
        contour_spec=_contour_spec(args),
        numerator_form=_NUMERATOR_FLAGS[args.numerator],
        variant=variant,
    )


def _print_report(report: LossReport, variant: str, as_json: bool) -> None:
    if as_json:
        payload = {"variant": variant}
        payload.update(report.to_dict())
        print(json.dumps(payload))
        return
    print(f"variant: {variant}")
    print(f"total: {report.total:.12g}")
    print(f"sdl_term: {report.sdl_term:.12g}")
    print(f"ce_term: {report.ce_term:.12g}")
    print(f"contour_term: {report.contour_term:.12g}")
    print(f"noncontour_term: {report.noncontour_term:.12g}")
    for i, class_id in enumerate(report.class_ids):
        l_c = report.per_class_contour[i] if report.per_class_contour else float("nan")
        l_noc = report.per_class_noncontour[i] if report.per_class_noncontour else float("nan")
        print(f"class {class_id}: L_c={l_c:.12g} L_noc={l_noc:.12g}")
    print(f"skipped_classes: {list(report.skipped_classes)}")


def cmd_extract_contour(args) -> int:
    labels = vgf.read_labels(args.in_path)
    spec = _contour_spec(args)
    if args.class_spec == "all":
        class_ids = labels.foreground_classes()
    else:
        class_id = int(args.class_spec)
        if not 0 < class_id < labels.num_classes:
            raise DomainError(f"unknown class {class_id} (labels hold {labels.num_classes} classes)")
        class_ids = [class_id]

    union = np.zeros(labels.dims.shape, dtype=bool)
    for class_id in class_ids:
        mask = one_hot(labels, class_id)
        contour, interior = extract_contour(mask, spec)
        union |= contour.as_bool()
        print(f"class {class_id}: object={mask.count()} interior={interior.count()} "
              f"contour={contour.count()}")
    if not class_ids:
        print("class -: object=0 interior=0 contour=0")
    from .volumes import BinaryMask
    vgf.write_mask(args.out, BinaryMask(labels.dims, union))
    print(f"wrote {args.out} ({int(union.sum())} contour voxels)")
    return 0


def cmd_loss_eval(args) -> int:
    pred = vgf.read_probs(args.pred)
    truth = vgf.read_labels(args.truth, num_classes=pred.num_classes)
    cfg = _loss_config(args, args.variant)
    report = evaluate_variant(pred, truth, cfg)
    _print_report(report, args.variant, args.json)
    return 0


def cmd_gradcheck(args) -> int:
    variants = VARIANTS if args.variant == "all" else (args.variant,)
    cfg = CheckConfig(step=args.step, rel_tol=args.tol, trials=args.trials, seed=args.seed)
    report = run_suite(cfg, variants)
    worst_by_variant: dict[str, float] = {}
    for _, variant, err in report.per_trial:
        worst_by_variant[variant] = max(worst_by_variant.get(variant, 0.0), err)
    for variant in variants:
        print(f"{variant}: max_rel_error={worst_by_variant.get(variant, 0.0):.3e}")
    print(f"morphology oracle: {'ok' if report.morphology_ok else 'MISMATCH'}")
    print(f"worst: variant={report.worst_variant} seed={report.worst_seed} "
          f"coordinate=(channel {report.worst_coordinate[0]}, voxel {report.worst_coordinate[1]}) "
          f"rel_error={report.max_rel_error:.3e}")
    if report.passed:
        print("PASS")
        return 0
    print(f"FAIL (reproduce with --seed {report.worst_seed} --trials 1)")
    return 1


def _pair_paths(directory: str) -> list[tuple[str, str, str]]:
    names = sorted(f for f in os.listdir(directory) if f.endswith("_image.vgf"))
    out = []
    for name in names:
        stem = name[:-len("_image.vgf")]
        labels_name = f"{stem}_labels.vgf"
        labels_path = os.path.join(directory, labels_name)
        if not os.path.exists(labels_path):
            raise DomainError(f"missing {labels_name} alongside {name}")
        out.append((stem, os.path.join(directory, name), labels_path))
    if not out:
        raise DomainError(f"no *_image.vgf volumes found in {directory}")
    return out


def load_volume_dir(directory: str) -> list[tuple[str, ScalarVolume, LabelVolume]]:
    """Load (name, image, labels) triples; label classes unified over the set."""
    triples = []
    for stem, image_path, labels_path in _pair_paths(directory):
        triples.append((stem, vgf.read_image(image_path), vgf.read_labels(labels_path)))
    num_classes = max(t[2].num_classes for t in triples)
    return [
        (stem, image, LabelVolume(labels.dims, labels.voxels, num_classes))
        for stem, image, labels in triples
    ]


def cmd_phantom(args) -> int:
    spec = PhantomSpec(
        dims=Dims(args.dims, args.dims, args.dims),
        count=args.count,
        seed=args.seed,
        noise_sigma=args.noise_sigma,
    )
    os.makedirs(args.out, exist_ok=True)
    pairs = generate_phantoms(spec)
    for index, (image, truth) in enumerate(pairs):
        stem = os.path.join(args.out, f"phantom_{index:03d}")
        vgf.write_image(f"{stem}_image.vgf", image)
        vgf.write_labels(f"{stem}_labels.vgf", truth)
        fractions = class_volume_fractions(truth)
        text = " ".join(f"class{c}={v:.4f}" for c, v in fractions.items())
        print(f"phantom_{index:03d}: {text}")
    print(f"wrote {len(pairs)} volumes to {args.out}")
    return 0


def _split_train_val(triples):
    pairs = [(image, truth) for _, image, truth in triples]
    if len(pairs) < 2:
        return pairs, pairs
    n_val = max(1, len(pairs) // 5)
    return pairs[:-n_val], pairs[-n_val:]


def cmd_train(args) -> int:
    triples = load_volume_dir(args.data)
    train_pairs, val_pairs = _split_train_val(triples)
    num_classes = train_pairs[0][1].num_classes
    cfg = TrainConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        loss_variant=args.variant,
        seed=args.seed,
        hidden=args.hidden,
    )
    loss_cfg = _loss_config(args, args.variant if args.variant in VARIANTS else "CWCD")
    model = TinyModel.initialize(num_classes, hidden=cfg.hidden, seed=cfg.seed)
    result = train(model, train_pairs, val_pairs, cfg, loss_cfg)
    for record in result.log:
        print(f"epoch {record['epoch']:3d} lr={record['lr']:.6g} total={record['total']:.6f} "
              f"l_c={record['l_c']:.6f} l_noc={record['l_noc']:.6f} "
              f"ce={record['ce_term']:.6f} val_dsc={record['val_dsc']:.4f}")
    save_model(result.model, args.out)
    lines = "".join(json.dumps(record) + "\n" for record in result.log)
    tmp = f"{args.log}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="ascii") as f:
        f.write(lines)
    os.replace(tmp, args.log)
    print(f"best epoch {result.best_epoch} (val_dsc={result.best_val_dsc:.4f}); "
          f"model -> {args.out}, log -> {args.log}")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.model)
    triples = load_volume_dir(args.data)
    num_classes = triples[0][2].num_classes
    if model.num_classes != num_classes:
        raise DomainError(
            f"model predicts {model.num_classes} classes, data holds {num_classes}"
        )
    evaluation = evaluate_dsc(model, [(image, truth) for _, image, truth in triples])
    names = [stem for stem, _, _ in triples]
    rows = []
    for row in evaluation.rows:
        class_name = "background" if row.class_id == 0 else f"class_{row.class_id}"
        rows.append({
            "volume_id": names[row.volume_index],
            "class_id": row.class_id,
            "class_name": class_name,
            "dsc": f"{row.value:.6f}",
            "loss_variant": args.variant,
            "contour_gain": args.contour_gain,
            "lambda": args.lam,
            "iterations": args.iterations,
        })
    fieldnames = ["volume_id", "class_id", "class_name", "dsc",
                  "loss_variant", "contour_gain", "lambda", "iterations"]
    tmp = f"{args.csv}.tmp.{os.getpid()}"
    with open(tmp, "w", newline="", encoding="ascii") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    os.replace(tmp, args.csv)
    for class_id, value in evaluation.per_class_mean.items():
        print(f"class {class_id}: mean_dsc={value:.4f}")
    print(f"mean_foreground_dsc: {evaluation.mean_foreground:.4f}")
    print(f"wrote {len(rows)} rows to {args.csv}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="contourloss",
        description="Contour-weighted segmentation losses: contour extraction, "
                    "loss evaluation, gradient checking, and a phantom training demo.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract-contour", help="split label objects into contour and interior")
    p.add_argument("--in", required=True, dest="in_path", metavar="LABELS.vgf")
    p.add_argument("--out", required=True, metavar="CONTOUR.vgf",
                   help="output mask (union of the selected classes' contours)")
    _add_contour_flags(p)
    p.add_argument("--class", default="all", dest="class_spec", metavar="ID|all",
                   help="foreground class id, or 'all' (default)")
    p.set_defaults(func=cmd_extract_contour)

    p = sub.add_parser("loss-eval", help="evaluate a loss variant on prediction + truth files")
    p.add_argument("--pred", required=True, metavar="PROBS.vgf")
    p.add_argument("--truth", required=True, metavar="LABELS.vgf")
    p.add_argument("--variant", choices=VARIANTS, default="CWCD")
    _add_loss_flags(p)
    p.add_argument("--json", action="store_true", help="machine-readable report")
    p.set_defaults(func=cmd_loss_eval)

    p = sub.add_parser("gradcheck", help="check analytical gradients against finite differences")
    p.add_argument("--variant", choices=("all",) + VARIANTS, default="all")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--step", type=float, default=1e-4)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("phantom", help="generate synthetic blob + shell volumes")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--dims", type=int, default=32, help="cubic edge length (default 32)")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--noise-sigma", type=float, default=0.10)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("train", help="train the tiny model on a phantom directory")
    p.add_argument("--data", required=True, metavar="DIR",
                   help="volume directory; the last fifth is held out for validation")
    p.add_argument("--variant", choices=TRAIN_VARIANTS, default="CWCD")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--out", required=True, metavar="MODEL.bin")
    p.add_argument("--log", required=True, metavar="TRAIN.log",
                   help="JSON-lines log: epoch, variant, total, l_c, l_noc, ce_term, val_dsc, lr")
    _add_loss_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="per-class DSC of a trained model on a volume directory")
    p.add_argument("--model", required=True, metavar="MODEL.bin")
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--csv", required=True, metavar="METRICS.csv")
    _add_loss_flags(p)
    p.add_argument("--variant", choices=TRAIN_VARIANTS, default="CWCD",
                   help="metadata column recording how the model was trained")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DomainError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
