#!/usr/bin/env python3
"""The loss family on one phantom: values, identities, and failure modes.

Evaluates CE, CWCE, DL, SDL, and the compound CWCD on three predictions
of increasing quality, then checks the algebraic identities that tie the
variants together.
"""

from dataclasses import replace

import numpy as np

from contourloss import (
    ContourSpec,
    LossConfig,
    PhantomSpec,
    ProbVolume,
    VARIANTS,
    evaluate_variant,
    generate_phantoms,
)

image, truth = generate_phantoms(PhantomSpec(count=1, seed=5))[0]
# 2 erosion passes keep both partitions of the blob nonempty at this scale;
# the default 6 passes would classify the whole 32-grid blob as contour.
cfg = LossConfig(contour_spec=ContourSpec(iterations=2))
rng = np.random.default_rng(5)
shape = (truth.num_classes,) + truth.dims.shape

one_hot = np.zeros(shape)
for class_id in range(truth.num_classes):
    one_hot[class_id] = truth.voxels == class_id

noisy = np.clip(one_hot * 0.7 + 0.15 + rng.normal(0.0, 0.05, shape), 0.0, 1.0)
uniform = np.full(shape, 1.0 / truth.num_classes)

predictions = {
    "perfect (one-hot)": ProbVolume.from_array(one_hot),
    "noisy": ProbVolume.from_array(noisy),
    "uninformative": ProbVolume.from_array(uniform),
}

header = " ".join(f"{v:>10}" for v in VARIANTS)
print(f"{'prediction':<20} {header}")
for name, pred in predictions.items():
    totals = [evaluate_variant(pred, truth, replace(cfg, variant=v)).total for v in VARIANTS]
    print(f"{name:<20} " + " ".join(f"{t:10.5f}" for t in totals))
print()

pred = predictions["noisy"]
ce = evaluate_variant(pred, truth, replace(cfg, variant="CE"))
cwce1 = evaluate_variant(pred, truth, replace(cfg, variant="CWCE", contour_gain=1.0))
print(f"CWCE with contour_gain=1 equals CE exactly: {cwce1.total == ce.total}")

sdl = evaluate_variant(pred, truth, replace(cfg, variant="SDL"))
print(f"lambda=0.5 blend: sdl_term {sdl.sdl_term:.6f} == "
      f"(L_c {sdl.contour_term:.6f} + L_noc {sdl.noncontour_term:.6f}) / 2: "
      f"{sdl.sdl_term == (sdl.contour_term + sdl.noncontour_term) / 2}")

cwce = evaluate_variant(pred, truth, replace(cfg, variant="CWCE"))
cwcd = evaluate_variant(pred, truth, replace(cfg, variant="CWCD"))
print(f"compound additivity: |CWCD - (SDL + CWCE)| = "
      f"{abs(cwcd.total - (sdl.total + cwce.total)):.2e}")
print()

print("raising contour_gain raises the weighted cross-entropy:")
for gain in (1.0, 2.0, 4.0, 8.0):
    total = evaluate_variant(pred, truth, replace(cfg, variant="CWCE", contour_gain=gain)).total
    print(f"  gain {gain:4.1f}: CWCE = {total:.6f}")
