#!/usr/bin/env python3
"""Gradient checking: analytical gradients vs central finite differences.

Every loss variant ships an analytical gradient with respect to the
predicted probabilities. The checker re-evaluates loss values only (no
shared gradient code) and compares coordinate by coordinate.
"""

import numpy as np

from contourloss import (
    CheckConfig,
    ContourSpec,
    LossConfig,
    dice_loss,
    finite_diff_gradient,
    gradient_errors,
    random_instance,
    run_suite,
)

# One variant by hand first: dice loss on a random instance.
cfg = LossConfig(contour_spec=ContourSpec(iterations=1))
pred, truth = random_instance(np.random.default_rng(42), min_extent=6, max_extent=6)
report = dice_loss(pred, truth, cfg, with_gradient=True)
check = CheckConfig(step=1e-4)
numerical = finite_diff_gradient(lambda p, t: dice_loss(p, t, cfg).total, pred, truth, check)
err, coord = gradient_errors(report.gradient, numerical, check)
print(f"dice loss, {pred.dims.shape} volume, {pred.num_classes} classes:")
print(f"  max relative error {err:.3e} at (channel {coord[0]}, voxel {coord[1]})")
print()

# The full suite: 20 seeded instances per variant plus the morphology oracle.
print("full suite (20 trials x 5 variants, morphology oracle each trial)...")
suite = run_suite(CheckConfig(trials=20, seed=7))
by_variant = {}
for _, variant, trial_err in suite.per_trial:
    by_variant[variant] = max(by_variant.get(variant, 0.0), trial_err)
for variant, worst in by_variant.items():
    print(f"  {variant:>4}: max rel error {worst:.3e}")
print(f"  morphology oracle agreement: {suite.morphology_ok}")
print(f"  overall: {'PASS' if suite.passed else 'FAIL'} "
      f"(worst {suite.max_rel_error:.3e}, tolerance {CheckConfig().rel_tol})")
