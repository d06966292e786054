#!/usr/bin/env python3
"""Training demonstration on the blob + thin-shell phantom task.

Trains the tiny per-voxel model with the compound loss and, as a
comparison, with the plain CE + dice baseline. Watch the L_noc column:
the interior dice term decays faster than the contour term, leaving the
boundary as the dominant error source, which is exactly the region the
contour weighting keeps pressure on.
"""

import numpy as np

from contourloss import (
    ContourSpec,
    LossConfig,
    PhantomSpec,
    TinyModel,
    TrainConfig,
    contour_region_dsc,
    evaluate_dsc,
    generate_phantoms,
    train,
)

EPOCHS = 30

pairs = generate_phantoms(PhantomSpec(count=12, seed=3))
train_pairs, val_pairs = pairs[:10], pairs[10:]
held_out = generate_phantoms(PhantomSpec(count=4, seed=303))

# 2 erosion passes so the blob keeps an interior at this volume size and
# the L_c / L_noc split is visible in the log.
loss_cfg = LossConfig(contour_spec=ContourSpec(iterations=2))

results = {}
for variant in ("CWCD", "CEDL"):
    model = TinyModel.initialize(3, seed=0)
    result = train(model, train_pairs, val_pairs,
                   TrainConfig(loss_variant=variant, epochs=EPOCHS, seed=0),
                   loss_cfg)
    results[variant] = result
    if variant == "CWCD":
        print("CWCD training (every 3rd epoch):")
        print(f"{'epoch':>5} {'lr':>9} {'total':>9} {'L_c':>9} {'L_noc':>9} "
              f"{'ce':>9} {'val_dsc':>8}")
        for record in result.log[::3]:
            print(f"{record['epoch']:5d} {record['lr']:9.2e} {record['total']:9.5f} "
                  f"{record['l_c']:9.5f} {record['l_noc']:9.5f} "
                  f"{record['ce_term']:9.5f} {record['val_dsc']:8.4f}")
        print()

print(f"{'variant':<8} {'blob DSC':>9} {'shell DSC':>10} {'mean fg':>8} {'contour DSC':>12}")
for variant, result in results.items():
    evaluation = evaluate_dsc(result.model, held_out)
    contour = contour_region_dsc(result.model, held_out)
    per_class = evaluation.per_class_mean
    print(f"{variant:<8} {per_class.get(1, float('nan')):9.4f} "
          f"{per_class.get(2, float('nan')):10.4f} "
          f"{evaluation.mean_foreground:8.4f} {contour:12.4f}")
print()
print("the compound loss recovers the thin shell and its boundaries; the")
print("unweighted baseline concentrates on the bulky classes first.")
