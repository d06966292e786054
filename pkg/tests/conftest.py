import numpy as np
import pytest

import contourloss as cl


def reference_erode_python(arr, extents=(3, 3, 3), iterations=1, boundary_policy="zero"):
    """Pure-Python per-voxel neighborhood scan. Slow; for small volumes only.

    Third route besides the library erosion and the vectorized oracle,
    used to cross-validate the oracle itself.
    """
    arr = np.asarray(arr) != 0
    rz, ry, rx = (e // 2 for e in extents)
    d, h, w = arr.shape
    for _ in range(iterations):
        out = np.zeros_like(arr)
        for z in range(d):
            for y in range(h):
                for x in range(w):
                    keep = True
                    for dz in range(-rz, rz + 1):
                        for dy in range(-ry, ry + 1):
                            for dx in range(-rx, rx + 1):
                                zz, yy, xx = z + dz, y + dy, x + dx
                                if 0 <= zz < d and 0 <= yy < h and 0 <= xx < w:
                                    value = arr[zz, yy, xx]
                                elif boundary_policy == "zero":
                                    value = False
                                else:
                                    value = arr[min(max(zz, 0), d - 1),
                                                min(max(yy, 0), h - 1),
                                                min(max(xx, 0), w - 1)]
                                if not value:
                                    keep = False
                                    break
                            if not keep:
                                break
                        if not keep:
                            break
                    out[z, y, x] = keep
        arr = out
    return arr


def one_hot_prediction(truth: cl.LabelVolume) -> cl.ProbVolume:
    """Exact one-hot probabilities matching a label volume."""
    values = np.zeros((truth.num_classes,) + truth.dims.shape)
    for class_id in range(truth.num_classes):
        values[class_id] = truth.voxels == class_id
    return cl.ProbVolume(truth.dims, truth.num_classes, values, normalized=True)


def cube_labels(edge=9, cube=7, num_classes=2) -> cl.LabelVolume:
    """A centered cube of class 1 inside an edge^3 volume."""
    pad = (edge - cube) // 2
    labels = np.zeros((edge, edge, edge), dtype=np.uint8)
    labels[pad:pad + cube, pad:pad + cube, pad:pad + cube] = 1
    return cl.LabelVolume.from_array(labels, num_classes)


@pytest.fixture(scope="session")
def default_training_run():
    """The shipped reference training: default phantoms, CWCD, 50 epochs.

    Session-scoped; shared by the acceptance criterion and the training
    invariants so the expensive run happens once. Returns
    (result, held_out_pairs, elapsed_seconds).
    """
    import time

    pairs = cl.generate_phantoms(cl.PhantomSpec())
    train_pairs, val_pairs = pairs[:16], pairs[16:]
    model = cl.TinyModel.initialize(3, seed=0)
    start = time.monotonic()
    result = cl.train(model, train_pairs, val_pairs, cl.TrainConfig(loss_variant="CWCD", seed=0))
    elapsed = time.monotonic() - start
    held_out = cl.generate_phantoms(cl.PhantomSpec(seed=99, count=5))
    return result, held_out, elapsed
