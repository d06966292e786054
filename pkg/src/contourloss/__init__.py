"""Contour-weighted compound segmentation losses on 3-d voxel grids."""

from .volumes import (
    BinaryMask,
    Dims,
    DomainError,
    LabelVolume,
    ProbVolume,
    ScalarVolume,
    one_hot,
    reduce_sum,
    zscore_normalize,
)
from .morphology import (
    ContourSpec,
    StructuringElement,
    build_weight_map,
    contour_partition,
    erode,
    extract_contour,
)
from .losses import (
    VARIANTS,
    LossConfig,
    LossReport,
    compound_loss,
    cross_entropy,
    dice_loss,
    dsc,
    evaluate_variant,
    separable_dice_loss,
)
from .gradcheck import (
    CheckConfig,
    CheckReport,
    brute_force_erode,
    finite_diff_gradient,
    gradient_errors,
    random_instance,
    run_suite,
)
from .phantoms import CLASS_NAMES, PhantomSpec, class_volume_fractions, generate_phantoms
from .model import TinyModel, load_model, local_feature_stack, save_model, softmax_backprop
from .training import (
    TRAIN_VARIANTS,
    TrainConfig,
    TrainResult,
    TrainingDiverged,
    contour_region_dsc,
    evaluate_dsc,
    train,
    training_loss,
)

__version__ = "0.1.0"

__all__ = [
    "BinaryMask", "Dims", "DomainError", "LabelVolume", "ProbVolume", "ScalarVolume",
    "one_hot", "reduce_sum", "zscore_normalize",
    "ContourSpec", "StructuringElement", "build_weight_map", "contour_partition",
    "erode", "extract_contour",
    "VARIANTS", "LossConfig", "LossReport", "compound_loss", "cross_entropy",
    "dice_loss", "dsc", "evaluate_variant", "separable_dice_loss",
    "CheckConfig", "CheckReport", "brute_force_erode", "finite_diff_gradient",
    "gradient_errors", "random_instance", "run_suite",
    "CLASS_NAMES", "PhantomSpec", "class_volume_fractions", "generate_phantoms",
    "TinyModel", "load_model", "local_feature_stack", "save_model", "softmax_backprop",
    "TRAIN_VARIANTS", "TrainConfig", "TrainResult", "TrainingDiverged",
    "contour_region_dsc", "evaluate_dsc", "train", "training_loss",
    "__version__",
]
