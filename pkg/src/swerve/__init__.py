"""Adversarial robustness toolkit for small steering-vision networks.

A reverse-mode autodiff core with CNN layer primitives, two reference
architectures with classification and regression heads, a synthetic road-scene
generator, SGD-momentum training, targeted minimum-distortion attacks on both
heads, and the evaluation artifacts (ROC, success-vs-distance, MSE CDFs,
damage-ratio percentiles) behind the `swerve` command line tool.
"""

from .attack import (
    AttackConfig,
    AttackResult,
    ClassTarget,
    RegressionTarget,
    ResultRow,
    attack_batch,
    attack_regression,
    attack_targeted,
    hinge_logit_loss,
    l2_distance,
    optimize_at_c,
    read_results_csv,
    residual_loss,
    write_results_csv,
)
from .autodiff import (
    CoordinateError,
    GradCheckReport,
    Tensor,
    backward,
    finite_difference_check,
    grad_enabled,
    no_grad,
)
from .data import (
    ANGLE_RANGE,
    ANGLE_SCALE,
    CROP_ROWS,
    LABELS,
    STRAIGHT_THRESHOLD,
    DatasetSummary,
    Sample,
    angle_to_label,
    generate_synthetic,
    kfold_split,
    load_dataset,
    load_steering_log,
    preprocess,
    resize_bilinear,
    save_dataset,
)
from .layers import (
    batch_norm,
    conv2d,
    conv_output_size,
    cross_entropy_with_logits,
    dense,
    dropout,
    maxpool2x2,
    softmax,
)
from .metrics import (
    CdfCurve,
    RatioTable,
    RocCurve,
    micro_roc,
    mse_cdf,
    ratio_percentiles,
    success_vs_distance,
)
from .models import (
    ARCHITECTURES,
    HEADS,
    NVIDIA_MIN_RESOLUTION,
    LayerSpec,
    Model,
    build_epoch,
    build_nvidia,
    epoch_specs,
    logits,
    nvidia_specs,
    predict_direction,
    predict_scalar,
    probabilities,
)
from .optim import Adam, MomentumSGD
from .ppm import quantization_l2_bound, read_image, read_ppm, write_image, write_ppm
from .report import SUMMARY_KEYS, EvalReport, read_summary, render_figures, write_bundle
from .train import (
    ClassificationEval,
    CrossValidation,
    RegressionEval,
    TrainConfig,
    TrainingDiverged,
    TrainReport,
    cross_validate,
    evaluate_classifier,
    evaluate_regressor,
    train,
    write_train_report,
)
from .weights import load_weights, read_tensors, save_weights

__version__ = "0.1.0"

__all__ = [
    "ANGLE_RANGE",
    "ANGLE_SCALE",
    "ARCHITECTURES",
    "Adam",
    "AttackConfig",
    "AttackResult",
    "CROP_ROWS",
    "CdfCurve",
    "ClassTarget",
    "ClassificationEval",
    "CoordinateError",
    "CrossValidation",
    "DatasetSummary",
    "EvalReport",
    "GradCheckReport",
    "HEADS",
    "LABELS",
    "LayerSpec",
    "Model",
    "MomentumSGD",
    "NVIDIA_MIN_RESOLUTION",
    "RatioTable",
    "RegressionEval",
    "RegressionTarget",
    "ResultRow",
    "RocCurve",
    "STRAIGHT_THRESHOLD",
    "SUMMARY_KEYS",
    "Sample",
    "Tensor",
    "TrainConfig",
    "TrainReport",
    "TrainingDiverged",
    "angle_to_label",
    "attack_batch",
    "attack_regression",
    "attack_targeted",
    "backward",
    "batch_norm",
    "build_epoch",
    "build_nvidia",
    "conv2d",
    "conv_output_size",
    "cross_entropy_with_logits",
    "cross_validate",
    "dense",
    "dropout",
    "epoch_specs",
    "evaluate_classifier",
    "evaluate_regressor",
    "finite_difference_check",
    "generate_synthetic",
    "grad_enabled",
    "hinge_logit_loss",
    "kfold_split",
    "l2_distance",
    "load_dataset",
    "load_steering_log",
    "load_weights",
    "logits",
    "maxpool2x2",
    "micro_roc",
    "mse_cdf",
    "no_grad",
    "nvidia_specs",
    "optimize_at_c",
    "predict_direction",
    "predict_scalar",
    "preprocess",
    "probabilities",
    "quantization_l2_bound",
    "ratio_percentiles",
    "read_image",
    "read_ppm",
    "read_results_csv",
    "read_summary",
    "read_tensors",
    "render_figures",
    "resize_bilinear",
    "save_dataset",
    "save_weights",
    "softmax",
    "success_vs_distance",
    "train",
    "write_bundle",
    "write_image",
    "write_ppm",
    "write_results_csv",
    "write_train_report",
]
