"""Training loop (SGD with classical momentum), clean evaluation, and k-fold
cross-validation."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .autodiff import Tensor, no_grad
from .data import LABELS, kfold_split
from .layers import cross_entropy_with_logits
from .models import Model
from .optim import MomentumSGD

log = logging.getLogger(__name__)

LOSSES = ("cross_entropy", "mse")
_EVAL_BATCH = 256


class TrainingDiverged(RuntimeError):
    """Raised when the loss leaves the finite range mid-run."""


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 128  # clipped to the dataset size
    epochs: int = 50
    rng_seed: int = 0
    loss: str = "cross_entropy"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be at least 1, got {self.epochs}")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}, got {self.loss!r}")


@dataclass
class TrainReport:
    epoch_losses: list[float]
    final_metric: float
    metric_name: str  # "accuracy" or "mse"
    val_metrics: list[float] | None = None
    fold: int | None = None


@dataclass
class ClassificationEval:
    accuracy: float
    confusion: np.ndarray  # (3, 3) int counts, rows true, cols predicted
    scores: np.ndarray  # (N, 3) probabilities


@dataclass
class RegressionEval:
    mse: float
    squared_residuals: np.ndarray  # (N,)
    predictions: np.ndarray  # (N,)


@dataclass
class CrossValidation:
    reports: list[TrainReport]
    metrics: list[float]
    mean: float
    stddev: float


def _stack_images(samples, dtype) -> np.ndarray:
    return np.stack([s.image for s in samples]).astype(dtype, copy=False)


def _class_indices(samples) -> np.ndarray:
    return np.array([LABELS.index(s.label) for s in samples], dtype=np.int64)


def _targets(samples, dtype) -> np.ndarray:
    return np.array([[s.scaled_angle] for s in samples], dtype=dtype)


def _check_head(model: Model, loss: str) -> None:
    wanted = "cross_entropy" if model.head == "classify" else "mse"
    if loss != wanted:
        raise ValueError(f"model head {model.head!r} requires loss {wanted!r}, got {loss!r}")


def train(model: Model, dataset, config: TrainConfig, val_dataset=None) -> TrainReport:
    """SGD-with-momentum over shuffled mini-batches; dropout and batchnorm run
    in train mode, the final metric is computed in infer mode (on val_dataset
    when given, else on the training set)."""
    _check_head(model, config.loss)
    if not dataset:
        raise ValueError("train: empty dataset")
    n = len(dataset)
    x_all = _stack_images(dataset, model.dtype)
    classification = model.head == "classify"
    y_all = _class_indices(dataset) if classification else _targets(dataset, model.dtype)

    rng = np.random.default_rng(config.rng_seed)
    optimizer = MomentumSGD(model.trainable_params(), config.learning_rate, config.momentum)
    batch = min(config.batch_size, n)
    epoch_losses: list[float] = []
    val_metrics: list[float] = [] if val_dataset is not None else None

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, batch)):
            idx = order[start : start + batch]
            xb = Tensor(x_all[idx])
            out = model.forward(xb, mode="train", rng=rng)
            if classification:
                loss = cross_entropy_with_logits(out, y_all[idx])
            else:
                diff = out - Tensor(y_all[idx])
                loss = (diff * diff).mean()
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch} batch {b}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += value * len(idx)
        epoch_losses.append(total / n)
        if val_dataset is not None:
            if classification:
                val_metrics.append(evaluate_classifier(model, val_dataset).accuracy)
            else:
                val_metrics.append(evaluate_regressor(model, val_dataset).mse)
        log.info("epoch %d: loss %.5f", epoch, epoch_losses[-1])

    held_out = val_dataset if val_dataset is not None else dataset
    if classification:
        final = evaluate_classifier(model, held_out).accuracy
        metric_name = "accuracy"
    else:
        final = evaluate_regressor(model, held_out).mse
        metric_name = "mse"
    return TrainReport(epoch_losses, final, metric_name, val_metrics=val_metrics)


def _forward_batches(model: Model, samples, through_softmax: bool) -> np.ndarray:
    x_all = _stack_images(samples, model.dtype)
    outputs = []
    with no_grad():
        for start in range(0, len(samples), _EVAL_BATCH):
            xb = Tensor(x_all[start : start + _EVAL_BATCH])
            outputs.append(model.forward(xb, mode="infer", through_softmax=through_softmax).data)
    return np.concatenate(outputs, axis=0)


def evaluate_classifier(model: Model, dataset) -> ClassificationEval:
    """Infer-mode accuracy, 3x3 confusion counts, and per-sample probabilities."""
    if model.head != "classify":
        raise ValueError("evaluate_classifier: model has no classification head")
    if not dataset:
        raise ValueError("evaluate_classifier: empty dataset")
    scores = _forward_batches(model, dataset, through_softmax=True)
    truth = _class_indices(dataset)
    predicted = scores.argmax(axis=1)
    confusion = np.zeros((len(LABELS), len(LABELS)), dtype=np.int64)
    np.add.at(confusion, (truth, predicted), 1)
    accuracy = float((predicted == truth).mean())
    return ClassificationEval(accuracy, confusion, scores)


def evaluate_regressor(model: Model, dataset) -> RegressionEval:
    """Infer-mode per-sample squared residuals; the dataset MSE is their mean."""
    if model.head != "regress":
        raise ValueError("evaluate_regressor: model has no regression head")
    if not dataset:
        raise ValueError("evaluate_regressor: empty dataset")
    predictions = _forward_batches(model, dataset, through_softmax=False)[:, 0]
    targets = np.array([s.scaled_angle for s in dataset], dtype=np.float64)
    residuals = (predictions.astype(np.float64) - targets) ** 2
    return RegressionEval(float(residuals.mean()), residuals, predictions)


def cross_validate(model_builder, dataset, k: int, config: TrainConfig) -> CrossValidation:
    """One independent training per fold from a fresh initialization.

    model_builder is a callable taking an integer seed and returning a new
    Model; per-fold builder and shuffle seeds derive deterministically from
    config.rng_seed.
    """
    folds = kfold_split(dataset, k, config.rng_seed)
    seeds = np.random.SeedSequence(config.rng_seed).generate_state(2 * k)
    reports = []
    metrics = []
    for i, (train_idx, val_idx) in enumerate(folds):
        model = model_builder(int(seeds[2 * i]))
        fold_config = replace(config, rng_seed=int(seeds[2 * i + 1]))
        train_set = [dataset[j] for j in train_idx]
        val_set = [dataset[j] for j in val_idx]
        report = train(model, train_set, fold_config, val_dataset=val_set)
        report.fold = i
        reports.append(report)
        metrics.append(report.final_metric)
        log.info("fold %d: %s %.4f", i, report.metric_name, report.final_metric)
    arr = np.asarray(metrics, dtype=np.float64)
    return CrossValidation(reports, metrics, float(arr.mean()), float(arr.std()))


def write_train_report(report: TrainReport, path) -> None:
    """CSV rows "epoch,loss" plus a val_metric column when one was tracked."""
    with_val = report.val_metrics is not None
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "loss", "val_metric"] if with_val else ["epoch", "loss"])
        for i, loss in enumerate(report.epoch_losses):
            row = [i, repr(float(loss))]
            if with_val:
                row.append(repr(float(report.val_metrics[i])))
            writer.writerow(row)
