"""Targeted L2 evasion attacks.

Classification minimizes ||sigma||_2 + c * f(x + sigma) with the hinge-logit
loss f = (max_{j != t} Z_j - Z_t)^+, binary-searching the penalty c from
0.001 for 9 rounds (multiplicative escalation until the first success, then
bisection) and keeping the lowest-L2 success across rounds.

Regression minimizes ||sigma||_2 - c * g with g = (F(x + sigma) - y)^2 at a
fixed c (default 100); an optional search mode binary-searches c against a
residual-ratio threshold instead.

Both attacks optimize an unconstrained variable w with x + sigma =
(tanh(w) + 1) / 2, so every iterate satisfies the [0,1] box exactly. The
inner optimizer is Adam; the candidate at each iterate is scored before the
step so the sigma = 0 start counts. The network always runs in infer mode.

Attacks flip parameter requires_grad off for their duration (and restore it),
so backward passes skip weight gradients; run concurrent in-process attacks
against separate model copies, or use process-level parallelism (attack_batch
workers), never threads over one shared Model.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Tensor, _accum, _record, backward, no_grad
from .data import LABELS
from .models import Model
from .optim import Adam

log = logging.getLogger(__name__)

MODES = ("targeted_class", "regression")
_ARCTANH_CLIP = 1e-6
_NORM_EPS = 1e-12  # smooths the norm gradient at sigma = 0; reported norms are exact
_ABORT_WINDOW = 100
_ABORT_MIN_IMPROVEMENT = 1e-4


@dataclass
class AttackConfig:
    mode: str = "targeted_class"
    c_initial: float = 0.001
    binary_search_steps: int = 9
    fixed_c: float = 100.0
    max_iterations: int = 1000
    step_size: float = 0.01
    abort_early: bool = True
    regression_success_ratio: float = 2.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.c_initial <= 0:
            raise ValueError(f"c_initial must be positive, got {self.c_initial}")
        if self.binary_search_steps < 1:
            raise ValueError(f"binary_search_steps must be at least 1, got {self.binary_search_steps}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be at least 1, got {self.max_iterations}")
        if self.step_size <= 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if self.regression_success_ratio < 1.0:
            raise ValueError(
                f"regression_success_ratio must be at least 1, got {self.regression_success_ratio}"
            )


@dataclass(frozen=True)
class ClassTarget:
    """Force the classifier's argmax to `index`."""

    index: int


@dataclass(frozen=True)
class RegressionTarget:
    """Push the regressor's prediction away from the true response y."""

    y: float


@dataclass
class AttackResult:
    sigma: np.ndarray
    l2_norm: float
    success: bool
    best_c: float  # nan when nothing succeeded
    iterations_used: int
    original_prediction: str | float
    adversarial_prediction: str | float
    wall_time: float = 0.0  # seconds
    source_id: str = ""
    target: int | None = None  # classification target index
    y: float | None = None  # regression ground truth
    clean_mse: float | None = None  # regression per-image squared residuals
    adv_mse: float | None = None


# -- objectives -------------------------------------------------------------------


def hinge_logit_loss(logits: Tensor, target: int) -> Tensor:
    """(max non-target logit - target logit)^+ over a single logit vector.

    Zero exactly when the target logit ties or beats every other logit;
    differentiable away from the hinge and from max ties (subgradient 0 at
    the hinge, lowest-index winner at a tie).
    """
    flat = logits.data.reshape(-1)
    k = flat.shape[0]
    if not 0 <= target < k:
        raise ValueError(f"hinge_logit_loss: target {target} out of range for {k} logits")
    others = np.delete(np.arange(k), target)
    j = others[int(np.argmax(flat[others]))]
    value = flat[j] - flat[target]
    shape = logits.data.shape
    active = value > 0

    def _back(g):
        grad = np.zeros(k, dtype=logits.data.dtype)
        if active:
            grad[j] = float(g)
            grad[target] = -float(g)
        _accum(logits, grad.reshape(shape))

    return _record(np.asarray(max(value, 0.0), dtype=logits.data.dtype), (logits,), _back, "hinge_logit")


def residual_loss(prediction: Tensor, y: float) -> Tensor:
    """Squared residual (F(x) - y)^2 of a scalar prediction."""
    if prediction.size != 1:
        raise ValueError(f"residual_loss: prediction must be scalar, got shape {prediction.shape}")
    diff = prediction.reshape(()) - float(y)
    return diff * diff


def l2_distance(a, b) -> float:
    """Euclidean norm of the elementwise difference over all entries."""
    ad = a.data if isinstance(a, Tensor) else np.asarray(a)
    bd = b.data if isinstance(b, Tensor) else np.asarray(b)
    if ad.shape != bd.shape:
        raise ValueError(f"l2_distance: shapes {ad.shape} and {bd.shape} differ")
    return float(np.sqrt(((ad.astype(np.float64) - bd.astype(np.float64)) ** 2).sum()))


# -- inner optimization -----------------------------------------------------------


def _predict_class(model: Model, image: np.ndarray) -> int:
    with no_grad():
        out = model.forward(Tensor(image), mode="infer")
    return int(np.argmax(out.data))


def _predict_scalar(model: Model, image: np.ndarray) -> float:
    with no_grad():
        out = model.forward(Tensor(image), mode="infer")
    return float(out.data.reshape(()))


def optimize_at_c(model: Model, image: np.ndarray, objective, c: float, config: AttackConfig) -> AttackResult:
    """One optimization run at a fixed penalty c.

    Tracks the best iterate: lowest exact L2 among target hits for
    classification, highest squared residual for regression. A non-finite
    objective aborts the run as a failure. abort_early stops after
    100 iterations without an objective improvement of 1e-4.
    """
    image = np.asarray(image, dtype=model.dtype)
    if image.min() < 0.0 or image.max() > 1.0:
        raise ValueError("optimize_at_c: image values must lie in [0, 1]")
    classification = isinstance(objective, ClassTarget)
    if not classification and not isinstance(objective, RegressionTarget):
        raise TypeError(f"objective must be ClassTarget or RegressionTarget, got {type(objective).__name__}")

    clipped = np.clip(image, _ARCTANH_CLIP, 1.0 - _ARCTANH_CLIP)
    w = np.arctanh(2.0 * clipped - 1.0)
    adam = Adam(w.shape, w.dtype, step_size=config.step_size)
    x_const = Tensor(image)

    best_sigma: np.ndarray | None = None
    best_l2 = math.inf
    best_prediction: float | int | None = None
    best_adv_sq = -math.inf
    best_objective = math.inf
    stale = 0
    iterations = 0

    if classification:
        original = _predict_class(model, image)
    else:
        clean_prediction = _predict_scalar(model, image)
        clean_sq = (clean_prediction - objective.y) ** 2

    for it in range(config.max_iterations):
        iterations = it + 1
        wt = Tensor(w, requires_grad=True)
        x_adv = wt.tanh() * 0.5 + 0.5
        sigma = x_adv - x_const
        norm = ((sigma * sigma).sum() + _NORM_EPS).sqrt()
        out = model.forward(x_adv, mode="infer")
        if classification:
            total = norm + hinge_logit_loss(out, objective.index) * c
        else:
            total = norm - residual_loss(out, objective.y) * c
        value = float(total.data)
        if not math.isfinite(value):
            log.warning("optimize_at_c: non-finite objective at c=%g, iteration %d", c, it)
            break

        exact_l2 = float(np.sqrt((sigma.data.astype(np.float64) ** 2).sum()))
        if classification:
            predicted = int(np.argmax(out.data))
            if predicted == objective.index and exact_l2 < best_l2:
                best_sigma = sigma.data.copy()
                best_l2 = exact_l2
                best_prediction = predicted
        else:
            adv_sq = float(out.data.reshape(()) - objective.y) ** 2
            if adv_sq > best_adv_sq:
                best_adv_sq = adv_sq
                best_sigma = sigma.data.copy()
                best_l2 = exact_l2
                best_prediction = float(out.data.reshape(()))

        if config.abort_early:
            if value < best_objective - _ABORT_MIN_IMPROVEMENT:
                best_objective = value
                stale = 0
            else:
                stale += 1
                if stale >= _ABORT_WINDOW:
                    break
        backward(total)
        adam.step(w, wt.grad)

    if classification:
        success = best_sigma is not None
        return AttackResult(
            sigma=best_sigma if success else np.zeros_like(image),
            l2_norm=best_l2 if success else 0.0,
            success=success,
            best_c=c if success else math.nan,
            iterations_used=iterations,
            original_prediction=LABELS[original],
            adversarial_prediction=LABELS[best_prediction] if success else LABELS[original],
            target=objective.index,
        )
    success = best_sigma is not None and best_adv_sq > clean_sq
    return AttackResult(
        sigma=best_sigma if best_sigma is not None else np.zeros_like(image),
        l2_norm=best_l2 if best_sigma is not None else 0.0,
        success=success,
        best_c=c if success else math.nan,
        iterations_used=iterations,
        original_prediction=clean_prediction,
        adversarial_prediction=best_prediction if best_prediction is not None else clean_prediction,
        y=objective.y,
        clean_mse=clean_sq,
        adv_mse=best_adv_sq if best_sigma is not None else clean_sq,
    )


class _FrozenParams:
    """Temporarily clear requires_grad on model parameters (restored on exit)."""

    def __init__(self, model: Model):
        self.model = model

    def __enter__(self):
        self.saved = [(t, t.requires_grad) for t in self.model.params.values()]
        for t, _ in self.saved:
            t.requires_grad = False
        return self

    def __exit__(self, *exc):
        for t, flag in self.saved:
            t.requires_grad = flag
        return False


def attack_targeted(model: Model, image, target, config: AttackConfig | None = None) -> AttackResult:
    """Binary-search the penalty c and return the lowest-L2 successful round.

    On a successful round the upper bound drops to c; on failure the lower
    bound rises (c escalates x10 until a success bounds it above, then
    bisects). Success means the infer-mode argmax of x + sigma equals the
    target. target may be a class index or label string, and may equal the
    original class (succeeding immediately with sigma ~ 0).
    """
    config = config or AttackConfig()
    if model.head != "classify":
        raise ValueError("attack_targeted: model has no classification head")
    target_index = LABELS.index(target) if isinstance(target, str) else int(target)
    if not 0 <= target_index < len(LABELS):
        raise ValueError(f"attack_targeted: target index {target_index} out of range")
    image = np.asarray(image, dtype=model.dtype)

    started = time.perf_counter()
    best: AttackResult | None = None
    total_iterations = 0
    lower = 0.0
    upper = math.inf
    c = config.c_initial
    with _FrozenParams(model):
        original = _predict_class(model, image)
        for _ in range(config.binary_search_steps):
            candidate = optimize_at_c(model, image, ClassTarget(target_index), c, config)
            total_iterations += candidate.iterations_used
            if candidate.success:
                upper = c
                if best is None or candidate.l2_norm < best.l2_norm:
                    best = candidate
            else:
                lower = c
            c = (lower + upper) / 2.0 if math.isfinite(upper) else c * 10.0

    elapsed = time.perf_counter() - started
    if best is None:
        return AttackResult(
            sigma=np.zeros_like(image),
            l2_norm=0.0,
            success=False,
            best_c=math.nan,
            iterations_used=total_iterations,
            original_prediction=LABELS[original],
            adversarial_prediction=LABELS[original],
            wall_time=elapsed,
            target=target_index,
        )
    best.iterations_used = total_iterations
    best.wall_time = elapsed
    best.original_prediction = LABELS[original]
    return best


def attack_regression(model: Model, image, y: float, config: AttackConfig | None = None, search: bool = False) -> AttackResult:
    """Defaults to a single run at fixed_c (success: the adversarial squared
    residual beats the clean one). With search=True, binary-searches c against
    the ratio threshold config.regression_success_ratio and keeps the
    lowest-L2 round that clears it.
    """
    config = config or AttackConfig(mode="regression")
    if model.head != "regress":
        raise ValueError("attack_regression: model has no regression head")
    image = np.asarray(image, dtype=model.dtype)
    y = float(y)

    started = time.perf_counter()
    objective = RegressionTarget(y)
    with _FrozenParams(model):
        if not search:
            result = optimize_at_c(model, image, objective, config.fixed_c, config)
            result.wall_time = time.perf_counter() - started
            return result

        tau = config.regression_success_ratio
        best: AttackResult | None = None
        total_iterations = 0
        lower = 0.0
        upper = math.inf
        c = config.c_initial
        last: AttackResult | None = None
        for _ in range(config.binary_search_steps):
            candidate = optimize_at_c(model, image, objective, c, config)
            total_iterations += candidate.iterations_used
            last = candidate
            cleared = (
                candidate.adv_mse > tau * candidate.clean_mse
                if candidate.clean_mse > 0
                else candidate.adv_mse > 0
            )
            if cleared:
                upper = c
                if best is None or candidate.l2_norm < best.l2_norm:
                    best = candidate
            else:
                lower = c
            c = (lower + upper) / 2.0 if math.isfinite(upper) else c * 10.0

    elapsed = time.perf_counter() - started
    if best is None:
        last.success = False
        last.best_c = math.nan
        last.iterations_used = total_iterations
        last.wall_time = elapsed
        return last
    best.success = True
    best.iterations_used = total_iterations
    best.wall_time = elapsed
    return best


# -- batches and serialization ------------------------------------------------------

_WORKER_MODEL: Model | None = None
_WORKER_CONFIG: AttackConfig | None = None


def _init_worker(model: Model, config: AttackConfig) -> None:
    global _WORKER_MODEL, _WORKER_CONFIG
    _WORKER_MODEL = model
    _WORKER_CONFIG = config


def _run_task(task):
    kind, image, payload, y, source_id = task
    if kind == "class":
        result = attack_targeted(_WORKER_MODEL, image, payload, _WORKER_CONFIG)
    else:
        result = attack_regression(_WORKER_MODEL, image, y, _WORKER_CONFIG)
    result.source_id = source_id
    return result


def attack_batch(model: Model, samples, config: AttackConfig | None = None, workers: int = 1) -> list[AttackResult]:
    """Attack every sample; classification enumerates both non-original targets
    per image (two rows per sample). Results follow input order regardless of
    worker scheduling."""
    config = config or AttackConfig(mode="targeted_class" if model.head == "classify" else "regression")
    if model.head == "classify" and config.mode != "targeted_class":
        raise ValueError(f"attack mode {config.mode!r} needs a regression model")
    if model.head == "regress" and config.mode != "regression":
        raise ValueError(f"attack mode {config.mode!r} needs a classification model")
    tasks = []
    for s in samples:
        if model.head == "classify":
            original = LABELS.index(s.label)
            for target in range(len(LABELS)):
                if target != original:
                    tasks.append(("class", s.image, target, 0.0, s.source_id))
        else:
            tasks.append(("regress", s.image, 0, float(s.scaled_angle), s.source_id))

    if workers <= 1:
        _init_worker(model, config)
        results = [_run_task(t) for t in tasks]
        _init_worker(None, None)
        return results
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(model, config)) as pool:
        return list(pool.map(_run_task, tasks, chunksize=1))


CSV_COLUMNS = (
    "source_id",
    "original_class_or_y",
    "target_or_mode",
    "success",
    "l2_norm",
    "best_c",
    "iterations",
    "pre_prediction",
    "post_prediction",
    "wall_time_ms",
)


def write_results_csv(results, path, include_timing: bool = True) -> None:
    """Serialize a result batch. include_timing=False writes wall_time_ms as 0
    so repeated runs produce byte-identical files."""
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in results:
            classification = r.target is not None
            if classification:
                original = r.original_prediction
                target_or_mode = LABELS[r.target]
            else:
                # regression rows carry the ground truth y here so per-image
                # squared residuals can be recomputed from the file alone
                original = repr(float(r.y))
                target_or_mode = "regression"
            writer.writerow(
                [
                    r.source_id,
                    original,
                    target_or_mode,
                    int(r.success),
                    repr(float(r.l2_norm)),
                    repr(float(r.best_c)),
                    r.iterations_used,
                    r.original_prediction if classification else repr(float(r.original_prediction)),
                    r.adversarial_prediction if classification else repr(float(r.adversarial_prediction)),
                    repr(r.wall_time * 1000.0) if include_timing else "0.0",
                ]
            )


@dataclass
class ResultRow:
    """One parsed results.csv row (prediction fields stay as written)."""

    source_id: str
    original_class_or_y: str
    target_or_mode: str
    success: bool
    l2_norm: float
    best_c: float
    iterations: int
    pre_prediction: str
    post_prediction: str
    wall_time_ms: float

    @property
    def is_regression(self) -> bool:
        return self.target_or_mode == "regression"

    @property
    def clean_mse(self) -> float:
        if not self.is_regression:
            raise ValueError("clean_mse is only defined for regression rows")
        return (float(self.pre_prediction) - float(self.original_class_or_y)) ** 2

    @property
    def adv_mse(self) -> float:
        if not self.is_regression:
            raise ValueError("adv_mse is only defined for regression rows")
        return (float(self.post_prediction) - float(self.original_class_or_y)) ** 2


def read_results_csv(path) -> list[ResultRow]:
    rows = []
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(CSV_COLUMNS):
            raise ValueError(f"{path}: unexpected results header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_COLUMNS):
                raise ValueError(f"{path} line {lineno}: expected {len(CSV_COLUMNS)} fields, got {len(row)}")
            rows.append(
                ResultRow(
                    source_id=row[0],
                    original_class_or_y=row[1],
                    target_or_mode=row[2],
                    success=bool(int(row[3])),
                    l2_norm=float(row[4]),
                    best_c=float(row[5]),
                    iterations=int(row[6]),
                    pre_prediction=row[7],
                    post_prediction=row[8],
                    wall_time_ms=float(row[9]),
                )
            )
    return rows
