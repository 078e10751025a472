"""Dataset plumbing: steering-log ingestion, preprocessing, direction labels,
synthetic road-scene generation, and k-fold index splitting.

A steering log pairs camera frames with raw steering angles. Angles are
scaled by 1/25 into model space and thresholded at +/-0.15 into three
direction classes. Raw frames are cropped to their bottom 280 rows (the sky
carries no steering signal) and bilinearly resized to the working resolution.

The synthetic generator stands in for real logs at desk scale: a textured
ground plane with a bright lane line leaning proportionally to the steering
angle, plus brightness jitter and pixel noise.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ppm

log = logging.getLogger(__name__)

LABELS = ("left", "straight", "right")
ANGLE_SCALE = 1.0 / 25.0
STRAIGHT_THRESHOLD = 0.15
ANGLE_RANGE = (-2.05, 1.9)
CROP_ROWS = 280

# Exponential tail scale for the synthetic angle law; solves the mixture
# variance equation so a 70/15/15 mix lands at stddev ~0.27 overall.
_TAIL_SCALE = 0.253
_LINE_DEGREES_PER_UNIT = 30.0


def angle_to_label(scaled_angle: float) -> str:
    """> 0.15 -> right, < -0.15 -> left, else straight (boundaries inclusive)."""
    a = float(scaled_angle)
    if not math.isfinite(a):
        raise ValueError(f"angle_to_label: angle must be finite, got {a!r}")
    if a > STRAIGHT_THRESHOLD:
        return "right"
    if a < -STRAIGHT_THRESHOLD:
        return "left"
    return "straight"


@dataclass
class Sample:
    """One preprocessed image with its scaled steering angle and direction label."""

    image: np.ndarray  # float32 (H, W, 3) in [0, 1]
    scaled_angle: float
    label: str
    source_id: str

    def __post_init__(self):
        expected = angle_to_label(self.scaled_angle)
        if self.label != expected:
            raise ValueError(
                f"sample {self.source_id}: label {self.label!r} inconsistent with angle "
                f"{self.scaled_angle} (threshold rule gives {expected!r})"
            )


@dataclass
class DatasetSummary:
    count: int
    angle_min: float
    angle_max: float
    angle_mean: float
    angle_stddev: float
    proportions: dict[str, float]

    @classmethod
    def from_samples(cls, samples) -> "DatasetSummary":
        if not samples:
            raise ValueError("cannot summarize an empty dataset")
        angles = np.array([s.scaled_angle for s in samples], dtype=np.float64)
        n = len(samples)
        props = {name: sum(1 for s in samples if s.label == name) / n for name in LABELS}
        return cls(
            count=n,
            angle_min=float(angles.min()),
            angle_max=float(angles.max()),
            angle_mean=float(angles.mean()),
            angle_stddev=float(angles.std()),
            proportions=props,
        )


# -- preprocessing ---------------------------------------------------------------


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with half-pixel-center coordinates and clamped edges.

    Resizing to the input size is the identity.
    """
    img = np.asarray(image)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    h, w, _ = img.shape
    if out_h < 1 or out_w < 1:
        raise ValueError(f"resize_bilinear: bad output size {out_h}x{out_w}")
    if (out_h, out_w) == (h, w):
        out = img.copy()
        return out[:, :, 0] if squeeze else out

    def _axis_coords(n_in: int, n_out: int):
        centers = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
        centers = np.clip(centers, 0.0, n_in - 1.0)
        lo = np.floor(centers).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = centers - lo
        return lo, hi, frac

    y0, y1, fy = _axis_coords(h, out_h)
    x0, x1, fx = _axis_coords(w, out_w)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = img[y0][:, x0] * (1.0 - fx) + img[y0][:, x1] * fx
    bottom = img[y1][:, x0] * (1.0 - fx) + img[y1][:, x1] * fx
    out = top * (1.0 - fy) + bottom * fy
    out = out.astype(img.dtype, copy=False)
    return out[:, :, 0] if squeeze else out


def _resolution_pair(resolution) -> tuple[int, int]:
    if isinstance(resolution, (int, np.integer)):
        return int(resolution), int(resolution)
    h, w = resolution
    return int(h), int(w)


def preprocess(raw_image: np.ndarray, resolution=128) -> np.ndarray:
    """Crop to the bottom 280 rows, bilinear-resize to `resolution`, and map
    bytes into [0,1] float32. Inputs shorter than 280 rows are rejected."""
    raw = np.asarray(raw_image)
    if raw.ndim != 3 or raw.shape[2] != 3:
        raise ValueError(f"preprocess: raw image must be (H, W, 3), got shape {raw.shape}")
    h0 = raw.shape[0]
    if h0 < CROP_ROWS:
        raise ValueError(f"preprocess: image has {h0} rows, need at least {CROP_ROWS}")
    cropped = raw[h0 - CROP_ROWS :] if h0 > CROP_ROWS else raw
    out_h, out_w = _resolution_pair(resolution)
    scaled = cropped.astype(np.float64) / 255.0
    resized = resize_bilinear(scaled, out_h, out_w)
    return np.clip(resized, 0.0, 1.0).astype(np.float32)


# -- steering logs ----------------------------------------------------------------


def load_steering_log(csv_path, image_dir, resolution=128) -> list[Sample]:
    """Read a "frame,angle" log, preprocess each referenced image, and derive
    labels. Rows whose image file is missing are skipped (with a logged count);
    malformed rows are rejected with their line number."""
    csv_path = Path(csv_path)
    image_dir = Path(image_dir)
    samples: list[Sample] = []
    missing = 0
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["frame", "angle"]:
            raise ValueError(f"{csv_path}: expected header 'frame,angle', got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(f"{csv_path} line {lineno}: expected 2 fields, got {len(row)}")
            frame = row[0].strip()
            try:
                raw_angle = float(row[1])
            except ValueError as exc:
                raise ValueError(f"{csv_path} line {lineno}: bad angle {row[1]!r}") from exc
            if not math.isfinite(raw_angle):
                raise ValueError(f"{csv_path} line {lineno}: angle must be finite")
            path = image_dir / frame
            if not path.exists():
                missing += 1
                continue
            image = preprocess(ppm.read_image(path), resolution)
            scaled = raw_angle * ANGLE_SCALE
            samples.append(Sample(image, scaled, angle_to_label(scaled), source_id=Path(frame).stem))
    if missing:
        log.warning("steering log %s: skipped %d rows with missing image files", csv_path, missing)
    if not samples:
        raise ValueError(f"{csv_path}: no usable samples (all rows missing or file empty)")
    return samples


# -- synthetic scenes --------------------------------------------------------------


def _sample_angle(rng: np.random.Generator, cls: int) -> float:
    lo, hi = ANGLE_RANGE
    if cls == 1:  # straight: truncated normal inside the threshold band
        while True:
            a = rng.normal(0.0, 0.27)
            if abs(a) <= STRAIGHT_THRESHOLD:
                return float(a)
    while True:  # turns: threshold plus an exponential tail, kept in range
        tail = rng.exponential(_TAIL_SCALE)
        a = -(STRAIGHT_THRESHOLD + tail) if cls == 0 else STRAIGHT_THRESHOLD + tail
        if lo <= a <= hi:
            return float(a)


def _render_scene(rng: np.random.Generator, h: int, w: int, scaled_angle: float) -> np.ndarray:
    coarse = rng.random((h // 8 + 2, w // 8 + 2, 3)) * 0.25 + 0.15
    img = resize_bilinear(coarse, h, w)

    # lane line from bottom-center; screen lean is affine in the angle
    lean = math.tan(math.radians(_LINE_DEGREES_PER_UNIT * scaled_angle))
    rows_up = (h - 1) - np.arange(h, dtype=np.float64)  # distance above the bottom row
    centers = (w - 1) / 2.0 + lean * rows_up
    xs = np.arange(w, dtype=np.float64)
    alpha = np.exp(-0.5 * ((xs[None, :] - centers[:, None]) / 1.8) ** 2)
    line_color = np.array([0.95, 0.95, 0.85])
    img = img * (1.0 - alpha[:, :, None]) + line_color * alpha[:, :, None]

    img *= rng.uniform(0.9, 1.1)
    img += rng.normal(0.0, 0.015, size=img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


# class_mix positions -> label indices: the mix is given as
# (straight, left, right) because straight dominates real driving logs
_MIX_TO_LABEL = (1, 0, 2)


def generate_synthetic(count, resolution=64, rng_seed=0, class_mix=(0.70, 0.15, 0.15)) -> list[Sample]:
    """Render `count` synthetic road scenes with angles drawn to match the
    real log's distribution (mean ~0, stddev ~0.27, range [-2.05, 1.9]).

    class_mix gives the (straight, left, right) class fractions; the default
    keeps 70% of labels straight the way real driving footage does.

    Pure function of its arguments: per-sample RNG streams are spawned from
    the seed, so parallel or partial generation cannot reorder results.
    """
    if not isinstance(count, (int, np.integer)) or count < 1:
        raise ValueError(f"generate_synthetic: count must be a positive integer, got {count!r}")
    mix = np.asarray(class_mix, dtype=np.float64)
    if mix.shape != (3,) or (mix < 0).any() or abs(mix.sum() - 1.0) > 1e-9:
        raise ValueError(f"generate_synthetic: class_mix must be 3 nonnegative weights summing to 1, got {class_mix!r}")
    h, w = _resolution_pair(resolution)
    if h < 16 or w < 16:
        raise ValueError(f"generate_synthetic: resolution must be at least 16x16, got {h}x{w}")
    cumulative = np.cumsum(mix)
    children = np.random.SeedSequence(rng_seed).spawn(int(count))
    samples = []
    for i in range(int(count)):
        rng = np.random.default_rng(children[i])
        drawn = int(np.searchsorted(cumulative, rng.random(), side="right"))
        cls = _MIX_TO_LABEL[min(drawn, 2)]
        angle = _sample_angle(rng, cls)
        image = _render_scene(rng, h, w, angle)
        samples.append(Sample(image, angle, LABELS[cls], source_id=f"synth-{i:05d}"))
    return samples


# -- folds -------------------------------------------------------------------------


def kfold_split(dataset, k: int, rng_seed=0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Shuffle indices with the seed and cut k folds whose sizes differ by at
    most one. Returns (train_indices, validation_indices) pairs, sorted."""
    n = dataset if isinstance(dataset, (int, np.integer)) else len(dataset)
    if k < 2:
        raise ValueError(f"kfold_split: k must be at least 2, got {k}")
    if k > n:
        raise ValueError(f"kfold_split: k={k} exceeds dataset size {n}")
    perm = np.random.default_rng(rng_seed).permutation(int(n))
    folds = np.array_split(perm, k)
    out = []
    for i, fold in enumerate(folds):
        train = np.sort(np.concatenate([f for j, f in enumerate(folds) if j != i]))
        out.append((train, np.sort(fold)))
    return out


# -- dataset directories -------------------------------------------------------------

MANIFEST_NAME = "manifest.csv"


def save_dataset(samples, directory) -> Path:
    """Write samples as PPM files plus a 'source_id,scaled_angle,label' manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = directory / MANIFEST_NAME
    with open(manifest, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["source_id", "scaled_angle", "label"])
        for s in samples:
            ppm.write_ppm(s.image, directory / f"{s.source_id}.ppm")
            writer.writerow([s.source_id, repr(float(s.scaled_angle)), s.label])
    return manifest


def load_dataset(directory) -> list[Sample]:
    """Read back a directory written by save_dataset (or any matching layout)."""
    directory = Path(directory)
    manifest = directory / MANIFEST_NAME
    if not manifest.exists():
        raise FileNotFoundError(f"no {MANIFEST_NAME} in {directory}")
    samples = []
    with open(manifest, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["source_id", "scaled_angle", "label"]:
            raise ValueError(f"{manifest}: expected header 'source_id,scaled_angle,label', got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"{manifest} line {lineno}: expected 3 fields, got {len(row)}")
            source_id, angle_text, label = row
            try:
                angle = float(angle_text)
            except ValueError as exc:
                raise ValueError(f"{manifest} line {lineno}: bad angle {angle_text!r}") from exc
            image = ppm.read_ppm(directory / f"{source_id}.ppm").astype(np.float32) / 255.0
            samples.append(Sample(image, angle, label, source_id=source_id))
    if not samples:
        raise ValueError(f"{manifest}: empty dataset")
    return samples
