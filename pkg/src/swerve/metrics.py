"""Evaluation aggregates: success-vs-distance curves, micro-average ROC/AUC,
empirical MSE CDFs, and the MSE-ratio/perturbation percentile table."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class RocCurve:
    points: list[tuple[float, float]]  # (fpr, tpr), fpr ascending, (0,0) to (1,1)
    auc: float


@dataclass
class CdfCurve:
    points: list[tuple[float, float]]  # (value, cumulative fraction i/n)
    maximum: float


@dataclass
class RatioTable:
    rows: list[tuple[int, float, float]]  # (percentile, mse_ratio, l2_perturbation)
    max_ratio: float
    excluded: int  # images dropped for zero clean MSE


def success_vs_distance(results, epsilons) -> list[tuple[float, float]]:
    """For each epsilon, the fraction of attempts that succeeded with
    l2_norm <= epsilon. Epsilons are reported sorted ascending."""
    results = list(results)
    if not results:
        raise ValueError("success_vs_distance: empty result batch")
    norms = np.array([r.l2_norm for r in results], dtype=np.float64)
    wins = np.array([bool(r.success) for r in results])
    curve = []
    for eps in sorted(float(e) for e in epsilons):
        curve.append((eps, float((wins & (norms <= eps)).mean())))
    return curve


def micro_roc(scores, labels, thresholds=None) -> RocCurve:
    """Micro-average ROC: pool the one-vs-rest binary expansion of all classes,
    sweep thresholds (all distinct scores when none are given), and integrate
    with the trapezoidal rule. Endpoints (0,0) and (1,1) are always present."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.ndim != 2:
        raise ValueError(f"micro_roc: scores must be (N, K), got shape {s.shape}")
    n, k = s.shape
    if y.shape != (n,):
        raise ValueError(f"micro_roc: labels shape {y.shape} does not match scores {s.shape}")
    if n == 0:
        raise ValueError("micro_roc: empty scores")
    if y.min() < 0 or y.max() >= k:
        raise ValueError(f"micro_roc: label out of range [0, {k})")
    pos = np.zeros((n, k), dtype=bool)
    pos[np.arange(n), y] = True
    pooled_scores = s.reshape(-1)
    pooled_pos = pos.reshape(-1)
    p = int(pooled_pos.sum())
    q = pooled_pos.size - p
    if p == 0 or q == 0:
        raise ValueError("micro_roc: degenerate pooling (needs at least one positive and one negative)")

    if thresholds is None:
        taus = np.unique(pooled_scores)[::-1]
    else:
        taus = np.sort(np.asarray(thresholds, dtype=np.float64))[::-1]
    order = np.argsort(pooled_scores, kind="stable")
    sorted_scores = pooled_scores[order]
    cum_pos = np.concatenate([[0], np.cumsum(pooled_pos[order])])
    # counts with score >= tau: everything to the right of searchsorted-left
    idx = np.searchsorted(sorted_scores, taus, side="left")
    tp = p - cum_pos[idx]
    predicted_pos = pooled_pos.size - idx
    fp = predicted_pos - tp
    tpr = tp / p
    fpr = fp / q

    points = [(0.0, 0.0)]
    for f, t in zip(fpr, tpr):
        if (f, t) != points[-1]:
            points.append((float(f), float(t)))
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))
    xs = np.array([pt[0] for pt in points])
    ys = np.array([pt[1] for pt in points])
    auc = float(np.trapezoid(ys, xs))
    return RocCurve(points, auc)


def mse_cdf(per_sample_mse) -> CdfCurve:
    """Empirical CDF of per-sample MSE values: sorted values with cumulative
    fraction i/n, plus the maximum."""
    values = np.asarray(list(per_sample_mse), dtype=np.float64)
    if values.size == 0:
        raise ValueError("mse_cdf: empty input")
    ordered = np.sort(values)
    n = ordered.size
    points = [(float(v), (i + 1) / n) for i, v in enumerate(ordered)]
    return CdfCurve(points, float(ordered[-1]))


def _nearest_rank(sorted_values: np.ndarray, percentile: float) -> float:
    n = sorted_values.size
    rank = max(1, math.ceil(percentile / 100.0 * n))
    return float(sorted_values[min(rank, n) - 1])


def ratio_percentiles(results, percentiles=(10, 25, 50, 75, 90)) -> RatioTable:
    """Nearest-rank percentiles of the per-image MSE ratio (adversarial/clean)
    and of the L2 perturbation, each sorted independently, over regression
    attack results. Images with zero clean MSE are excluded and counted."""
    ratios = []
    l2s = []
    excluded = 0
    for r in results:
        clean = r.clean_mse
        adv = r.adv_mse
        if clean is None or adv is None:
            raise ValueError("ratio_percentiles: result lacks per-image MSE fields (regression attacks only)")
        if clean == 0:
            excluded += 1
            continue
        ratios.append(adv / clean)
        l2s.append(r.l2_norm)
    if not ratios:
        raise ValueError(f"ratio_percentiles: no usable results ({excluded} had zero clean MSE)")
    ratios_sorted = np.sort(np.asarray(ratios, dtype=np.float64))
    l2_sorted = np.sort(np.asarray(l2s, dtype=np.float64))
    rows = [
        (int(p), _nearest_rank(ratios_sorted, p), _nearest_rank(l2_sorted, p))
        for p in percentiles
    ]
    return RatioTable(rows, float(ratios_sorted[-1]), excluded)
