"""Report bundle: the evaluation artifacts as CSV point lists plus rendered
figures, and a fixed-schema key=value summary."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import CdfCurve, RatioTable, RocCurve

SUMMARY_KEYS = ("auc_clean", "auc_attacked", "max_ratio", "n_images", "success_rate")


@dataclass
class EvalReport:
    """Everything cmd_eval knows how to emit; inapplicable pieces stay None."""

    n_images: int
    success_rate: float = math.nan
    roc_clean: RocCurve | None = None
    roc_attacked: RocCurve | None = None
    success_curve: list[tuple[float, float]] | None = None
    mse_cdf_clean: CdfCurve | None = None
    mse_cdf_attacked: CdfCurve | None = None
    ratio_table: RatioTable | None = None

    @property
    def auc_clean(self) -> float:
        return self.roc_clean.auc if self.roc_clean else math.nan

    @property
    def auc_attacked(self) -> float:
        return self.roc_attacked.auc if self.roc_attacked else math.nan

    @property
    def max_ratio(self) -> float:
        return self.ratio_table.max_ratio if self.ratio_table else math.nan


def _write_points(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])


def write_bundle(report: EvalReport, out_dir) -> list[Path]:
    """Write the present pieces as CSVs plus summary.txt (always, fixed keys)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def emit(name, header, rows):
        path = out / name
        _write_points(path, header, rows)
        written.append(path)

    if report.roc_clean is not None:
        emit("roc_clean.csv", ["fpr", "tpr"], report.roc_clean.points)
    if report.roc_attacked is not None:
        emit("roc_attacked.csv", ["fpr", "tpr"], report.roc_attacked.points)
    if report.success_curve is not None:
        emit("success_curve.csv", ["epsilon", "success"], report.success_curve)
    if report.mse_cdf_clean is not None:
        emit("mse_cdf_clean.csv", ["mse", "fraction"], report.mse_cdf_clean.points)
    if report.mse_cdf_attacked is not None:
        emit("mse_cdf_attacked.csv", ["mse", "fraction"], report.mse_cdf_attacked.points)
    if report.ratio_table is not None:
        emit(
            "ratios.csv",
            ["percentile", "mse_ratio", "l2"],
            [(p, ratio, l2) for p, ratio, l2 in report.ratio_table.rows],
        )

    summary = out / "summary.txt"
    values = {
        "auc_clean": report.auc_clean,
        "auc_attacked": report.auc_attacked,
        "max_ratio": report.max_ratio,
        "n_images": report.n_images,
        "success_rate": report.success_rate,
    }
    lines = [f"{key}={values[key]!r}" if isinstance(values[key], float) else f"{key}={values[key]}" for key in SUMMARY_KEYS]
    summary.write_text("\n".join(lines) + "\n", encoding="utf-8")
    written.append(summary)
    return written


def read_summary(path) -> dict[str, float]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        out[key] = float(value)
    return out


# -- figures ---------------------------------------------------------------------


def render_figures(report: EvalReport, out_dir) -> list[Path]:
    """Render the bundle's curves as PNGs next to the CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rendered = []

    if report.roc_clean is not None or report.roc_attacked is not None:
        fig, ax = plt.subplots(figsize=(5.5, 4.5))
        for curve, label, style in (
            (report.roc_clean, "clean", "-"),
            (report.roc_attacked, "under attack", "--"),
        ):
            if curve is None:
                continue
            xs = [p[0] for p in curve.points]
            ys = [p[1] for p in curve.points]
            ax.plot(xs, ys, style, label=f"{label} (AUC {curve.auc:.3f})")
        ax.plot([0, 1], [0, 1], ":", color="gray", linewidth=1)
        ax.set_xlabel("false positive rate")
        ax.set_ylabel("true positive rate")
        ax.set_title("micro-average ROC")
        ax.legend(loc="lower right")
        ax.grid(alpha=0.3)
        path = out / "roc.png"
        fig.savefig(path, dpi=150, bbox_inches="tight")
        plt.close(fig)
        rendered.append(path)

    if report.success_curve is not None:
        fig, ax = plt.subplots(figsize=(5.5, 4.5))
        xs = [p[0] for p in report.success_curve]
        ys = [p[1] for p in report.success_curve]
        ax.step(xs, ys, where="post")
        ax.set_xlabel("L2 distance budget")
        ax.set_ylabel("success fraction")
        ax.set_ylim(-0.02, 1.02)
        ax.set_title("attack success vs distance")
        ax.grid(alpha=0.3)
        path = out / "success_curve.png"
        fig.savefig(path, dpi=150, bbox_inches="tight")
        plt.close(fig)
        rendered.append(path)

    if report.mse_cdf_clean is not None or report.mse_cdf_attacked is not None:
        fig, ax = plt.subplots(figsize=(5.5, 4.5))
        for curve, label, style in (
            (report.mse_cdf_clean, "clean", "-"),
            (report.mse_cdf_attacked, "under attack", "--"),
        ):
            if curve is None:
                continue
            xs = [p[0] for p in curve.points]
            ys = [p[1] for p in curve.points]
            ax.step(xs, ys, style, where="post", label=label)
        ax.set_xlabel("per-image MSE")
        ax.set_ylabel("cumulative fraction")
        ax.set_xscale("symlog", linthresh=1e-3)
        ax.set_title("MSE CDF")
        ax.legend(loc="lower right")
        ax.grid(alpha=0.3)
        path = out / "mse_cdf.png"
        fig.savefig(path, dpi=150, bbox_inches="tight")
        plt.close(fig)
        rendered.append(path)

    return rendered
