"""Report bundle: which files appear for which report pieces, the fixed
summary schema, exact float round trips, and figure rendering."""

import math

import pytest

from swerve import (
    CdfCurve,
    EvalReport,
    RatioTable,
    RocCurve,
    SUMMARY_KEYS,
    read_summary,
    render_figures,
    write_bundle,
)

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def full_report():
    roc_clean = RocCurve([(0.0, 0.0), (0.1, 0.9), (1.0, 1.0)], 0.93)
    roc_attacked = RocCurve([(0.0, 0.0), (0.5, 0.5), (1.0, 1.0)], 0.5)
    cdf = CdfCurve([(0.01, 0.5), (0.04, 1.0)], 0.04)
    cdf_attacked = CdfCurve([(0.2, 0.5), (0.9, 1.0)], 0.9)
    ratios = RatioTable([(10, 1.19, 0.007), (90, 20.88, 0.57)], 69.0, 1)
    return EvalReport(
        n_images=12,
        success_rate=0.75,
        roc_clean=roc_clean,
        roc_attacked=roc_attacked,
        success_curve=[(0.0, 0.0), (0.3, 0.5), (1.2, 0.75)],
        mse_cdf_clean=cdf,
        mse_cdf_attacked=cdf_attacked,
        ratio_table=ratios,
    )


def test_full_bundle_file_set(tmp_path):
    written = write_bundle(full_report(), tmp_path)
    names = sorted(p.name for p in written)
    assert names == [
        "mse_cdf_attacked.csv",
        "mse_cdf_clean.csv",
        "ratios.csv",
        "roc_attacked.csv",
        "roc_clean.csv",
        "success_curve.csv",
        "summary.txt",
    ]
    assert all(p.exists() for p in written)


def test_minimal_bundle_is_summary_only(tmp_path):
    written = write_bundle(EvalReport(n_images=3), tmp_path)
    assert [p.name for p in written] == ["summary.txt"]
    summary = read_summary(written[0])
    assert list(summary) == list(SUMMARY_KEYS)
    assert summary["n_images"] == 3
    assert math.isnan(summary["auc_clean"])
    assert math.isnan(summary["auc_attacked"])
    assert math.isnan(summary["max_ratio"])
    assert math.isnan(summary["success_rate"])


def test_summary_round_trip_is_exact(tmp_path):
    report = full_report()
    write_bundle(report, tmp_path)
    summary = read_summary(tmp_path / "summary.txt")
    assert summary["auc_clean"] == 0.93
    assert summary["auc_attacked"] == 0.5
    assert summary["max_ratio"] == 69.0
    assert summary["n_images"] == 12.0
    assert summary["success_rate"] == 0.75


def test_csv_columns_and_float_text(tmp_path):
    write_bundle(full_report(), tmp_path)
    roc = (tmp_path / "roc_clean.csv").read_text().splitlines()
    assert roc[0] == "fpr,tpr"
    assert roc[1] == "0.0,0.0"
    assert roc[2] == "0.1,0.9"  # repr keeps the shortest exact form
    curve = (tmp_path / "success_curve.csv").read_text().splitlines()
    assert curve[0] == "epsilon,success"
    ratios = (tmp_path / "ratios.csv").read_text().splitlines()
    assert ratios[0] == "percentile,mse_ratio,l2"
    assert ratios[1] == "10,1.19,0.007"  # percentile stays an integer
    cdf = (tmp_path / "mse_cdf_clean.csv").read_text().splitlines()
    assert cdf[0] == "mse,fraction"


def test_derived_metrics_come_from_the_pieces():
    report = full_report()
    assert report.auc_clean == 0.93
    assert report.auc_attacked == 0.5
    assert report.max_ratio == 69.0
    bare = EvalReport(n_images=1)
    assert math.isnan(bare.auc_clean)
    assert math.isnan(bare.max_ratio)


def test_render_figures_full(tmp_path):
    rendered = render_figures(full_report(), tmp_path)
    assert sorted(p.name for p in rendered) == ["mse_cdf.png", "roc.png", "success_curve.png"]
    for path in rendered:
        blob = path.read_bytes()
        assert blob.startswith(PNG_MAGIC)
        assert len(blob) > 1000


def test_render_figures_conditional(tmp_path):
    report = EvalReport(n_images=2, roc_clean=RocCurve([(0.0, 0.0), (1.0, 1.0)], 0.5))
    rendered = render_figures(report, tmp_path)
    assert [p.name for p in rendered] == ["roc.png"]
    assert render_figures(EvalReport(n_images=2), tmp_path / "none") == []


def test_read_summary_rejects_nothing_quietly(tmp_path):
    # blank lines are tolerated, values parse as floats
    path = tmp_path / "summary.txt"
    path.write_text("auc_clean=0.5\n\nn_images=4\n")
    assert read_summary(path) == {"auc_clean": 0.5, "n_images": 4.0}
    path.write_text("auc_clean=oops\n")
    with pytest.raises(ValueError):
        read_summary(path)
