"""End-to-end command-line behavior: config validation and exit codes, the
synth | train | attack | eval pipeline on a small dataset, artifact layout,
and the quantization error bound on written adversarial images."""

import math
import textwrap

import numpy as np
import pytest

from swerve import load_dataset, quantization_l2_bound, read_ppm, read_results_csv, read_summary
from swerve.cli import main


def write_ini(path, text):
    path.write_text(textwrap.dedent(text), encoding="utf-8")
    return str(path)


# -- config validation -------------------------------------------------------------


@pytest.mark.parametrize(
    "body, fragment",
    [
        ("[rocket]\nfuel = 1\n", "unknown config section"),
        ("[run]\nspeed = 9\n", "has no key"),
        ("[run]\nseed = -1\n", "at least 0"),
        ("[data]\nclass_mix = 0.5,0.5\n", "three comma-separated"),
        ("[data]\nclass_mix = 0.5,0.4,0.2\n", "sum to 1"),
        ("[attack]\nabort_early = maybe\n", "boolean"),
        ("[model]\narch = resnet\n", "must be one of"),
        ("[train]\nlearning_rate = 0\n", "must be positive"),
    ],
)
def test_bad_configs_exit_2(tmp_path, capsys, body, fragment):
    config = write_ini(tmp_path / "swerve.ini", body)
    assert main(["synth", "--config", config]) == 2
    err = capsys.readouterr().err
    assert "config error" in err and fragment in err


def test_missing_config_file_exits_2(tmp_path, capsys):
    assert main(["synth", "--config", str(tmp_path / "absent.ini")]) == 2
    assert "not found" in capsys.readouterr().err


def test_usage_errors_exit_2(capsys):
    assert main([]) == 2
    assert main(["launch"]) == 2
    capsys.readouterr()


def test_loss_head_mismatch_exits_2(tmp_path, capsys):
    config = write_ini(
        tmp_path / "swerve.ini",
        """
        [model]
        head = classify
        [train]
        loss = mse
        [data]
        dir = unused
        """,
    )
    assert main(["train", "--config", config]) == 2
    assert "does not match" in capsys.readouterr().err


def test_dir_and_log_are_mutually_exclusive(tmp_path, capsys):
    config = write_ini(
        tmp_path / "swerve.ini",
        """
        [data]
        dir = somewhere
        log = elsewhere.csv
        """,
    )
    assert main(["train", "--config", config]) == 2
    assert "mutually exclusive" in capsys.readouterr().err


def test_synth_requires_count(capsys):
    assert main(["synth"]) == 2
    assert "[data] count is required" in capsys.readouterr().err


def test_attack_requires_weights(capsys):
    assert main(["attack"]) == 2
    assert "[attack] weights is required" in capsys.readouterr().err


def test_show_config_applies_overrides(tmp_path, capsys):
    config = write_ini(tmp_path / "swerve.ini", "[run]\nseed = 3\n")
    assert main(["synth", "--config", config, "--seed", "7", "--out", "result", "--show-config"]) == 0
    out = capsys.readouterr().out
    assert "seed = 7" in out
    assert "out = result" in out
    assert "class_mix = 0.7,0.15,0.15" in out
    for section in ("[run]", "[model]", "[data]", "[train]", "[attack]", "[eval]"):
        assert section in out


def test_negative_seed_flag_exits_2(capsys):
    assert main(["synth", "--seed", "-4"]) == 2
    assert "non-negative" in capsys.readouterr().err


# -- synth -------------------------------------------------------------------------


def synth_config(tmp_path, count=24, resolution=16):
    return write_ini(
        tmp_path / "synth.ini",
        f"""
        [model]
        resolution = {resolution}
        [data]
        count = {count}
        """,
    )


def test_synth_writes_a_loadable_dataset(tmp_path, capsys):
    config = synth_config(tmp_path)
    out = tmp_path / "data"
    assert main(["synth", "--config", config, "--out", str(out), "--seed", "5"]) == 0
    assert "wrote 24 samples at 16x16" in capsys.readouterr().out
    samples = load_dataset(out)
    assert len(samples) == 24
    assert all(s.image.shape == (16, 16, 3) for s in samples)


def test_synth_is_byte_reproducible(tmp_path, capsys):
    config = synth_config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["synth", "--config", config, "--out", str(a), "--seed", "9"]) == 0
    assert main(["synth", "--config", config, "--out", str(b), "--seed", "9"]) == 0
    capsys.readouterr()
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()


# -- full pipelines ----------------------------------------------------------------


@pytest.fixture(scope="module")
def classification_run(tmp_path_factory):
    """synth -> train -> attack -> eval at 16x16, kept small but real."""
    root = tmp_path_factory.mktemp("classify")
    data, run, attacks, report = root / "data", root / "run", root / "attacks", root / "report"
    synth = write_ini(root / "synth.ini", "[model]\nresolution = 16\n[data]\ncount = 40\n")
    assert main(["synth", "--config", synth, "--out", str(data), "--seed", "5"]) == 0
    train = write_ini(
        root / "train.ini",
        f"""
        [model]
        resolution = 16
        [data]
        dir = {data}
        [train]
        epochs = 2
        learning_rate = 0.005
        """,
    )
    assert main(["train", "--config", train, "--out", str(run), "--seed", "5"]) == 0
    attack = write_ini(
        root / "attack.ini",
        f"""
        [data]
        dir = {data}
        [attack]
        weights = {run / "weights.evfw"}
        n_images = 2
        c_initial = 1.0
        max_iterations = 250
        binary_search_steps = 5
        step_size = 0.05
        record_timing = false
        """,
    )
    assert main(["attack", "--config", attack, "--out", str(attacks), "--seed", "5"]) == 0
    evaluate = write_ini(
        root / "eval.ini",
        f"""
        [data]
        dir = {data}
        [eval]
        weights = {run / "weights.evfw"}
        attack_dir = {attacks}
        """,
    )
    assert main(["eval", "--config", evaluate, "--out", str(report), "--seed", "5"]) == 0
    return {"data": data, "run": run, "attacks": attacks, "report": report}


def test_train_artifacts(classification_run):
    run = classification_run["run"]
    assert (run / "weights.evfw").exists()
    lines = (run / "train_report.csv").read_text().splitlines()
    assert lines[0] == "epoch,loss"
    assert len(lines) == 3  # header + 2 epochs


def test_attack_artifacts(classification_run):
    attacks = classification_run["attacks"]
    rows = read_results_csv(attacks / "results.csv")
    assert len(rows) == 4  # 2 images x 2 non-original targets
    assert all(r.wall_time_ms == 0.0 for r in rows)  # record_timing = false
    originals = sorted(p.name for p in (attacks / "images").glob("*__orig.ppm"))
    assert len(originals) == 2
    for r in rows:
        if r.success:
            assert (attacks / "images" / f"{r.source_id}__to_{r.target_or_mode}.ppm").exists()


def test_attacks_actually_land(classification_run):
    rows = read_results_csv(classification_run["attacks"] / "results.csv")
    assert sum(r.success for r in rows) >= 1
    for r in rows:
        if r.success:
            assert r.l2_norm > 0.0
            assert math.isfinite(r.best_c)


def test_adversarial_ppm_error_is_bounded_by_quantization(classification_run):
    """The written adversarial image may differ from original + sigma only by
    PPM rounding, so its measured distance stays within the uint8 bound."""
    originals = {s.source_id: s.image for s in load_dataset(classification_run["data"])}
    rows = read_results_csv(classification_run["attacks"] / "results.csv")
    bound = quantization_l2_bound((16, 16, 3))
    for r in rows:
        if not r.success:
            continue
        path = classification_run["attacks"] / "images" / f"{r.source_id}__to_{r.target_or_mode}.ppm"
        adv = read_ppm(path).astype(np.float64) / 255.0
        measured = float(np.sqrt(((adv - originals[r.source_id]) ** 2).sum()))
        assert abs(measured - r.l2_norm) <= bound + 1e-6


def test_eval_bundle(classification_run, capsys):
    report = classification_run["report"]
    assert (report / "roc_clean.csv").exists()
    assert (report / "success_curve.csv").exists()
    assert (report / "roc.png").exists()
    summary = read_summary(report / "summary.txt")
    assert summary["n_images"] == 40
    assert 0.0 <= summary["auc_clean"] <= 1.0
    assert 0.0 <= summary["success_rate"] <= 1.0
    assert math.isnan(summary["max_ratio"])  # regression-only metric


def test_eval_without_attacks_is_clean_only(classification_run, tmp_path, capsys):
    root = classification_run
    config = write_ini(
        tmp_path / "eval.ini",
        f"""
        [data]
        dir = {root["data"]}
        [eval]
        weights = {root["run"] / "weights.evfw"}
        figures = false
        """,
    )
    out = tmp_path / "clean"
    assert main(["eval", "--config", config, "--out", str(out)]) == 0
    capsys.readouterr()
    assert (out / "roc_clean.csv").exists()
    assert not (out / "roc_attacked.csv").exists()
    assert not (out / "roc.png").exists()  # figures disabled
    summary = read_summary(out / "summary.txt")
    assert math.isnan(summary["success_rate"])


@pytest.fixture(scope="module")
def regression_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("regress")
    data, run, attacks, report = root / "data", root / "run", root / "attacks", root / "report"
    synth = write_ini(root / "synth.ini", "[model]\nresolution = 16\n[data]\ncount = 30\n")
    assert main(["synth", "--config", synth, "--out", str(data), "--seed", "8"]) == 0
    train = write_ini(
        root / "train.ini",
        f"""
        [model]
        resolution = 16
        head = regress
        [data]
        dir = {data}
        [train]
        epochs = 2
        """,
    )
    assert main(["train", "--config", train, "--out", str(run), "--seed", "8"]) == 0
    attack = write_ini(
        root / "attack.ini",
        f"""
        [data]
        dir = {data}
        [attack]
        weights = {run / "weights.evfw"}
        n_images = 3
        max_iterations = 100
        """,
    )
    assert main(["attack", "--config", attack, "--out", str(attacks), "--seed", "8"]) == 0
    evaluate = write_ini(
        root / "eval.ini",
        f"""
        [data]
        dir = {data}
        [eval]
        weights = {run / "weights.evfw"}
        attack_dir = {attacks}
        """,
    )
    assert main(["eval", "--config", evaluate, "--out", str(report), "--seed", "8"]) == 0
    return {"data": data, "run": run, "attacks": attacks, "report": report}


def test_regression_attack_rows(regression_run):
    rows = read_results_csv(regression_run["attacks"] / "results.csv")
    assert len(rows) == 3  # one row per image, no target enumeration
    assert all(r.is_regression for r in rows)
    adv = sorted(p.name for p in (regression_run["attacks"] / "images").glob("*__adv.ppm"))
    assert len(adv) == sum(r.success for r in rows)


def test_regression_eval_bundle(regression_run):
    report = regression_run["report"]
    assert (report / "mse_cdf_clean.csv").exists()
    assert (report / "mse_cdf_attacked.csv").exists()
    assert (report / "ratios.csv").exists()
    assert (report / "mse_cdf.png").exists()
    assert not (report / "roc_clean.csv").exists()
    summary = read_summary(report / "summary.txt")
    assert summary["n_images"] == 30
    assert math.isnan(summary["auc_clean"])
    assert summary["max_ratio"] > 0.0


def test_eval_rejects_mismatched_attack_results(classification_run, regression_run, tmp_path, capsys):
    config = write_ini(
        tmp_path / "eval.ini",
        f"""
        [data]
        dir = {classification_run["data"]}
        [eval]
        weights = {classification_run["run"] / "weights.evfw"}
        attack_dir = {regression_run["attacks"]}
        """,
    )
    assert main(["eval", "--config", config, "--out", str(tmp_path / "x")]) == 2
    assert "regression" in capsys.readouterr().err
