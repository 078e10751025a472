"""Command-line front end: synth | train | attack | eval, driven by an INI
config file with a strict key schema plus a handful of global flags."""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import statistics
import sys
from pathlib import Path

import numpy as np

from . import report as report_mod
from .attack import AttackConfig, attack_batch, read_results_csv, write_results_csv
from .data import LABELS, generate_synthetic, load_dataset, load_steering_log, save_dataset
from .metrics import micro_roc, mse_cdf, ratio_percentiles, success_vs_distance
from .models import ARCHITECTURES, HEADS, build_epoch, build_nvidia, probabilities
from .ppm import read_ppm, write_ppm
from .train import LOSSES, TrainConfig, evaluate_classifier, evaluate_regressor, train, write_train_report
from .weights import load_weights, save_weights

log = logging.getLogger(__name__)

COMMANDS = ("synth", "train", "attack", "eval")

WEIGHTS_NAME = "weights.evfw"
TRAIN_REPORT_NAME = "train_report.csv"
RESULTS_NAME = "results.csv"
IMAGES_DIR = "images"


class ConfigError(Exception):
    """A problem with the configuration, not with the run itself (exit 2)."""


# -- key parsers -------------------------------------------------------------------


def _context(section: str, key: str) -> str:
    return f"[{section}] {key}"


def _parse_int(raw, minimum=None):
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"expected an integer, got {raw!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"must be at least {minimum}, got {value}")
    return value


def _parse_float(raw, positive=False):
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"expected a number, got {raw!r}")
    if positive and value <= 0:
        raise ConfigError(f"must be positive, got {value}")
    return value


_TRUE = {"1", "yes", "true", "on"}
_FALSE = {"0", "no", "false", "off"}


def _parse_bool(raw):
    lowered = str(raw).strip().lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ConfigError(f"expected a boolean (true/false), got {raw!r}")


def _parse_choice(raw, choices):
    if raw not in choices:
        raise ConfigError(f"must be one of {', '.join(choices)}; got {raw!r}")
    return raw


def _parse_class_mix(raw):
    parts = [p.strip() for p in str(raw).split(",")]
    if len(parts) != 3:
        raise ConfigError(f"expected three comma-separated fractions, got {raw!r}")
    try:
        mix = tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"expected three comma-separated fractions, got {raw!r}")
    if any(m < 0 for m in mix):
        raise ConfigError(f"fractions must be non-negative, got {raw!r}")
    if abs(sum(mix) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must sum to 1, got {sum(mix)!r}")
    return mix


def _parse_epsilon_cap(raw):
    lowered = str(raw).strip().lower()
    if lowered == "none":
        return None
    if lowered == "median":
        return "median"
    value = _parse_float(raw, positive=True)
    return value


# Per-section schema: key -> (parser, default). Commands pull what they need;
# anything not listed here is rejected outright.
_SCHEMA = {
    "run": {
        "seed": (lambda r: _parse_int(r, minimum=0), 0),
        "out": (str, "out"),
        "workers": (lambda r: _parse_int(r, minimum=1), 1),
    },
    "model": {
        "arch": (lambda r: _parse_choice(r, ("epoch", "nvidia")), "epoch"),
        "head": (lambda r: _parse_choice(r, HEADS), "classify"),
        "resolution": (lambda r: _parse_int(r, minimum=1), 128),
    },
    "data": {
        "dir": (str, None),
        "count": (lambda r: _parse_int(r, minimum=1), None),
        "class_mix": (_parse_class_mix, (0.70, 0.15, 0.15)),
        "log": (str, None),
        "images": (str, None),
    },
    "train": {
        "learning_rate": (lambda r: _parse_float(r, positive=True), 0.01),
        "momentum": (_parse_float, 0.9),
        "batch_size": (lambda r: _parse_int(r, minimum=1), 128),
        "epochs": (lambda r: _parse_int(r, minimum=1), 50),
        "loss": (lambda r: _parse_choice(r, LOSSES + ("auto",)), "auto"),
    },
    "attack": {
        "mode": (lambda r: _parse_choice(r, ("targeted_class", "regression", "auto")), "auto"),
        "c_initial": (lambda r: _parse_float(r, positive=True), 0.001),
        "binary_search_steps": (lambda r: _parse_int(r, minimum=1), 9),
        "fixed_c": (lambda r: _parse_float(r, positive=True), 100.0),
        "max_iterations": (lambda r: _parse_int(r, minimum=1, ), 1000),
        "step_size": (lambda r: _parse_float(r, positive=True), 0.01),
        "abort_early": (_parse_bool, True),
        "regression_success_ratio": (_parse_float, 2.0),
        "n_images": (lambda r: _parse_int(r, minimum=0), 0),
        "record_timing": (_parse_bool, True),
        "weights": (str, None),
    },
    "eval": {
        "weights": (str, None),
        "attack_dir": (str, None),
        "epsilon_cap": (_parse_epsilon_cap, "median"),
        "figures": (_parse_bool, True),
    },
}


def load_config(path) -> dict:
    """Read and validate an INI file against the key schema."""
    parser = configparser.RawConfigParser()
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigError(f"config file not found: {config_path}")
    try:
        with open(config_path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{config_path}: {exc}")

    cfg = {section: {key: default for key, (_, default) in keys.items()} for section, keys in _SCHEMA.items()}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"[{section}] has no key '{key}'")
            parse, _ = _SCHEMA[section][key]
            try:
                cfg[section][key] = parse(raw)
            except ConfigError as exc:
                raise ConfigError(f"{_context(section, key)}: {exc}")
    return cfg


def default_config() -> dict:
    return {section: {key: default for key, (_, default) in keys.items()} for section, keys in _SCHEMA.items()}


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    if value is None:
        return "none"
    return str(value)


def format_config(cfg: dict) -> str:
    lines = []
    for section in _SCHEMA:
        lines.append(f"[{section}]")
        for key in _SCHEMA[section]:
            value = cfg[section][key]
            if value is None and key in ("dir", "count", "log", "images", "weights", "attack_dir"):
                continue  # unset optional inputs stay out of the dump
            lines.append(f"{key} = {_format_value(value)}")
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def _require(cfg, section, key, why):
    value = cfg[section][key]
    if value is None:
        raise ConfigError(f"{_context(section, key)} is required {why}")
    return value


def _resolve_loss(cfg) -> str:
    head = cfg["model"]["head"]
    derived = "cross_entropy" if head == "classify" else "mse"
    loss = cfg["train"]["loss"]
    if loss == "auto":
        return derived
    if loss != derived:
        raise ConfigError(f"[train] loss {loss!r} does not match the {head!r} head")
    return loss


def _resolve_mode(cfg, model) -> str:
    derived = "targeted_class" if model.head == "classify" else "regression"
    mode = cfg["attack"]["mode"]
    if mode == "auto":
        return derived
    if mode != derived:
        raise ConfigError(f"[attack] mode {mode!r} does not match the {model.head!r} head of the weights")
    return mode


def _load_samples(cfg, resolution: int):
    """Pull the input dataset: a saved directory or a steering log + frames."""
    data_dir = cfg["data"]["dir"]
    log_path = cfg["data"]["log"]
    if data_dir and log_path:
        raise ConfigError("[data] dir and [data] log are mutually exclusive")
    if log_path:
        images = _require(cfg, "data", "images", "alongside [data] log")
        samples = load_steering_log(log_path, images, resolution=resolution)
    elif data_dir:
        samples = load_dataset(data_dir)
    else:
        raise ConfigError("[data] dir or [data] log is required for this command")
    expected = (resolution, resolution, 3)
    for sample in samples:
        if sample.image.shape != expected:
            raise ConfigError(
                f"dataset image {sample.source_id} has shape {sample.image.shape}, expected {expected}"
            )
    return samples


def _build_model(cfg, seed: int):
    arch = cfg["model"]["arch"]
    head = cfg["model"]["head"]
    resolution = cfg["model"]["resolution"]
    builder = build_epoch if arch == "epoch" else build_nvidia
    try:
        return builder(head, resolution, rng_seed=seed)
    except ValueError as exc:
        raise ConfigError(str(exc))


# -- commands ----------------------------------------------------------------------


def cmd_synth(cfg, out: Path, seed: int, workers: int) -> int:
    count = _require(cfg, "data", "count", "for the synth command")
    resolution = cfg["model"]["resolution"]
    mix = cfg["data"]["class_mix"]
    try:
        samples = generate_synthetic(count, resolution=resolution, rng_seed=seed, class_mix=mix)
    except ValueError as exc:
        raise ConfigError(str(exc))
    save_dataset(samples, out)
    per_class = {label: 0 for label in LABELS}
    for s in samples:
        per_class[s.label] += 1
    counts = ", ".join(f"{label} {per_class[label]}" for label in LABELS)
    print(f"wrote {count} samples at {resolution}x{resolution} to {out} ({counts})")
    return 0


def cmd_train(cfg, out: Path, seed: int, workers: int) -> int:
    loss = _resolve_loss(cfg)
    resolution = cfg["model"]["resolution"]
    samples = _load_samples(cfg, resolution)
    model = _build_model(cfg, seed)
    try:
        config = TrainConfig(
            learning_rate=cfg["train"]["learning_rate"],
            momentum=cfg["train"]["momentum"],
            batch_size=cfg["train"]["batch_size"],
            epochs=cfg["train"]["epochs"],
            rng_seed=seed,
            loss=loss,
        )
    except ValueError as exc:
        raise ConfigError(str(exc))
    report = train(model, samples, config)
    out.mkdir(parents=True, exist_ok=True)
    save_weights(model, out / WEIGHTS_NAME)
    write_train_report(report, out / TRAIN_REPORT_NAME)
    print(
        f"trained {model.arch}/{model.head} on {len(samples)} samples for {config.epochs} epochs; "
        f"final {report.metric_name} {report.final_metric:.4f}; weights in {out / WEIGHTS_NAME}"
    )
    return 0


def cmd_attack(cfg, out: Path, seed: int, workers: int) -> int:
    weights_path = _require(cfg, "attack", "weights", "for the attack command")
    model = load_weights(weights_path)
    mode = _resolve_mode(cfg, model)
    samples = _load_samples(cfg, model.resolution[0])
    n_images = cfg["attack"]["n_images"]
    if n_images:
        samples = samples[:n_images]
    try:
        config = AttackConfig(
            mode=mode,
            c_initial=cfg["attack"]["c_initial"],
            binary_search_steps=cfg["attack"]["binary_search_steps"],
            fixed_c=cfg["attack"]["fixed_c"],
            max_iterations=cfg["attack"]["max_iterations"],
            step_size=cfg["attack"]["step_size"],
            abort_early=cfg["attack"]["abort_early"],
            regression_success_ratio=cfg["attack"]["regression_success_ratio"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc))

    results = attack_batch(model, samples, config, workers=workers)

    out.mkdir(parents=True, exist_ok=True)
    write_results_csv(results, out / RESULTS_NAME, include_timing=cfg["attack"]["record_timing"])
    image_dir = out / IMAGES_DIR
    image_dir.mkdir(exist_ok=True)
    by_id = {s.source_id: s.image for s in samples}
    for source_id, image in by_id.items():
        write_ppm(image, image_dir / f"{source_id}__orig.ppm")
    for r in results:
        if not r.success:
            continue
        adv = np.clip(by_id[r.source_id] + r.sigma, 0.0, 1.0)
        if r.target is not None:
            name = f"{r.source_id}__to_{LABELS[r.target]}.ppm"
        else:
            name = f"{r.source_id}__adv.ppm"
        write_ppm(adv, image_dir / name)

    successes = [r for r in results if r.success]
    rate = len(successes) / len(results) if results else math.nan
    mean_l2 = float(np.mean([r.l2_norm for r in successes])) if successes else math.nan
    print(
        f"attacked {len(by_id)} images ({len(results)} rows): success rate {rate:.3f}, "
        f"mean successful L2 {mean_l2:.4f}; results in {out / RESULTS_NAME}"
    )
    return 0


def _eval_classification(model, samples, cfg, rows):
    labels = np.array([LABELS.index(s.label) for s in samples], dtype=np.int64)
    ev = evaluate_classifier(model, samples)
    roc_clean = micro_roc(ev.scores, labels)
    report = report_mod.EvalReport(n_images=len(samples), roc_clean=roc_clean)
    if rows is None:
        return report

    label_by_id = {s.source_id: LABELS.index(s.label) for s in samples}
    successes = [r for r in rows if r.success]
    report.success_rate = len(successes) / len(rows) if rows else math.nan
    epsilons = [0.0] + sorted({r.l2_norm for r in successes})
    report.success_curve = success_vs_distance(rows, epsilons) if rows else None

    cap = cfg["eval"]["epsilon_cap"]
    if cap == "median":
        cap = statistics.median(r.l2_norm for r in successes) if successes else None
    pool = [r for r in successes if cap is None or r.l2_norm <= cap]
    missing = [r.source_id for r in pool if r.source_id not in label_by_id]
    if missing:
        raise ValueError(f"attack results reference images absent from the dataset: {missing[:3]}")
    if pool:
        attack_dir = Path(cfg["eval"]["attack_dir"])
        scores = []
        for r in pool:
            path = attack_dir / IMAGES_DIR / f"{r.source_id}__to_{r.target_or_mode}.ppm"
            image = read_ppm(path).astype(np.float32) / 255.0
            scores.append(probabilities(model, image))
        pool_labels = np.array([label_by_id[r.source_id] for r in pool], dtype=np.int64)
        report.roc_attacked = micro_roc(np.stack(scores), pool_labels)
    else:
        log.warning("no successful attacks under the epsilon cap; skipping the attacked ROC")
    return report


def _eval_regression(model, samples, cfg, rows):
    ev = evaluate_regressor(model, samples)
    report = report_mod.EvalReport(n_images=len(samples), mse_cdf_clean=mse_cdf(ev.squared_residuals))
    if not rows:
        return report
    successes = [r for r in rows if r.success]
    report.success_rate = len(successes) / len(rows) if rows else math.nan
    epsilons = [0.0] + sorted({r.l2_norm for r in successes})
    report.success_curve = success_vs_distance(rows, epsilons) if rows else None
    report.mse_cdf_attacked = mse_cdf([r.adv_mse for r in rows])
    report.ratio_table = ratio_percentiles(rows)
    return report


def cmd_eval(cfg, out: Path, seed: int, workers: int) -> int:
    weights_path = _require(cfg, "eval", "weights", "for the eval command")
    model = load_weights(weights_path)
    samples = _load_samples(cfg, model.resolution[0])

    rows = None
    attack_dir = cfg["eval"]["attack_dir"]
    if attack_dir:
        rows = read_results_csv(Path(attack_dir) / RESULTS_NAME)
        regression_rows = any(r.is_regression for r in rows)
        if rows and regression_rows != (model.head == "regress"):
            raise ConfigError(
                f"[eval] attack_dir holds {'regression' if regression_rows else 'classification'} "
                f"results but the weights have a {model.head!r} head"
            )

    if model.head == "classify":
        report = _eval_classification(model, samples, cfg, rows)
    else:
        report = _eval_regression(model, samples, cfg, rows)

    written = report_mod.write_bundle(report, out)
    if cfg["eval"]["figures"]:
        written += report_mod.render_figures(report, out)
    for path in written:
        log.info("wrote %s", path)
    print(
        f"auc_clean={report.auc_clean!r} auc_attacked={report.auc_attacked!r} "
        f"max_ratio={report.max_ratio!r} n_images={report.n_images} "
        f"success_rate={report.success_rate!r}"
    )
    return 0


_HANDLERS = {"synth": cmd_synth, "train": cmd_train, "attack": cmd_attack, "eval": cmd_eval}


# -- entry point -------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", default=argparse.SUPPRESS, help="INI config file")
    shared.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override [run] seed")
    shared.add_argument("--out", default=argparse.SUPPRESS, help="override [run] out directory")
    shared.add_argument("--workers", type=int, default=argparse.SUPPRESS, help="override [run] workers")
    shared.add_argument(
        "--show-config", action="store_true", default=argparse.SUPPRESS,
        help="print the effective configuration and exit",
    )
    parser = argparse.ArgumentParser(prog="swerve", description=__doc__, parents=[shared])
    commands = parser.add_subparsers(dest="command", required=True, metavar="|".join(COMMANDS))
    for name, help_text in (
        ("synth", "generate a synthetic steering dataset"),
        ("train", "train a model and save its weights"),
        ("attack", "run targeted attacks against saved weights"),
        ("eval", "compute evaluation curves and the summary bundle"),
    ):
        commands.add_parser(name, parents=[shared], help=help_text)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse prints its own message
        return int(exc.code or 0)

    try:
        config_path = getattr(args, "config", None)
        cfg = load_config(config_path) if config_path else default_config()
        seed = getattr(args, "seed", None)
        if seed is not None:
            if seed < 0:
                raise ConfigError(f"--seed must be non-negative, got {seed}")
            cfg["run"]["seed"] = seed
        out = getattr(args, "out", None)
        if out is not None:
            cfg["run"]["out"] = out
        workers = getattr(args, "workers", None)
        if workers is not None:
            if workers < 1:
                raise ConfigError(f"--workers must be at least 1, got {workers}")
            cfg["run"]["workers"] = workers

        if getattr(args, "show_config", False):
            print(format_config(cfg), end="")
            return 0
        return _HANDLERS[args.command](
            cfg, Path(cfg["run"]["out"]), cfg["run"]["seed"], cfg["run"]["workers"]
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # surface runtime failures as exit 1, not tracebacks
        log.exception("command failed")
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))
