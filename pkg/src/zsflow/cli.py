"""Command-line entry point.

Commands: toy, train, eval, generate, sweep. Every run resolves its
configuration from defaults, then an optional JSON config file, then
command-line flags (highest precedence), and writes the resolved snapshot to
``<output_dir>/config.json`` so the run can be reproduced bit-for-bit by
passing that snapshot back via ``--config``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import plots
from .classify import (MODE_NBC, MODE_SOFTMAX, SETTING_CZSL, SETTING_GZSL,
                       SoftmaxTrainConfig, generate_training_set,
                       write_predictions_csv, zero_shot_predictions)
from .data import (ZslDataset, fit_apply_minmax, load_dataset, pad_to_even,
                   toy_generate)
from .errors import ConfigError, ContractError, DataError, NumericError
from .flow import FlowModel, load_checkpoint
from .losses import (KERNEL_GAUSSIAN, KERNEL_INVERSE_MULTIQUADRATIC, KernelSpec,
                     LossWeights)
from .metrics import build_report, write_report
from .trainer import EPOCH_LOG_COLUMNS, TrainConfig, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

KERNEL_ALIASES = {
    "im": KERNEL_INVERSE_MULTIQUADRATIC,
    "inverse_multiquadratic": KERNEL_INVERSE_MULTIQUADRATIC,
    "gaussian": KERNEL_GAUSSIAN,
}

LAMBDA_SWEEP_VALUES = [0.1, 0.5, 1.0, 1.5, 2.0]
BLOCK_SWEEP_VALUES = [1, 3, 5, 7]

TOY_TARGET = (1.0, 1.0)

# Each toy variant overrides the shared training defaults; the positive-MMD
# variant raises lambda3 to 1 before negation so the discrepancy term is
# actually attractive, and large_lambda3 is the known failure configuration.
TOY_VARIANTS = {
    "full": {},
    "no_immd": {"ablation": "no_immd"},
    "positive_mmd": {"lambda3": 1.0, "ablation": "positive_mmd"},
    "large_lambda3": {"lambda3": 10.0},
}

TRAIN_DEFAULTS = {
    "seed": 0,
    "epochs": 40,
    "batch_size": 256,
    "learning_rate": 5e-4,
    "lambda1": 2.0,
    "lambda2": 1.0,
    "lambda3": 0.1,
    "kernel": "im",
    "bandwidth": None,
    "ablation": "none",
    "blocks": 5,
    "s_clamp": 2.0,
    "leaky_slope": 0.01,
    "clip_gradients": True,
    "clip_norm": 10.0,
    "checkpoint_every": 1,
    "figures": True,
}


def _merge_config(defaults: dict, file_config: dict, cli_values: dict) -> dict:
    config = dict(defaults)
    for key, value in file_config.items():
        if key in ("command", "manifest", "checkpoint"):
            continue
        if key not in defaults:
            raise ConfigError(f"unknown config key {key!r}")
        config[key] = value
    for key, value in cli_values.items():
        if key in defaults and value is not None:
            config[key] = value
    return config


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            loaded = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON ({err})") from err
    if not isinstance(loaded, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return loaded


def _write_snapshot(config: dict, command: str, output_dir: Path) -> None:
    output_dir.mkdir(parents=True, exist_ok=True)
    snapshot = {"command": command}
    snapshot.update(config)
    with open(output_dir / "config.json", "w") as fh:
        json.dump(snapshot, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _train_config(config: dict) -> TrainConfig:
    kind = KERNEL_ALIASES.get(str(config["kernel"]).lower())
    if kind is None:
        raise ConfigError(f"unknown kernel {config['kernel']!r}")
    bandwidth = config["bandwidth"]
    return TrainConfig(
        weights=LossWeights(lambda1=float(config["lambda1"]),
                            lambda2=float(config["lambda2"]),
                            lambda3=float(config["lambda3"])),
        kernel=KernelSpec(kind=kind,
                          bandwidth=None if bandwidth is None else float(bandwidth)),
        learning_rate=float(config["learning_rate"]),
        batch_size=int(config["batch_size"]),
        epochs=int(config["epochs"]),
        seed=int(config["seed"]),
        ablation=str(config["ablation"]),
        clip_gradients=bool(config["clip_gradients"]),
        clip_norm=float(config["clip_norm"]),
    )


def _build_model(dataset: ZslDataset, config: dict) -> FlowModel:
    return FlowModel(
        visual_dim=dataset.visual_dim,
        semantic_dim=dataset.semantic_dim,
        n_blocks=int(config["blocks"]),
        seed=np.random.SeedSequence([int(config["seed"]), 0]),
        s_clamp=float(config["s_clamp"]),
        leaky_slope=float(config["leaky_slope"]),
    )


def _print_dataset_summary(dataset: ZslDataset) -> None:
    splits = {tag: int((dataset.split == tag).sum())
              for tag in ("train_seen", "test_seen", "test_unseen")}
    print(f"dataset {dataset.name}: {dataset.visual.shape[0]} samples, "
          f"width {dataset.visual_dim} (pad {dataset.pad_width}), "
          f"embeddings {dataset.semantic_dim}-d, "
          f"{len(dataset.seen_classes)} seen / {len(dataset.unseen_classes)} unseen "
          f"classes, splits {splits}")


def _prepare_real_dataset(manifest: str) -> ZslDataset:
    dataset = load_dataset(manifest)
    dataset = pad_to_even(dataset)
    dataset, _ = fit_apply_minmax(dataset)
    _print_dataset_summary(dataset)
    return dataset


def _read_epoch_log(path) -> dict[str, list[float]]:
    columns = {name: [] for name in EPOCH_LOG_COLUMNS}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            for name in EPOCH_LOG_COLUMNS:
                columns[name].append(float(row[name]))
    return columns


def _quarter_means(values: list[float]) -> tuple[float, float]:
    quarter = max(1, len(values) // 4)
    return float(np.mean(values[:quarter])), float(np.mean(values[-quarter:]))


def _divergence_flag(log_columns: dict[str, list[float]]) -> bool:
    """True when the likelihood term rose while the discrepancy term fell,
    the signature of an over-weighted discrepancy run."""
    flow_start, flow_end = _quarter_means(log_columns["l_flow"])
    immd_start, immd_end = _quarter_means(log_columns["l_immd"])
    return flow_end > flow_start and immd_end < immd_start


def _evaluate_pairs(model, dataset, modes, settings, per_class, seed,
                    out_dir: Path, figures: bool) -> dict[tuple[str, str], object]:
    reports = {}
    for mode in modes:
        for setting in settings:
            query_idx, truths, predictions = zero_shot_predictions(
                model, dataset, mode=mode, setting=setting,
                per_class=per_class, seed=seed,
                softmax_config=SoftmaxTrainConfig(seed=seed))
            report = build_report(truths, predictions, dataset.seen_classes,
                                  dataset.unseen_classes, setting, mode)
            stem = f"eval_{mode}_{setting}"
            write_report(report, out_dir, stem)
            write_predictions_csv(out_dir / f"predictions_{mode}_{setting}.csv",
                                  query_idx, truths, predictions, mode, setting)
            if figures:
                plots.confusion_heatmap(report.confusion, report.class_order,
                                        out_dir / f"{stem}_confusion.png",
                                        title=f"{mode} / {setting}")
            reports[(mode, setting)] = report
            h_text = "-" if report.harmonic is None else f"{100 * report.harmonic:.1f}"
            a_s = "-" if report.a_seen is None else f"{100 * report.a_seen:.1f}"
            print(f"[{mode}/{setting}] seen {a_s}  unseen "
                  f"{100 * report.a_unseen:.1f}  H {h_text}")
    return reports


# ---------------------------------------------------------------------------
# toy


# The simulation runs with a much tighter scale clamp than the real-data
# default: the padded toy data is rank-deficient, and looser clamps let the
# likelihood chase unbounded volume terms on the padded coordinates, which
# bends the embedding-to-feature map and ruins extrapolation to the held-out
# corner class.
TOY_DEFAULTS = {
    **TRAIN_DEFAULTS,
    "epochs": 200,
    "batch_size": 128,
    "s_clamp": 0.1,
    "samples_per_class": 500,
    "gen_samples": 1000,
    "variants": list(TOY_VARIANTS),
    "per_class": 400,
    "checkpoint_every": 50,
}


def cmd_toy(config: dict, output_dir: Path) -> int:
    _write_snapshot(config, "toy", output_dir)
    dataset = toy_generate(int(config["samples_per_class"]), seed=int(config["seed"]))
    _print_dataset_summary(dataset)
    variants = config["variants"]
    unknown = [v for v in variants if v not in TOY_VARIANTS]
    if unknown:
        raise ConfigError(f"unknown toy variants: {unknown}")

    summary_rows = []
    for variant in variants:
        var_dir = output_dir / variant
        var_config = dict(config)
        var_config.update(TOY_VARIANTS[variant])
        train_config = _train_config(var_config)
        model = _build_model(dataset, var_config)
        print(f"--- variant {variant}: lambdas "
              f"({train_config.weights.lambda1}, {train_config.weights.lambda2}, "
              f"{train_config.weights.lambda3}), ablation {train_config.ablation}")
        train(model, dataset, train_config, output_dir=var_dir,
              checkpoint_every=int(var_config["checkpoint_every"]))
        log_columns = _read_epoch_log(var_dir / "training_log.csv")
        print(f"    final losses: flow {log_columns['l_flow'][-1]:.4f} "
              f"c {log_columns['l_c'][-1]:.4f} immd {log_columns['l_immd'][-1]:.4f}")

        # Generated clouds for every class, unseen included: the panel data.
        all_ids = np.arange(dataset.n_classes)
        gen_x, gen_y = generate_training_set(
            model, dataset.embeddings_for(all_ids), all_ids,
            per_class=int(config["gen_samples"]), seed=int(config["seed"]))
        with open(var_dir / "generated_samples.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class_id", "class_name"]
                            + [f"x{i}" for i in range(dataset.visual_dim)])
            for cid, row in zip(gen_y, gen_x):
                writer.writerow([int(cid), dataset.class_names[int(cid)]]
                                + [f"{v:.17g}" for v in row])

        reports = _evaluate_pairs(model, dataset, [MODE_NBC, MODE_SOFTMAX],
                                  [SETTING_CZSL, SETTING_GZSL],
                                  int(config["per_class"]), int(config["seed"]),
                                  var_dir, bool(config["figures"]))
        unseen_cloud = gen_x[gen_y == dataset.unseen_classes[0]]
        cloud_mean = unseen_cloud[:, :2].mean(axis=0)
        distance = float(np.hypot(cloud_mean[0] - TOY_TARGET[0],
                                  cloud_mean[1] - TOY_TARGET[1]))
        diverged = _divergence_flag(log_columns)
        exploded = distance > 2.0
        czsl = reports[(MODE_NBC, SETTING_CZSL)]
        gzsl = reports[(MODE_NBC, SETTING_GZSL)]
        gzsl_sm = reports[(MODE_SOFTMAX, SETTING_GZSL)]
        summary_rows.append({
            "variant": variant,
            "lambda1": train_config.weights.lambda1,
            "lambda2": train_config.weights.lambda2,
            "lambda3": train_config.weights.lambda3,
            "ablation": train_config.ablation,
            "unseen_cloud_mean_x": f"{cloud_mean[0]:.17g}",
            "unseen_cloud_mean_y": f"{cloud_mean[1]:.17g}",
            "unseen_cloud_distance_to_target": f"{distance:.17g}",
            "czsl_unseen_acc": f"{czsl.a_unseen:.17g}",
            "gzsl_seen_acc": f"{gzsl.a_seen:.17g}",
            "gzsl_unseen_acc": f"{gzsl.a_unseen:.17g}",
            "gzsl_harmonic": f"{gzsl.harmonic:.17g}",
            "gzsl_softmax_seen_acc": f"{gzsl_sm.a_seen:.17g}",
            "gzsl_softmax_unseen_acc": f"{gzsl_sm.a_unseen:.17g}",
            "gzsl_softmax_harmonic": f"{gzsl_sm.harmonic:.17g}",
            "flow_rose_while_immd_fell": str(diverged).lower(),
            "generation_exploded": str(exploded).lower(),
        })
        if config["figures"]:
            plots.class_scatter(gen_x, gen_y, dataset.class_names,
                                var_dir / "generated_samples.png",
                                title=f"generated samples ({variant})",
                                highlight=TOY_TARGET)
            plots.loss_curves(log_columns["epoch"],
                              {k: log_columns[k] for k in ("l_flow", "l_c", "l_immd")},
                              var_dir / "training_curves.png", title=variant)
        if diverged:
            print(f"    WARNING: variant {variant} flagged as failure: likelihood "
                  "loss rose while the discrepancy loss fell")
        if exploded:
            print(f"    WARNING: variant {variant} flagged as failure: generated "
                  f"unseen cloud landed {distance:.2f} away from the target")

    with open(output_dir / "toy_summary.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(summary_rows[0]))
        writer.writeheader()
        writer.writerows(summary_rows)
    for row in summary_rows:
        print(f"{row['variant']}: cloud mean ({float(row['unseen_cloud_mean_x']):.3f}, "
              f"{float(row['unseen_cloud_mean_y']):.3f}), "
              f"distance {float(row['unseen_cloud_distance_to_target']):.3f}, "
              f"gzsl unseen {100 * float(row['gzsl_unseen_acc']):.1f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def cmd_train(config: dict, output_dir: Path, manifest: str) -> int:
    if manifest is None:
        raise ConfigError("train requires --manifest")
    _write_snapshot({**config, "manifest": str(manifest)}, "train", output_dir)
    dataset = _prepare_real_dataset(manifest)
    train_config = _train_config(config)
    model = _build_model(dataset, config)
    reports = train(model, dataset, train_config, output_dir=output_dir,
                    checkpoint_every=int(config["checkpoint_every"]),
                    progress=lambda r: print(
                        f"epoch {r.epoch}: flow {r.l_flow:.4f} c {r.l_c:.4f} "
                        f"immd {r.l_immd:.4f} total {r.total:.4f}"))
    if config["figures"]:
        log_columns = _read_epoch_log(output_dir / "training_log.csv")
        plots.loss_curves(log_columns["epoch"],
                          {k: log_columns[k] for k in ("l_flow", "l_c", "l_immd", "total")},
                          output_dir / "training_curves.png")
    print(f"finished {len(reports)} epochs; checkpoints in {output_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


EVAL_DEFAULTS = {
    "seed": 0,
    "mode": "both",
    "setting": "both",
    "per_class": 400,
    "fresh_model_seed": None,
    "blocks": 5,
    "s_clamp": 2.0,
    "leaky_slope": 0.01,
    "figures": True,
}


def _expand_choice(value: str, both: tuple[str, str], what: str) -> list[str]:
    if value == "both":
        return list(both)
    if value not in both:
        raise ConfigError(f"unknown {what} {value!r}")
    return [value]


def cmd_eval(config: dict, output_dir: Path, manifest: str, checkpoint: str) -> int:
    if manifest is None:
        raise ConfigError("eval requires --manifest")
    if checkpoint is None and config["fresh_model_seed"] is None:
        raise ConfigError("eval requires --checkpoint or --fresh-model-seed")
    _write_snapshot({**config, "manifest": str(manifest),
                     "checkpoint": None if checkpoint is None else str(checkpoint)},
                    "eval", output_dir)
    dataset = _prepare_real_dataset(manifest)
    if checkpoint is not None:
        if not Path(checkpoint).exists():
            raise DataError(f"checkpoint not found: {checkpoint}")
        model = load_checkpoint(checkpoint)
    else:
        model = FlowModel(dataset.visual_dim, dataset.semantic_dim,
                          n_blocks=int(config["blocks"]),
                          seed=np.random.SeedSequence(
                              [int(config["fresh_model_seed"]), 0]),
                          s_clamp=float(config["s_clamp"]),
                          leaky_slope=float(config["leaky_slope"]))
    if model.visual_dim != dataset.visual_dim:
        raise ConfigError(f"checkpoint width {model.visual_dim} does not match "
                          f"dataset width {dataset.visual_dim}")
    if model.semantic_dim != dataset.semantic_dim:
        raise ConfigError(f"checkpoint semantic width {model.semantic_dim} does not "
                          f"match dataset embedding width {dataset.semantic_dim}")
    modes = _expand_choice(config["mode"], (MODE_NBC, MODE_SOFTMAX), "mode")
    settings = _expand_choice(config["setting"], (SETTING_CZSL, SETTING_GZSL),
                              "setting")
    _evaluate_pairs(model, dataset, modes, settings, int(config["per_class"]),
                    int(config["seed"]), output_dir, bool(config["figures"]))
    return EXIT_OK


# ---------------------------------------------------------------------------
# generate


GENERATE_DEFAULTS = {
    "seed": 0,
    "per_class": 400,
    "class_ids": None,     # default: all unseen classes
    "zero_residual": False,
    "figures": True,
}


def cmd_generate(config: dict, output_dir: Path, manifest: str,
                 checkpoint: str) -> int:
    if manifest is None:
        raise ConfigError("generate requires --manifest")
    if checkpoint is None:
        raise ConfigError("generate requires --checkpoint")
    if not Path(checkpoint).exists():
        raise DataError(f"checkpoint not found: {checkpoint}")
    _write_snapshot({**config, "manifest": str(manifest),
                     "checkpoint": str(checkpoint)}, "generate", output_dir)
    dataset = _prepare_real_dataset(manifest)
    model = load_checkpoint(checkpoint)
    if config["class_ids"] is None:
        class_ids = dataset.unseen_classes
    else:
        class_ids = np.array([int(c) for c in config["class_ids"]], dtype=np.int64)
        bad = [int(c) for c in class_ids if not 0 <= c < dataset.n_classes]
        if bad:
            raise ConfigError(f"class ids out of range: {bad}")
    features, labels = generate_training_set(
        model, dataset.embeddings_for(class_ids), class_ids,
        per_class=int(config["per_class"]), seed=int(config["seed"]),
        zero_residual=bool(config["zero_residual"]))
    with open(output_dir / "generated.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class_id", "class_name"]
                        + [f"x{i}" for i in range(features.shape[1])])
        for cid, row in zip(labels, features):
            writer.writerow([int(cid), dataset.class_names[int(cid)]]
                            + [f"{v:.17g}" for v in row])
    if config["figures"]:
        plots.class_scatter(features, labels, dataset.class_names,
                            output_dir / "generated.png", title="generated samples")
    print(f"wrote {features.shape[0]} generated samples for "
          f"{len(class_ids)} classes to {output_dir / 'generated.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep


SWEEP_DEFAULTS = {
    **TRAIN_DEFAULTS,
    "param": "all",
    "values": None,
    "toy": False,
    "samples_per_class": 500,
    "per_class": 400,
    "sweep_mode": MODE_NBC,
    "checkpoint_every": 0,
}

SWEEP_PARAMS = ("lambda1", "lambda2", "lambda3", "blocks")


def _sweep_grid(config: dict) -> list[tuple[str, float]]:
    if config["param"] == "all":
        if config["values"] is not None:
            raise ConfigError("--values requires a single --param")
        return [(p, v) for p in ("lambda1", "lambda2", "lambda3")
                for v in LAMBDA_SWEEP_VALUES]
    param = config["param"]
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"unknown sweep parameter {param!r}")
    if config["values"] is None:
        values = BLOCK_SWEEP_VALUES if param == "blocks" else LAMBDA_SWEEP_VALUES
    else:
        values = [float(v) for v in config["values"]]
    return [(param, v) for v in values]


def cmd_sweep(config: dict, output_dir: Path, manifest: str) -> int:
    if manifest is None and not config["toy"]:
        raise ConfigError("sweep requires --manifest or --toy")
    _write_snapshot({**config,
                     "manifest": None if manifest is None else str(manifest)},
                    "sweep", output_dir)
    if config["toy"]:
        dataset = toy_generate(int(config["samples_per_class"]),
                               seed=int(config["seed"]))
        _print_dataset_summary(dataset)
    else:
        dataset = _prepare_real_dataset(manifest)
    grid = _sweep_grid(config)
    modes = _expand_choice(config["sweep_mode"], (MODE_NBC, MODE_SOFTMAX), "mode")

    rows = []
    for param, value in grid:
        point_config = dict(config)
        if param == "blocks":
            point_config["blocks"] = int(value)
        else:
            point_config[param] = value
        point_dir = output_dir / f"point_{param}_{value:g}"
        train_config = _train_config(point_config)
        model = _build_model(dataset, point_config)
        print(f"--- sweep point {param}={value:g}")
        train(model, dataset, train_config, output_dir=point_dir,
              checkpoint_every=int(config["checkpoint_every"]))
        reports = _evaluate_pairs(model, dataset, modes,
                                  [SETTING_CZSL, SETTING_GZSL],
                                  int(config["per_class"]), int(config["seed"]),
                                  point_dir, bool(config["figures"]))
        for mode in modes:
            gzsl = reports[(mode, SETTING_GZSL)]
            czsl = reports[(mode, SETTING_CZSL)]
            rows.append({
                "param": param,
                "value": f"{value:g}",
                "lambda1": train_config.weights.lambda1,
                "lambda2": train_config.weights.lambda2,
                "lambda3": train_config.weights.lambda3,
                "blocks": point_config["blocks"],
                "mode": mode,
                "gzsl_seen_acc": f"{gzsl.a_seen:.17g}",
                "gzsl_unseen_acc": f"{gzsl.a_unseen:.17g}",
                "gzsl_harmonic": f"{gzsl.harmonic:.17g}",
                "czsl_unseen_acc": f"{czsl.a_unseen:.17g}",
            })
    with open(output_dir / "sweep.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    if config["figures"]:
        for param in sorted({p for p, _ in grid}):
            for mode in modes:
                sel = [r for r in rows if r["param"] == param and r["mode"] == mode]
                plots.sweep_curve(
                    [float(r["value"]) for r in sel],
                    {"gzsl harmonic": [float(r["gzsl_harmonic"]) for r in sel],
                     "czsl unseen": [float(r["czsl_unseen_acc"]) for r in sel]},
                    param, output_dir / f"sweep_{param}_{mode}.png",
                    title=f"{param} sweep ({mode})")
    print(f"sweep finished: {len(rows)} rows in {output_dir / 'sweep.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--output-dir", required=True, help="run output directory")
    parser.add_argument("--config", default=None,
                        help="JSON config file; command-line flags override it")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--figures", default=None,
                        action=argparse.BooleanOptionalAction,
                        help="render PNG figures next to the CSV outputs")


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--batch-size", type=int, default=None)
    parser.add_argument("--learning-rate", "--lr", type=float, default=None,
                        dest="learning_rate")
    parser.add_argument("--lambda1", type=float, default=None)
    parser.add_argument("--lambda2", type=float, default=None)
    parser.add_argument("--lambda3", type=float, default=None)
    parser.add_argument("--kernel", choices=sorted(KERNEL_ALIASES), default=None)
    parser.add_argument("--bandwidth", type=float, default=None)
    parser.add_argument("--ablation", default=None,
                        choices=("none", "no_lc", "no_immd", "no_lc_no_immd",
                                 "positive_mmd"))
    parser.add_argument("--blocks", type=int, default=None)
    parser.add_argument("--s-clamp", type=float, default=None, dest="s_clamp")
    parser.add_argument("--clip-gradients", default=None,
                        action=argparse.BooleanOptionalAction)
    parser.add_argument("--clip-norm", type=float, default=None, dest="clip_norm")
    parser.add_argument("--checkpoint-every", type=int, default=None,
                        dest="checkpoint_every")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zsflow",
        description="Zero-shot recognition with an invertible flow")
    commands = parser.add_subparsers(dest="command", required=True)

    toy = commands.add_parser("toy", help="run the simulation study with ablations")
    _add_common(toy)
    _add_train_flags(toy)
    toy.add_argument("--samples-per-class", type=int, default=None,
                     dest="samples_per_class")
    toy.add_argument("--gen-samples", type=int, default=None, dest="gen_samples")
    toy.add_argument("--per-class", type=int, default=None, dest="per_class")
    toy.add_argument("--variants", default=None,
                     help="comma-separated subset of " + ",".join(TOY_VARIANTS))

    tr = commands.add_parser("train", help="train on a manifest dataset")
    _add_common(tr)
    _add_train_flags(tr)
    tr.add_argument("--manifest", default=None)

    ev = commands.add_parser("eval", help="evaluate a checkpoint")
    _add_common(ev)
    ev.add_argument("--manifest", default=None)
    ev.add_argument("--checkpoint", default=None)
    ev.add_argument("--mode", choices=(MODE_NBC, MODE_SOFTMAX, "both"), default=None)
    ev.add_argument("--setting", choices=(SETTING_CZSL, SETTING_GZSL, "both"),
                    default=None)
    ev.add_argument("--per-class", type=int, default=None, dest="per_class")
    ev.add_argument("--fresh-model-seed", type=int, default=None,
                    dest="fresh_model_seed",
                    help="evaluate a freshly initialized model instead of a checkpoint")
    ev.add_argument("--blocks", type=int, default=None)
    ev.add_argument("--s-clamp", type=float, default=None, dest="s_clamp")

    gen = commands.add_parser("generate", help="generate features for classes")
    _add_common(gen)
    gen.add_argument("--manifest", default=None)
    gen.add_argument("--checkpoint", default=None)
    gen.add_argument("--per-class", type=int, default=None, dest="per_class")
    gen.add_argument("--class-ids", default=None, dest="class_ids",
                     help="comma-separated class ids; defaults to all unseen")
    gen.add_argument("--zero-residual", default=None,
                     action=argparse.BooleanOptionalAction, dest="zero_residual")

    sw = commands.add_parser("sweep", help="hyperparameter sweep")
    _add_common(sw)
    _add_train_flags(sw)
    sw.add_argument("--manifest", default=None)
    sw.add_argument("--toy", default=None, action=argparse.BooleanOptionalAction)
    sw.add_argument("--samples-per-class", type=int, default=None,
                    dest="samples_per_class")
    sw.add_argument("--param", default=None,
                    choices=SWEEP_PARAMS + ("all",))
    sw.add_argument("--values", default=None,
                    help="comma-separated grid values for --param")
    sw.add_argument("--per-class", type=int, default=None, dest="per_class")
    sw.add_argument("--sweep-mode", default=None, dest="sweep_mode",
                    choices=(MODE_NBC, MODE_SOFTMAX, "both"))
    return parser


def _comma_list(value):
    if value is None or isinstance(value, (list, tuple)):
        return value
    return [item for item in str(value).split(",") if item]


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cli_values = vars(args).copy()
    command = cli_values.pop("command")
    config_file = _load_config_file(cli_values.pop("config", None))
    output_dir = Path(cli_values.pop("output_dir"))
    manifest = cli_values.pop("manifest", None) or config_file.get("manifest")
    checkpoint = cli_values.pop("checkpoint", None) or config_file.get("checkpoint")
    for key in ("variants", "class_ids", "values"):
        if key in cli_values:
            cli_values[key] = _comma_list(cli_values[key])

    if command == "toy":
        config = _merge_config(TOY_DEFAULTS, config_file, cli_values)
        return cmd_toy(config, output_dir)
    if command == "train":
        config = _merge_config(TRAIN_DEFAULTS, config_file, cli_values)
        return cmd_train(config, output_dir, manifest)
    if command == "eval":
        config = _merge_config(EVAL_DEFAULTS, config_file, cli_values)
        return cmd_eval(config, output_dir, manifest, checkpoint)
    if command == "generate":
        config = _merge_config(GENERATE_DEFAULTS, config_file, cli_values)
        return cmd_generate(config, output_dir, manifest, checkpoint)
    if command == "sweep":
        config = _merge_config(SWEEP_DEFAULTS, config_file, cli_values)
        return cmd_sweep(config, output_dir, manifest)
    raise ConfigError(f"unknown command {command!r}")


def main(argv=None) -> int:
    try:
        return run(argv)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError,) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError,) as err:
        print(f"numeric error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except ContractError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
