"""Evaluation metrics and reports for the two zero-shot settings.

Accuracy is the unweighted mean of per-class correct rates (macro averaging),
the generalized score is the harmonic mean of the seen and unseen accuracies,
and every report carries a full confusion matrix over its label space.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError


def per_class_rates(truths, predictions, class_set) -> tuple[dict[int, float], list[int]]:
    """Per-class accuracy plus the list of classes with no test samples."""
    truths = np.asarray(truths, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    class_list = sorted(int(c) for c in class_set)
    if not class_list:
        raise ContractError("empty class set")
    unknown = set(truths.tolist()) - set(class_list)
    if unknown:
        raise ContractError(f"truth labels outside the class set: {sorted(unknown)}")
    rates: dict[int, float] = {}
    missing: list[int] = []
    for cid in class_list:
        mask = truths == cid
        count = int(mask.sum())
        if count == 0:
            missing.append(cid)
            continue
        rates[cid] = float((predictions[mask] == cid).sum()) / count
    return rates, missing


def per_class_accuracy(truths, predictions, class_set) -> float:
    """Unweighted mean over classes of the in-class correct rate. Classes
    without test samples are excluded from the mean."""
    rates, _ = per_class_rates(truths, predictions, class_set)
    if not rates:
        raise ContractError("no class in the set has any test sample")
    return float(np.mean(list(rates.values())))


def harmonic_mean(a_seen: float, a_unseen: float) -> float:
    """2ab / (a + b), with 0 when both accuracies are 0. Homogeneous of
    degree one, so fraction and percent scales both work."""
    if a_seen < 0 or a_unseen < 0:
        raise ContractError("accuracies must be nonnegative")
    if a_seen == 0 and a_unseen == 0:
        return 0.0
    return 2.0 * a_seen * a_unseen / (a_seen + a_unseen)


def confusion_matrix(truths, predictions, class_order) -> np.ndarray:
    """counts[i][j] = number of samples of class_order[i] predicted as
    class_order[j]."""
    truths = np.asarray(truths, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    class_order = [int(c) for c in class_order]
    index = {cid: i for i, cid in enumerate(class_order)}
    outside = (set(truths.tolist()) | set(predictions.tolist())) - set(class_order)
    if outside:
        raise ContractError(f"labels outside the class order: {sorted(outside)}")
    counts = np.zeros((len(class_order), len(class_order)), dtype=np.int64)
    for t, p in zip(truths, predictions):
        counts[index[int(t)], index[int(p)]] += 1
    return counts


@dataclass
class EvalReport:
    """Scores for one (setting, mode) pair. The classic setting has no seen
    accuracy and therefore no harmonic mean."""

    setting: str
    mode: str
    a_seen: float | None
    a_unseen: float
    harmonic: float | None
    per_class: dict[int, float]
    excluded_classes: list[int]
    class_order: list[int]
    confusion: np.ndarray
    n_queries: int = 0
    extra: dict = field(default_factory=dict)


def build_report(truths, predictions, seen_classes, unseen_classes,
                 setting: str, mode: str) -> EvalReport:
    seen_classes = [int(c) for c in seen_classes]
    unseen_classes = [int(c) for c in unseen_classes]
    truths = np.asarray(truths, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    if setting == "czsl":
        class_order = sorted(unseen_classes)
        rates, missing = per_class_rates(truths, predictions, class_order)
        a_unseen = float(np.mean(list(rates.values())))
        a_seen = None
        h = None
    else:
        class_order = sorted(seen_classes + unseen_classes)
        rates, missing = per_class_rates(truths, predictions, class_order)
        seen_rates = [rates[c] for c in seen_classes if c in rates]
        unseen_rates = [rates[c] for c in unseen_classes if c in rates]
        if not seen_rates or not unseen_rates:
            raise ContractError("generalized report needs test samples on both sides")
        a_seen = float(np.mean(seen_rates))
        a_unseen = float(np.mean(unseen_rates))
        h = harmonic_mean(a_seen, a_unseen)
    return EvalReport(
        setting=setting,
        mode=mode,
        a_seen=a_seen,
        a_unseen=a_unseen,
        harmonic=h,
        per_class=rates,
        excluded_classes=missing,
        class_order=class_order,
        confusion=confusion_matrix(truths, predictions, class_order),
        n_queries=len(truths),
    )


def _percent(x: float | None) -> str:
    return "-" if x is None else f"{100.0 * x:.1f}"


def format_report(report: EvalReport) -> str:
    """Human-readable scores in percent with one decimal, followed by the
    full-precision values."""
    lines = [
        f"setting: {report.setting}",
        f"mode: {report.mode}",
        f"queries: {report.n_queries}",
        f"accuracy_seen_percent: {_percent(report.a_seen)}",
        f"accuracy_unseen_percent: {_percent(report.a_unseen)}",
        f"harmonic_mean_percent: {_percent(report.harmonic)}",
    ]
    if report.excluded_classes:
        lines.append("classes_without_test_samples: "
                     + ",".join(str(c) for c in report.excluded_classes))
    lines.append("")
    lines.append("# full precision")
    if report.a_seen is not None:
        lines.append(f"accuracy_seen: {report.a_seen!r}")
    lines.append(f"accuracy_unseen: {report.a_unseen!r}")
    if report.harmonic is not None:
        lines.append(f"harmonic_mean: {report.harmonic!r}")
    for key, value in sorted(report.extra.items()):
        lines.append(f"{key}: {value!r}")
    return "\n".join(lines) + "\n"


def write_report(report: EvalReport, directory, stem: str) -> Path:
    """Write <stem>.txt plus per-class and confusion CSV dumps; returns the
    text report path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    text_path = directory / f"{stem}.txt"
    text_path.write_text(format_report(report))
    with open(directory / f"{stem}_per_class.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class_id", "accuracy"])
        for cid in report.class_order:
            if cid in report.per_class:
                writer.writerow([cid, f"{report.per_class[cid]:.17g}"])
            else:
                writer.writerow([cid, "excluded"])
    with open(directory / f"{stem}_confusion.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\pred"] + [str(c) for c in report.class_order])
        for i, cid in enumerate(report.class_order):
            writer.writerow([str(cid)] + [str(int(v)) for v in report.confusion[i]])
    return text_path
