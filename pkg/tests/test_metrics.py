"""Macro accuracy, harmonic mean, confusion matrices, and report assembly."""

import numpy as np
import pytest

from zsflow.errors import ContractError
from zsflow.metrics import (build_report, confusion_matrix, format_report,
                            harmonic_mean, per_class_accuracy, per_class_rates,
                            write_report)


def brute_force_per_class(truths, predictions, class_set):
    accs = []
    for cid in sorted(class_set):
        idx = [i for i, t in enumerate(truths) if t == cid]
        if not idx:
            continue
        accs.append(sum(predictions[i] == cid for i in idx) / len(idx))
    return sum(accs) / len(accs)


def test_all_correct_is_one():
    assert per_class_accuracy([0, 1, 2], [0, 1, 2], [0, 1, 2]) == 1.0


def test_macro_not_micro():
    truths = [1] * 10 + [2]
    preds = [1] * 10 + [1]
    assert per_class_accuracy(truths, preds, [1, 2]) == 0.5


def test_duplication_invariance():
    rng = np.random.default_rng(0)
    truths = rng.integers(0, 4, size=30)
    preds = rng.integers(0, 4, size=30)
    base = per_class_accuracy(truths, preds, range(4))
    doubled = per_class_accuracy(np.tile(truths, 2), np.tile(preds, 2), range(4))
    assert base == doubled


def test_per_class_matches_brute_force_oracle():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n_classes = int(rng.integers(2, 8))
        n = int(rng.integers(n_classes, 60))
        truths = rng.integers(0, n_classes, size=n).tolist()
        preds = rng.integers(0, n_classes, size=n).tolist()
        mine = per_class_accuracy(truths, preds, range(n_classes))
        oracle = brute_force_per_class(truths, preds, range(n_classes))
        assert abs(mine - oracle) < 1e-12


def test_per_class_reports_empty_classes():
    rates, missing = per_class_rates([0, 0], [0, 1], [0, 1])
    assert missing == [1]
    assert rates == {0: 0.5}


def test_per_class_contracts():
    with pytest.raises(ContractError):
        per_class_accuracy([0], [0], [])
    with pytest.raises(ContractError):
        per_class_accuracy([5], [5], [0, 1])


def test_harmonic_mean_table_values():
    assert f"{harmonic_mean(75.2, 57.8):.1f}" == "65.4"
    assert f"{harmonic_mean(80.5, 61.3):.1f}" == "69.6"


def test_harmonic_mean_identity_and_zero():
    assert harmonic_mean(0.42, 0.42) == pytest.approx(0.42)
    assert harmonic_mean(0.0, 0.0) == 0.0
    with pytest.raises(ContractError):
        harmonic_mean(-0.1, 0.5)


def test_harmonic_mean_bounds():
    rng = np.random.default_rng(2)
    for _ in range(100):
        a, b = rng.uniform(0, 1, size=2)
        h = harmonic_mean(a, b)
        assert h <= (a + b) / 2 + 1e-15
        assert h <= 2 * min(a, b) + 1e-15


def test_confusion_matrix_diagonal_and_row_sums():
    rng = np.random.default_rng(3)
    truths = rng.integers(0, 3, size=40)
    perfect = confusion_matrix(truths, truths, [0, 1, 2])
    assert np.all(perfect == np.diag(np.diag(perfect)))
    preds = rng.integers(0, 3, size=40)
    cm = confusion_matrix(truths, preds, [0, 1, 2])
    for i, cid in enumerate([0, 1, 2]):
        assert cm[i].sum() == (truths == cid).sum()


def test_confusion_matrix_degenerate_single_class():
    cm = confusion_matrix([3, 3], [3, 3], [3])
    np.testing.assert_array_equal(cm, [[2]])


def test_confusion_matrix_rejects_outside_labels():
    with pytest.raises(ContractError):
        confusion_matrix([0], [4], [0, 1])


def test_build_report_czsl_leaves_seen_absent():
    report = build_report([3, 3, 3], [3, 3, 2], seen_classes=[0, 1, 2],
                          unseen_classes=[3, 2], setting="czsl", mode="nbc")
    assert report.a_seen is None and report.harmonic is None
    assert report.a_unseen == pytest.approx(2 / 3)
    assert report.confusion.shape == (2, 2)


def test_build_report_gzsl_scores():
    truths = [0, 0, 1, 1, 2, 2]
    preds = [0, 0, 1, 0, 2, 2]
    report = build_report(truths, preds, seen_classes=[0, 1],
                          unseen_classes=[2], setting="gzsl", mode="softmax")
    assert report.a_seen == pytest.approx(0.75)
    assert report.a_unseen == pytest.approx(1.0)
    assert report.harmonic == pytest.approx(harmonic_mean(0.75, 1.0))
    assert 0.0 <= report.a_seen <= 1.0 and 0.0 <= report.a_unseen <= 1.0
    for i, cid in enumerate(report.class_order):
        assert report.confusion[i].sum() == truths.count(cid)


def test_report_percent_formatting(tmp_path):
    report = build_report([0, 1], [0, 1], seen_classes=[0], unseen_classes=[1],
                          setting="gzsl", mode="nbc")
    text = format_report(report)
    assert "accuracy_seen_percent: 100.0" in text
    assert "harmonic_mean_percent: 100.0" in text
    path = write_report(report, tmp_path, "r")
    assert path.exists()
    per_class = (tmp_path / "r_per_class.csv").read_text().splitlines()
    assert per_class[0] == "class_id,accuracy"
    assert len(per_class) == 3
    confusion = (tmp_path / "r_confusion.csv").read_text().splitlines()
    assert len(confusion) == 3


def test_reports_are_pure():
    truths = [0, 1, 1]
    preds = [0, 1, 0]
    a = build_report(truths, preds, [0], [1], "gzsl", "nbc")
    b = build_report(truths, preds, [0], [1], "gzsl", "nbc")
    assert a.a_seen == b.a_seen and a.a_unseen == b.a_unseen
    np.testing.assert_array_equal(a.confusion, b.confusion)
