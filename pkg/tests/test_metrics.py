"""Confusion accumulation and metric derivation, against independent oracles."""

import numpy as np
import pytest

from patchcd.metrics import (
    ConfusionCounts,
    MetricsReport,
    accumulate_confusion,
    binarize,
    compute_metrics,
    write_report_json,
    write_reports_csv,
)


def brute_force_confusion(pred, gt):
    tp = fp = fn = tn = 0
    for p, g in zip(pred.ravel(), gt.ravel()):
        if p == 1 and g == 1:
            tp += 1
        elif p == 1 and g == 0:
            fp += 1
        elif p == 0 and g == 1:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


class TestBinarize:
    def test_boundary_is_inclusive(self):
        out = binarize(np.full((4, 4), 0.5), threshold=0.5)
        assert (out == 1).all()

    def test_identity_on_binary_maps(self):
        g = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert np.array_equal(binarize(g), g.astype(np.uint8))

    def test_matches_per_pixel_loop(self):
        rng = np.random.default_rng(0)
        g = rng.random((8, 8))
        out = binarize(g, threshold=0.3)
        for r in range(8):
            for c in range(8):
                assert out[r, c] == (1 if g[r, c] >= 0.3 else 0)

    def test_threshold_domain(self):
        with pytest.raises(ValueError, match=r"\(0, 1\)"):
            binarize(np.zeros((2, 2)), threshold=1.0)


class TestAccumulateConfusion:
    def test_all_ones_agreement(self):
        ones = np.ones((4, 4), dtype=np.uint8)
        counts = accumulate_confusion(ones, ones)
        assert (counts.tp, counts.fp, counts.fn, counts.tn) == (16, 0, 0, 0)

    def test_total_disagreement(self):
        rng = np.random.default_rng(1)
        gt = (rng.random((4, 4)) > 0.5).astype(np.uint8)
        counts = accumulate_confusion(1 - gt, gt)
        assert counts.tp == 0 and counts.tn == 0
        assert counts.fp + counts.fn == 16

    def test_matches_brute_force_tally(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            pred = (rng.random((8, 8)) > 0.5).astype(np.uint8)
            gt = (rng.random((8, 8)) > 0.5).astype(np.uint8)
            assert accumulate_confusion(pred, gt) == brute_force_confusion(pred, gt)

    def test_addition_is_order_invariant(self):
        rng = np.random.default_rng(3)
        tallies = [
            accumulate_confusion(
                (rng.random((6, 6)) > 0.5).astype(np.uint8),
                (rng.random((6, 6)) > 0.5).astype(np.uint8),
            )
            for _ in range(10)
        ]
        forward = sum(tallies, ConfusionCounts())
        backward = sum(reversed(tallies), ConfusionCounts())
        assert forward == backward
        assert forward.total == 360

    def test_non_binary_rejected(self):
        with pytest.raises(ValueError, match="binary"):
            accumulate_confusion(np.full((2, 2), 2), np.zeros((2, 2), dtype=np.uint8))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="mismatch"):
            accumulate_confusion(np.zeros((2, 2), dtype=np.uint8), np.zeros((2, 4), dtype=np.uint8))


class TestComputeMetrics:
    def test_hand_computed_case(self):
        report = compute_metrics(ConfusionCounts(tp=3, fp=1, fn=1, tn=11))
        assert report.precision == pytest.approx(0.75)
        assert report.recall == pytest.approx(0.75)
        assert report.f1 == pytest.approx(0.75)
        assert report.iou == pytest.approx(0.6)
        assert report.overall_accuracy == pytest.approx(0.875)
        assert report.kappa == pytest.approx(2 / 3, abs=5e-5)
        assert report.degenerate == ()

    def test_perfect_prediction_with_both_classes(self):
        report = compute_metrics(ConfusionCounts(tp=10, fp=0, fn=0, tn=30))
        for name in ("kappa", "iou", "f1", "recall", "precision", "overall_accuracy"):
            assert getattr(report, name) == pytest.approx(1.0)

    def test_all_negative_degenerate_case(self):
        report = compute_metrics(ConfusionCounts(tp=0, fp=0, fn=0, tn=25))
        assert report.overall_accuracy == 1.0
        assert set(report.degenerate) == {"precision", "recall", "f1", "iou", "kappa"}
        for name in ("precision", "recall", "f1", "iou", "kappa"):
            assert getattr(report, name) == 0.0

    def test_empty_counts_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            compute_metrics(ConfusionCounts())

    def test_f1_iou_identity_and_bounds(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            counts = ConfusionCounts(*(int(v) for v in rng.integers(1, 50, 4)))
            report = compute_metrics(counts)
            assert report.f1 == pytest.approx(2 * report.iou / (1 + report.iou))
            assert 0.0 <= report.iou <= report.f1 <= 1.0
            assert report.kappa <= report.overall_accuracy + 1e-12

    def test_matches_sklearn_on_random_labelings(self):
        from sklearn.metrics import (
            cohen_kappa_score,
            f1_score,
            jaccard_score,
            precision_score,
            recall_score,
        )

        rng = np.random.default_rng(5)
        for _ in range(50):
            pred = (rng.random(400) > rng.random()).astype(np.uint8)
            gt = (rng.random(400) > rng.random()).astype(np.uint8)
            if pred.sum() in (0, 400) or gt.sum() in (0, 400):
                continue
            report = compute_metrics(accumulate_confusion(pred, gt))
            assert report.precision == pytest.approx(precision_score(gt, pred), rel=1e-6)
            assert report.recall == pytest.approx(recall_score(gt, pred), rel=1e-6)
            assert report.f1 == pytest.approx(f1_score(gt, pred), rel=1e-6)
            assert report.iou == pytest.approx(jaccard_score(gt, pred), rel=1e-6)
            assert report.kappa == pytest.approx(cohen_kappa_score(gt, pred), rel=1e-6)


class TestReportOutput:
    def _report(self):
        return compute_metrics(
            ConfusionCounts(tp=3, fp=1, fn=1, tn=11),
            patch_size=(8, 8),
            checkpoint_id="ckpt_0000010",
            threshold=0.5,
        )

    def test_json_round_trips(self, tmp_path):
        import json

        report = self._report()
        path = tmp_path / "report.json"
        write_report_json(report, path)
        loaded = json.loads(path.read_text())
        assert loaded["f1"] == pytest.approx(0.75)
        assert loaded["counts"] == {"tp": 3, "fp": 1, "fn": 1, "tn": 11}
        assert loaded["patch_size"] == [8, 8]

    def test_csv_row_layout(self, tmp_path):
        import csv

        path = tmp_path / "reports.csv"
        write_reports_csv([self._report()], path)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == MetricsReport.csv_header()
        assert rows[1][rows[0].index("f1")] == "0.750000"
        assert rows[1][rows[0].index("patch_size")] == "8x8"
