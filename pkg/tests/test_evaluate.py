"""Confusion metrics, rank-based AUC, lift curves, averaging, and ablation."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rolespace.churn import ChurnDataset
from rolespace.classify import ForestConfig, train_random_forest
from rolespace.evaluate import (
    AblationResult,
    UndefinedMetricError,
    ablate,
    average_reports,
    confusion_metrics,
    evaluate_scores,
    lift_curve,
    roc_auc,
    write_ablation_csv,
    write_lift_csv,
    write_report_json,
    write_window_series_csv,
)


def brute_force_auc(scores, labels):
    """Pairwise comparison oracle: wins + half-ties over pos*neg pairs."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0
               for p, n in itertools.product(pos, neg))
    return wins / (len(pos) * len(neg))


class TestConfusionMetrics:
    def test_two_point_perfect(self):
        report = confusion_metrics([0.9, 0.1], [1, 0])
        assert (report.tp, report.fp, report.tn, report.fn) == (1, 0, 1, 0)
        assert report.tp_rate == 1.0
        assert report.fp_rate == 0.0
        assert report.precision == 1.0
        assert report.recall == 1.0
        assert report.f_measure == 1.0

    def test_all_zero_scores_with_positives(self):
        report = confusion_metrics([0.0, 0.0, 0.0], [1, 1, 0])
        assert report.recall == 0.0
        assert report.precision is None
        reasons = dict(report.undefined)
        assert reasons["precision"] == "no predicted positives"

    def test_recall_equals_tp_rate(self):
        report = confusion_metrics([0.6, 0.7, 0.2, 0.8], [1, 0, 1, 1])
        assert report.recall == report.tp_rate

    def test_counts_partition_instances(self):
        rng = np.random.default_rng(5)
        scores = rng.uniform(size=37)
        labels = rng.integers(0, 2, size=37)
        report = confusion_metrics(scores, labels)
        assert report.n_instances == 37

    def test_threshold_is_inclusive(self):
        report = confusion_metrics([0.5], [1])
        assert report.tp == 1

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            confusion_metrics([0.5, 0.5], [1])

    def test_non_binary_labels_rejected(self):
        with pytest.raises(ValueError):
            confusion_metrics([0.5, 0.5], [1, 2])

    def test_non_finite_scores_rejected(self):
        with pytest.raises(ValueError):
            confusion_metrics([np.nan, 0.5], [1, 0])


class TestRocAuc:
    def test_perfectly_ranked(self):
        assert roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    def test_perfectly_inverted(self):
        assert roc_auc([0.1, 0.9], [1, 0]) == 0.0

    def test_all_tied_is_half(self):
        assert roc_auc([0.3] * 10, [1, 0] * 5) == 0.5

    def test_worked_example(self):
        assert roc_auc([0.8, 0.6, 0.4, 0.2], [1, 0, 1, 0]) == 0.75

    def test_matches_pairwise_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            n = int(rng.integers(2, 60))
            scores = rng.choice([0.1, 0.25, 0.5, 0.75], size=n)
            labels = rng.integers(0, 2, size=n)
            if labels.sum() in (0, n):
                continue
            assert roc_auc(scores, labels) == pytest.approx(
                brute_force_auc(scores, labels), abs=1e-12)

    def test_single_class_undefined(self):
        with pytest.raises(UndefinedMetricError):
            roc_auc([0.1, 0.9], [1, 1])

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_invariant_under_monotone_transform(self, seed):
        rng = np.random.default_rng(seed)
        scores = rng.uniform(size=20)
        labels = np.array([1] * 7 + [0] * 13)
        rng.shuffle(labels)
        assert roc_auc(scores, labels) == pytest.approx(
            roc_auc(scores ** 2, labels), abs=1e-12)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_invariant_under_permutation(self, seed):
        rng = np.random.default_rng(seed)
        scores = rng.choice([0.2, 0.4, 0.6, 0.8], size=24)
        labels = np.array([1] * 8 + [0] * 16)
        rng.shuffle(labels)
        perm = rng.permutation(24)
        assert roc_auc(scores, labels) == pytest.approx(
            roc_auc(scores[perm], labels[perm]), abs=1e-12)


class TestLiftCurve:
    def test_random_scorer_near_one(self):
        # seeded draw: at s=0.05 the sampling sd of lift is ~0.09, so the
        # +/-0.1 band is a property of this documented draw, not of all draws
        rng = np.random.default_rng(1)
        n = 10_000
        scores = rng.uniform(size=n)
        labels = (rng.uniform(size=n) < 0.2).astype(int)
        for _, lift in lift_curve(scores, labels):
            assert abs(lift - 1.0) <= 0.1

    def test_perfect_scorer_at_ten_percent(self):
        labels = np.array([1] * 10 + [0] * 20)
        scores = 1.0 - np.arange(30) / 30.0
        points = dict(lift_curve(scores, labels, fractions=(0.10,)))
        assert points[0.10] == pytest.approx(3.0, abs=1e-12)

    def test_full_fraction_is_exactly_one(self):
        rng = np.random.default_rng(1)
        scores = rng.uniform(size=57)
        labels = rng.integers(0, 2, size=57)
        points = dict(lift_curve(scores, labels, fractions=(1.0,)))
        assert points[1.0] == 1.0

    def test_bounded_by_inverse_base_rate(self):
        rng = np.random.default_rng(2)
        scores = rng.uniform(size=200)
        labels = (rng.uniform(size=200) < 0.25).astype(int)
        base_rate = labels.mean()
        for _, lift in lift_curve(scores, labels):
            assert lift <= 1.0 / base_rate + 1e-9

    def test_cutoff_snaps_exact_products(self):
        # 0.1 * 30 = 3.0000000000000004 in floats; must select 3 rows, not 4
        labels = np.array([1, 1, 1] + [0] * 27)
        scores = 1.0 - np.arange(30) / 100.0
        points = dict(lift_curve(scores, labels, fractions=(0.1,)))
        assert points[0.1] == pytest.approx(10.0, abs=1e-12)

    def test_unique_scores_permutation_invariant(self):
        rng = np.random.default_rng(3)
        scores = rng.permutation(np.linspace(0.01, 0.99, 40))
        labels = np.array([1] * 13 + [0] * 27)
        rng.shuffle(labels)
        baseline = lift_curve(scores, labels, fractions=(0.25, 0.5, 1.0))
        for _ in range(10):
            perm = rng.permutation(len(scores))
            permuted = lift_curve(scores[perm], labels[perm],
                                  fractions=(0.25, 0.5, 1.0))
            assert permuted == baseline

    def test_ties_split_by_stable_input_order(self):
        # four tied rows straddle the 50% cutoff: the first two in input
        # order are taken, so which rows they are changes the captured count
        scores = np.array([0.9, 0.5, 0.5, 0.5, 0.5, 0.1])
        churners_first = np.array([1, 1, 1, 0, 0, 0])
        churners_last = np.array([1, 0, 0, 1, 1, 0])
        lift_first = dict(lift_curve(scores, churners_first,
                                     fractions=(0.5,)))[0.5]
        lift_last = dict(lift_curve(scores, churners_last,
                                    fractions=(0.5,)))[0.5]
        assert lift_first == pytest.approx(2.0)       # captured 3 of 3
        assert lift_last == pytest.approx(2.0 / 3.0)  # captured 1 of 3

    def test_single_class_undefined(self):
        with pytest.raises(UndefinedMetricError):
            lift_curve([0.2, 0.8], [0, 0])

    def test_fraction_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            lift_curve([0.2, 0.8], [0, 1], fractions=(0.0,))


class TestEvaluateScores:
    def test_combines_confusion_and_lift(self):
        report = evaluate_scores([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0],
                                 fractions=(0.5, 1.0))
        assert report.roc_auc == 1.0
        assert report.lift_points == ((0.5, 2.0), (1.0, 1.0))

    def test_single_class_marks_lift_undefined(self):
        report = evaluate_scores([0.9, 0.1], [1, 1])
        assert report.lift_points == ()
        assert "lift" in dict(report.undefined)


class TestAverageReports:
    def test_counts_sum_and_metrics_average(self):
        a = confusion_metrics([0.9, 0.1], [1, 0])
        b = confusion_metrics([0.8, 0.6, 0.4, 0.2], [1, 0, 1, 0])
        avg = average_reports([a, b])
        assert avg.n_instances == 6
        assert avg.roc_auc == pytest.approx((1.0 + 0.75) / 2)

    def test_skips_undefined_folds(self):
        defined = confusion_metrics([0.9, 0.1], [1, 0])
        degenerate = confusion_metrics([0.9, 0.8], [1, 1])
        avg = average_reports([defined, degenerate])
        assert avg.roc_auc == 1.0

    def test_all_undefined_stays_undefined(self):
        degenerate = confusion_metrics([0.9], [1])
        avg = average_reports([degenerate, degenerate])
        assert avg.fp_rate is None

    def test_lift_points_averaged_per_fraction(self):
        a = evaluate_scores([0.9, 0.1], [1, 0], fractions=(0.5,))
        b = evaluate_scores([0.1, 0.9], [1, 0], fractions=(0.5,))
        avg = average_reports([a, b])
        assert avg.lift_points == ((0.5, 1.0),)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            average_reports([])


def signal_dataset(seed=0, n=120, dummy=False):
    rng = np.random.default_rng(seed)
    y = np.array([1] * (n // 3) + [0] * (n - n // 3))
    rng.shuffle(y)
    informative = y + rng.normal(0, 0.3, size=n)
    noise = rng.normal(size=n)
    columns = [informative, noise]
    names = ["signal", "noise"]
    if dummy:
        columns.append(np.zeros(n))
        names.append("dummy")
    X = np.column_stack(columns)
    return ChurnDataset(tuple(f"u{i:04d}" for i in range(n)),
                        tuple([0] * n), X, y, tuple(names))


def forest_trainer(dataset):
    return train_random_forest(dataset, ForestConfig(n_trees=30, seed=0))


class TestAblate:
    def test_all_zero_dummy_group_changes_nothing_much(self):
        deltas = []
        for seed in range(5):
            dataset = signal_dataset(seed=seed, dummy=True)
            result = ablate(dataset,
                            {"signal": [0], "noise": [1], "dummy": [2]},
                            forest_trainer, folds=5, seed=seed)
            deltas.append(result.delta("dummy"))
        assert all(abs(d) <= 0.02 for d in deltas)

    def test_removing_every_feature_gives_chance_auc(self):
        dataset = signal_dataset(seed=1)
        result = ablate(dataset, {"everything": [0, 1]},
                        forest_trainer, folds=5, seed=0)
        report = dict(result.ablated_reports)["everything"]
        assert report.roc_auc == 0.5

    def test_informative_group_drops_auc(self):
        dataset = signal_dataset(seed=2)
        result = ablate(dataset, {"signal": [0], "noise": [1]},
                        forest_trainer, folds=5, seed=0)
        assert result.delta("signal") > result.delta("noise")
        assert result.delta("signal") > 0.1

    def test_unknown_column_rejected(self):
        dataset = signal_dataset()
        with pytest.raises(ValueError):
            ablate(dataset, {"bad": [0, 1, 7]}, forest_trainer, folds=5)

    def test_incomplete_coverage_rejected(self):
        dataset = signal_dataset()
        with pytest.raises(ValueError):
            ablate(dataset, {"partial": [0]}, forest_trainer, folds=5)

    def test_deterministic(self):
        dataset = signal_dataset(seed=4)
        groups = {"signal": [0], "noise": [1]}
        a = ablate(dataset, groups, forest_trainer, folds=5, seed=2)
        b = ablate(dataset, groups, forest_trainer, folds=5, seed=2)
        assert a.deltas() == b.deltas()


class TestWriters:
    def test_report_json(self, tmp_path):
        report = evaluate_scores([0.9, 0.1], [1, 0], fractions=(1.0,))
        path = tmp_path / "eval.json"
        write_report_json(report, path)
        import json
        payload = json.loads(path.read_text())
        assert payload["tp"] == 1
        assert payload["roc_auc"] == 1.0

    def test_lift_csv(self, tmp_path):
        path = tmp_path / "lift.csv"
        write_lift_csv([(0.1, 2.5), (1.0, 1.0)], path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "fraction,lift"
        assert len(lines) == 3

    def test_window_series_csv(self, tmp_path):
        report = confusion_metrics([0.9, 0.1], [1, 0])
        path = tmp_path / "windows.csv"
        write_window_series_csv([(0, report), (1, report)], path)
        lines = path.read_text().strip().splitlines()
        assert lines[0].startswith("window,")
        assert len(lines) == 3

    def test_ablation_csv(self, tmp_path):
        dataset = signal_dataset(seed=3)
        result = ablate(dataset, {"signal": [0], "noise": [1]},
                        forest_trainer, folds=5, seed=0)
        path = tmp_path / "ablation.csv"
        write_ablation_csv(result, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == ("group,roc_auc_delta,f_measure_delta,"
                            "ablated_roc_auc,ablated_f_measure")
        assert len(lines) == 3
        assert lines[1].startswith("signal,")
