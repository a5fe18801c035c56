"""Stratified splitting, fold execution, and Table-style summaries."""

import numpy as np
import pytest

from causalcast.cv import (
    format_pct,
    make_splits,
    rank_tables_from_folds,
    run_cv,
    summarize_folds,
)
from causalcast.data import Dataset, RoiTimeSeries
from causalcast.errors import ConfigError
from causalcast.metrics import ClassificationCounts, FoldReport, SubjectReport
from causalcast.model import ModelConfig
from causalcast.synth import default_two_class_spec, make_dataset
from causalcast.trainer import TrainConfig

RNG = np.random.default_rng(4242)


def balanced_dataset(per_class=50, n=3, t=12):
    subjects = []
    for label in (0, 1):
        for i in range(per_class):
            subjects.append(
                RoiTimeSeries(
                    subject_id=f"c{label}-{i}", label=label, mean_fd=0.0,
                    x=RNG.normal(size=(n, t)),
                )
            )
    return Dataset(subjects)


class TestMakeSplits:
    def test_balanced_100_subjects(self):
        ds = balanced_dataset(50)
        plan = make_splits(ds, seed=0)
        labels = ds.labels()
        for fold in plan.folds:
            assert len(fold.test) == 20
            assert labels[fold.test].sum() == 10

    def test_same_seed_identical_plan(self):
        ds = balanced_dataset(20)
        a = make_splits(ds, seed=5)
        b = make_splits(ds, seed=5)
        for fa, fb in zip(a.folds, b.folds):
            assert fa.train == fb.train
            assert fa.val == fb.val
            assert fa.test == fb.test

    def test_test_folds_partition_dataset(self):
        ds = balanced_dataset(13)  # odd size exercises the +-1 stratification
        plan = make_splits(ds, seed=2)
        seen = []
        for fold in plan.folds:
            seen.extend(fold.test)
        assert sorted(seen) == list(range(len(ds)))

    def test_within_fold_disjoint_and_exhaustive(self):
        ds = balanced_dataset(16)
        plan = make_splits(ds, seed=1)
        for fold in plan.folds:
            combined = sorted(fold.train + fold.val + fold.test)
            assert combined == list(range(len(ds)))
            assert not (set(fold.train) & set(fold.val))
            assert not (set(fold.train) & set(fold.test))
            assert not (set(fold.val) & set(fold.test))

    def test_stratification_within_one_subject(self):
        ds = balanced_dataset(13)
        labels = ds.labels()
        plan = make_splits(ds, seed=9)
        per_class_counts = [sorted(labels[f.test].sum() for f in plan.folds)]
        for counts in per_class_counts:
            assert max(counts) - min(counts) <= 1

    def test_single_class_rejected(self):
        subjects = [
            RoiTimeSeries(subject_id=f"s{i}", label=1, mean_fd=0.0, x=RNG.normal(size=(2, 8)))
            for i in range(12)
        ]
        with pytest.raises(ConfigError):
            make_splits(Dataset(subjects), seed=0)

    def test_too_few_subjects_rejected(self):
        with pytest.raises(ConfigError):
            make_splits(balanced_dataset(4), seed=0)


def _report(fold, accuracy):
    return FoldReport(
        fold=fold, accuracy=accuracy, auc=accuracy, recall=accuracy, precision=accuracy,
        counts=ClassificationCounts(1, 0, 0, 1),
    )


class TestSummaries:
    def test_constant_accuracy_formats_with_zero_std(self):
        folds = [_report(i, 0.7) for i in range(5)]
        summary = summarize_folds(folds)
        assert summary["accuracy"]["formatted"] == "70.0% ± 0.0%"

    def test_hand_computed_sample_std(self):
        folds = [_report(i, a) for i, a in enumerate([0.6, 0.7, 0.8, 0.7, 0.7])]
        summary = summarize_folds(folds)
        assert abs(summary["accuracy"]["mean"] - 0.7) < 1e-12
        assert abs(summary["accuracy"]["std"] - 0.07071067811865477) < 1e-12
        assert summary["accuracy"]["formatted"] == "70.0% ± 7.1%"

    def test_undefined_precision_excluded(self):
        folds = [_report(0, 0.6), _report(1, 0.8)]
        folds[0].precision = None
        summary = summarize_folds(folds)
        assert summary["precision"]["n_folds"] == 1
        assert abs(summary["precision"]["mean"] - 0.8) < 1e-12

    def test_format_pct(self):
        assert format_pct(0.719, 0.008) == "71.9% ± 0.8%"


class TestRunCv:
    @pytest.fixture(scope="class")
    def tiny_dataset(self):
        return make_dataset(default_two_class_spec(subjects_per_class=10, t_len=40))

    def test_cpm_baseline_end_to_end(self, tiny_dataset):
        result = run_cv(tiny_dataset, ModelConfig(), TrainConfig(seed=2), baseline="cpm")
        assert len(result.folds) == 5
        assert set(result.summary) == {"accuracy", "auc", "recall", "precision"}
        assert all(f.subjects for f in result.folds)

    def test_model_cv_parallel_matches_serial(self, tiny_dataset):
        model_cfg = ModelConfig(hidden=8, heads=2, lag=1)
        train_cfg = TrainConfig(epochs=2, batch_size=8, seed=4)
        serial = run_cv(tiny_dataset, model_cfg, train_cfg, jobs=1)
        parallel = run_cv(tiny_dataset, model_cfg, train_cfg, jobs=3)
        assert serial.to_dict() == parallel.to_dict()

    def test_unknown_baseline_rejected(self, tiny_dataset):
        with pytest.raises(ConfigError):
            run_cv(tiny_dataset, ModelConfig(), TrainConfig(), baseline="mystery")


class TestRankTables:
    def test_only_correct_subjects_counted(self):
        subjects = [
            SubjectReport("a", p=0.9, y=1, predictability=[0.9, 0.1, 0.5]),
            SubjectReport("b", p=0.2, y=1, predictability=[0.1, 0.9, 0.5]),  # misclassified
            SubjectReport("c", p=0.1, y=0, predictability=[0.2, 0.3, 0.9]),
        ]
        fold = FoldReport(
            fold=0, accuracy=2 / 3, auc=0.5, recall=0.5, precision=1.0,
            counts=ClassificationCounts(1, 0, 1, 1), subjects=subjects,
        )
        asd, control = rank_tables_from_folds([fold], n_rois=3, top_k=1)
        assert asd.entries == [(0, "roi_000", 1)]
        assert control.entries == [(2, "roi_002", 1)]
