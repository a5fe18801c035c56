"""Adam updates, the halving schedule, and deterministic training runs."""

import io
import json

import numpy as np
import pytest

from causalcast.errors import ConfigError, TrainingError
from causalcast.model import ModelConfig
from causalcast.synth import default_two_class_spec, make_dataset
from causalcast.trainer import AdamState, TrainConfig, adam_step, lr_schedule, train

from oracles import adam_single_step

TOY_MODEL = ModelConfig(hidden=8, heads=2, lag=1)


def toy_dataset(subjects_per_class=4, t_len=30, n=8, seed=18):
    spec = default_two_class_spec(
        subjects_per_class=subjects_per_class, t_len=t_len, n=n, seed=seed
    )
    return make_dataset(spec)


class TestAdam:
    def test_scalar_first_step_closed_form(self):
        params = {"w": np.array([[0.0]])}
        grads = {"w": np.array([[1.0]])}
        state = AdamState.zeros_like(params)
        new, _ = adam_step(params, grads, state, lr=0.1)
        expected = adam_single_step(0.0, 1.0, 0.1)
        assert abs(new["w"][0, 0] - expected) < 1e-15
        assert abs(new["w"][0, 0] - (-0.0999999990)) < 1e-9

    def test_zero_gradient_is_identity(self):
        params = {"w": np.array([[1.5, -2.0]])}
        grads = {"w": np.zeros((1, 2))}
        new, _ = adam_step(params, grads, AdamState.zeros_like(params), lr=0.1)
        assert np.array_equal(new["w"], params["w"])

    def test_purity(self):
        params = {"w": np.array([[0.3]]), "b": np.array([[1.0]])}
        grads = {"w": np.array([[0.2]]), "b": np.array([[-0.1]])}
        state = AdamState.zeros_like(params)
        out1 = adam_step(params, grads, state, lr=0.05)
        out2 = adam_step(params, grads, state, lr=0.05)
        assert np.array_equal(out1[0]["w"], out2[0]["w"])
        assert np.array_equal(out1[1].m["b"], out2[1].m["b"])
        assert state.step == 0  # inputs untouched

    def test_nonfinite_gradient_names_parameter(self):
        params = {"enc.wx": np.zeros((2, 2))}
        grads = {"enc.wx": np.array([[np.nan, 0.0], [0.0, 0.0]])}
        with pytest.raises(TrainingError, match="enc.wx"):
            adam_step(params, grads, AdamState.zeros_like(params), lr=0.1)


class TestSchedule:
    def test_paper_values(self):
        cfg = TrainConfig()
        assert lr_schedule(0, cfg) == 0.005
        assert lr_schedule(7, cfg) == 0.005
        assert lr_schedule(8, cfg) == 0.0025
        assert lr_schedule(16, cfg) == 0.00125

    def test_floor_semantics(self):
        cfg = TrainConfig(lr0=1.0, lr_halving_period=3)
        assert [lr_schedule(e, cfg) for e in range(7)] == [1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.25]

    def test_negative_epoch_rejected(self):
        with pytest.raises(ConfigError):
            lr_schedule(-1, TrainConfig())


class TestTrainLoop:
    def test_same_seed_bit_identical_traces(self):
        ds = toy_dataset()
        cfg = TrainConfig(epochs=3, batch_size=4, seed=11, alpha=1e-3)
        r1 = train(ds, TOY_MODEL, cfg)
        r2 = train(ds, TOY_MODEL, cfg)
        assert r1.trace.steps == r2.trace.steps
        assert r1.trace.epochs == r2.trace.epochs
        for k in r1.params.weights:
            assert np.array_equal(r1.params.weights[k], r2.params.weights[k])

    def test_step_records_obey_loss_identity(self):
        ds = toy_dataset()
        cfg = TrainConfig(epochs=2, batch_size=3, seed=5, alpha=1e-3)
        result = train(ds, TOY_MODEL, cfg)
        for record in result.trace.steps:
            assert abs(record["total"] - (record["bce"] + cfg.alpha * record["freq"])) < 1e-10

    def test_alpha_zero_matches_bce_only_run_bit_exactly(self):
        ds = toy_dataset()
        cfg = TrainConfig(epochs=2, batch_size=4, seed=7, alpha=0.0)
        with_freq = train(ds, TOY_MODEL, cfg, compute_freq_metrics=True)
        without = train(ds, TOY_MODEL, cfg, compute_freq_metrics=False)
        assert [s["bce"] for s in with_freq.trace.steps] == [s["bce"] for s in without.trace.steps]
        assert [s["total"] for s in with_freq.trace.steps] == [s["total"] for s in without.trace.steps]
        for k in with_freq.params.weights:
            assert np.array_equal(with_freq.params.weights[k], without.params.weights[k])
        assert all(s["total"] == s["bce"] for s in with_freq.trace.steps)
        assert all(s["freq"] > 0.0 for s in with_freq.trace.steps)
        assert all(s["freq"] == 0.0 for s in without.trace.steps)

    def test_vanishing_lr_keeps_initial_params(self):
        ds = toy_dataset(subjects_per_class=2)
        cfg = TrainConfig(lr0=1e-300, epochs=2, batch_size=4, seed=3)
        from causalcast.model import init_params

        initial = init_params(ds.n_channels, TOY_MODEL, seed=cfg.seed)
        result = train(ds, TOY_MODEL, cfg)
        for k in initial.weights:
            assert np.allclose(result.params.weights[k], initial.weights[k], atol=1e-100)

    def test_epoch_log_stream_is_jsonl(self):
        ds = toy_dataset(subjects_per_class=2)
        cfg = TrainConfig(epochs=2, batch_size=4, seed=1)
        stream = io.StringIO()
        train(ds, TOY_MODEL, cfg, val_dataset=ds, log_stream=stream)
        lines = stream.getvalue().strip().split("\n")
        assert len(lines) == 2
        for i, line in enumerate(lines):
            record = json.loads(line)
            assert record["epoch"] == i
            assert set(record) == {"epoch", "lr", "bce", "freq", "total", "val_accuracy"}
            assert record["val_accuracy"] is not None

    def test_empty_training_split_rejected(self):
        from causalcast.data import Dataset

        with pytest.raises(ConfigError):
            train(Dataset([]), TOY_MODEL, TrainConfig(epochs=1))

    def test_variable_length_subjects_fall_back_to_smaller_batches(self):
        ds = toy_dataset(subjects_per_class=2, t_len=30)
        longer = toy_dataset(subjects_per_class=2, t_len=40, seed=19)
        for i, s in enumerate(longer.subjects):
            s.subject_id = f"long-{i}"
        from causalcast.data import Dataset

        mixed = Dataset(ds.subjects + longer.subjects, ds.atlas_labels)
        cfg = TrainConfig(epochs=1, batch_size=8, seed=2)
        result = train(mixed, TOY_MODEL, cfg)
        assert len(result.trace.steps) >= 2  # cannot batch mixed lengths together

    def test_training_reduces_loss(self):
        ds = toy_dataset(subjects_per_class=4)
        cfg = TrainConfig(epochs=8, batch_size=8, seed=0, lr_halving_period=100)
        result = train(ds, TOY_MODEL, cfg)
        assert result.trace.epochs[-1]["bce"] < result.trace.epochs[0]["bce"]
