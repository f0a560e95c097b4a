"""Training loop: batching, schedules, checkpoints, resume, divergence."""

import json
import math

import numpy as np
import pytest

from wakeword.alignment import LabeledWindow
from wakeword.features import FrontendConfig, log_mel
from wakeword.models import Res8Config, build_res8, import_bundle
from wakeword.optim import SGD
from wakeword.synth import make_commands_corpus, make_overfit_windows, make_wake_corpus
from wakeword.tensor import Tensor, nll_loss
from wakeword.train import (
    TrainConfig,
    TrainTask,
    TrainingDiverged,
    commands_task,
    latest_checkpoint,
    make_batches,
    train,
    wake_task,
    windows_accuracy,
)

FRONTEND = FrontendConfig()


def plain_featurize(clip, index):
    return log_mel(clip, FRONTEND)


def overfit_task(n=16, window_s=0.3, seed=0):
    windows, labels = make_overfit_windows(n, window_s=window_s, seed=seed)
    return TrainTask(
        labels=labels,
        vocabulary=("hey", "firefox"),
        frontend=FRONTEND,
        window_s=window_s,
        train_windows=windows,
        dev_windows=windows[:8],
    )


# ---------------------------------------------------------------- config


class TestTrainConfig:
    def test_defaults(self):
        c = TrainConfig()
        assert (c.epochs, c.batch_size, c.lr) == (20, 64, 1e-3)
        assert c.optimizer == "adam" and c.schedule == "cosine"
        assert c.balance == (1, 3)

    def test_round_trips_dict(self):
        c = TrainConfig(epochs=3, balance=None, dev_metric="frr")
        assert TrainConfig.from_dict(c.to_dict()) == c
        c2 = TrainConfig(balance=(1, 1))
        assert TrainConfig.from_dict(json.loads(json.dumps(c2.to_dict()))) == c2

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"epochs": 0},
            {"batch_size": 0},
            {"lr": -1.0},
            {"optimizer": "lbfgs"},
            {"schedule": "step"},
            {"dev_metric": "f1"},
            {"balance": (0, 3)},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


# ---------------------------------------------------------------- batching


class TestMakeBatches:
    def test_ratio_counts(self):
        task = overfit_task(16)
        [(xb, yb)] = list(
            make_batches(task.train_windows, plain_featurize, 16, (1, 3), 2, seed=0)
        )
        assert xb.shape[0] == 16 and yb.shape == (16,)
        assert int(np.sum(yb != 2)) == 4
        assert int(np.sum(yb == 2)) == 12

    def test_constant_shape(self):
        task = overfit_task(16, window_s=0.3)
        t_expected = FRONTEND.frame_count(round(0.3 * 16_000))
        for xb, _ in make_batches(task.train_windows, plain_featurize, 8, (1, 3), 2, seed=0):
            assert xb.shape == (8, 1, t_expected, 40)
            assert xb.dtype == np.float32

    def test_fixed_seed_identical_first_batch(self):
        task = overfit_task(16)
        a = next(make_batches(task.train_windows, plain_featurize, 8, (1, 3), 2, seed=4))
        b = next(make_batches(task.train_windows, plain_featurize, 8, (1, 3), 2, seed=4))
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_epoch_changes_order(self):
        task = overfit_task(16)
        a = next(make_batches(task.train_windows, plain_featurize, 8, None, None, seed=4, epoch=0))
        b = next(make_batches(task.train_windows, plain_featurize, 8, None, None, seed=4, epoch=1))
        assert not np.array_equal(a[1], b[1]) or not np.array_equal(a[0], b[0])

    def test_unbalanced_covers_every_window_once(self):
        task = overfit_task(20)
        seen = []
        for xb, yb in make_batches(task.train_windows, plain_featurize, 8, None, None, seed=1):
            seen.extend(yb.tolist())
        assert len(seen) == 20
        assert sorted(seen) == sorted(w.label for w in task.train_windows)

    def test_empty_windows_rejected(self):
        with pytest.raises(ValueError, match="no windows"):
            next(make_batches([], plain_featurize, 8, None, None, seed=0))

    def test_ratio_must_divide_batch(self):
        task = overfit_task(16)
        with pytest.raises(ValueError, match="ratio"):
            next(make_batches(task.train_windows, plain_featurize, 10, (1, 3), 2, seed=0))

    def test_balance_needs_both_classes(self):
        task = overfit_task(16)
        only_neg = [w for w in task.train_windows if w.label == 2]
        with pytest.raises(ValueError, match="positive"):
            next(make_batches(only_neg, plain_featurize, 8, (1, 3), 2, seed=0))
        only_pos = [w for w in task.train_windows if w.label != 2]
        with pytest.raises(ValueError, match="negative"):
            next(make_batches(only_pos, plain_featurize, 8, (1, 3), 2, seed=0))

    def test_balance_needs_negative_class(self):
        task = overfit_task(16)
        with pytest.raises(ValueError, match="negative class"):
            next(make_batches(task.train_windows, plain_featurize, 8, (1, 3), None, seed=0))


# ---------------------------------------------------------------- accuracy


class TestWindowsAccuracy:
    def test_matches_own_predictions(self, tmp_path):
        task = overfit_task(12)
        model = build_res8(Res8Config(n_labels=3), seed=0)
        from wakeword.features import fit_stats
        from wakeword.models import ModelBundle

        stats = fit_stats(log_mel(w.clip, FRONTEND) for w in task.train_windows)
        bundle = ModelBundle(
            model=model,
            config=model.config,
            frontend=FRONTEND,
            stats=stats,
            labels=task.labels,
            vocabulary=task.vocabulary,
        )
        from wakeword.features import normalize

        feats = np.stack(
            [
                normalize(log_mel(w.clip, FRONTEND), stats).frames.astype(np.float32)
                for w in task.train_windows
            ]
        )[:, np.newaxis]
        predicted = np.argmax(bundle.predict_log_probs(feats), axis=1)
        agree = [
            LabeledWindow(w.clip, int(p)) for w, p in zip(task.train_windows, predicted)
        ]
        disagree = [
            LabeledWindow(w.clip, int((p + 1) % 3))
            for w, p in zip(task.train_windows, predicted)
        ]
        assert windows_accuracy(bundle, agree) == 1.0
        assert windows_accuracy(bundle, disagree) == 0.0

    def test_empty_rejected(self):
        task = overfit_task(4)
        model = build_res8(Res8Config(n_labels=3), seed=0)
        from wakeword.models import ModelBundle

        bundle = ModelBundle(
            model=model,
            config=model.config,
            frontend=FRONTEND,
            stats=None,
            labels=task.labels,
            vocabulary=task.vocabulary,
        )
        with pytest.raises(ValueError, match="no windows"):
            windows_accuracy(bundle, [])


# ---------------------------------------------------------------- training loop


def run_train(tmp_path, name, task=None, model_seed=0, resume=False, **config_kwargs):
    task = task or overfit_task(16)
    model = build_res8(Res8Config(n_labels=len(task.labels)), seed=model_seed)
    defaults = dict(epochs=2, batch_size=8, balance=None, seed=1)
    defaults.update(config_kwargs)
    config = TrainConfig(**defaults)
    result = train(model, task, config, tmp_path / name, resume=resume)
    return model, result


class TestTrain:
    def test_zero_lr_leaves_parameters_unchanged(self, tmp_path):
        task = overfit_task(16)
        model = build_res8(Res8Config(n_labels=3), seed=0)
        before = [p.data.copy() for _, p in model.named_parameters()]
        config = TrainConfig(epochs=1, batch_size=8, lr=0.0, balance=None, seed=1)
        train(model, task, config, tmp_path / "zero")
        for (name, p), old in zip(model.named_parameters(), before):
            np.testing.assert_array_equal(p.data, old, err_msg=name)

    def test_loss_decreases_after_one_small_step(self):
        task = overfit_task(16)
        decreased = 0
        for trial in range(20):
            model = build_res8(Res8Config(n_labels=3), seed=trial)
            xb, yb = next(
                make_batches(task.train_windows, plain_featurize, 16, None, None, seed=trial)
            )
            params = [p for _, p in model.named_parameters()]
            opt = SGD(params, lr=1e-4)
            loss0 = nll_loss(model(Tensor(xb)), yb)
            opt.zero_grad()
            loss0.backward()
            opt.step()
            loss1 = nll_loss(model(Tensor(xb)), yb)
            decreased += loss1.item() < loss0.item()
        assert decreased > 10

    def test_two_runs_bit_identical(self, tmp_path):
        run_train(tmp_path, "a", epochs=2)
        run_train(tmp_path, "b", epochs=2)
        for epoch in range(2):
            a = (tmp_path / "a" / f"ckpt-{epoch}.bundle" / "params.bin").read_bytes()
            b = (tmp_path / "b" / f"ckpt-{epoch}.bundle" / "params.bin").read_bytes()
            assert a == b
        assert (tmp_path / "a" / "best.bundle" / "params.bin").read_bytes() == (
            tmp_path / "b" / "best.bundle" / "params.bin"
        ).read_bytes()

    def test_training_reduces_loss(self, tmp_path):
        _, result = run_train(tmp_path, "fit", epochs=8, lr=1e-3)
        assert result.history[-1]["train_loss"] < result.history[0]["train_loss"]

    def test_saved_metric_reproduces_exactly(self, tmp_path):
        task = overfit_task(16)
        _, result = run_train(tmp_path, "metric", task=task, epochs=3)
        loaded = import_bundle(result.best_path)
        assert windows_accuracy(loaded, task.dev_windows) == result.best_metric

    def test_resume_replays_identically(self, tmp_path):
        import shutil

        run_train(tmp_path, "full", epochs=3)
        # same config, but the run "dies" after epoch 1: drop epoch 2's files
        run_train(tmp_path, "parts", epochs=3)
        shutil.rmtree(tmp_path / "parts" / "ckpt-2.bundle")
        (tmp_path / "parts" / "ckpt-2.opt.npz").unlink()
        run_train(tmp_path, "parts", epochs=3, resume=True)
        for epoch in range(3):
            a = (tmp_path / "full" / f"ckpt-{epoch}.bundle" / "params.bin").read_bytes()
            b = (tmp_path / "parts" / f"ckpt-{epoch}.bundle" / "params.bin").read_bytes()
            assert a == b, f"epoch {epoch} diverged after resume"
        log_a = (tmp_path / "full" / "train_log.jsonl").read_text()
        log_b = (tmp_path / "parts" / "train_log.jsonl").read_text()
        assert log_a == log_b

    def test_non_finite_loss_aborts_with_diagnostic(self, tmp_path):
        task = overfit_task(8)
        model = build_res8(Res8Config(n_labels=3), seed=0)
        dict(model.named_parameters())["conv0.weight"].data[...] = np.nan
        config = TrainConfig(epochs=1, batch_size=8, balance=None, seed=1)
        with pytest.raises(TrainingDiverged, match=r"epoch 0.*lr"):
            train(model, task, config, tmp_path / "diverge")

    def test_schedule_values_logged(self, tmp_path):
        _, cosine = run_train(tmp_path, "cos", epochs=4, lr=0.01, schedule="cosine")
        for e, rec in enumerate(cosine.history):
            assert rec["lr"] == pytest.approx(0.01 * 0.5 * (1 + math.cos(math.pi * e / 4)))
        _, const = run_train(tmp_path, "const", epochs=2, lr=0.01, schedule="constant")
        assert [r["lr"] for r in const.history] == [0.01, 0.01]

    def test_callbacks_and_log_rows(self, tmp_path):
        seen = []
        task = overfit_task(16)
        model = build_res8(Res8Config(n_labels=3), seed=0)
        config = TrainConfig(epochs=2, batch_size=8, balance=None, seed=1)
        train(model, task, config, tmp_path / "cb", callbacks=[seen.append])
        assert [r["epoch"] for r in seen] == [0, 1]
        rows = [
            json.loads(line)
            for line in (tmp_path / "cb" / "train_log.jsonl").read_text().splitlines()
        ]
        assert [r["epoch"] for r in rows] == [0, 1]
        assert all("train_loss" in r and "accuracy" in r for r in rows)

    def test_latest_checkpoint(self, tmp_path):
        assert latest_checkpoint(tmp_path) is None
        run_train(tmp_path, "ck", epochs=3)
        assert latest_checkpoint(tmp_path / "ck") == 2


# ---------------------------------------------------------------- task builders


class TestWakeTask:
    def test_builds_windows_and_dev_material(self, tmp_path):
        dataset = make_wake_corpus(tmp_path / "corpus", n_positive=8, n_negative=10, seed=3)
        task = wake_task(dataset, FRONTEND, window_s=2.0, seed=5)
        assert task.labels == ("hey", "firefox", "negative")
        assert task.vocabulary == ("hey", "firefox")
        assert task.negative_label == 2
        # each positive sample contributes one window per vocabulary word
        n_train_pos = len(dataset.subset("train").positives)
        pos_windows = [w for w in task.train_windows if w.label != 2]
        assert len(pos_windows) == 2 * n_train_pos
        wlen = round(2.0 * 16_000)
        assert all(len(w.clip.samples) == wlen for w in task.train_windows)
        assert len(task.dev_positive_clips) == len(dataset.subset("dev").positives)
        assert task.dev_negative_stream is not None
        assert task.dev_negative_stream.sample_rate == 16_000

    def test_positive_without_alignments_rejected(self, tmp_path):
        dataset = make_wake_corpus(tmp_path / "corpus", n_positive=3, n_negative=3, seed=3)
        from dataclasses import replace as dc_replace

        stripped = type(dataset)(
            dataset.vocabulary,
            tuple(dc_replace(s, alignments=None) for s in dataset.positives),
            dataset.negatives,
        )
        with pytest.raises(ValueError, match="alignments"):
            wake_task(stripped, FRONTEND)


class TestCommandsTask:
    def test_builds_one_window_per_clip(self, tmp_path):
        root = make_commands_corpus(
            tmp_path / "sc", targets=("yes", "no"), n_per_class=6, seed=4, noise_seconds=2.0
        )
        from wakeword.dataset import (
            Vocabulary,
            filter_vocab,
            ingest_speech_commands,
            make_silence_samples,
        )

        samples = ingest_speech_commands(root)
        samples += make_silence_samples(root, tmp_path / "silence", 2, seed=4)
        dataset = filter_vocab(samples, Vocabulary(("yes", "no")))
        task = commands_task(dataset, FRONTEND, window_s=1.0)
        assert task.labels == ("yes", "no", "unknown", "silence")
        assert task.vocabulary == ()
        assert task.negative_label is None
        total = len(dataset.subset("train").samples)
        assert len(task.train_windows) == total
        wlen = 16_000
        assert all(len(w.clip.samples) == wlen for w in task.train_windows)
        # every label present in training windows
        assert set(w.label for w in task.train_windows) == {0, 1, 2, 3}
