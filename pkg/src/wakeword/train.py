"""Training loop: window building, balanced batches, checkpoints, resume.

A :class:`TrainTask` carries everything data-side (labeled windows per
split, label names, augmentation policy); :class:`TrainConfig` carries the
hyperparameters. Randomness is a pure function of (seed, epoch, position),
so a run replays bit-identically and a resumed run continues exactly where
the checkpoint left off.

Checkpoint directory layout: ``ckpt-{epoch}.bundle`` (model bundle) with an
``ckpt-{epoch}.opt.npz`` optimizer sidecar, plus ``best.bundle`` and
``train_log.jsonl``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from .alignment import LabeledWindow, negative_windows, positive_windows
from .audio import AudioClip, load_wav, resample
from .augment import Stage, compose
from .dataset import WakeWordDataset, transcript_label
from .evaluate import choose_operating_point, clip_window, default_theta_grid, wake_roc
from .features import FrontendConfig, fit_stats, log_mel, normalize
from .infer import (
    DEFAULT_REFRACTORY_S,
    DEFAULT_SMOOTH_K,
    DEFAULT_STRIDE_S,
    DEFAULT_TAU_S,
)
from .models import ModelBundle, Res8, export_bundle, import_bundle
from .optim import SGD, Adam
from .seeding import rng_for, unit_hash
from .tensor import Tensor, nll_loss

log = logging.getLogger(__name__)

AUGMENT_INDEX_STRIDE = 10_000_000  # per-epoch offset keeping augment draws epoch-pure


class TrainingDiverged(RuntimeError):
    """Loss went non-finite; the message carries the last lr and batch id."""


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters; everything needed to replay a run with the same data."""

    epochs: int = 20
    batch_size: int = 64
    lr: float = 1e-3
    optimizer: str = "adam"  # adam | sgd
    momentum: float = 0.9  # sgd only
    weight_decay: float = 0.0
    schedule: str = "cosine"  # cosine | constant
    seed: int = 0
    balance: tuple[int, int] | None = (1, 3)  # positive:negative per batch
    per_band_stats: bool = False
    dev_metric: str = "accuracy"  # accuracy | frr
    far_budget_per_hour: float = 4.0
    theta_points: int = 100
    stride_s: float = DEFAULT_STRIDE_S
    smooth_k: int = DEFAULT_SMOOTH_K
    tau_s: float = DEFAULT_TAU_S
    refractory_s: float = DEFAULT_REFRACTORY_S

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be at least 1")
        if self.lr < 0:
            raise ValueError(f"lr must be nonnegative, got {self.lr}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.schedule not in ("cosine", "constant"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.dev_metric not in ("accuracy", "frr"):
            raise ValueError(f"unknown dev metric {self.dev_metric!r}")
        if self.balance is not None:
            p, n = self.balance
            if p < 1 or n < 1:
                raise ValueError(f"balance ratio must be positive, got {self.balance}")
            object.__setattr__(self, "balance", (int(p), int(n)))

    def to_dict(self) -> dict:
        d = self.__dict__.copy()
        d["balance"] = list(self.balance) if self.balance is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if d.get("balance") is not None:
            d["balance"] = tuple(d["balance"])
        return cls(**d)


@dataclass(eq=False)
class TrainTask:
    """Data side of a run: labeled windows, label names, augmentation."""

    labels: tuple[str, ...]
    vocabulary: tuple[str, ...]
    frontend: FrontendConfig
    window_s: float
    train_windows: list[LabeledWindow]
    dev_windows: list[LabeledWindow] = field(default_factory=list)
    policy: tuple[Stage, ...] = ()
    noise_pool: tuple[AudioClip, ...] = ()
    dev_positive_clips: list[AudioClip] = field(default_factory=list)
    dev_negative_stream: AudioClip | None = None

    @property
    def negative_label(self) -> int | None:
        return len(self.labels) - 1 if self.labels and self.labels[-1] == "negative" else None


@dataclass(frozen=True)
class TrainResult:
    best_epoch: int
    best_metric: float
    metric_name: str
    history: tuple[dict, ...]
    best_path: Path


def _load_at_rate(path: str | Path, rate: int) -> AudioClip:
    return resample(load_wav(path), rate)


def wake_task(
    dataset: WakeWordDataset,
    frontend: FrontendConfig,
    *,
    window_s: float = 2.0,
    jitter_s: float = 0.1,
    neg_stride_s: float = 1.0,
    seed: int = 0,
    policy: Sequence[Stage] = (),
    noise_pool: Sequence[AudioClip] = (),
    dev_stream_cap_s: float = 600.0,
) -> TrainTask:
    """Wake-word windows from aligned samples.

    Positives yield one end-aligned window per vocabulary-word span (with
    jitter); negatives are tiled into stride windows. Dev positives are also
    kept as whole clips, and dev negatives concatenate into one stream, for
    detection-level (FRR) evaluation.
    """
    vocab = dataset.vocabulary
    rate = frontend.sample_rate

    def windows_for(split: str) -> list[LabeledWindow]:
        sub = dataset.subset(split)
        wins: list[LabeledWindow] = []
        for s in sub.positives:
            if not s.alignments:
                raise ValueError(f"positive sample {s.audio_path} has no alignments")
            clip = _load_at_rate(s.audio_path, rate)
            span_seed = round(unit_hash(f"{s.audio_path}\x1f{seed}".encode()) * 2**31)
            wins.extend(
                positive_windows(clip, s.alignments, vocab, window_s, jitter_s, span_seed)
            )
        for s in sub.negatives:
            clip = _load_at_rate(s.audio_path, rate)
            wins.extend(negative_windows(clip, window_s, neg_stride_s, vocab.negative_label))
        return wins

    dev = dataset.subset("dev")
    dev_positive_clips = [_load_at_rate(s.audio_path, rate) for s in dev.positives]
    stream_parts: list[np.ndarray] = []
    total = 0
    cap = round(dev_stream_cap_s * rate)
    for s in dev.negatives:
        if total >= cap:
            break
        clip = _load_at_rate(s.audio_path, rate)
        stream_parts.append(clip.samples)
        total += len(clip.samples)
    dev_negative_stream = (
        AudioClip(np.concatenate(stream_parts)[:cap], rate) if stream_parts else None
    )
    return TrainTask(
        labels=vocab.words + ("negative",),
        vocabulary=vocab.words,
        frontend=frontend,
        window_s=window_s,
        train_windows=windows_for("train"),
        dev_windows=windows_for("dev"),
        policy=tuple(policy),
        noise_pool=tuple(noise_pool),
        dev_positive_clips=dev_positive_clips,
        dev_negative_stream=dev_negative_stream,
    )


def commands_task(
    dataset: WakeWordDataset,
    frontend: FrontendConfig,
    *,
    extra_labels: Sequence[str] = ("unknown", "silence"),
    window_s: float = 1.0,
    policy: Sequence[Stage] = (),
    noise_pool: Sequence[AudioClip] = (),
) -> TrainTask:
    """Keyword-classification windows: one whole-clip window per sample.

    Classes are the dataset vocabulary plus `extra_labels`; transcripts
    outside the label set fall back to `unknown`.
    """
    labels = dataset.vocabulary.words + tuple(extra_labels)
    rate = frontend.sample_rate

    def windows_for(split: str) -> list[LabeledWindow]:
        wins = []
        for s in dataset.subset(split).samples:
            clip = load_wav(s.audio_path)
            window = AudioClip(clip_window(clip, window_s, rate), rate)
            wins.append(LabeledWindow(window, transcript_label(labels, s.transcript)))
        return wins

    return TrainTask(
        labels=labels,
        vocabulary=(),
        frontend=frontend,
        window_s=window_s,
        train_windows=windows_for("train"),
        dev_windows=windows_for("dev"),
        policy=tuple(policy),
        noise_pool=tuple(noise_pool),
    )


def make_batches(
    windows: Sequence[LabeledWindow],
    featurize: Callable[[AudioClip, int], object],
    batch_size: int,
    balance: tuple[int, int] | None,
    negative_label: int | None,
    seed: int,
    epoch: int = 0,
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Deterministic epoch of (features, labels) batches.

    `featurize(clip, index)` maps a window to its (normalized) frame matrix;
    the index is unique per epoch position so augmentation draws replay
    exactly. With `balance` (p, n), every batch holds p:n
    positive:negative windows, sampling each class uniformly with
    wraparound; without it, batches are a plain shuffle and the final batch
    may be short.
    """
    if not windows:
        raise ValueError("no windows to batch")
    rng = rng_for(seed, "batches", epoch)
    n_batches = math.ceil(len(windows) / batch_size)
    if balance is None:
        order = rng.permutation(len(windows))
        groups = [order[b * batch_size : (b + 1) * batch_size] for b in range(n_batches)]
    else:
        p, n = balance
        if batch_size * p % (p + n):
            raise ValueError(f"batch size {batch_size} cannot hold a {p}:{n} ratio evenly")
        if negative_label is None:
            raise ValueError("balanced batching needs a negative class in the labels")
        per_pos = batch_size * p // (p + n)
        per_neg = batch_size - per_pos
        pos = np.array([i for i, w in enumerate(windows) if w.label != negative_label])
        neg = np.array([i for i, w in enumerate(windows) if w.label == negative_label])
        if not len(pos):
            raise ValueError("balanced batching needs positive windows, found none")
        if not len(neg):
            raise ValueError("balanced batching needs negative windows, found none")
        pos_order = rng.permutation(pos)
        neg_order = rng.permutation(neg)
        groups = []
        for b in range(n_batches):
            picks = [pos_order[(b * per_pos + k) % len(pos_order)] for k in range(per_pos)]
            picks += [neg_order[(b * per_neg + k) % len(neg_order)] for k in range(per_neg)]
            groups.append(rng.permutation(picks))
    position = 0
    for group in groups:
        feats, labs = [], []
        for idx in group:
            w = windows[int(idx)]
            m = featurize(w.clip, epoch * AUGMENT_INDEX_STRIDE + position)
            position += 1
            feats.append(m.frames.astype(np.float32))
            labs.append(w.label)
        yield np.stack(feats)[:, np.newaxis], np.asarray(labs, dtype=np.int64)


def windows_accuracy(bundle: ModelBundle, windows: Sequence[LabeledWindow], batch_size: int = 256) -> float:
    """Fraction of windows whose argmax matches the label (no augmentation)."""
    if not windows:
        raise ValueError("no windows to evaluate")
    correct = 0
    for lo in range(0, len(windows), batch_size):
        chunk = windows[lo : lo + batch_size]
        feats = []
        for w in chunk:
            m = log_mel(w.clip, bundle.frontend)
            if bundle.stats is not None:
                m = normalize(m, bundle.stats)
            feats.append(m.frames.astype(np.float32))
        batch = np.stack(feats)[:, np.newaxis]
        predicted = np.argmax(bundle.predict_log_probs(batch), axis=1)
        correct += int(np.sum(predicted == [w.label for w in chunk]))
    return correct / len(windows)


def _schedule_lr(config: TrainConfig, epoch: int) -> float:
    if config.schedule == "constant":
        return config.lr
    return config.lr * 0.5 * (1.0 + math.cos(math.pi * epoch / config.epochs))


def _dev_metric(bundle: ModelBundle, task: TrainTask, config: TrainConfig) -> float:
    if config.dev_metric == "accuracy":
        if not task.dev_windows:
            raise ValueError("dev accuracy needs dev windows")
        return windows_accuracy(bundle, task.dev_windows)
    if not task.dev_positive_clips or task.dev_negative_stream is None:
        raise ValueError("dev FRR needs dev positive clips and a dev negative stream")
    roc = wake_roc(
        bundle,
        task.dev_positive_clips,
        task.dev_negative_stream,
        thetas=default_theta_grid(config.theta_points),
        window_s=task.window_s,
        stride_s=config.stride_s,
        smooth_k=config.smooth_k,
        tau_s=config.tau_s,
        refractory_s=config.refractory_s,
    )
    return choose_operating_point(roc, config.far_budget_per_hour).frr


def _copy_model(src: Res8, dst: Res8) -> None:
    for (src_name, sp), (dst_name, dp) in zip(src.named_parameters(), dst.named_parameters()):
        if src_name != dst_name or sp.data.shape != dp.data.shape:
            raise ValueError(f"checkpoint parameter {src_name} does not match model {dst_name}")
        dp.data[...] = sp.data
    for (src_name, sb), (dst_name, db) in zip(src.named_buffers(), dst.named_buffers()):
        if src_name != dst_name or sb.shape != db.shape:
            raise ValueError(f"checkpoint buffer {src_name} does not match model {dst_name}")
        db[...] = sb


def latest_checkpoint(out_dir: str | Path) -> int | None:
    """Highest epoch with a checkpoint bundle under `out_dir`, if any."""
    epochs = []
    for path in Path(out_dir).glob("ckpt-*.bundle"):
        stem = path.name[len("ckpt-") : -len(".bundle")]
        if stem.isdigit():
            epochs.append(int(stem))
    return max(epochs) if epochs else None


def train(
    model: Res8,
    task: TrainTask,
    config: TrainConfig,
    out_dir: str | Path,
    *,
    resume: bool = False,
    callbacks: Sequence[Callable[[dict], None]] = (),
) -> TrainResult:
    """Run the training loop, checkpointing every epoch.

    With `resume=True` and existing checkpoints in `out_dir`, model and
    optimizer state reload from the latest epoch and training continues with
    exactly the updates the uninterrupted run would have made.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not task.train_windows:
        raise ValueError("no training windows")
    if max(w.label for w in task.train_windows) >= len(task.labels):
        raise ValueError("window label outside the label set")

    stats = fit_stats(
        (log_mel(w.clip, task.frontend) for w in task.train_windows),
        per_band=config.per_band_stats,
    )
    augmenter = (
        compose(task.policy, task.frontend, config.seed, task.noise_pool) if task.policy else None
    )

    def featurize(clip: AudioClip, index: int):
        m = augmenter(clip, index) if augmenter is not None else log_mel(clip, task.frontend)
        return normalize(m, stats)

    params = [p for _, p in model.named_parameters()]
    if config.optimizer == "adam":
        opt = Adam(params, lr=config.lr, weight_decay=config.weight_decay)
    else:
        opt = SGD(params, lr=config.lr, momentum=config.momentum, weight_decay=config.weight_decay)

    higher_better = config.dev_metric == "accuracy"
    start_epoch = 0
    best_metric = None
    best_epoch = None
    history: list[dict] = []
    log_path = out_dir / "train_log.jsonl"
    if resume:
        last = latest_checkpoint(out_dir)
        if last is not None:
            loaded = import_bundle(out_dir / f"ckpt-{last}.bundle")
            _copy_model(loaded.model, model)
            with np.load(out_dir / f"ckpt-{last}.opt.npz") as sidecar:
                opt.load_state_arrays(
                    {k: sidecar[k] for k in sidecar.files if not k.startswith("meta_")}
                )
                best_metric = float(sidecar["meta_best_metric"])
                best_epoch = int(sidecar["meta_best_epoch"])
            start_epoch = last + 1
            if log_path.exists():
                history = [
                    rec
                    for rec in map(json.loads, log_path.read_text().splitlines())
                    if rec["epoch"] <= last
                ]
            log.info("resuming from epoch %d", start_epoch)

    model.train()
    for epoch in range(start_epoch, config.epochs):
        lr_epoch = _schedule_lr(config, epoch)
        opt.lr = lr_epoch
        losses = []
        batches = make_batches(
            task.train_windows,
            featurize,
            config.batch_size,
            config.balance,
            task.negative_label,
            config.seed,
            epoch,
        )
        for batch_id, (xb, yb) in enumerate(batches):
            loss = nll_loss(model(Tensor(xb)), yb)
            value = float(loss.item())
            if not math.isfinite(value):
                raise TrainingDiverged(
                    f"non-finite loss ({value}) at epoch {epoch}, batch {batch_id}, lr {lr_epoch:g}"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(value)

        bundle = ModelBundle(
            model=model,
            config=model.config,
            frontend=task.frontend,
            stats=stats,
            labels=tuple(task.labels),
            vocabulary=tuple(task.vocabulary),
        )
        metric_value = _dev_metric(bundle, task, config)
        is_best = best_metric is None or (
            metric_value > best_metric if higher_better else metric_value < best_metric
        )
        if is_best:
            best_metric = metric_value
            best_epoch = epoch
        export_bundle(bundle, out_dir / f"ckpt-{epoch}.bundle")
        np.savez(
            out_dir / f"ckpt-{epoch}.opt.npz",
            meta_best_metric=best_metric,
            meta_best_epoch=best_epoch,
            **opt.state_arrays(),
        )
        if is_best:
            export_bundle(bundle, out_dir / "best.bundle")
        record = {
            "epoch": epoch,
            "lr": lr_epoch,
            "train_loss": float(np.mean(losses)),
            config.dev_metric: metric_value,
            "best": is_best,
        }
        history.append(record)
        log_path.write_text("".join(json.dumps(r) + "\n" for r in history))
        log.info(
            "epoch %d: loss %.4f, dev %s %.4f%s",
            epoch,
            record["train_loss"],
            config.dev_metric,
            metric_value,
            " (best)" if is_best else "",
        )
        for cb in callbacks:
            cb(record)

    return TrainResult(
        best_epoch=best_epoch,
        best_metric=best_metric,
        metric_name=config.dev_metric,
        history=tuple(history),
        best_path=out_dir / "best.bundle",
    )
