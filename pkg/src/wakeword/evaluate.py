"""Task metrics: per-split keyword accuracy and the wake-word ROC.

Two evaluations share this module. Keyword classification scores whole
clips (one window each) and reports accuracy per split. Wake-word detection
sweeps the decision threshold over streamed positives and a long negative
stream, reporting false-reject rate against false alarms per hour, and picks
the operating point that fits a false-alarm budget.
"""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .audio import AudioClip, load_wav, resample
from .dataset import SPLITS, WakeWordDataset, transcript_label
from .features import log_mel, normalize
from .infer import (
    DEFAULT_REFRACTORY_S,
    DEFAULT_SMOOTH_K,
    DEFAULT_STRIDE_S,
    DEFAULT_TAU_S,
    DEFAULT_WINDOW_S,
    PosteriorFrame,
    decode,
    smooth,
    stream_posteriors,
)
from .models import ModelBundle

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RocPoint:
    """One threshold's operating characteristics."""

    threshold: float
    far_per_hour: float
    frr: float

    def __post_init__(self):
        if self.far_per_hour < 0:
            raise ValueError(f"far_per_hour must be nonnegative, got {self.far_per_hour}")
        if not 0.0 <= self.frr <= 1.0:
            raise ValueError(f"frr must lie in [0, 1], got {self.frr}")

    def to_dict(self) -> dict:
        return {"threshold": self.threshold, "far_per_hour": self.far_per_hour, "frr": self.frr}


def default_theta_grid(n: int = 100) -> np.ndarray:
    """Evenly spaced decision thresholds covering [0, 1]."""
    if n < 1:
        raise ValueError(f"need at least one threshold, got {n}")
    return np.linspace(0.0, 1.0, n)


def clip_window(clip: AudioClip, window_s: float, sample_rate: int) -> np.ndarray:
    """The clip's first `window_s` seconds at `sample_rate`, zero-padded."""
    if clip.sample_rate != sample_rate:
        clip = resample(clip, sample_rate)
    target = round(window_s * sample_rate)
    x = clip.samples[:target]
    if len(x) < target:
        x = np.concatenate([x, np.zeros(target - len(x))])
    return x


def predict_labels(
    bundle: ModelBundle,
    clips: Sequence[AudioClip],
    window_s: float = 1.0,
    batch_size: int = 256,
) -> np.ndarray:
    """Argmax class index for each clip, scored as a single window."""
    rate = bundle.frontend.sample_rate
    out = []
    for lo in range(0, len(clips), batch_size):
        feats = []
        for clip in clips[lo : lo + batch_size]:
            window = AudioClip(clip_window(clip, window_s, rate), rate)
            m = log_mel(window, bundle.frontend)
            if bundle.stats is not None:
                m = normalize(m, bundle.stats)
            feats.append(m.frames.astype(np.float32))
        batch = np.stack(feats)[:, np.newaxis]
        out.append(np.argmax(bundle.predict_log_probs(batch), axis=1))
    return np.concatenate(out) if out else np.zeros(0, dtype=int)


def commands_accuracy(
    bundle: ModelBundle,
    dataset: WakeWordDataset,
    *,
    window_s: float = 1.0,
    splits: Sequence[str] = SPLITS,
    batch_size: int = 256,
) -> dict[str, float]:
    """Fraction of correctly classified clips in each requested split."""
    labels = list(bundle.labels)
    out = {}
    for split in splits:
        subset = dataset.subset(split)
        if not subset.samples:
            raise ValueError(f"split {split!r} has no samples to evaluate")
        clips = [load_wav(s.audio_path) for s in subset.samples]
        truth = np.array([transcript_label(labels, s.transcript) for s in subset.samples])
        predicted = predict_labels(bundle, clips, window_s, batch_size)
        out[split] = float(np.mean(predicted == truth))
    return out


def roc_from_posteriors(
    positive_frames: Sequence[Sequence[PosteriorFrame]],
    negative_frames: Sequence[PosteriorFrame],
    negative_hours: float,
    n_words: int,
    thetas: Sequence[float],
    tau_s: float = DEFAULT_TAU_S,
    refractory_s: float = DEFAULT_REFRACTORY_S,
) -> list[RocPoint]:
    """Threshold sweep over already-computed (smoothed) posterior streams.

    The posterior pass is the expensive part; this reruns only the decoder
    per threshold. FRR counts positive streams with zero events; FAR counts
    events on the negative stream per hour.
    """
    if not positive_frames:
        raise ValueError("need at least one positive stream for FRR")
    if negative_hours <= 0:
        raise ValueError("negative stream must have positive duration")
    points = []
    for theta in sorted(float(t) for t in thetas):
        rejects = sum(
            1 for frames in positive_frames if not decode(frames, n_words, theta, tau_s, refractory_s)
        )
        alarms = len(decode(negative_frames, n_words, theta, tau_s, refractory_s))
        points.append(
            RocPoint(theta, far_per_hour=alarms / negative_hours, frr=rejects / len(positive_frames))
        )
    return points


def wake_roc(
    bundle: ModelBundle,
    positives: Sequence[AudioClip],
    negative_stream: AudioClip,
    thetas: Sequence[float] | None = None,
    *,
    window_s: float = DEFAULT_WINDOW_S,
    stride_s: float = DEFAULT_STRIDE_S,
    smooth_k: int = DEFAULT_SMOOTH_K,
    tau_s: float = DEFAULT_TAU_S,
    refractory_s: float = DEFAULT_REFRACTORY_S,
) -> list[RocPoint]:
    """ROC over a threshold grid: positives as clips, negatives as one stream.

    Positives shorter than the detection window are zero-padded at the end so
    every clip yields at least one posterior frame.
    """
    if not bundle.vocabulary:
        raise ValueError("bundle has no vocabulary; nothing to detect")
    if thetas is None:
        thetas = default_theta_grid()
    rate = bundle.frontend.sample_rate
    min_len = round(window_s * rate)

    def posteriors(clip: AudioClip) -> list[PosteriorFrame]:
        if clip.sample_rate != rate:
            clip = resample(clip, rate)
        x = clip.samples
        if len(x) < min_len:
            x = np.concatenate([x, np.zeros(min_len - len(x))])
        return smooth(stream_posteriors(bundle, x, rate, window_s, stride_s), smooth_k)

    if negative_stream.sample_rate != rate:
        negative_stream = resample(negative_stream, rate)
    hours = negative_stream.duration_seconds / 3600.0
    if hours <= 0:
        raise ValueError("negative stream must have positive duration")
    positive_frames = [posteriors(clip) for clip in positives]
    negative_frames = posteriors(negative_stream)
    return roc_from_posteriors(
        positive_frames,
        negative_frames,
        hours,
        len(bundle.vocabulary),
        thetas,
        tau_s,
        refractory_s,
    )


def choose_operating_point(roc: Sequence[RocPoint], far_budget_per_hour: float) -> RocPoint:
    """Lowest-FRR point within the false-alarm budget.

    When no point meets the budget, falls back to the lowest-FAR point and
    warns. Ties prefer fewer false alarms, then the higher threshold.
    """
    if not roc:
        raise ValueError("empty ROC")
    eligible = [p for p in roc if p.far_per_hour <= far_budget_per_hour]
    if eligible:
        return min(eligible, key=lambda p: (p.frr, p.far_per_hour, -p.threshold))
    fallback = min(roc, key=lambda p: (p.far_per_hour, p.frr, -p.threshold))
    message = (
        f"no operating point meets {far_budget_per_hour} false alarms/hour; "
        f"falling back to {fallback.far_per_hour:.2f}/hour at threshold {fallback.threshold:.3f}"
    )
    warnings.warn(message)
    log.warning("%s", message)
    return fallback


def write_accuracy_report(accuracy: dict[str, float], path: str | Path) -> None:
    """JSON report: per-split accuracy."""
    Path(path).write_text(json.dumps({"accuracy": accuracy}, indent=2) + "\n")


def write_roc_report(roc: Sequence[RocPoint], chosen: RocPoint | None, path: str | Path) -> None:
    """JSON report: the full curve plus the chosen operating point."""
    payload = {
        "roc": [p.to_dict() for p in roc],
        "chosen": chosen.to_dict() if chosen is not None else None,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def write_roc_csv(roc: Sequence[RocPoint], path: str | Path) -> None:
    """CSV with one row per threshold, for external plotting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "far_per_hour", "frr"])
        for p in roc:
            writer.writerow([f"{p.threshold:.6g}", f"{p.far_per_hour:.6g}", f"{p.frr:.6g}"])
