"""Streaming detection: sliding-window posteriors, smoothing, phrase decoding.

A :class:`PosteriorEngine` turns a continuous sample stream into per-stride
class-probability frames by running the feature frontend and model on the
most recent window. :func:`smooth` averages recent frames to stabilize the
probabilities, and :class:`PhraseDecoder` turns smoothed frames into firing
events when every vocabulary word triggers in phrase order within the span
limit. :class:`Detector` chains all three for the common case.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .audio import AudioClip
from .features import log_mel, normalize
from .models import ModelBundle

log = logging.getLogger(__name__)

DEFAULT_WINDOW_S = 2.0
DEFAULT_STRIDE_S = 0.2
DEFAULT_SMOOTH_K = 4
DEFAULT_TAU_S = 1.5
DEFAULT_REFRACTORY_S = 1.0


@dataclass(frozen=True, eq=False)
class PosteriorFrame:
    """Class probabilities for the window ending at `time_s`."""

    time_s: float
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1:
            raise ValueError(f"probs must be a vector, got shape {probs.shape}")
        if np.any(probs < 0):
            raise ValueError("probs must be nonnegative")
        total = float(probs.sum())
        if abs(total - 1.0) > 1e-5:
            raise ValueError(f"probs sum to {total}, expected 1 within 1e-5")
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)


@dataclass(frozen=True)
class DetectionEvent:
    """A phrase firing: when it fired, when each word triggered, how surely."""

    time_s: float
    word_times: tuple[float, ...]
    score: float

    def __post_init__(self):
        for earlier, later in zip(self.word_times, self.word_times[1:]):
            if later <= earlier:
                raise ValueError(f"word_times must strictly increase, got {self.word_times}")


class PosteriorEngine:
    """Sliding-window posteriors over a continuous sample stream.

    Every `stride_s` of audio, the latest `window_s` window is featurized and
    passed through the bundle's model; the resulting probability vector is
    stamped with the window's end time. Feeding is chunking-invariant: the
    engine tracks absolute sample position in a ring buffer, so any split of
    the same stream yields bit-identical frames.
    """

    def __init__(
        self,
        bundle: ModelBundle,
        window_s: float = DEFAULT_WINDOW_S,
        stride_s: float = DEFAULT_STRIDE_S,
    ):
        self.bundle = bundle
        self.sample_rate = bundle.frontend.sample_rate
        self.window = round(window_s * self.sample_rate)
        self.stride = round(stride_s * self.sample_rate)
        if self.window < bundle.frontend.win:
            raise ValueError(
                f"window_s {window_s} is shorter than one analysis frame "
                f"({bundle.frontend.win} samples)"
            )
        if self.stride < 1:
            raise ValueError(f"stride_s {stride_s} is below one sample")
        self._capacity = self.window + self.stride
        self._ring = np.zeros(self._capacity, dtype=np.float64)
        self._total = 0  # samples consumed since construction
        self._next_end = self.window  # absolute position closing the next window

    def feed(self, samples: np.ndarray, sample_rate: int) -> list[PosteriorFrame]:
        """Append samples and return every frame they complete (possibly none)."""
        if sample_rate != self.sample_rate:
            raise ValueError(
                f"stream rate {sample_rate} does not match the bundle's "
                f"{self.sample_rate}; resample before feeding"
            )
        x = np.asarray(samples, dtype=np.float64).reshape(-1)
        frames = []
        i = 0
        while i < len(x):
            take = min(self._next_end - self._total, len(x) - i)
            self._write(x[i : i + take])
            i += take
            if self._total == self._next_end:
                frames.append(self._emit())
                self._next_end += self.stride
        return frames

    def _write(self, chunk: np.ndarray) -> None:
        pos = self._total % self._capacity
        first = min(len(chunk), self._capacity - pos)
        self._ring[pos : pos + first] = chunk[:first]
        self._ring[: len(chunk) - first] = chunk[first:]
        self._total += len(chunk)

    def _emit(self) -> PosteriorFrame:
        end = self._total % self._capacity
        start = (self._total - self.window) % self._capacity
        if start < end:
            window = self._ring[start:end].copy()
        else:
            window = np.concatenate([self._ring[start:], self._ring[:end]])
        m = log_mel(AudioClip(window, self.sample_rate), self.bundle.frontend)
        if self.bundle.stats is not None:
            m = normalize(m, self.bundle.stats)
        batch = m.frames.astype(np.float32)[np.newaxis, np.newaxis]
        log_probs = self.bundle.predict_log_probs(batch)[0]
        return PosteriorFrame(self._total / self.sample_rate, np.exp(log_probs))


def stream_posteriors(
    bundle: ModelBundle,
    samples: np.ndarray,
    sample_rate: int,
    window_s: float = DEFAULT_WINDOW_S,
    stride_s: float = DEFAULT_STRIDE_S,
) -> list[PosteriorFrame]:
    """All posterior frames for a complete stream, one per stride."""
    return PosteriorEngine(bundle, window_s, stride_s).feed(samples, sample_rate)


def smooth(frames: Iterable[PosteriorFrame], k: int) -> list[PosteriorFrame]:
    """Replace each frame's probs by the renormalized mean of the last k frames.

    Frames earlier than position k average over what is available, so k=1 is
    the identity.
    """
    if k < 1:
        raise ValueError(f"smoothing width must be at least 1, got {k}")
    history: deque[np.ndarray] = deque(maxlen=k)
    out = []
    for frame in frames:
        history.append(frame.probs)
        mean = np.mean(history, axis=0)
        out.append(PosteriorFrame(frame.time_s, mean / mean.sum()))
    return out


class PhraseDecoder:
    """Turns smoothed posterior frames into in-order phrase firings.

    Word i triggers at a frame when its probability exceeds `theta` and is
    the frame's argmax (ties resolve to the lowest index). An event fires
    when the final vocabulary word triggers and earlier triggers complete an
    in-order tuple spanning at most `tau_s` seconds; among valid tuples the
    latest trigger at each position (scanning backward) is reported. Firing
    consumes all pending triggers and suppresses new ones for `refractory_s`.
    """

    def __init__(
        self,
        n_words: int,
        theta: float,
        tau_s: float = DEFAULT_TAU_S,
        refractory_s: float = DEFAULT_REFRACTORY_S,
    ):
        if n_words < 1:
            raise ValueError(f"need at least one vocabulary word, got {n_words}")
        if tau_s < 0 or refractory_s < 0:
            raise ValueError("tau_s and refractory_s must be nonnegative")
        self.n_words = n_words
        self.theta = float(theta)
        self.tau_s = tau_s
        self.refractory_s = refractory_s
        self._pools: list[list[tuple[float, float]]] = [[] for _ in range(n_words)]
        self._suppress_until = -np.inf

    def step(self, frame: PosteriorFrame) -> DetectionEvent | None:
        """Consume one frame; return the event it fires, if any."""
        word = int(np.argmax(frame.probs))
        if word >= self.n_words or frame.probs[word] <= self.theta:
            return None
        t = frame.time_s
        if t < self._suppress_until:
            return None
        self._pools = [
            [trig for trig in pool if t - trig[0] <= self.tau_s] for pool in self._pools
        ]
        self._pools[word].append((t, float(frame.probs[word])))
        if word != self.n_words - 1:
            return None
        chain = [self._pools[word][-1]]
        for j in range(self.n_words - 2, -1, -1):
            bound = chain[-1][0]
            # pools are in time order, so the last qualifying entry is the latest
            pick = None
            for trig in reversed(self._pools[j]):
                if trig[0] < bound:
                    pick = trig
                    break
            if pick is None:
                return None
            chain.append(pick)
        chain.reverse()
        event = DetectionEvent(
            time_s=t,
            word_times=tuple(trig[0] for trig in chain),
            score=min(trig[1] for trig in chain),
        )
        self._pools = [[] for _ in range(self.n_words)]
        self._suppress_until = t + self.refractory_s
        return event


def decode(
    frames: Iterable[PosteriorFrame],
    n_words: int,
    theta: float,
    tau_s: float = DEFAULT_TAU_S,
    refractory_s: float = DEFAULT_REFRACTORY_S,
) -> list[DetectionEvent]:
    """All events a :class:`PhraseDecoder` fires over a complete frame list."""
    decoder = PhraseDecoder(n_words, theta, tau_s, refractory_s)
    events = []
    for frame in frames:
        event = decoder.step(frame)
        if event is not None:
            events.append(event)
    return events


class Detector:
    """End-to-end streaming detector: posteriors, smoothing, phrase decoding.

    Feed raw samples at the bundle's rate; receive events. The bundle must
    carry a nonempty vocabulary (a wake phrase), since plain classification
    bundles have nothing to decode.
    """

    def __init__(
        self,
        bundle: ModelBundle,
        theta: float,
        *,
        window_s: float = DEFAULT_WINDOW_S,
        stride_s: float = DEFAULT_STRIDE_S,
        smooth_k: int = DEFAULT_SMOOTH_K,
        tau_s: float = DEFAULT_TAU_S,
        refractory_s: float = DEFAULT_REFRACTORY_S,
    ):
        if not bundle.vocabulary:
            raise ValueError("bundle has no vocabulary; nothing to detect")
        if smooth_k < 1:
            raise ValueError(f"smoothing width must be at least 1, got {smooth_k}")
        self.engine = PosteriorEngine(bundle, window_s, stride_s)
        self.decoder = PhraseDecoder(len(bundle.vocabulary), theta, tau_s, refractory_s)
        self._history: deque[np.ndarray] = deque(maxlen=smooth_k)

    def feed(self, samples: np.ndarray, sample_rate: int) -> list[DetectionEvent]:
        """Append samples; return the events their completed frames fire."""
        events = []
        for frame in self.engine.feed(samples, sample_rate):
            self._history.append(frame.probs)
            mean = np.mean(self._history, axis=0)
            smoothed = PosteriorFrame(frame.time_s, mean / mean.sum())
            event = self.decoder.step(smoothed)
            if event is not None:
                events.append(event)
        return events
