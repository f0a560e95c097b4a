"""Word-level forced-alignment import and window labeling.

Alignments arrive as Praat TextGrid sidecars (long format, interval tier
"words") or embedded in dataset manifests; the aligner itself is external.
Training examples are fixed-length windows: each vocabulary-word span yields
one positive window ending just after the word, and negative clips are tiled
into stride windows.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .audio import AudioClip
from .seeding import rng_for

log = logging.getLogger(__name__)


class TextGridError(ValueError):
    """Malformed or unusable TextGrid content."""


@dataclass(frozen=True)
class WordSpan:
    """One aligned word occurrence, in seconds from clip start."""

    word: str
    start_s: float
    end_s: float

    def __post_init__(self):
        if not (0 <= self.start_s < self.end_s):
            raise ValueError(f"invalid span [{self.start_s}, {self.end_s}] for {self.word!r}")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True, eq=False)
class LabeledWindow:
    """A fixed-length training window and its class label.

    Label i < n_vocab is vocabulary word i; label n_vocab is the negative
    class (no wake word present).
    """

    clip: AudioClip
    label: int


_ITEM_RE = re.compile(r"item \[\d+\]:")
_NAME_RE = re.compile(r'name\s*=\s*"(.*)"')
_CLASS_RE = re.compile(r'class\s*=\s*"(.*)"')
_INTERVAL_RE = re.compile(
    r"intervals \[\d+\]:\s*"
    r"xmin\s*=\s*([0-9.eE+-]+)\s*"
    r"xmax\s*=\s*([0-9.eE+-]+)\s*"
    r'text\s*=\s*"(.*)"'
)


def parse_textgrid(path: str | Path) -> list[WordSpan]:
    """Read a long-format TextGrid's "words" interval tier as sorted WordSpans.

    Empty-text intervals are skipped; words are lowercased. A missing words
    tier or overlapping intervals raise :class:`TextGridError`.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    tiers = _ITEM_RE.split(text)[1:]
    words_tier = None
    for tier in tiers:
        name = _NAME_RE.search(tier)
        klass = _CLASS_RE.search(tier)
        if name and name.group(1) == "words":
            if not klass or klass.group(1) != "IntervalTier":
                raise TextGridError(f"{path}: words tier is not an IntervalTier")
            words_tier = tier
            break
    if words_tier is None:
        raise TextGridError(f'{path}: no interval tier named "words"')

    spans = []
    for xmin, xmax, word in _INTERVAL_RE.findall(words_tier):
        word = word.replace('""', '"').strip().lower()
        if not word:
            continue
        spans.append(WordSpan(word, float(xmin), float(xmax)))
    spans.sort(key=lambda s: s.start_s)
    for a, b in zip(spans, spans[1:]):
        if b.start_s < a.end_s:
            raise TextGridError(
                f"{path}: overlapping intervals {a.word!r}@[{a.start_s},{a.end_s}] and "
                f"{b.word!r}@[{b.start_s},{b.end_s}]"
            )
    return spans


def extract_window(samples: np.ndarray, start: int, length: int) -> np.ndarray:
    """Window [start, start+length) of `samples`, zero-padded out of range."""
    out = np.zeros(length, dtype=np.float64)
    lo = max(0, start)
    hi = min(len(samples), start + length)
    if hi > lo:
        out[lo - start : hi - start] = samples[lo:hi]
    return out


def positive_windows(
    clip: AudioClip,
    spans: Sequence[WordSpan],
    vocab,
    window_s: float,
    jitter_s: float,
    seed: int,
) -> list[LabeledWindow]:
    """One labeled window per vocabulary-word span in `spans`.

    The window ends at span.end_s + delta with delta ~ U[0, jitter], jitter
    clamped so the window always contains the full span; regions outside the
    clip are zero-filled. Spans longer than the window are skipped with a
    warning.
    """
    sr = clip.sample_rate
    wlen = round(window_s * sr)
    rng = rng_for(seed, "positive-windows")
    out = []
    for span in spans:
        if span.word not in vocab.words:
            continue
        if span.duration_s > window_s:
            log.warning(
                "skipping %r span of %.2fs: longer than the %.2fs window",
                span.word,
                span.duration_s,
                window_s,
            )
            continue
        jitter_hi = min(jitter_s, window_s - span.duration_s)
        delta = float(rng.uniform(0.0, jitter_hi)) if jitter_hi > 0 else 0.0
        end = round((span.end_s + delta) * sr)
        window = extract_window(clip.samples, end - wlen, wlen)
        out.append(LabeledWindow(AudioClip(window, sr), vocab.label(span.word)))
    return out


def negative_windows(
    clip: AudioClip, window_s: float, stride_s: float, negative_label: int
) -> list[LabeledWindow]:
    """Tile the clip into stride windows, all labeled negative.

    A clip shorter than the window yields one zero-padded window; when the
    stride does not divide the remainder, a final zero-padded window covers
    the tail.
    """
    sr = clip.sample_rate
    wlen = round(window_s * sr)
    stride = round(stride_s * sr)
    if stride < 1:
        raise ValueError(f"stride_s {stride_s} is below one sample")
    n = len(clip.samples)
    if n <= wlen:
        count = 1
    else:
        count = 1 + (n - wlen) // stride
        if (n - wlen) % stride:
            count += 1  # final partial window, zero-padded
    return [
        LabeledWindow(AudioClip(extract_window(clip.samples, k * stride, wlen), sr), negative_label)
        for k in range(count)
    ]
