"""Synthetic speech-like corpora with exactly known content and timings.

Each word is rendered as a two-tone chord. The interval between the tones
(the ratio slot) carries the word's identity: spectral-warp augmentations
and resampling scale both tones by the same factor, so the interval — and
hence class separability — survives the full augmentation policy. Base
pitch, phase, and small per-instance jitter stand in for speaker variation.

These generators back the overfit sanity runs, ROC property runs, and the
desk-scale recognition task; they also produce corpora in the same on-disk
layouts the real ingesters read (word directories, split lists, background
noise), so the whole pipeline runs end to end without real recordings.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence

import numpy as np

from .alignment import LabeledWindow, WordSpan
from .audio import PIPELINE_RATE, AudioClip, write_wav
from .dataset import Sample, Vocabulary, filter_vocab
from .seeding import rng_for, unit_hash

log = logging.getLogger(__name__)

# quarter-octave-ish interval steps; adjacent slots differ by ~19%, more than
# any single warp in the default augmentation policy can bridge
RATIOS = (1.26, 1.5, 1.78, 2.12, 2.52, 3.0, 3.56, 4.24)


def word_voices(words: Sequence[str]) -> dict[str, tuple[float, float]]:
    """Deterministic (base_hz, ratio) voice per word, distinct where possible.

    Ratio slots are hash-seeded and claimed in sorted order with linear
    probing, so up to ``len(RATIOS)`` words get pairwise-distinct intervals;
    beyond that, slots repeat from each word's hash position.
    """
    voices = {}
    taken: set[int] = set()
    for word in sorted(set(words)):
        slot = int(unit_hash(f"ratio:{word}".encode()) * len(RATIOS)) % len(RATIOS)
        if len(taken) < len(RATIOS):
            while slot in taken:
                slot = (slot + 1) % len(RATIOS)
            taken.add(slot)
        base = 350.0 * 2.0 ** (0.8 * unit_hash(f"base:{word}".encode()))
        voices[word] = (base, RATIOS[slot])
    return voices


def render_word(
    word: str,
    voices: dict[str, tuple[float, float]],
    rng: np.random.Generator,
    duration_s: float = 0.28,
    rate: int = PIPELINE_RATE,
    amplitude: float = 0.3,
) -> np.ndarray:
    """One utterance of `word`: its chord with per-instance pitch/level jitter."""
    base, ratio = voices[word]
    f = base * (1.0 + rng.uniform(-0.02, 0.02))
    a = amplitude * rng.uniform(0.8, 1.2)
    n = round(duration_s * rate)
    t = np.arange(n) / rate
    x = np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    x = x + np.sin(2 * np.pi * f * ratio * t + rng.uniform(0, 2 * np.pi))
    envelope = np.hanning(n) ** 0.5
    return a * 0.5 * x * envelope


def render_sentence(
    words: Sequence[str],
    voices: dict[str, tuple[float, float]],
    seed_parts: Sequence,
    *,
    rate: int = PIPELINE_RATE,
    gap_s: tuple[float, float] = (0.08, 0.3),
    pad_s: tuple[float, float] = (0.1, 0.4),
    noise_level: float = 0.005,
) -> tuple[AudioClip, list[WordSpan]]:
    """Words with random gaps over light noise, plus their exact spans."""
    rng = rng_for(*seed_parts, "sentence")
    pieces = [np.zeros(round(rng.uniform(*pad_s) * rate))]
    spans = []
    cursor = len(pieces[0])
    for i, word in enumerate(words):
        tone = render_word(word, voices, rng, rate=rate)
        spans.append(WordSpan(word, cursor / rate, (cursor + len(tone)) / rate))
        pieces.append(tone)
        cursor += len(tone)
        if i < len(words) - 1:
            gap = np.zeros(round(rng.uniform(*gap_s) * rate))
            pieces.append(gap)
            cursor += len(gap)
    pieces.append(np.zeros(round(rng.uniform(*pad_s) * rate)))
    x = np.concatenate(pieces)
    x = x + rng.normal(0.0, noise_level, len(x))
    return AudioClip(x, rate), spans


def _cycle_split(i: int) -> str:
    """~70/15/15 split pattern, stable in the sample index.

    dev and test land early in the cycle so even tiny corpora populate
    every split.
    """
    r = i % 7
    if r == 2:
        return "dev"
    if r == 5:
        return "test"
    return "train"


def make_wake_corpus(
    root: str | Path,
    *,
    vocab: Sequence[str] = ("hey", "firefox"),
    n_positive: int = 30,
    n_negative: int = 60,
    distractors: Sequence[str] = ("coffee", "tree", "window", "lamp"),
    n_speakers: int = 10,
    seed: int = 0,
):
    """A wake-word corpus on disk: WAVs plus samples with exact alignments.

    Positives say the full phrase (optionally wrapped in distractor words);
    negatives say only distractors. Returns the vocabulary-partitioned
    dataset.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    voices = word_voices(tuple(vocab) + tuple(distractors))
    samples = []

    def add(index: int, words: list[str], kind: str):
        clip, spans = render_sentence(words, voices, (seed, kind, index))
        path = root / f"{kind}-{index:04d}.wav"
        write_wav(clip, path)
        samples.append(
            Sample(
                audio_path=str(path),
                transcript=" ".join(words),
                speaker_id=f"spk{(index * 7 + (0 if kind == 'pos' else 3)) % n_speakers:03d}",
                split=_cycle_split(index),
                alignments=tuple(spans),
            )
        )

    for i in range(n_positive):
        rng = rng_for(seed, "pos-words", i)
        words = list(vocab)
        if rng.random() < 0.5:
            words.insert(0, str(rng.choice(distractors)))
        if rng.random() < 0.5:
            words.append(str(rng.choice(distractors)))
        add(i, words, "pos")
    for i in range(n_negative):
        rng = rng_for(seed, "neg-words", i)
        count = int(rng.integers(1, 4))
        words = [str(rng.choice(distractors)) for _ in range(count)]
        add(i, words, "neg")
    return filter_vocab(samples, Vocabulary(tuple(vocab)))


def make_commands_corpus(
    root: str | Path,
    *,
    targets: Sequence[str] = ("yes", "no"),
    unknown_words: Sequence[str] = ("bed", "cat", "tree", "wow"),
    n_per_class: int = 100,
    n_speakers: int = 24,
    seed: int = 0,
    noise_seconds: float = 30.0,
) -> Path:
    """A Speech Commands-layout tree: word directories, split lists, noise.

    Writes `n_per_class` one-second clips per target word, the same total
    spread over the unknown-source words, two background-noise WAVs, and
    speaker-disjoint `testing_list.txt` / `validation_list.txt`. The result
    is read back with the normal tree ingester.
    """
    root = Path(root)
    voices = word_voices(tuple(targets) + tuple(unknown_words))
    rate = PIPELINE_RATE
    speakers = [f"{round(unit_hash(f'spk:{seed}:{i}'.encode()) * 16**8):08x}" for i in range(n_speakers)]
    # speaker-disjoint splits, roughly 70/15/15
    dev_speakers = set(speakers[: max(1, n_speakers * 15 // 100)])
    rest = [s for s in speakers if s not in dev_speakers]
    test_speakers = set(rest[: max(1, n_speakers * 15 // 100)])
    testing, validation = [], []

    def write_clip(word: str, index: int):
        rng = rng_for(seed, "commands", word, index)
        tone = render_word(word, voices, rng, rate=rate)
        start = int(rng.integers(0, rate - len(tone)))
        x = rng.normal(0.0, rng.uniform(0.001, 0.01), rate)
        x[start : start + len(tone)] += tone
        speaker = speakers[int(rng.integers(0, len(speakers)))]
        rel = f"{word}/{speaker}_nohash_{index}.wav"
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        write_wav(AudioClip(x, rate), path)
        if speaker in test_speakers:
            testing.append(rel)
        elif speaker in dev_speakers:
            validation.append(rel)

    for word in targets:
        for i in range(n_per_class):
            write_clip(word, i)
    per_unknown = max(1, n_per_class // len(unknown_words))
    for word in unknown_words:
        for i in range(per_unknown):
            write_clip(word, i)

    noise_dir = root / "_background_noise_"
    noise_dir.mkdir(parents=True, exist_ok=True)
    for k, color in enumerate(("white", "hum")):
        rng = rng_for(seed, "noise", color)
        n = round(noise_seconds * rate)
        if color == "white":
            x = rng.normal(0.0, 0.1, n)
        else:
            t = np.arange(n) / rate
            x = 0.05 * np.sin(2 * np.pi * 60.0 * t) + rng.normal(0.0, 0.02, n)
        write_wav(AudioClip(x, rate), noise_dir / f"noise-{k}.wav")

    (root / "testing_list.txt").write_text("\n".join(sorted(testing)) + "\n")
    (root / "validation_list.txt").write_text("\n".join(sorted(validation)) + "\n")
    return root


def make_overfit_windows(
    n: int = 64,
    window_s: float = 0.5,
    vocab: Sequence[str] = ("hey", "firefox"),
    seed: int = 0,
    rate: int = PIPELINE_RATE,
) -> tuple[list[LabeledWindow], tuple[str, ...]]:
    """A tiny fixed window set: tone-burst words vs noise negatives.

    Half the windows hold one vocabulary word (label = word index), half
    hold only noise (the negative label). Made for fast 100%-train-accuracy
    sanity runs.
    """
    voices = word_voices(vocab)
    labels = tuple(vocab) + ("negative",)
    wlen = round(window_s * rate)
    windows = []
    for i in range(n):
        rng = rng_for(seed, "overfit", i)
        if i % 2 == 0:
            word = vocab[(i // 2) % len(vocab)]
            tone = render_word(word, voices, rng, duration_s=min(0.28, window_s * 0.6), rate=rate)
            x = rng.normal(0.0, 0.005, wlen)
            start = int(rng.integers(0, wlen - len(tone)))
            x[start : start + len(tone)] += tone
            label = list(vocab).index(word)
        else:
            x = rng.normal(0.0, 0.05, wlen)
            label = len(vocab)
        windows.append(LabeledWindow(AudioClip(x, rate), label))
    return windows, labels


def make_wake_stream(
    vocab: Sequence[str] = ("hey", "firefox"),
    *,
    duration_s: float = 10.0,
    phrase_at_s: Sequence[float] = (3.0,),
    distractor_at_s: Sequence[tuple[float, str]] = ((7.0, "coffee"),),
    noise_level: float = 0.005,
    seed: int = 0,
    rate: int = PIPELINE_RATE,
) -> tuple[AudioClip, list[float]]:
    """A continuous stream with the phrase embedded at known times.

    Returns the stream and the end time of each embedded phrase (the last
    word's offset), for checking that detections land where the phrase is.
    """
    rng = rng_for(seed, "stream")
    voices = word_voices(tuple(vocab) + tuple(w for _, w in distractor_at_s))
    x = rng.normal(0.0, noise_level, round(duration_s * rate))
    phrase_ends = []
    for at in phrase_at_s:
        cursor = round(at * rate)
        for i, word in enumerate(vocab):
            tone = render_word(word, voices, rng, rate=rate)
            if cursor + len(tone) > len(x):
                raise ValueError(f"phrase at {at}s runs past the {duration_s}s stream")
            x[cursor : cursor + len(tone)] += tone
            cursor += len(tone)
            if i < len(vocab) - 1:
                cursor += round(float(rng.uniform(0.08, 0.2)) * rate)
        phrase_ends.append(cursor / rate)
    for at, word in distractor_at_s:
        tone = render_word(word, voices, rng, rate=rate)
        lo = round(at * rate)
        if lo + len(tone) > len(x):
            raise ValueError(f"distractor at {at}s runs past the stream")
        x[lo : lo + len(tone)] += tone
    return AudioClip(x, rate), phrase_ends
