"""Wake-word dataset construction from corpus layouts.

Ingests Mozilla Common Voice TSVs and Speech Commands directory trees,
filters transcripts against a wake vocabulary into positive/negative subsets,
assigns speaker-stratified splits, and round-trips everything through a
JSON-lines manifest.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from .alignment import WordSpan
from .audio import AudioClip, load_wav, write_wav
from .seeding import rng_for, unit_hash

log = logging.getLogger(__name__)

SPLITS = ("train", "dev", "test")

MANIFEST_FORMAT = "wakeword-manifest"
MANIFEST_VERSION = 1


class ManifestError(ValueError):
    """Malformed manifest content."""


_KEEP = set("abcdefghijklmnopqrstuvwxyz' ")


def normalize_transcript(text: str) -> str:
    """Lowercase, strip everything outside [a-z' ], collapse whitespace."""
    cleaned = "".join(c if c in _KEEP else " " for c in text.lower())
    return " ".join(cleaned.split())


@dataclass(frozen=True)
class Vocabulary:
    """The ordered wake phrase; word i has label i, negative label is len(words)."""

    words: tuple[str, ...]

    def __post_init__(self):
        if not self.words:
            raise ValueError("vocabulary must be nonempty")
        normalized = tuple(normalize_transcript(w) for w in self.words)
        if any(" " in w or not w for w in normalized):
            raise ValueError(f"vocabulary entries must be single words, got {self.words}")
        if len(set(normalized)) != len(normalized):
            raise ValueError(f"duplicate vocabulary words in {self.words}")
        object.__setattr__(self, "words", normalized)

    def label(self, word: str) -> int:
        return self.words.index(word)

    @property
    def negative_label(self) -> int:
        return len(self.words)

    @property
    def n_labels(self) -> int:
        return len(self.words) + 1

    def contains_positive(self, transcript: str) -> bool:
        tokens = transcript.split()
        return any(w in tokens for w in self.words)


@dataclass(frozen=True)
class Sample:
    """One corpus utterance: audio reference, transcript, speaker, split."""

    audio_path: str
    transcript: str
    speaker_id: str
    split: str | None = None
    alignments: tuple[WordSpan, ...] | None = None

    def __post_init__(self):
        if self.split is not None and self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS} or None, got {self.split!r}")


@dataclass(frozen=True)
class WakeWordDataset:
    """Positive/negative partition of samples against a vocabulary."""

    vocabulary: Vocabulary
    positives: tuple[Sample, ...]
    negatives: tuple[Sample, ...]

    @property
    def samples(self) -> tuple[Sample, ...]:
        return self.positives + self.negatives

    @property
    def stats(self) -> dict[str, dict[str, int]]:
        """Counts per split: {split: {"positive": n, "negative": m}}."""
        counts = {s: {"positive": 0, "negative": 0} for s in SPLITS + ("unassigned",)}
        for sample in self.positives:
            counts[sample.split or "unassigned"]["positive"] += 1
        for sample in self.negatives:
            counts[sample.split or "unassigned"]["negative"] += 1
        return counts

    def subset(self, split: str) -> "WakeWordDataset":
        return WakeWordDataset(
            self.vocabulary,
            tuple(s for s in self.positives if s.split == split),
            tuple(s for s in self.negatives if s.split == split),
        )


def ingest_mcv(tsv_path: str | Path, clips_dir: str | Path) -> list[Sample]:
    """Samples from a Common Voice TSV (path / sentence / client_id columns).

    Transcripts are normalized; splits are left unassigned. Rows whose audio
    file is missing are skipped with a warning and counted.
    """
    tsv_path = Path(tsv_path)
    clips_dir = Path(clips_dir)
    samples = []
    missing = 0
    with open(tsv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        required = {"path", "sentence", "client_id"}
        header = set(reader.fieldnames or [])
        if not required <= header:
            raise ManifestError(f"{tsv_path}: missing TSV column(s) {sorted(required - header)}")
        for row in reader:
            audio = clips_dir / row["path"]
            if not audio.exists():
                missing += 1
                continue
            samples.append(
                Sample(
                    audio_path=str(audio),
                    transcript=normalize_transcript(row["sentence"]),
                    speaker_id=row["client_id"],
                )
            )
    if missing:
        log.warning("%s: skipped %d row(s) with missing audio files", tsv_path, missing)
    return samples


def _speech_commands_speaker(filename: str) -> str:
    stem = Path(filename).stem
    return stem.split("_nohash_")[0] if "_nohash_" in stem else stem


def ingest_speech_commands(root_dir: str | Path) -> list[Sample]:
    """Samples from a Speech Commands tree (one subdirectory per keyword).

    Transcript = directory name; speaker id = filename prefix before
    "_nohash_". testing_list.txt / validation_list.txt assign test / dev
    splits when present, everything else becomes train; with no lists the
    split stays unassigned. `_background_noise_` is not a keyword.
    """
    root = Path(root_dir)
    if not root.is_dir():
        raise NotADirectoryError(f"{root} is not a directory")

    def read_list(name):
        p = root / name
        if not p.exists():
            return None
        return {line.strip() for line in p.read_text().splitlines() if line.strip()}

    testing = read_list("testing_list.txt")
    validation = read_list("validation_list.txt")
    have_lists = testing is not None or validation is not None

    samples = []
    for keyword_dir in sorted(d for d in root.iterdir() if d.is_dir()):
        if keyword_dir.name == "_background_noise_":
            continue
        for wav in sorted(keyword_dir.glob("*.wav")):
            rel = f"{keyword_dir.name}/{wav.name}"
            if have_lists:
                if testing and rel in testing:
                    split = "test"
                elif validation and rel in validation:
                    split = "dev"
                else:
                    split = "train"
            else:
                split = None
            samples.append(
                Sample(
                    audio_path=str(wav),
                    transcript=normalize_transcript(keyword_dir.name),
                    speaker_id=_speech_commands_speaker(wav.name),
                    split=split,
                )
            )
    return samples


def background_noise_files(root_dir: str | Path) -> list[Path]:
    """The long noise WAVs of a Speech Commands tree (for silence windows)."""
    noise_dir = Path(root_dir) / "_background_noise_"
    if not noise_dir.is_dir():
        return []
    return sorted(noise_dir.glob("*.wav"))


def make_silence_samples(
    root_dir: str | Path,
    out_dir: str | Path,
    count_per_split: int,
    window_s: float = 1.0,
    seed: int = 0,
) -> list[Sample]:
    """Cut `silence`-class clips out of a tree's background-noise files.

    Each clip is a random `window_s` chunk of a random noise file, scaled by
    a random factor in [0, 1) so the class spans near-zero to full noise
    level. Clips are written under `out_dir` and returned as samples with
    transcript `silence`, `count_per_split` per split.
    """
    files = background_noise_files(root_dir)
    if not files:
        raise ValueError(f"no background noise files under {root_dir}")
    rng = rng_for(seed, "silence-samples")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    noise = [load_wav(path) for path in files]
    samples = []
    for split in SPLITS:
        for i in range(count_per_split):
            clip = noise[int(rng.integers(0, len(noise)))]
            wlen = round(window_s * clip.sample_rate)
            if len(clip.samples) <= wlen:
                chunk = clip.samples
            else:
                start = int(rng.integers(0, len(clip.samples) - wlen))
                chunk = clip.samples[start : start + wlen]
            scaled = chunk * float(rng.uniform(0.0, 1.0))
            path = out_dir / f"silence-{split}-{i}.wav"
            write_wav(AudioClip(scaled, clip.sample_rate), path)
            samples.append(
                Sample(
                    audio_path=str(path),
                    transcript="silence",
                    speaker_id=f"silence-{split}-{i}",
                    split=split,
                )
            )
    return samples


def filter_vocab(samples: Iterable[Sample], vocab: Vocabulary) -> WakeWordDataset:
    """Partition samples into positives (transcript contains a vocabulary word
    as a whole token) and negatives (contains none)."""
    positives, negatives = [], []
    for sample in samples:
        (positives if vocab.contains_positive(sample.transcript) else negatives).append(sample)
    log.info("vocabulary filter: %d positives, %d negatives", len(positives), len(negatives))
    return WakeWordDataset(vocab, tuple(positives), tuple(negatives))


def transcript_label(labels: Sequence[str], transcript: str) -> int:
    """Class index for a transcript: exact label match, else the `unknown` class.

    Keyword-classification corpora keep their original transcripts; words
    outside the label set score as `unknown`, following the Speech Commands
    convention.
    """
    try:
        return list(labels).index(transcript)
    except ValueError:
        if "unknown" in labels:
            return list(labels).index("unknown")
        raise ValueError(
            f"transcript {transcript!r} is not a label and no 'unknown' class exists"
        ) from None


def find_containing(samples: Iterable[Sample], substrings: Sequence[str]) -> list[Sample]:
    """Corpus mining: samples whose transcript contains any substring.

    Deliberately substring-based (unlike labeling, which is whole-token) so
    recordings of e.g. "firefly" can be mined for further curation.
    """
    needles = [s.lower() for s in substrings]
    return [s for s in samples if any(n in s.transcript for n in needles)]


def _bucket(speaker_id: str, seed: int, ratios: Sequence[float]) -> str:
    u = unit_hash(f"{speaker_id}\x1f{seed}".encode("utf-8"))
    edge = 0.0
    for split, ratio in zip(SPLITS, ratios):
        edge += ratio
        if u < edge:
            return split
    return SPLITS[-1]


def stratified_split(
    ds: WakeWordDataset, ratios: Sequence[float] = (0.8, 0.1, 0.1), seed: int = 0
) -> WakeWordDataset:
    """Assign splits so every speaker lands in exactly one split.

    Assignment hashes (speaker_id, seed) into ratio buckets, so it is stable
    across runs and machines. Samples with pre-assigned splits keep them, and
    unassigned samples of such speakers follow the speaker's existing split.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")

    preassigned: dict[str, str] = {}
    for sample in ds.samples:
        if sample.split is not None and sample.speaker_id not in preassigned:
            preassigned[sample.speaker_id] = sample.split

    def assign(sample: Sample) -> Sample:
        if sample.split is not None:
            return sample
        split = preassigned.get(sample.speaker_id) or _bucket(sample.speaker_id, seed, ratios)
        return replace(sample, split=split)

    return WakeWordDataset(
        ds.vocabulary,
        tuple(assign(s) for s in ds.positives),
        tuple(assign(s) for s in ds.negatives),
    )


def subsample_negatives(ds: WakeWordDataset, fraction: float, seed: int = 0) -> WakeWordDataset:
    """Keep a deterministic hash-selected fraction of the negative set."""
    if not (0 < fraction <= 1):
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    kept = tuple(
        s
        for s in ds.negatives
        if unit_hash(f"{s.audio_path}\x1f{seed}\x1fneg".encode("utf-8")) < fraction
    )
    return WakeWordDataset(ds.vocabulary, ds.positives, kept)


def _sample_to_json(sample: Sample) -> dict:
    obj = {
        "path": sample.audio_path,
        "transcript": sample.transcript,
        "speaker_id": sample.speaker_id,
        "split": sample.split,
    }
    if sample.alignments is not None:
        obj["alignments"] = [
            {"word": a.word, "start_s": a.start_s, "end_s": a.end_s} for a in sample.alignments
        ]
    return obj


def _sample_from_json(obj: dict) -> Sample:
    alignments = None
    if "alignments" in obj:
        alignments = tuple(
            WordSpan(a["word"], a["start_s"], a["end_s"]) for a in obj["alignments"]
        )
    return Sample(
        audio_path=obj["path"],
        transcript=obj["transcript"],
        speaker_id=obj["speaker_id"],
        split=obj.get("split"),
        alignments=alignments,
    )


def save_manifest(ds: WakeWordDataset, path: str | Path) -> None:
    """Write the dataset as JSON lines: a header line, then one sample per line."""
    path = Path(path)
    header = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "vocabulary": list(ds.vocabulary.words),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for sample in ds.samples:
            fh.write(json.dumps(_sample_to_json(sample), sort_keys=True) + "\n")


def load_manifest(path: str | Path) -> WakeWordDataset:
    """Inverse of :func:`save_manifest`; errors carry the offending line number."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ManifestError(f"{path}: empty manifest (missing header line)")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}:1: bad header: {exc}") from exc
    if header.get("format") != MANIFEST_FORMAT:
        raise ManifestError(f"{path}:1: not a {MANIFEST_FORMAT} file")
    if header.get("version") != MANIFEST_VERSION:
        raise ManifestError(f"{path}:1: unsupported version {header.get('version')!r}")
    vocab = Vocabulary(tuple(header["vocabulary"]))
    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            samples.append(_sample_from_json(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"{path}:{lineno}: bad sample line: {exc}") from exc
    return filter_vocab(samples, vocab)
