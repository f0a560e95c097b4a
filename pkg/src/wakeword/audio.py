"""Audio loading, conversion, resampling, and writing.

Everything downstream works on :class:`AudioClip`: mono samples in [-1, 1]
plus a sample rate. The canonical pipeline rate is 16 kHz (Speech Commands
convention); ingestion resamples whatever the corpus provides.

WAV support is deliberately narrow: RIFF/WAVE containers with PCM16 or
IEEE-float32 payloads, one or two channels, read; PCM16 mono little-endian,
write. Compressed formats are converted out-of-band.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PIPELINE_RATE = 16_000

# Mix fallback flag attached when mix_noise receives a silent clip.
FLAG_SILENT_INPUT = "silent-input-reference-mix"


class WavFormatError(ValueError):
    """Malformed RIFF/WAVE container."""


class UnsupportedWavError(WavFormatError):
    """Well-formed WAV in a codec or layout this reader does not handle."""


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono audio: float samples (nominally in [-1, 1]) at a fixed rate.

    Immutable and freely shareable. `flags` carries processing annotations
    (e.g. the silent-input mix fallback) and is not part of the audio value.
    """

    samples: np.ndarray
    sample_rate: int
    flags: frozenset = field(default=frozenset())

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"AudioClip samples must be 1-D, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioClip samples must be finite")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        samples = samples.copy()
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate

    def with_samples(self, samples: np.ndarray, flags: frozenset | None = None) -> "AudioClip":
        """New clip at the same rate; flags default to the current ones."""
        return AudioClip(samples, self.sample_rate, self.flags if flags is None else flags)


_WAVE_PCM = 1
_WAVE_IEEE_FLOAT = 3
_WAVE_EXTENSIBLE = 0xFFFE


def _parse_chunks(raw: bytes, path: Path) -> dict[bytes, bytes]:
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")
    chunks: dict[bytes, bytes] = {}
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos : pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise WavFormatError(f"{path}: truncated {cid!r} chunk")
        if cid not in chunks:  # first occurrence wins
            chunks[cid] = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned
    return chunks


def load_wav(path: str | Path) -> AudioClip:
    """Load a WAV file as a mono clip with samples scaled to [-1, 1].

    PCM16 is scaled by 1/32768 (so -32768 maps to exactly -1.0); float32 is
    clipped into [-1, 1]. Stereo is downmixed by unweighted channel mean.
    The file's sample rate is preserved.
    """
    path = Path(path)
    raw = path.read_bytes()
    chunks = _parse_chunks(raw, path)
    if b"fmt " not in chunks or b"data" not in chunks:
        raise WavFormatError(f"{path}: missing fmt or data chunk")
    fmt = chunks[b"fmt "]
    if len(fmt) < 16:
        raise WavFormatError(f"{path}: fmt chunk too short ({len(fmt)} bytes)")
    audio_format, n_channels, sample_rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if audio_format == _WAVE_EXTENSIBLE:
        if len(fmt) < 26:
            raise WavFormatError(f"{path}: extensible fmt chunk too short")
        (audio_format,) = struct.unpack_from("<H", fmt, 24)  # first 2 bytes of SubFormat GUID
    if n_channels not in (1, 2):
        raise UnsupportedWavError(f"{path}: {n_channels} channels (only mono/stereo supported)")
    data = chunks[b"data"]

    if audio_format == _WAVE_PCM and bits == 16:
        usable = len(data) - len(data) % (2 * n_channels)
        samples = np.frombuffer(data[:usable], dtype="<i2").astype(np.float64) / 32768.0
    elif audio_format == _WAVE_IEEE_FLOAT and bits == 32:
        usable = len(data) - len(data) % (4 * n_channels)
        samples = np.frombuffer(data[:usable], dtype="<f4").astype(np.float64)
        if not np.all(np.isfinite(samples)):
            raise WavFormatError(f"{path}: non-finite float samples")
        samples = np.clip(samples, -1.0, 1.0)
    else:
        raise UnsupportedWavError(
            f"{path}: unsupported codec (format={audio_format}, bits={bits}); "
            "expected PCM16 or IEEE-float32"
        )

    if n_channels == 2:
        samples = samples.reshape(-1, 2).mean(axis=1)
    return AudioClip(samples, int(sample_rate))


def write_wav(clip: AudioClip, path: str | Path) -> None:
    """Write a clip as PCM16 mono little-endian WAV.

    Samples are clipped to [-1, 1], then quantized as
    clip(round(x * 32768), -32768, 32767), which keeps the round-trip error
    within one quantization step (1/32768).
    """
    path = Path(path)
    x = np.clip(clip.samples, -1.0, 1.0)
    q = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    data = q.tobytes()
    rate = clip.sample_rate
    header = b"".join(
        [
            b"RIFF",
            struct.pack("<I", 36 + len(data)),
            b"WAVE",
            b"fmt ",
            struct.pack("<IHHIIHH", 16, _WAVE_PCM, 1, rate, rate * 2, 2, 16),
            b"data",
            struct.pack("<I", len(data)),
        ]
    )
    try:
        path.write_bytes(header + data)
    except OSError as exc:
        raise OSError(f"writing {path}: {exc}") from exc


def sinc_interpolate(
    x: np.ndarray, positions: np.ndarray, cutoff: float = 1.0, taps: int = 32
) -> np.ndarray:
    """Band-limited read of signal `x` at fractional sample `positions`.

    Windowed-sinc (Hann lobe) with `taps` contributing input samples per
    output; `cutoff` in (0, 1] sets the low-pass corner as a fraction of the
    input Nyquist (use the rate ratio when reading faster than 1:1 to
    anti-alias). Out-of-range positions read zeros.
    """
    if taps < 2 or taps % 2:
        raise ValueError(f"taps must be an even integer >= 2, got {taps}")
    positions = np.asarray(positions, dtype=np.float64)
    half = taps // 2
    base = np.floor(positions).astype(np.int64)
    offsets = np.arange(1 - half, half + 1)
    idx = base[:, None] + offsets[None, :]
    t = positions[:, None] - idx
    weights = cutoff * np.sinc(cutoff * t) * (0.5 + 0.5 * np.cos(np.pi * t / half))
    padded = np.pad(np.asarray(x, dtype=np.float64), (half, half + 1))
    gathered = padded[np.clip(idx + half, 0, len(padded) - 1)]
    # positions are expected in [0, len(x)); clip above only guards the pad edges
    return np.sum(gathered * weights, axis=1)


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Resample to `target_rate` with windowed-sinc interpolation.

    Output length is round(len * target/source). Equal rates return the input
    clip unchanged (bit-exact idempotence).
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if target_rate == clip.sample_rate:
        return clip
    ratio = clip.sample_rate / target_rate
    n_out = int(round(len(clip.samples) * target_rate / clip.sample_rate))
    positions = np.arange(n_out, dtype=np.float64) * ratio
    cutoff = min(1.0, 1.0 / ratio)
    out = sinc_interpolate(clip.samples, positions, cutoff=cutoff)
    return AudioClip(np.clip(out, -1.0, 1.0), target_rate, clip.flags)
