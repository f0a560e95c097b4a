"""Log-Mel frontend: STFT power, mel filterbank, log compression, and the
dataset-level zero-mean/unit-variance normalization.

Pinned conventions (the oracles in the test suite assume exactly these):
periodic Hann window, power (magnitude-squared) spectrum, natural log with a
floor, mel(f) = 2595*log10(1 + f/700), triangular filters with peak 1 whose
centers are the inner points of mel_bands+2 uniformly spaced mel values.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .audio import AudioClip


@dataclass(frozen=True)
class FrontendConfig:
    """STFT + mel settings. Defaults are a standard small-footprint KWS frontend."""

    sample_rate: int = 16_000
    win: int = 480          # 30 ms
    hop: int = 160          # 10 ms
    fft_size: int = 512
    mel_bands: int = 40
    f_min: float = 0.0
    f_max: float = 8000.0
    log_floor: float = 1e-7

    def __post_init__(self):
        if self.win > self.fft_size:
            raise ValueError(f"win ({self.win}) must not exceed fft_size ({self.fft_size})")
        if self.hop < 1:
            raise ValueError(f"hop must be >= 1, got {self.hop}")
        if not (0 <= self.f_min < self.f_max <= self.sample_rate / 2):
            raise ValueError(
                f"need 0 <= f_min < f_max <= Nyquist; got [{self.f_min}, {self.f_max}] "
                f"at rate {self.sample_rate}"
            )
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")

    @property
    def frame_len_s(self) -> float:
        return self.win / self.sample_rate

    @property
    def frame_hop_s(self) -> float:
        return self.hop / self.sample_rate

    def frame_count(self, n_samples: int) -> int:
        if n_samples < self.win:
            raise ValueError(f"clip of {n_samples} samples is shorter than the {self.win}-sample window")
        return 1 + (n_samples - self.win) // self.hop

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FrontendConfig":
        return cls(**d)


@dataclass(frozen=True, eq=False)
class MelFrameMatrix:
    """T x M matrix of (log-)mel values, one row per analysis frame."""

    frames: np.ndarray
    frame_hop_s: float
    frame_len_s: float
    mel_bands: int

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[1] != self.mel_bands:
            raise ValueError(f"frames must be T x {self.mel_bands}, got shape {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise ValueError("mel frame entries must be finite")
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def with_frames(self, frames: np.ndarray) -> "MelFrameMatrix":
        return MelFrameMatrix(frames, self.frame_hop_s, self.frame_len_s, self.mel_bands)


StatsValue = Union[float, np.ndarray]


@dataclass(frozen=True, eq=False)
class DatasetStats:
    """Normalization constants fit over the training split.

    Scalar mean/std by default; per-band vectors when fit with per_band=True
    (a config switch, not the pipeline default).
    """

    mean: StatsValue
    std: StatsValue
    count: int

    def __post_init__(self):
        if np.any(np.asarray(self.std) <= 0):
            raise ValueError("std must be positive")

    @property
    def per_band(self) -> bool:
        return np.ndim(self.mean) > 0

    def to_dict(self) -> dict:
        if self.per_band:
            return {"mean": list(map(float, self.mean)), "std": list(map(float, self.std)), "count": self.count}
        return {"mean": float(self.mean), "std": float(self.std), "count": self.count}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetStats":
        mean, std = d["mean"], d["std"]
        if isinstance(mean, list):
            return cls(np.asarray(mean, dtype=np.float64), np.asarray(std, dtype=np.float64), int(d["count"]))
        return cls(float(mean), float(std), int(d["count"]))


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window of length n."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft_power(clip: AudioClip, win: int, hop: int, fft_size: int) -> np.ndarray:
    """Framewise power spectrum: entry (t, k) = |DFT_k of windowed frame t|^2.

    Frames are Hann-windowed and zero-padded to fft_size. Raises for clips
    shorter than one window; callers pad first.
    """
    if win > fft_size:
        raise ValueError(f"win ({win}) must not exceed fft_size ({fft_size})")
    x = clip.samples
    if len(x) < win:
        raise ValueError(f"clip of {len(x)} samples is shorter than the {win}-sample window")
    frames = sliding_window_view(x, win)[::hop] * hann_window(win)
    spectrum = np.fft.rfft(frames, n=fft_size, axis=1)
    return np.abs(spectrum) ** 2


def mel_from_hz(f) -> np.ndarray:
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def hz_from_mel(m) -> np.ndarray:
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    fft_size: int, sample_rate: int, mel_bands: int, f_min: float, f_max: float
) -> np.ndarray:
    """M x (fft_size/2+1) triangular filters with centers uniform in mel.

    Rows are nonnegative with peak weight 1. A band too narrow for the FFT
    resolution (all-zero row) is a configuration error.
    """
    if not (0 <= f_min < f_max <= sample_rate / 2):
        raise ValueError(f"need 0 <= f_min < f_max <= Nyquist; got [{f_min}, {f_max}]")
    points = hz_from_mel(np.linspace(mel_from_hz(f_min), mel_from_hz(f_max), mel_bands + 2))
    bin_hz = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    lo, center, hi = points[:-2, None], points[1:-1, None], points[2:, None]
    rising = (bin_hz - lo) / (center - lo)
    falling = (hi - bin_hz) / (hi - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    empty = np.flatnonzero(weights.sum(axis=1) == 0)
    if empty.size:
        raise ValueError(
            f"mel band(s) {empty.tolist()} have no FFT support; "
            f"reduce mel_bands or increase fft_size"
        )
    return weights


def mel_center_frequencies(mel_bands: int, f_min: float, f_max: float) -> np.ndarray:
    """Center frequency (Hz) of each triangular filter."""
    points = np.linspace(mel_from_hz(f_min), mel_from_hz(f_max), mel_bands + 2)
    return hz_from_mel(points)[1:-1]


def log_mel(clip: AudioClip, config: FrontendConfig, spectrum_transform=None) -> MelFrameMatrix:
    """Unnormalized log-mel frames: ln(max(filterbank @ power, log_floor)).

    `spectrum_transform`, when given, is applied to the T x K linear power
    spectrum before mel pooling (the VTLP augmentation hook).
    """
    if clip.sample_rate != config.sample_rate:
        raise ValueError(
            f"clip rate {clip.sample_rate} != frontend rate {config.sample_rate}; resample first"
        )
    power = stft_power(clip, config.win, config.hop, config.fft_size)
    if spectrum_transform is not None:
        power = spectrum_transform(power)
    fb = mel_filterbank(config.fft_size, config.sample_rate, config.mel_bands, config.f_min, config.f_max)
    values = np.log(np.maximum(power @ fb.T, config.log_floor))
    return MelFrameMatrix(values, config.frame_hop_s, config.frame_len_s, config.mel_bands)


def fit_stats(matrices: Iterable[MelFrameMatrix], per_band: bool = False) -> DatasetStats:
    """Single-pass mean/std over all entries of all matrices.

    Global scalars by default (the pipeline's reading of zero-mean/unit-
    variance); per_band=True fits one (mean, std) pair per mel band instead.
    Population std. At least 2 frames required; zero variance is an error.
    """
    frame_count = 0
    entry_count = 0
    total = 0.0
    total_sq = 0.0
    for m in matrices:
        frames = m.frames
        axis = 0 if per_band else None
        total = total + frames.sum(axis=axis, dtype=np.float64)
        total_sq = total_sq + np.square(frames).sum(axis=axis, dtype=np.float64)
        frame_count += frames.shape[0]
        entry_count += frames.size
    if frame_count < 2:
        raise ValueError(f"need at least 2 frames to fit stats, got {frame_count}")
    n = frame_count if per_band else entry_count
    mean = total / n
    var = np.maximum(total_sq / n - mean**2, 0.0)
    if np.any(var < 1e-12 * np.maximum(1.0, np.square(mean))):
        raise ValueError("zero variance; cannot normalize")
    std = np.sqrt(var)
    if per_band:
        return DatasetStats(mean, std, frame_count)
    return DatasetStats(float(mean), float(std), frame_count)


def normalize(m: MelFrameMatrix, stats: DatasetStats) -> MelFrameMatrix:
    """(x - mean) / std elementwise."""
    return m.with_frames((m.frames - stats.mean) / stats.std)


def denormalize(m: MelFrameMatrix, stats: DatasetStats) -> MelFrameMatrix:
    """Inverse of :func:`normalize`."""
    return m.with_frames(m.frames * stats.std + stats.mean)
