"""On-the-fly training augmentations.

Audio-domain routines (stretch, shift, noise) transform clips; vocal-tract
warping acts on the linear power spectrum between the STFT and mel pooling;
mask augmentation acts on the finished log-mel matrix. :func:`compose` chains
a stochastic policy across all three domains with per-sample determinism.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .audio import FLAG_SILENT_INPUT, PIPELINE_RATE, AudioClip, load_wav, resample, sinc_interpolate
from .features import FrontendConfig, MelFrameMatrix, log_mel
from .seeding import rng_for

log = logging.getLogger(__name__)

# Noise scaling target when the input clip is silent (rms 0): the noise is
# returned alone, scaled to this rms, and the output is flagged.
SILENT_REFERENCE_RMS = 0.1


class PolicyError(ValueError):
    """Invalid augmentation policy configuration."""


def time_stretch(clip: AudioClip, rate: float) -> AudioClip:
    """Change tempo by `rate` (> 1 shortens); pitch shifts along with tempo.

    Plain band-limited interpolation, so output length = round(len / rate).
    """
    if not 0.5 <= rate <= 2.0:
        raise ValueError(f"stretch rate must be in [0.5, 2.0], got {rate}")
    if rate == 1.0:
        return clip
    n_out = int(round(len(clip.samples) / rate))
    positions = np.arange(n_out, dtype=np.float64) * rate
    out = sinc_interpolate(clip.samples, positions, cutoff=min(1.0, 1.0 / rate))
    return clip.with_samples(np.clip(out, -1.0, 1.0))


def time_shift(clip: AudioClip, shift_s: float) -> AudioClip:
    """Move content later (positive) or earlier (negative) by `shift_s`,
    zero-filling the vacated region. Length is unchanged; no wraparound."""
    if abs(shift_s) > clip.duration_seconds:
        raise ValueError(f"shift {shift_s}s exceeds clip duration {clip.duration_seconds:.3f}s")
    k = int(round(shift_s * clip.sample_rate))
    if k == 0:
        return clip
    n = len(clip.samples)
    out = np.zeros(n, dtype=np.float64)
    if k > 0:
        out[k:] = clip.samples[: n - k]
    else:
        out[: n + k] = clip.samples[-k:]
    return clip.with_samples(out)


def add_synthetic_noise(clip: AudioClip, kind: str, strength: float, seed: int) -> AudioClip:
    """Add generated noise: "white" adds Gaussian(0, strength^2) per sample;
    "salt_pepper" replaces each sample by +/-1 with probability `strength`.
    Output is clamped to [-1, 1]."""
    if strength < 0:
        raise ValueError(f"strength must be >= 0, got {strength}")
    if kind not in ("white", "salt_pepper"):
        raise ValueError(f'noise kind must be "white" or "salt_pepper", got {kind!r}')
    if strength == 0:
        return clip
    rng = rng_for(seed, "synthetic-noise", kind)
    n = len(clip.samples)
    if kind == "white":
        out = clip.samples + rng.normal(0.0, strength, n)
    else:
        mask = rng.random(n) < strength
        signs = rng.integers(0, 2, n) * 2.0 - 1.0
        out = np.where(mask, signs, clip.samples)
    return clip.with_samples(np.clip(out, -1.0, 1.0))


def mix_noise(clip: AudioClip, noise: AudioClip, snr_db: float, seed: int) -> AudioClip:
    """Mix recorded noise into the clip at the requested signal-to-noise ratio.

    The noise is tiled if shorter than the clip and cropped at a random
    offset; its gain is rms(clip) / (rms(noise) * 10^(snr_db/20)). A silent
    clip gets the noise alone at :data:`SILENT_REFERENCE_RMS`, with
    FLAG_SILENT_INPUT set on the result. Silent noise leaves the clip as is.
    """
    if noise.sample_rate != clip.sample_rate:
        raise ValueError(
            f"noise rate {noise.sample_rate} != clip rate {clip.sample_rate}; resample first"
        )
    rng = rng_for(seed, "mix-noise")
    n = len(clip.samples)
    source = noise.samples
    if len(source) < n:
        source = np.tile(source, -(-n // len(source)))
    offset = int(rng.integers(0, len(source) - n + 1))
    segment = source[offset : offset + n]

    rms_clip = float(np.sqrt(np.mean(np.square(clip.samples))))
    rms_noise = float(np.sqrt(np.mean(np.square(segment))))
    if rms_noise == 0.0:
        return clip
    if rms_clip == 0.0:
        out = segment * (SILENT_REFERENCE_RMS / rms_noise)
        return clip.with_samples(
            np.clip(out, -1.0, 1.0), flags=clip.flags | {FLAG_SILENT_INPUT}
        )
    gain = rms_clip / (rms_noise * 10.0 ** (snr_db / 20.0))
    return clip.with_samples(np.clip(clip.samples + gain * segment, -1.0, 1.0))


def spec_augment(
    m: MelFrameMatrix, n_freq_masks: int, F: int, n_time_masks: int, T: int, seed: int
) -> MelFrameMatrix:
    """Mask random mel-band stripes and frame stripes with the matrix mean.

    Per mask, the width is drawn first (uniform over {0..F} or {0..T}), then
    the start position; width 0 masks nothing. No time warping.
    """
    n_frames, n_mels = m.frames.shape
    if F >= n_mels:
        raise ValueError(f"freq mask limit F={F} must be < mel bands {n_mels}")
    if T >= n_frames:
        raise ValueError(f"time mask limit T={T} must be < frame count {n_frames}")
    if n_freq_masks == 0 and n_time_masks == 0:
        return m
    rng = rng_for(seed, "spec-augment")
    frames = m.frames.copy()
    fill = float(m.frames.mean())
    for _ in range(n_freq_masks):
        f = int(rng.integers(0, F + 1))
        f0 = int(rng.integers(0, n_mels - f + 1))
        frames[:, f0 : f0 + f] = fill
    for _ in range(n_time_masks):
        t = int(rng.integers(0, T + 1))
        t0 = int(rng.integers(0, n_frames - t + 1))
        frames[t0 : t0 + t, :] = fill
    return m.with_frames(frames)


def vtlp(power: np.ndarray, alpha: float, f_hi_ratio: float = 0.8) -> np.ndarray:
    """Vocal-tract length perturbation of a power spectrogram (frames x bins).

    Piecewise-linear frequency warp: slope `alpha` below the boundary
    frequency f_hi*min(alpha,1)/alpha, then linear up to Nyquist. The output
    is gathered through the inverse warp with Jacobian weighting, so total
    energy is preserved up to interpolation loss.
    """
    if not 0.9 <= alpha <= 1.1:
        raise ValueError(f"vtlp alpha must be in [0.9, 1.1], got {alpha}")
    if not 0.0 < f_hi_ratio < 1.0:
        raise ValueError(f"f_hi_ratio must be in (0, 1), got {f_hi_ratio}")
    if alpha == 1.0:
        return power
    power = np.asarray(power, dtype=np.float64)
    n_bins = power.shape[-1]
    nyquist = n_bins - 1.0
    f_hi = f_hi_ratio * nyquist
    boundary = f_hi * min(alpha, 1.0) / alpha
    warped_boundary = alpha * boundary
    upper_slope = (nyquist - warped_boundary) / (nyquist - boundary)

    k = np.arange(n_bins, dtype=np.float64)
    source = np.where(k <= warped_boundary, k / alpha, boundary + (k - warped_boundary) / upper_slope)
    jacobian = np.where(k <= warped_boundary, 1.0 / alpha, 1.0 / upper_slope)
    source = np.clip(source, 0.0, nyquist)
    lo = np.minimum(source.astype(np.int64), n_bins - 2)
    frac = source - lo
    return (power[..., lo] * (1.0 - frac) + power[..., lo + 1] * frac) * jacobian


AUDIO_STAGES = ("time_stretch", "time_shift", "add_synthetic_noise", "mix_noise")
SPECTRUM_STAGES = ("vtlp",)
FEATURE_STAGES = ("spec_augment",)
_DOMAIN = (
    {name: 0 for name in AUDIO_STAGES}
    | {name: 1 for name in SPECTRUM_STAGES}
    | {name: 2 for name in FEATURE_STAGES}
)


@dataclass(frozen=True)
class Stage:
    """One policy entry: an augmentation applied with some probability.

    `params` maps argument names to either fixed values or (lo, hi) ranges
    drawn uniformly per application.
    """

    name: str
    probability: float
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in _DOMAIN:
            raise PolicyError(f"unknown augmentation stage {self.name!r}")
        if not 0.0 <= self.probability <= 1.0:
            raise PolicyError(f"{self.name}: probability must be in [0, 1], got {self.probability}")


def default_policy() -> tuple[Stage, ...]:
    """Conservative defaults; probabilities and ranges are tunable, not tuned."""
    return (
        Stage("time_stretch", 0.3, {"rate": (0.85, 1.15)}),
        Stage("time_shift", 0.5, {"shift_s": (-0.1, 0.1)}),
        Stage("add_synthetic_noise", 0.1, {"kind": "white", "strength": 0.01}),
        Stage("mix_noise", 0.75, {"snr_db": (0.0, 20.0)}),
        Stage("vtlp", 0.3, {"alpha": (0.9, 1.1), "f_hi_ratio": 0.8}),
        Stage("spec_augment", 1.0, {"n_freq_masks": 2, "F": 7, "n_time_masks": 2, "T": 25}),
    )


def _draw(value, rng: np.random.Generator):
    if isinstance(value, tuple):
        lo, hi = value
        return float(rng.uniform(lo, hi))
    return value


class Augmenter:
    """Deterministic stochastic featurizer: (clip, index) -> log-mel matrix.

    Per sample, each stage flips its own coin and draws its own parameters
    from a generator keyed by (seed, index), so a run is exactly replayable
    and samples are independent. Audio stages run on the clip, spectrum
    stages inside the feature frontend, feature stages on the log-mel output.

    Because batches need a constant frame count, the clip is restored to its
    incoming length after the audio stages: stretched-long clips keep their
    tail, stretched-short clips are zero-padded at the front. Training
    windows are end-aligned on the keyword, so the tail is the part to keep.
    """

    def __init__(
        self,
        policy: Sequence[Stage],
        config: FrontendConfig,
        seed: int,
        noise_pool: Sequence[AudioClip] = (),
    ):
        ranks = [_DOMAIN[s.name] for s in policy]
        for earlier, later in zip(ranks, ranks[1:]):
            if later < earlier:
                raise PolicyError(
                    "audio-domain stages must precede spectrum-domain stages, "
                    "which must precede feature-domain stages"
                )
        if any(s.name == "mix_noise" and s.probability > 0 for s in policy) and not noise_pool:
            raise PolicyError("mix_noise stage requires a nonempty noise pool")
        self.policy = tuple(policy)
        self.config = config
        self.seed = seed
        self.noise_pool = tuple(noise_pool)

    def __call__(self, clip: AudioClip, index: int) -> MelFrameMatrix:
        rng = rng_for(self.seed, "augment", index)
        target_len = len(clip.samples)
        spectrum_ops: list[Callable[[np.ndarray], np.ndarray]] = []
        feature_ops = []
        for stage in self.policy:
            if rng.random() >= stage.probability:
                continue
            p = {key: _draw(value, rng) for key, value in stage.params.items()}
            sub_seed = int(rng.integers(0, 2**63))
            if stage.name == "time_stretch":
                clip = time_stretch(clip, **p)
            elif stage.name == "time_shift":
                clip = time_shift(clip, **p)
            elif stage.name == "add_synthetic_noise":
                clip = add_synthetic_noise(clip, seed=sub_seed, **p)
            elif stage.name == "mix_noise":
                noise = self.noise_pool[int(rng.integers(0, len(self.noise_pool)))]
                clip = mix_noise(clip, noise, seed=sub_seed, **p)
            elif stage.name == "vtlp":
                spectrum_ops.append(lambda power, p=p: vtlp(power, **p))
            elif stage.name == "spec_augment":
                feature_ops.append((p, sub_seed))

        if len(clip.samples) > target_len:
            clip = clip.with_samples(clip.samples[-target_len:])
        elif len(clip.samples) < target_len:
            clip = clip.with_samples(
                np.concatenate([np.zeros(target_len - len(clip.samples)), clip.samples])
            )

        transform = None
        if spectrum_ops:

            def transform(power, ops=tuple(spectrum_ops)):
                for op in ops:
                    power = op(power)
                return power

        m = log_mel(clip, self.config, spectrum_transform=transform)
        for p, sub_seed in feature_ops:
            m = spec_augment(m, seed=sub_seed, **p)
        return m


def compose(
    policy: Sequence[Stage],
    config: FrontendConfig,
    seed: int,
    noise_pool: Sequence[AudioClip] = (),
) -> Augmenter:
    """Validate a policy and bind it into an :class:`Augmenter`."""
    return Augmenter(policy, config, seed, noise_pool)


def load_noise_pool(directory: str | Path) -> list[AudioClip]:
    """Recursively load every WAV under `directory` at the pipeline rate."""
    directory = Path(directory)
    pool = []
    for path in sorted(directory.rglob("*.wav")):
        pool.append(resample(load_wav(path), PIPELINE_RATE))
    if not pool:
        log.warning("no WAV files found under %s", directory)
    return pool
