"""Independent reference implementations used to derive expected test values.

Everything here is deliberately naive (direct sums, explicit loops, brute
enumeration) and shares no code with the package paths it checks.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def brute_dft_magnitudes(x: np.ndarray) -> np.ndarray:
    """Direct-sum DFT |X_k| for k in 0..N-1, O(N^2), no FFT."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    t = np.arange(n)
    mags = np.empty(n)
    for k in range(n):
        basis = np.exp(-2j * np.pi * k * t / n)
        mags[k] = abs(np.sum(x * basis))
    return mags


def dominant_frequency_hz(x: np.ndarray, sample_rate: int) -> float:
    """Frequency of the largest DFT bin in the lower half-spectrum."""
    mags = brute_dft_magnitudes(x)
    half = len(x) // 2 + 1
    k = int(np.argmax(mags[:half]))
    return k * sample_rate / len(x)


def hann_periodic(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def brute_stft_power(x, win, hop, fft_size):
    """Framewise windowed direct DFT power, matching the pinned conventions."""
    x = np.asarray(x, dtype=np.float64)
    n_frames = 1 + (len(x) - win) // hop
    window = hann_periodic(win)
    n_bins = fft_size // 2 + 1
    out = np.zeros((n_frames, n_bins))
    t = np.arange(fft_size)
    for f in range(n_frames):
        frame = np.zeros(fft_size)
        frame[:win] = x[f * hop : f * hop + win] * window
        for k in range(n_bins):
            out[f, k] = abs(np.sum(frame * np.exp(-2j * np.pi * k * t / fft_size))) ** 2
    return out


def mel_from_hz(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def hz_from_mel(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(mel_bands: int, f_min: float, f_max: float) -> np.ndarray:
    """Centers of triangular mel filters: M+2 uniform mel points, inner M."""
    points = np.linspace(mel_from_hz(f_min), mel_from_hz(f_max), mel_bands + 2)
    return hz_from_mel(points)[1:-1]


def brute_mel_filterbank(fft_size, sample_rate, mel_bands, f_min, f_max):
    """Triangular filters evaluated bin by bin from the mel formula."""
    points = hz_from_mel(np.linspace(mel_from_hz(f_min), mel_from_hz(f_max), mel_bands + 2))
    n_bins = fft_size // 2 + 1
    weights = np.zeros((mel_bands, n_bins))
    for m in range(mel_bands):
        lo, center, hi = points[m], points[m + 1], points[m + 2]
        for k in range(n_bins):
            f = k * sample_rate / fft_size
            if lo < f <= center:
                weights[m, k] = (f - lo) / (center - lo)
            elif center < f < hi:
                weights[m, k] = (hi - f) / (hi - center)
    return weights


def brute_log_mel(x, sample_rate, win, hop, fft_size, mel_bands, f_min, f_max, log_floor):
    power = brute_stft_power(x, win, hop, fft_size)
    fb = brute_mel_filterbank(fft_size, sample_rate, mel_bands, f_min, f_max)
    return np.log(np.maximum(power @ fb.T, log_floor))


def naive_conv2d(x, w, b=None, stride=1, padding=0):
    """Five-nested-loop cross-correlation with zero padding."""
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, o, ho, wo), dtype=x.dtype)
    for ni in range(n):
        for oi in range(o):
            for yi in range(ho):
                for xi in range(wo):
                    acc = 0.0
                    for ci in range(c):
                        patch = xp[ni, ci, yi * stride : yi * stride + kh, xi * stride : xi * stride + kw]
                        acc += float(np.sum(patch * w[oi, ci]))
                    out[ni, oi, yi, xi] = acc + (0.0 if b is None else float(b[oi]))
    return out


def finite_difference_grad(f, x: np.ndarray, eps: float = 1e-3) -> np.ndarray:
    """Central finite differences of scalar f at x (x is float64)."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f()
        flat[i] = orig - eps
        lo = f()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def brute_decode(frames, n_words, theta, tau_s, refractory_s):
    """Offline wake-phrase decoder by explicit subsequence enumeration.

    `frames` is a sequence of (time_s, probs) with probs over
    [word_0..word_{n-1}, negative]. Returns a list of
    (fire_time, word_times tuple, score). Semantics mirror the pinned decoder
    contract: a word triggers when its prob exceeds theta and is the argmax
    (ties to the lowest index); a firing consumes all prior triggers and kills
    triggers for refractory_s; among valid in-order trigger tuples ending at
    the firing frame, the lexicographically-latest (from the last word
    backward) is reported.
    """
    events = []
    live: list[list[tuple[float, float]]] = [[] for _ in range(n_words)]  # (time, prob)
    suppress_until = -math.inf
    for time_s, probs in frames:
        probs = np.asarray(probs)
        word = int(np.argmax(probs))
        if word >= n_words or probs[word] <= theta:
            continue
        if time_s < suppress_until:
            continue
        # dropping triggers older than the span window cannot change any
        # enumeration outcome and keeps the product sizes honest
        live = [[trig for trig in pool if time_s - trig[0] <= tau_s] for pool in live]
        live[word].append((time_s, float(probs[word])))
        if word != n_words - 1:
            continue
        # enumerate every in-order combination of live triggers ending here
        last = (time_s, float(probs[word]))
        candidates = []
        pools = [live[i] for i in range(n_words - 1)]
        for combo in itertools.product(*pools) if n_words > 1 else [()]:
            times = [c[0] for c in combo] + [last[0]]
            if all(times[i] < times[i + 1] for i in range(len(times) - 1)) and (
                times[-1] - times[0] <= tau_s
            ):
                candidates.append(tuple(combo) + (last,))
        if not candidates:
            continue
        # lexicographically latest scanning from the last word backward
        best = max(candidates, key=lambda combo: tuple(c[0] for c in reversed(combo)))
        events.append(
            (
                time_s,
                tuple(c[0] for c in best),
                min(c[1] for c in best),
            )
        )
        live = [[] for _ in range(n_words)]
        suppress_until = time_s + refractory_s
    return events
