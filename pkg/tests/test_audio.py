import struct

import numpy as np
import pytest

from wakeword.audio import (
    AudioClip,
    UnsupportedWavError,
    WavFormatError,
    load_wav,
    resample,
    write_wav,
)

from oracles import dominant_frequency_hz


def pcm16_wav_bytes(samples_i16, rate=16000, channels=1):
    data = np.asarray(samples_i16, dtype="<i2").tobytes()
    return b"".join(
        [
            b"RIFF",
            struct.pack("<I", 36 + len(data)),
            b"WAVE",
            b"fmt ",
            struct.pack("<IHHIIHH", 16, 1, channels, rate, rate * 2 * channels, 2 * channels, 16),
            b"data",
            struct.pack("<I", len(data)),
            data,
        ]
    )


def float32_wav_bytes(samples_f32, rate=16000, channels=1):
    data = np.asarray(samples_f32, dtype="<f4").tobytes()
    return b"".join(
        [
            b"RIFF",
            struct.pack("<I", 36 + len(data)),
            b"WAVE",
            b"fmt ",
            struct.pack("<IHHIIHH", 16, 3, channels, rate, rate * 4 * channels, 4 * channels, 32),
            b"data",
            struct.pack("<I", len(data)),
            data,
        ]
    )


class TestLoadWav:
    def test_pcm16_silence(self, tmp_path):
        p = tmp_path / "silence.wav"
        p.write_bytes(pcm16_wav_bytes(np.zeros(16000, dtype=np.int16)))
        clip = load_wav(p)
        assert len(clip.samples) == 16000
        assert clip.sample_rate == 16000
        assert np.all(clip.samples == 0.0)

    def test_stereo_symmetric_average(self, tmp_path):
        interleaved = np.empty(2000, dtype=np.int16)
        interleaved[0::2] = 16384  # +0.5
        interleaved[1::2] = -16384  # -0.5
        p = tmp_path / "stereo.wav"
        p.write_bytes(pcm16_wav_bytes(interleaved, channels=2))
        clip = load_wav(p)
        assert len(clip.samples) == 1000
        assert np.all(clip.samples == 0.0)

    def test_pcm16_full_scale_negative(self, tmp_path):
        # oracle: integer/32768 scaling rule
        p = tmp_path / "neg.wav"
        p.write_bytes(pcm16_wav_bytes([-32768, 32767]))
        clip = load_wav(p)
        assert clip.samples[0] == -1.0
        assert clip.samples[1] == 32767 / 32768

    def test_float32_roundtrip_and_clip(self, tmp_path):
        p = tmp_path / "f32.wav"
        p.write_bytes(float32_wav_bytes([0.25, -0.5, 1.5, -2.0]))
        clip = load_wav(p)
        np.testing.assert_allclose(clip.samples, [0.25, -0.5, 1.0, -1.0])

    def test_malformed_header(self, tmp_path):
        p = tmp_path / "bad.wav"
        p.write_bytes(b"OGGS" + b"\x00" * 64)
        with pytest.raises(WavFormatError):
            load_wav(p)

    def test_truncated_data_chunk(self, tmp_path):
        p = tmp_path / "trunc.wav"
        p.write_bytes(pcm16_wav_bytes(np.zeros(100, dtype=np.int16))[:-50])
        with pytest.raises(WavFormatError):
            load_wav(p)

    def test_unsupported_codec(self, tmp_path):
        raw = bytearray(pcm16_wav_bytes(np.zeros(10, dtype=np.int16)))
        struct.pack_into("<H", raw, 20, 7)  # mu-law
        p = tmp_path / "mulaw.wav"
        p.write_bytes(bytes(raw))
        with pytest.raises(UnsupportedWavError):
            load_wav(p)


class TestWriteWav:
    def test_roundtrip_silence_bit_exact(self, tmp_path):
        clip = AudioClip(np.zeros(800), 16000)
        p = tmp_path / "s.wav"
        write_wav(clip, p)
        back = load_wav(p)
        assert np.all(back.samples == 0.0)
        assert back.sample_rate == 16000

    def test_roundtrip_random_quantization_bound(self, tmp_path):
        rng = np.random.default_rng(7)
        clip = AudioClip(rng.uniform(-1, 1, 4096), 16000)
        p = tmp_path / "r.wav"
        write_wav(clip, p)
        back = load_wav(p)
        assert np.max(np.abs(back.samples - clip.samples)) <= 1 / 32768

    def test_out_of_range_clipped(self, tmp_path):
        clip = AudioClip(np.array([1.5, -1.5]), 16000)
        p = tmp_path / "c.wav"
        write_wav(clip, p)
        back = load_wav(p)
        assert back.samples[0] == 32767 / 32768  # written as full positive scale
        assert back.samples[1] == -1.0


class TestResample:
    def test_identity_at_equal_rate(self):
        clip = AudioClip(np.linspace(-0.5, 0.5, 100), 16000)
        out = resample(clip, 16000)
        assert out is clip

    def test_length_ratio(self):
        clip = AudioClip(np.zeros(16000), 16000)
        out = resample(clip, 8000)
        assert abs(len(out.samples) - 8000) <= 1
        assert out.sample_rate == 8000

    def test_sine_survives_upsampling(self):
        # brute-force DFT oracle on the output: 440 Hz at 8 kHz, 0.25 s
        t = np.arange(2000) / 8000
        clip = AudioClip(0.5 * np.sin(2 * np.pi * 440 * t), 8000)
        out = resample(clip, 16000)
        freq = dominant_frequency_hz(out.samples, 16000)
        assert abs(freq - 440.0) <= 16000 / len(out.samples)  # within 1 bin

    def test_down_then_up_preserves_tone(self):
        t = np.arange(4000) / 16000
        clip = AudioClip(0.5 * np.sin(2 * np.pi * 440 * t), 16000)
        back = resample(resample(clip, 8000), 16000)
        freq = dominant_frequency_hz(back.samples, 16000)
        assert abs(freq - 440.0) <= 16000 / len(back.samples)


class TestAudioClip:
    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            AudioClip(np.array([0.0, np.nan]), 16000)

    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            AudioClip(np.zeros(10), 0)

    def test_duration(self):
        assert AudioClip(np.zeros(8000), 16000).duration_seconds == 0.5

    def test_samples_read_only(self):
        clip = AudioClip(np.zeros(10), 16000)
        with pytest.raises(ValueError):
            clip.samples[0] = 1.0
