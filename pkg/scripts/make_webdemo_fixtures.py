#!/usr/bin/env python3
"""Generate the golden fixtures shared between the Python engine and the
browser demo's test suite.

Writes into frontend/fixtures/:

  golden-12/            random-init 12-label res8 bundle with nontrivial
                        batchnorm statistics, a 1 s fixture window, the
                        engine's log-mel matrix and log-probabilities for it
  wake/                 a small trained wake-phrase bundle, a 10 s stream,
                        the CLI demo's event lines for that stream, and the
                        detection settings used

All audio fixtures go through a PCM16 WAV round trip first, so every sample
value is n/32768 — exactly representable in float32 — and the .f32 files the
browser tests read contain bit-for-bit the samples the Python engine saw.

Run from the repository root:  python3 scripts/make_webdemo_fixtures.py
"""

from __future__ import annotations

import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from wakeword.audio import AudioClip, load_wav, write_wav  # noqa: E402
from wakeword.dataset import save_manifest  # noqa: E402
from wakeword.features import FrontendConfig, fit_stats, log_mel, normalize  # noqa: E402
from wakeword.infer import smooth, stream_posteriors  # noqa: E402
from wakeword.models import ModelBundle, Res8Config, build_res8, export_bundle, import_bundle  # noqa: E402
from wakeword.synth import make_wake_corpus, make_wake_stream, render_sentence, word_voices  # noqa: E402

FIXTURES = REPO / "frontend" / "fixtures"

GOLDEN_LABELS = (
    "yes", "no", "up", "down", "left", "right",
    "on", "off", "stop", "go", "unknown", "silence",
)

DETECT = {
    "theta": 0.5,
    "window_s": 0.5,
    "stride_s": 0.1,
    "smooth_k": 2,
    "tau_s": 1.5,
    "refractory_s": 1.0,
    "chunk_s": 0.2,
}
TRAIN_EPOCHS = 15


def write_f32(samples: np.ndarray, path: Path) -> None:
    path.write_bytes(np.ascontiguousarray(samples, dtype="<f4").tobytes())


def wav_round_trip(samples: np.ndarray, rate: int, wav_path: Path) -> AudioClip:
    write_wav(AudioClip(samples, rate), wav_path)
    clip = load_wav(wav_path)
    assert clip.sample_rate == rate
    return clip


def make_golden_12(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    frontend = FrontendConfig()
    rate = frontend.sample_rate

    model = build_res8(Res8Config(n_labels=len(GOLDEN_LABELS)), seed=42)
    rng = np.random.default_rng(777)
    for name, p in model.named_parameters():
        if name.endswith(".gamma"):
            p.data[...] = rng.uniform(0.6, 1.4, p.data.shape).astype(np.float32)
        elif name.endswith(".beta"):
            p.data[...] = rng.normal(0.0, 0.25, p.data.shape).astype(np.float32)
    for name, buf in model.named_buffers():
        if name.endswith("running_mean"):
            buf[...] = rng.normal(0.0, 0.3, buf.shape).astype(np.float32)
        else:
            buf[...] = rng.uniform(0.5, 2.0, buf.shape).astype(np.float32)
    model.eval()

    voices = word_voices(GOLDEN_LABELS[:4])
    sentence, _ = render_sentence(["yes", "down"], voices, ("golden-window",))
    x = sentence.samples
    x = x[:rate] if len(x) >= rate else np.concatenate([x, np.zeros(rate - len(x))])
    clip = wav_round_trip(x, rate, out / "window.wav")
    write_f32(clip.samples, out / "window.f32")

    mel = log_mel(clip, frontend)
    stats = fit_stats([mel])
    bundle = ModelBundle(
        model=model,
        config=model.config,
        frontend=frontend,
        stats=stats,
        labels=GOLDEN_LABELS,
        vocabulary=(),
    )
    export_bundle(bundle, out)

    batch = normalize(mel, stats).frames.astype(np.float32)[np.newaxis, np.newaxis]
    log_probs = bundle.predict_log_probs(batch)[0]
    (out / "expected-mel.json").write_text(json.dumps({
        "shape": list(mel.frames.shape),
        "values": mel.frames.ravel().tolist(),
    }))
    (out / "expected-logits.json").write_text(json.dumps({
        "log_probs": log_probs.astype(np.float64).tolist(),
        "window_samples": len(clip.samples),
    }, indent=2))
    print(f"golden-12: {len(clip.samples)} sample window, "
          f"mel {mel.frames.shape}, log-probs {np.array2string(log_probs, precision=3)}")


def check_margins(bundle_dir: Path, samples: np.ndarray, rate: int) -> dict:
    """Require every decode decision on the stream to be far from the
    threshold and from argmax ties, so float32/float64 drift between the two
    engines cannot flip an event."""
    bundle = import_bundle(bundle_dir)
    frames = stream_posteriors(bundle, samples, rate,
                               window_s=DETECT["window_s"], stride_s=DETECT["stride_s"])
    frames = smooth(frames, DETECT["smooth_k"])
    n_words = len(bundle.vocabulary)
    min_gap = np.inf
    min_theta_margin = np.inf
    for f in frames:
        order = np.argsort(f.probs)[::-1]
        gap = float(f.probs[order[0]] - f.probs[order[1]])
        min_gap = min(min_gap, gap)
        if order[0] < n_words:
            min_theta_margin = min(min_theta_margin, abs(float(f.probs[order[0]]) - DETECT["theta"]))
    if min_gap < 0.02 or min_theta_margin < 0.02:
        raise SystemExit(
            f"stream decisions too close to flip: top-2 gap {min_gap:.4f}, "
            f"theta margin {min_theta_margin:.4f}; reseed the fixture"
        )
    return {"min_top2_gap": min_gap, "min_theta_margin": min_theta_margin,
            "frames": len(frames)}


def make_wake(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    work = out / "_work"
    if work.exists():
        shutil.rmtree(work)
    work.mkdir()

    dataset = make_wake_corpus(work / "corpus", n_positive=50, n_negative=60, seed=11)
    manifest = work / "manifest.jsonl"
    save_manifest(dataset, manifest)
    run_dir = work / "run"
    subprocess.run(
        [sys.executable, "-m", "wakeword.cli", "train",
         "--dataset-path", str(manifest), "--out", str(run_dir),
         "--task", "wake", "--policy", "none",
         "--epochs", str(TRAIN_EPOCHS), "--batch-size", "16",
         "--window-s", str(DETECT["window_s"]), "--dev-metric", "accuracy",
         "--theta-points", "10", "--seed", "11"],
        cwd=REPO, check=True, capture_output=True, text=True,
    )
    # the last checkpoint has the sharpest posteriors (the dev-best one stops
    # at the first perfect-accuracy epoch, whose scores sit close to theta)
    final = run_dir / f"ckpt-{TRAIN_EPOCHS - 1}.bundle"
    for name in ("manifest.json", "params.bin"):
        shutil.copy2(final / name, out / name)

    stream, phrase_ends = make_wake_stream(
        duration_s=10.0,
        phrase_at_s=(2.0, 6.5),
        distractor_at_s=((4.5, "coffee"), (8.5, "tree")),
        seed=21,
    )
    clip = wav_round_trip(stream.samples, stream.sample_rate, out / "stream.wav")
    write_f32(clip.samples, out / "stream.f32")

    margins = check_margins(out, clip.samples, clip.sample_rate)

    demo = subprocess.run(
        [sys.executable, "-m", "wakeword.cli", "demo",
         "--bundle", str(out), "--wav", str(out / "stream.wav"),
         "--theta", str(DETECT["theta"]),
         "--window-s", str(DETECT["window_s"]), "--stride-s", str(DETECT["stride_s"]),
         "--smooth-k", str(DETECT["smooth_k"]), "--tau-s", str(DETECT["tau_s"]),
         "--refractory-s", str(DETECT["refractory_s"]),
         "--chunk-s", str(DETECT["chunk_s"])],
        cwd=REPO, check=True, capture_output=True, text=True,
    )
    events = [json.loads(line) for line in demo.stdout.splitlines() if line.strip()]
    if len(events) != len(phrase_ends):
        raise SystemExit(
            f"expected {len(phrase_ends)} demo events (one per embedded phrase), "
            f"got {len(events)}: {events}"
        )
    for event, end in zip(events, phrase_ends):
        if abs(event["time_s"] - end) > DETECT["tau_s"]:
            raise SystemExit(f"event at {event['time_s']}s too far from phrase end {end}s")
    (out / "events.jsonl").write_text(demo.stdout)
    (out / "detect.json").write_text(json.dumps({
        **DETECT,
        "stream_samples": len(clip.samples),
        "phrase_ends": phrase_ends,
        "margins": margins,
    }, indent=2))
    shutil.rmtree(work)
    print(f"wake: {len(events)} events at "
          f"{[round(e['time_s'], 2) for e in events]} (phrases end at "
          f"{[round(t, 2) for t in phrase_ends]}), margins {margins}")


def main() -> None:
    make_golden_12(FIXTURES / "golden-12")
    make_wake(FIXTURES / "wake")
    print(f"fixtures written under {FIXTURES}")


if __name__ == "__main__":
    main()
