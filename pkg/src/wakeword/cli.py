"""Command-line entry point: `ww <subcommand>` over the toolkit pipeline.

Every setting resolves through the same chain — CLI flag, then `WW_*`
environment variable, then a JSON config file, then the built-in default —
and each run echoes the fully resolved configuration as one JSON line on
stderr. Feeding that echo back via `--config` reproduces the run, which in
deterministic mode means bit-identical checkpoints.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Failures print a
single JSON line `{"error": ...}` on stderr.
"""

from __future__ import annotations

import json
import os
import sys
from argparse import ArgumentParser
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .alignment import parse_textgrid
from .audio import AudioClip, load_wav, resample
from .augment import default_policy, load_noise_pool
from .dataset import (
    Sample,
    Vocabulary,
    WakeWordDataset,
    filter_vocab,
    ingest_mcv,
    ingest_speech_commands,
    load_manifest,
    make_silence_samples,
    save_manifest,
    stratified_split,
    subsample_negatives,
)
from .evaluate import (
    choose_operating_point,
    commands_accuracy,
    default_theta_grid,
    wake_roc,
    write_accuracy_report,
    write_roc_csv,
    write_roc_report,
)
from .features import FrontendConfig
from .infer import (
    DEFAULT_REFRACTORY_S,
    DEFAULT_SMOOTH_K,
    DEFAULT_STRIDE_S,
    DEFAULT_TAU_S,
    DEFAULT_WINDOW_S,
    Detector,
)
from .models import Res8Config, build_res8, import_bundle, export_bundle, parameter_count
from .train import TrainConfig, commands_task, train, wake_task


class UsageError(ValueError):
    """Bad invocation: unresolvable or invalid setting. Exits with code 2."""


# ---------------------------------------------------------------------------
# Value parsers. Each accepts a string (flag/env) or an already-typed value
# (JSON config file) and returns the canonical form, raising ValueError with
# a short reason on bad input.


def _int(v) -> int:
    if isinstance(v, bool):
        raise ValueError("expected an integer")
    if isinstance(v, int):
        return v
    try:
        return int(str(v).strip())
    except ValueError:
        raise ValueError("expected an integer") from None


def _float(v) -> float:
    if isinstance(v, bool):
        raise ValueError("expected a number")
    if isinstance(v, (int, float)):
        return float(v)
    try:
        return float(str(v).strip())
    except ValueError:
        raise ValueError("expected a number") from None


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    text = str(v).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true or false")


def _str(v) -> str:
    if isinstance(v, (list, tuple, dict, bool)):
        raise ValueError("expected a string")
    return str(v)


def _path(v) -> str:
    return os.path.abspath(_str(v))


def _words(v) -> tuple[str, ...]:
    if isinstance(v, (list, tuple)):
        return tuple(str(w) for w in v)
    text = _str(v).strip()
    if text.lower() in ("", "none"):
        return ()
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _floats(v) -> tuple[float, ...]:
    if isinstance(v, (list, tuple)):
        return tuple(float(x) for x in v)
    try:
        return tuple(float(t) for t in _str(v).split(","))
    except ValueError:
        raise ValueError("expected comma-separated numbers") from None


def _balance(v) -> tuple[int, int] | None:
    if v is None:
        return None
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ValueError("expected a pair like [1, 3]")
        return int(v[0]), int(v[1])
    text = _str(v).strip().lower()
    if text == "none":
        return None
    parts = text.split(":")
    if len(parts) != 2:
        raise ValueError("expected POS:NEG (like 1:3) or none")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        raise ValueError("expected POS:NEG (like 1:3) or none") from None


def _choice(*options: str) -> Callable[[object], str]:
    def parse(v) -> str:
        text = _str(v).strip()
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text

    return parse


# ---------------------------------------------------------------------------
# Setting registry


@dataclass(frozen=True)
class Setting:
    """One configurable value: flag `--name`, env `WW_NAME`, config key `name`."""

    name: str  # kebab-case
    parse: Callable[[object], object]
    default: object = None
    help: str = ""
    required: bool = False

    @property
    def attr(self) -> str:
        return self.name.replace("-", "_")

    @property
    def env(self) -> str:
        return "WW_" + self.attr.upper()

    @property
    def flag(self) -> str:
        return "--" + self.name


_SEED = Setting("seed", _int, 0, "master random seed")

_DETECT = (
    Setting("window-s", _float, DEFAULT_WINDOW_S, "detection window length in seconds"),
    Setting("stride-s", _float, DEFAULT_STRIDE_S, "hop between detection windows in seconds"),
    Setting("smooth-k", _int, DEFAULT_SMOOTH_K, "posterior smoothing width in frames"),
    Setting("tau-s", _float, DEFAULT_TAU_S, "max seconds spanned by a firing phrase"),
    Setting("refractory-s", _float, DEFAULT_REFRACTORY_S, "seconds suppressed after an event"),
)

SETTINGS: dict[str, tuple[Setting, ...]] = {
    "ingest": (
        Setting("out", _path, help="output manifest path (JSONL)", required=True),
        Setting("vocab", _words, help="wake phrase / target words, comma-separated", required=True),
        Setting("mcv-tsv", _path, None, "Common Voice validated.tsv"),
        Setting("mcv-clips", _path, None, "Common Voice clips directory"),
        Setting("speech-commands", _path, None, "Speech Commands dataset root"),
        Setting("neg-fraction", _float, None, "keep this fraction of negatives (hash-based)"),
        Setting("silence-per-split", _int, 0, "silence clips to cut per split from background noise"),
        Setting("silence-out", _path, None, "directory for generated silence clips"),
        _SEED,
    ),
    "split": (
        Setting("dataset-path", _path, help="input manifest (JSONL)", required=True),
        Setting("out", _path, help="output manifest path", required=True),
        Setting("ratios", _floats, (0.8, 0.1, 0.1), "train,dev,test fractions"),
        _SEED,
    ),
    "align-import": (
        Setting("dataset-path", _path, help="input manifest (JSONL)", required=True),
        Setting("textgrid-dir", _path, help="directory of <stem>.TextGrid files", required=True),
        Setting("out", _path, help="output manifest path", required=True),
    ),
    "train": (
        Setting("dataset-path", _path, help="training manifest (JSONL)", required=True),
        Setting("out", _path, help="output directory for checkpoints and logs", required=True),
        Setting("task", _choice("wake", "commands"), "wake", "wake detection or keyword classification"),
        Setting("epochs", _int, 20, "training epochs"),
        Setting("batch-size", _int, 64, "examples per batch"),
        Setting("lr", _float, 1e-3, "peak learning rate"),
        Setting("optimizer", _choice("adam", "sgd"), "adam", "optimizer"),
        Setting("momentum", _float, 0.9, "SGD momentum"),
        Setting("weight-decay", _float, 0.0, "L2 weight decay"),
        Setting("schedule", _choice("cosine", "constant"), "cosine", "learning-rate schedule"),
        Setting("balance", _balance, "task", "POS:NEG per batch, or none (default 1:3 wake, none commands)"),
        Setting("window-s", _float, None, "training window seconds (default 2.0 wake, 1.0 commands)"),
        Setting("jitter-s", _float, 0.1, "wake-window end jitter in seconds"),
        Setting("neg-stride-s", _float, 1.0, "stride for cutting negative windows"),
        Setting("dev-metric", _choice("accuracy", "frr"), None, "dev selection metric (default frr wake, accuracy commands)"),
        Setting("far-budget", _float, 4.0, "false alarms per hour allowed when dev-metric=frr"),
        Setting("theta-points", _int, 100, "thresholds on the dev ROC grid"),
        Setting("per-band-stats", _bool, False, "normalize each mel band separately"),
        Setting("policy", _choice("default", "none"), "default", "augmentation policy"),
        Setting("noise-dir", _path, None, "directory of background-noise WAVs for mix_noise"),
        Setting("n-maps", _int, 45, "res8 feature maps per conv layer"),
        Setting("resume", _bool, False, "continue from the latest checkpoint in --out"),
        Setting("dev-stream-cap-s", _float, 600.0, "cap on the dev negative stream length"),
        Setting("extra-labels", _words, ("unknown", "silence"), "extra classes after the targets (commands task)"),
        _SEED,
        *(s for s in _DETECT if s.name != "window-s"),
    ),
    "eval-commands": (
        Setting("dataset-path", _path, help="manifest to evaluate (JSONL)", required=True),
        Setting("bundle", _path, help="model bundle directory", required=True),
        Setting("splits", _words, ("dev", "test"), "splits to score, comma-separated"),
        Setting("window-s", _float, 1.0, "classification window seconds"),
        Setting("batch-size", _int, 256, "inference batch size"),
        Setting("report", _path, None, "write the accuracy report JSON here"),
    ),
    "eval-wake": (
        Setting("dataset-path", _path, help="manifest to evaluate (JSONL)", required=True),
        Setting("bundle", _path, help="model bundle directory", required=True),
        Setting("split", _choice("train", "dev", "test"), "test", "split to score"),
        Setting("theta-points", _int, 100, "thresholds on the ROC grid"),
        Setting("far-budget", _float, 4.0, "false alarms per hour for the operating point"),
        Setting("max-negative-s", _float, 3600.0, "cap on the negative stream length"),
        Setting("roc-out", _path, None, "write the ROC as CSV here"),
        Setting("report", _path, None, "write the ROC report JSON here"),
        *_DETECT,
    ),
    "demo": (
        Setting("bundle", _path, help="model bundle directory", required=True),
        Setting("wav", _path, None, "WAV file to scan (default: raw PCM16 on stdin)"),
        Setting("theta", _float, 0.5, "detection threshold"),
        Setting("rate", _int, 16000, "sample rate of raw stdin audio"),
        Setting("chunk-s", _float, 0.2, "seconds of audio fed per step"),
        *_DETECT,
    ),
    "export": (
        Setting("bundle", _path, help="model bundle directory to re-export", required=True),
        Setting("out", _path, help="destination bundle directory", required=True),
    ),
}


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="ww", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True)
    for command, settings in SETTINGS.items():
        sub = subs.add_parser(command)
        sub.add_argument("--config", default=None, metavar="JSON",
                         help="JSON config file (or a resolved-config echo) [env WW_CONFIG]")
        for s in settings:
            sub.add_argument(s.flag, dest=s.attr, default=None, nargs="?", const="true",
                             metavar=s.attr.upper(), help=f"{s.help} [env {s.env}]")
    return parser


def _load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise UsageError(f"config file {path} is not valid JSON: {err}") from None
    if not isinstance(obj, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    if isinstance(obj.get("settings"), dict):  # resolved-config echo form
        obj = obj["settings"]
    return {str(k).replace("-", "_"): v for k, v in obj.items()}


def resolve(settings: Sequence[Setting], ns, environ: Mapping[str, str]) -> dict:
    """Apply the precedence chain and return {attr: value} for every setting."""
    config_path = getattr(ns, "config", None) or environ.get("WW_CONFIG")
    file_values = _load_config_file(config_path) if config_path else {}
    known = {s.attr for s in settings}
    unknown = sorted(set(file_values) - known)
    if unknown:
        raise UsageError(f"unknown setting {unknown[0]!r} in config file {config_path}")

    out: dict[str, object] = {}
    for s in settings:
        raw, source = None, None
        flag_raw = getattr(ns, s.attr)
        if flag_raw is not None:
            raw, source = flag_raw, s.flag
        elif s.env in environ:
            raw, source = environ[s.env], s.env
        elif s.attr in file_values:
            raw, source = file_values[s.attr], f"config file key {s.attr!r}"

        if source is None:
            value = s.default
        elif raw is None:  # JSON null: explicit "unset"
            value = s.parse(None) if s.parse is _balance else None
        else:
            try:
                value = s.parse(raw)
            except ValueError as err:
                raise UsageError(f"invalid value for {source}: {err} (got {raw!r})") from None
        if value is None and s.required:
            raise UsageError(f"missing required setting {s.flag} (env {s.env})")
        out[s.attr] = value
    return out


def _jsonable(value):
    if isinstance(value, tuple):
        return list(value)
    if isinstance(value, Path):
        return str(value)
    return value


def resolved_config(command: str, cfg: Mapping[str, object]) -> dict:
    return {"command": command, "settings": {k: _jsonable(v) for k, v in sorted(cfg.items())}}


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_ingest(cfg: dict) -> int:
    samples: list[Sample] = []
    if cfg["mcv_tsv"] or cfg["mcv_clips"]:
        if not (cfg["mcv_tsv"] and cfg["mcv_clips"]):
            raise UsageError("--mcv-tsv and --mcv-clips must be given together")
        samples.extend(ingest_mcv(cfg["mcv_tsv"], cfg["mcv_clips"]))
    if cfg["speech_commands"]:
        samples.extend(ingest_speech_commands(cfg["speech_commands"]))
    if not samples:
        raise UsageError("no input source: pass --mcv-tsv/--mcv-clips and/or --speech-commands")
    if cfg["silence_per_split"] > 0:
        if not cfg["speech_commands"]:
            raise UsageError("--silence-per-split needs --speech-commands for background noise")
        silence_dir = cfg["silence_out"] or os.path.join(os.path.dirname(cfg["out"]), "silence")
        samples.extend(
            make_silence_samples(
                cfg["speech_commands"], silence_dir, cfg["silence_per_split"], seed=cfg["seed"]
            )
        )
    ds = filter_vocab(samples, Vocabulary(tuple(cfg["vocab"])))
    if cfg["neg_fraction"] is not None:
        ds = subsample_negatives(ds, cfg["neg_fraction"], cfg["seed"])
    save_manifest(ds, cfg["out"])
    print(json.dumps({"out": cfg["out"], "positives": len(ds.positives),
                      "negatives": len(ds.negatives)}))
    return 0


def _cmd_split(cfg: dict) -> int:
    ds = stratified_split(load_manifest(cfg["dataset_path"]), cfg["ratios"], cfg["seed"])
    save_manifest(ds, cfg["out"])
    print(json.dumps({"out": cfg["out"], "stats": ds.stats}))
    return 0


def _cmd_align_import(cfg: dict) -> int:
    ds = load_manifest(cfg["dataset_path"])
    grid_dir = Path(cfg["textgrid_dir"])
    matched = missing = 0

    def attach(sample: Sample) -> Sample:
        nonlocal matched, missing
        grid = grid_dir / (Path(sample.audio_path).stem + ".TextGrid")
        if grid.exists():
            matched += 1
            return replace(sample, alignments=tuple(parse_textgrid(grid)))
        missing += 1
        return sample

    ds = WakeWordDataset(
        ds.vocabulary,
        tuple(attach(s) for s in ds.positives),
        tuple(attach(s) for s in ds.negatives),
    )
    save_manifest(ds, cfg["out"])
    print(json.dumps({"out": cfg["out"], "matched": matched, "missing": missing}))
    return 0


def _train_defaults(cfg: dict) -> dict:
    """Fill task-dependent defaults so the echo states what actually ran."""
    wake = cfg["task"] == "wake"
    if cfg["window_s"] is None:
        cfg["window_s"] = 2.0 if wake else 1.0
    if cfg["dev_metric"] is None:
        cfg["dev_metric"] = "frr" if wake else "accuracy"
    if cfg["balance"] == "task":
        cfg["balance"] = (1, 3) if wake else None
    if cfg["policy"] == "default" and not cfg["noise_dir"]:
        raise UsageError(
            "--noise-dir is required with --policy default (mix_noise needs a noise "
            "pool); pass --policy none to train without augmentation"
        )
    return cfg


def _cmd_train(cfg: dict) -> int:
    ds = load_manifest(cfg["dataset_path"])
    frontend = FrontendConfig()
    policy = default_policy() if cfg["policy"] == "default" else ()
    noise_pool = load_noise_pool(cfg["noise_dir"]) if cfg["noise_dir"] else ()
    if cfg["task"] == "wake":
        task = wake_task(
            ds, frontend,
            window_s=cfg["window_s"], jitter_s=cfg["jitter_s"],
            neg_stride_s=cfg["neg_stride_s"], seed=cfg["seed"],
            policy=policy, noise_pool=noise_pool,
            dev_stream_cap_s=cfg["dev_stream_cap_s"],
        )
    else:
        task = commands_task(
            ds, frontend,
            extra_labels=cfg["extra_labels"], window_s=cfg["window_s"],
            policy=policy, noise_pool=noise_pool,
        )
    config = TrainConfig(
        epochs=cfg["epochs"], batch_size=cfg["batch_size"], lr=cfg["lr"],
        optimizer=cfg["optimizer"], momentum=cfg["momentum"],
        weight_decay=cfg["weight_decay"], schedule=cfg["schedule"],
        seed=cfg["seed"], balance=cfg["balance"],
        per_band_stats=cfg["per_band_stats"], dev_metric=cfg["dev_metric"],
        far_budget_per_hour=cfg["far_budget"], theta_points=cfg["theta_points"],
        stride_s=cfg["stride_s"], smooth_k=cfg["smooth_k"],
        tau_s=cfg["tau_s"], refractory_s=cfg["refractory_s"],
    )
    model = build_res8(Res8Config(n_labels=len(task.labels), n_maps=cfg["n_maps"]),
                       seed=cfg["seed"])
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "resolved-config.json", "w", encoding="utf-8") as fh:
        json.dump(resolved_config("train", cfg), fh, indent=2)
        fh.write("\n")
    result = train(model, task, config, out_dir, resume=cfg["resume"])
    print(json.dumps({
        "best_epoch": result.best_epoch,
        "best_metric": result.best_metric,
        "metric": result.metric_name,
        "best_path": str(result.best_path),
    }))
    return 0


def _cmd_eval_commands(cfg: dict) -> int:
    bundle = import_bundle(cfg["bundle"])
    ds = load_manifest(cfg["dataset_path"])
    accuracy = commands_accuracy(
        bundle, ds, window_s=cfg["window_s"], splits=tuple(cfg["splits"]),
        batch_size=cfg["batch_size"],
    )
    if cfg["report"]:
        write_accuracy_report(accuracy, cfg["report"])
    print(json.dumps({"accuracy": accuracy}))
    return 0


def _cmd_eval_wake(cfg: dict) -> int:
    bundle = import_bundle(cfg["bundle"])
    subset = load_manifest(cfg["dataset_path"]).subset(cfg["split"])
    if not subset.positives:
        raise ValueError(f"split {cfg['split']!r} has no positive clips")
    if not subset.negatives:
        raise ValueError(f"split {cfg['split']!r} has no negative clips")
    rate = bundle.frontend.sample_rate
    positives = [resample(load_wav(s.audio_path), rate) for s in subset.positives]
    cap = round(cfg["max_negative_s"] * rate)
    pieces, total = [], 0
    for sample in subset.negatives:
        if total >= cap:
            break
        piece = resample(load_wav(sample.audio_path), rate).samples
        pieces.append(piece[: cap - total])
        total += len(pieces[-1])
    if total == 0:
        raise ValueError("negative stream is empty; raise --max-negative-s")
    stream = AudioClip(np.concatenate(pieces), rate)
    roc = wake_roc(
        bundle, positives, stream, default_theta_grid(cfg["theta_points"]),
        window_s=cfg["window_s"], stride_s=cfg["stride_s"], smooth_k=cfg["smooth_k"],
        tau_s=cfg["tau_s"], refractory_s=cfg["refractory_s"],
    )
    chosen = choose_operating_point(roc, cfg["far_budget"])
    if cfg["roc_out"]:
        write_roc_csv(roc, cfg["roc_out"])
    if cfg["report"]:
        write_roc_report(roc, chosen, cfg["report"])
    print(json.dumps({"chosen": chosen.to_dict(), "points": len(roc),
                      "negative_hours": total / rate / 3600.0}))
    return 0


def _emit_events(events, out) -> int:
    n = 0
    for e in events:
        print(json.dumps({"time_s": e.time_s, "score": e.score,
                          "word_times": list(e.word_times)}), file=out, flush=True)
        n += 1
    return n


def _cmd_demo(cfg: dict) -> int:
    bundle = import_bundle(cfg["bundle"])
    rate = bundle.frontend.sample_rate
    detector = Detector(
        bundle, cfg["theta"], window_s=cfg["window_s"], stride_s=cfg["stride_s"],
        smooth_k=cfg["smooth_k"], tau_s=cfg["tau_s"], refractory_s=cfg["refractory_s"],
    )
    chunk = max(1, round(cfg["chunk_s"] * rate))
    count = 0
    if cfg["wav"]:
        clip = resample(load_wav(cfg["wav"]), rate)
        for start in range(0, len(clip.samples), chunk):
            events = detector.feed(clip.samples[start : start + chunk], rate)
            count += _emit_events(events, sys.stdout)
    else:
        if cfg["rate"] != rate:
            raise UsageError(
                f"stdin audio must arrive at the bundle rate ({rate} Hz); "
                f"resample upstream or use --wav (got --rate {cfg['rate']})"
            )
        carry = b""
        while True:
            buf = sys.stdin.buffer.read(2 * chunk)
            if not buf:
                break
            buf = carry + buf
            usable = len(buf) - (len(buf) % 2)
            carry = buf[usable:]
            samples = np.frombuffer(buf[:usable], dtype="<i2").astype(np.float64) / 32768.0
            count += _emit_events(detector.feed(samples, rate), sys.stdout)
    print(json.dumps({"events": count}), file=sys.stderr)
    return 0


def _cmd_export(cfg: dict) -> int:
    bundle = import_bundle(cfg["bundle"])
    export_bundle(bundle, cfg["out"])
    print(json.dumps({"out": cfg["out"], "parameters": parameter_count(bundle.model),
                      "labels": list(bundle.labels)}))
    return 0


_DISPATCH: dict[str, Callable[[dict], int]] = {
    "ingest": _cmd_ingest,
    "split": _cmd_split,
    "align-import": _cmd_align_import,
    "train": _cmd_train,
    "eval-commands": _cmd_eval_commands,
    "eval-wake": _cmd_eval_wake,
    "demo": _cmd_demo,
    "export": _cmd_export,
}

_POST_RESOLVE: dict[str, Callable[[dict], dict]] = {"train": _train_defaults}


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exit_:  # argparse already printed its message
        return 0 if exit_.code in (0, None) else 2
    try:
        cfg = resolve(SETTINGS[ns.command], ns, os.environ)
        cfg = _POST_RESOLVE.get(ns.command, lambda c: c)(cfg)
        print(json.dumps(resolved_config(ns.command, cfg)), file=sys.stderr)
        return _DISPATCH[ns.command](cfg)
    except UsageError as err:
        print(json.dumps({"error": str(err)}), file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError) as err:
        print(json.dumps({"error": f"{type(err).__name__}: {err}"}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
